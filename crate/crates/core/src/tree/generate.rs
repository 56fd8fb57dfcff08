//! Seeded random tree generation for tests and synthetic-data simulation.
//!
//! Trees are built by successive pairwise merges of active lineages; with
//! sorted merge heights this yields exactly ultrametric trees. Determinism
//! comes from the caller-supplied RNG.

use rand::Rng;

use crate::tree::{Node, NodeId, Tree};

/// One active lineage during bottom-up construction.
struct Lineage {
    node: NodeId,
    height: f64,
}

/// Random tree with arbitrary (non-ultrametric) branch lengths in (0.05, 2).
/// Tips are labeled `tip001`, `tip002`, ...
pub fn random_tree(n_tips: usize, rng: &mut impl Rng) -> Tree {
    assert!(n_tips >= 2, "need at least 2 tips");
    let mut nodes: Vec<Node> = Vec::with_capacity(2 * n_tips - 1);
    let mut active: Vec<NodeId> = (0..n_tips)
        .map(|i| {
            nodes.push(Node {
                parent: None,
                children: Vec::new(),
                length: rng.gen_range(0.05..2.0),
                label: Some(format!("tip{:03}", i + 1)),
            });
            i
        })
        .collect();
    while active.len() > 1 {
        let i = rng.gen_range(0..active.len());
        let a = active.swap_remove(i);
        let j = rng.gen_range(0..active.len());
        let b = active.swap_remove(j);
        let id = nodes.len();
        nodes.push(Node {
            parent: None,
            children: vec![a, b],
            length: rng.gen_range(0.05..2.0),
            label: None,
        });
        nodes[a].parent = Some(id);
        nodes[b].parent = Some(id);
        active.push(id);
    }
    let root = active[0];
    nodes[root].length = 0.0;
    Tree::new(nodes, root).expect("generated tree is structurally valid")
}

/// Random ultrametric tree of the requested depth (all tips exactly at
/// `depth` from the root). Tips are labeled `tip001`, `tip002`, ...
pub fn random_ultrametric(n_tips: usize, depth: f64, rng: &mut impl Rng) -> Tree {
    assert!(n_tips >= 2, "need at least 2 tips");
    assert!(depth > 0.0, "depth must be positive");
    let mut nodes: Vec<Node> = Vec::with_capacity(2 * n_tips - 1);
    let lineages: Vec<Lineage> = (0..n_tips)
        .map(|i| {
            nodes.push(Node {
                parent: None,
                children: Vec::new(),
                length: 0.0,
                label: Some(format!("tip{:03}", i + 1)),
            });
            Lineage { node: i, height: 0.0 }
        })
        .collect();
    let heights = merge_heights(n_tips, 0.0, depth, rng);
    let root = coalesce(&mut nodes, lineages, &heights, rng);
    Tree::new(nodes, root).expect("generated tree is structurally valid")
}

/// Random ultrametric tree with `n_families` monophyletic family clades
/// (sizes skewed by preferential attachment, so isolates and large families
/// both occur). Returns the tree and `(taxon, family)` assignments.
///
/// Family crown heights lie below 0.55·depth; family lineages then coalesce
/// between 0.6·depth and the root at exactly `depth`.
pub fn random_family_tree(
    n_tips: usize,
    n_families: usize,
    depth: f64,
    rng: &mut impl Rng,
) -> (Tree, Vec<(String, String)>) {
    assert!(n_families >= 2 && n_tips >= n_families, "need 2 ≤ families ≤ tips");
    // family sizes: start at 1 each, allocate the rest preferentially
    let mut sizes = vec![1usize; n_families];
    for _ in 0..n_tips - n_families {
        let total: usize = sizes.iter().sum();
        let mut pick = rng.gen_range(0..total);
        for s in sizes.iter_mut() {
            if pick < *s {
                *s += 1;
                break;
            }
            pick -= *s;
        }
    }
    let mut nodes: Vec<Node> = Vec::new();
    let mut assignments: Vec<(String, String)> = Vec::new();
    let mut family_lineages: Vec<Lineage> = Vec::new();
    let mut tip_no = 0usize;
    for (f, &size) in sizes.iter().enumerate() {
        let family = format!("fam{:02}", f + 1);
        let tips: Vec<Lineage> = (0..size)
            .map(|_| {
                tip_no += 1;
                let label = format!("lang{:04}", tip_no);
                assignments.push((label.clone(), family.clone()));
                let id = nodes.len();
                nodes.push(Node {
                    parent: None,
                    children: Vec::new(),
                    length: 0.0,
                    label: Some(label),
                });
                Lineage { node: id, height: 0.0 }
            })
            .collect();
        if size == 1 {
            family_lineages.push(tips.into_iter().next().unwrap());
        } else {
            let crown = rng.gen_range(0.25..0.55) * depth;
            let heights = merge_heights(size, 0.0, crown, rng);
            let root = coalesce(&mut nodes, tips, &heights, rng);
            family_lineages.push(Lineage { node: root, height: crown });
        }
    }
    let heights = merge_heights(n_families, 0.6 * depth, depth, rng);
    let root = coalesce(&mut nodes, family_lineages, &heights, rng);
    let tree = Tree::new(nodes, root).expect("generated tree is structurally valid");
    (tree, assignments)
}

/// Sorted merge heights in (lo, hi) with the final merge pinned at `hi`.
fn merge_heights(n_lineages: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut h: Vec<f64> =
        (0..n_lineages.saturating_sub(2)).map(|_| rng.gen_range(lo..hi)).collect();
    h.sort_by(|a, b| a.partial_cmp(b).unwrap());
    h.push(hi);
    h
}

/// Merge random pairs of lineages at the given ascending heights; returns the
/// final root node id.
fn coalesce(
    nodes: &mut Vec<Node>,
    mut active: Vec<Lineage>,
    heights: &[f64],
    rng: &mut impl Rng,
) -> NodeId {
    assert_eq!(active.len(), heights.len() + 1, "one merge per height");
    for &h in heights {
        let i = rng.gen_range(0..active.len());
        let a = active.swap_remove(i);
        let j = rng.gen_range(0..active.len());
        let b = active.swap_remove(j);
        let id = nodes.len();
        nodes.push(Node { parent: None, children: vec![a.node, b.node], length: 0.0, label: None });
        nodes[a.node].parent = Some(id);
        nodes[a.node].length = h - a.height;
        nodes[b.node].parent = Some(id);
        nodes[b.node].length = h - b.height;
        active.push(Lineage { node: id, height: h });
    }
    active[0].node
}
