//! Rooted phylogenetic trees with branch lengths.
//!
//! Trees are stored as a flat arena of nodes indexed by [`NodeId`]. They are
//! immutable after construction: every transformation (`prune`,
//! `make_ultrametric`) returns a new tree, so shared read access from
//! concurrent workers is safe.
//!
//! Branch lengths are in units of expected change along the tree (whatever
//! the input tree was estimated in); only ratios and sums of lengths matter
//! downstream.

pub mod generate;
pub mod newick;

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

/// Index of a node in the tree arena.
pub type NodeId = usize;

/// A single node: tips carry labels, internal nodes may or may not.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    /// Parent node, `None` for the root.
    pub parent: Option<NodeId>,
    /// Child nodes in input order; empty for tips.
    pub children: Vec<NodeId>,
    /// Branch length to the parent. For the root this is decorative: it is
    /// preserved through I/O but ignored by all path computations.
    pub length: f64,
    /// Tip label (required, unique) or optional internal label.
    pub label: Option<String>,
}

impl Node {
    /// True if this node has no children.
    pub fn is_tip(&self) -> bool {
        self.children.is_empty()
    }
}

/// A rooted tree over an immutable node arena.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
    root: NodeId,
}

/// Symmetric matrix of tip-to-tip path lengths, with its tip-label index.
#[derive(Debug, Clone)]
pub struct PathMatrix {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    dist: Vec<f64>, // row-major n*n
}

impl Tree {
    /// Validate and wrap a node arena. Checks the structural invariants:
    /// exactly one root, consistent parent/child links, connectedness,
    /// non-negative finite lengths, unique non-empty tip labels.
    pub fn new(nodes: Vec<Node>, root: NodeId) -> Result<Tree> {
        if nodes.is_empty() {
            return Err(Error::validation("tree has no nodes"));
        }
        if root >= nodes.len() || nodes[root].parent.is_some() {
            return Err(Error::validation("root marker does not name a parentless node"));
        }
        for (id, n) in nodes.iter().enumerate() {
            if id != root && n.parent.is_none() {
                return Err(Error::validation(format!("node {id} has no parent but is not the root")));
            }
            if let Some(p) = n.parent {
                if p >= nodes.len() || !nodes[p].children.contains(&id) {
                    return Err(Error::validation(format!("node {id} has inconsistent parent link")));
                }
            }
            for &c in &n.children {
                if c >= nodes.len() || nodes[c].parent != Some(id) {
                    return Err(Error::validation(format!("node {id} has inconsistent child link")));
                }
            }
            if !n.length.is_finite() || n.length < 0.0 {
                return Err(Error::validation(format!(
                    "node {id} has invalid branch length {}",
                    n.length
                )));
            }
        }
        let tree = Tree { nodes, root };
        // connectedness + acyclicity: the traversal from the root must reach
        // every node exactly once
        let seen = tree.preorder();
        if seen.len() != tree.nodes.len() {
            return Err(Error::validation("tree is not connected (unreachable nodes)"));
        }
        let mut labels = HashSet::new();
        for &t in &seen {
            if tree.nodes[t].is_tip() {
                match &tree.nodes[t].label {
                    None => return Err(Error::validation(format!("tip node {t} has no label"))),
                    Some(l) if l.is_empty() => {
                        return Err(Error::validation(format!("tip node {t} has an empty label")))
                    }
                    Some(l) => {
                        if !labels.insert(l.clone()) {
                            return Err(Error::validation(format!("duplicate tip label '{l}'")));
                        }
                    }
                }
            }
        }
        Ok(tree)
    }

    /// Root node id.
    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Total node count (tips + internal).
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// True if the arena is empty (never the case for a valid tree).
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Borrow a node.
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    /// Ids of all tips, in preorder (left-to-right as written in Newick).
    pub fn tips(&self) -> Vec<NodeId> {
        self.preorder().into_iter().filter(|&id| self.nodes[id].is_tip()).collect()
    }

    /// Number of tips.
    pub fn n_tips(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_tip()).count()
    }

    /// Tip labels in preorder.
    pub fn tip_labels(&self) -> Vec<String> {
        self.tips()
            .into_iter()
            .map(|id| self.nodes[id].label.clone().expect("validated tip label"))
            .collect()
    }

    /// Preorder traversal (parents before children).
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            out.push(id);
            // push in reverse so children come out left-to-right
            for &c in self.nodes[id].children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Postorder traversal (children before parents).
    pub fn postorder(&self) -> Vec<NodeId> {
        let mut pre = self.preorder();
        pre.reverse();
        // reversed preorder is a valid postorder for trees (parents after all
        // descendants), though not the mirror-image one; order within levels
        // does not matter to any consumer here
        pre
    }

    /// Root-to-node path length for every node (root = 0; the root's own
    /// `length` field is ignored).
    pub fn depths(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nodes.len()];
        for id in self.preorder() {
            if let Some(p) = self.nodes[id].parent {
                d[id] = d[p] + self.nodes[id].length;
            }
        }
        d
    }

    /// True if every tip is at the same depth within `tol`.
    pub fn is_ultrametric(&self, tol: f64) -> bool {
        let d = self.depths();
        let tips = self.tips();
        let first = d[tips[0]];
        tips.iter().all(|&t| (d[t] - first).abs() <= tol)
    }

    /// Restrict the tree to `keep`, collapsing unary nodes (their lengths are
    /// summed) so pairwise path lengths among kept tips are unchanged.
    pub fn prune(&self, keep: &HashSet<&str>) -> Result<Tree> {
        if keep.len() < 2 {
            return Err(Error::validation(format!(
                "prune needs at least 2 tips to keep, got {}",
                keep.len()
            )));
        }
        let mut by_label: HashMap<&str, NodeId> = HashMap::new();
        for id in self.tips() {
            by_label.insert(self.nodes[id].label.as_deref().expect("validated tip label"), id);
        }
        for &l in keep {
            if !by_label.contains_key(l) {
                return Err(Error::validation(format!("tip '{l}' not present in tree")));
            }
        }
        // mark every node with a kept descendant (or kept self, for tips)
        let mut kept = vec![false; self.nodes.len()];
        for id in self.postorder() {
            let n = &self.nodes[id];
            kept[id] = if n.is_tip() {
                keep.contains(n.label.as_deref().expect("validated tip label"))
            } else {
                n.children.iter().any(|&c| kept[c])
            };
        }
        // new root: descend through unary kept nodes from the old root
        let mut new_root = self.root;
        loop {
            let kc: Vec<NodeId> =
                self.nodes[new_root].children.iter().copied().filter(|&c| kept[c]).collect();
            if kc.len() == 1 && !self.nodes[new_root].is_tip() {
                new_root = kc[0];
            } else {
                break;
            }
        }

        let mut nodes: Vec<Node> = Vec::new();
        // depth-first copy; (old id, new parent, accumulated length)
        let mut stack: Vec<(NodeId, Option<NodeId>, f64)> = vec![(new_root, None, 0.0)];
        while let Some((old, parent, acc)) = stack.pop() {
            // slide through unary internal nodes, accumulating their lengths
            let mut cur = old;
            let mut acc = acc;
            loop {
                let kc: Vec<NodeId> =
                    self.nodes[cur].children.iter().copied().filter(|&c| kept[c]).collect();
                if kc.len() == 1 {
                    acc += self.nodes[kc[0]].length;
                    cur = kc[0];
                } else {
                    break;
                }
            }
            let new_id = nodes.len();
            nodes.push(Node {
                parent,
                children: Vec::new(),
                length: if parent.is_some() { self.nodes[cur].length + acc } else { 0.0 },
                label: self.nodes[cur].label.clone(),
            });
            if let Some(p) = parent {
                nodes[p].children.push(new_id);
            }
            // children pushed in reverse pop in input order, so sibling order
            // is preserved in the copy
            for &c in self.nodes[cur].children.iter().rev() {
                if kept[c] {
                    stack.push((c, Some(new_id), 0.0));
                }
            }
        }
        Tree::new(nodes, 0)
    }

    /// Rescale branches so every tip sits at the mean original root-to-tip
    /// depth. Each tip i demands the scaling f_i = mean/depth_i; a branch
    /// shared by several tips receives the average of its descendants'
    /// demands, and one top-down pass pins the final depths exactly.
    pub fn make_ultrametric(&self) -> Result<Tree> {
        if self.n_tips() < 2 {
            return Err(Error::validation("make_ultrametric needs at least 2 tips"));
        }
        let depth = self.depths();
        let tips = self.tips();
        for &t in &tips {
            if depth[t] <= 0.0 {
                return Err(Error::validation(format!(
                    "tip '{}' is at distance 0 from the root; cannot equalize depths",
                    self.nodes[t].label.as_deref().unwrap_or("?")
                )));
            }
        }
        let target: f64 = tips.iter().map(|&t| depth[t]).sum::<f64>() / tips.len() as f64;
        // mean of the per-tip scaling demands below each node
        let mut f_sum = vec![0.0; self.nodes.len()];
        let mut n_below = vec![0usize; self.nodes.len()];
        for id in self.postorder() {
            if self.nodes[id].is_tip() {
                f_sum[id] = target / depth[id];
                n_below[id] = 1;
            } else {
                for &c in &self.nodes[id].children {
                    f_sum[id] += f_sum[c];
                    n_below[id] += n_below[c];
                }
            }
        }
        // top-down: assign new depths, clamped to stay monotone down the tree
        let mut new_depth = vec![0.0; self.nodes.len()];
        let mut nodes = self.nodes.clone();
        for id in self.preorder() {
            let Some(p) = self.nodes[id].parent else { continue };
            new_depth[id] = if self.nodes[id].is_tip() {
                target
            } else {
                let f_mean = f_sum[id] / n_below[id] as f64;
                (depth[id] * f_mean).max(new_depth[p])
            };
            nodes[id].length = new_depth[id] - new_depth[p];
        }
        Tree::new(nodes, self.root)
    }

    /// Pairwise tip-to-tip path lengths: t_ij = depth_i + depth_j − 2·depth(lca).
    pub fn path_length_matrix(&self) -> PathMatrix {
        let tips = self.tips();
        let n = tips.len();
        let labels: Vec<String> =
            tips.iter().map(|&t| self.nodes[t].label.clone().expect("validated tip label")).collect();
        let mut tip_index = vec![usize::MAX; self.nodes.len()];
        for (i, &t) in tips.iter().enumerate() {
            tip_index[t] = i;
        }
        let depth = self.depths();
        let mut dist = vec![0.0; n * n];
        // per-node list of descendant tip indices; pairs meeting at a node v
        // have their LCA there
        let mut below: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for id in self.postorder() {
            if self.nodes[id].is_tip() {
                below[id] = vec![tip_index[id]];
                continue;
            }
            let mut merged: Vec<usize> = Vec::new();
            for &c in &self.nodes[id].children {
                let group = std::mem::take(&mut below[c]);
                for &a in &merged {
                    for &b in &group {
                        let d = depth[tips[a]] + depth[tips[b]] - 2.0 * depth[id];
                        dist[a * n + b] = d;
                        dist[b * n + a] = d;
                    }
                }
                merged.extend(group);
            }
            below[id] = merged;
        }
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        PathMatrix { labels, index, dist }
    }

    /// Serialize to a single Newick statement (terminated by `;`).
    pub fn to_newick(&self) -> String {
        newick::write(self)
    }
}

impl PathMatrix {
    /// Number of tips.
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Tip labels in matrix order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Path length between tips `i` and `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.labels.len() + j]
    }

    /// Matrix index of a tip label.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// CSV export with a header row of tip labels and a leading label column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("taxon");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for i in 0..self.n() {
            out.push_str(&self.labels[i]);
            for j in 0..self.n() {
                out.push(',');
                out.push_str(&format!("{}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tree(text: &str) -> Tree {
        newick::parse(text).expect("parse").tree
    }

    #[test]
    fn minimal_two_tip_tree_has_depth_one() {
        let t = tree("(A:1,B:1):0;");
        assert_eq!(t.n_tips(), 2);
        let d = t.depths();
        for tip in t.tips() {
            assert_eq!(d[tip], 1.0, "tip depth should be exactly 1");
        }
    }

    #[test]
    fn three_tip_topology_and_depths() {
        let t = tree("((A:1,B:1):1,C:2):0;");
        assert_eq!(t.n_tips(), 3);
        assert_eq!(t.len(), 5);
        let d = t.depths();
        let labels = t.tip_labels();
        assert_eq!(labels, vec!["A", "B", "C"]);
        // internal node joining A and B sits at depth 1
        let a = t.tips()[0];
        let ab = t.node(a).parent.unwrap();
        assert_eq!(d[ab], 1.0);
    }

    #[test]
    fn prune_preserves_kept_path_lengths() {
        let t = tree("((A:1,B:1):1,C:2):0;");
        let keep: HashSet<&str> = ["A", "C"].into_iter().collect();
        let p = t.prune(&keep).expect("prune");
        assert_eq!(p.n_tips(), 2);
        let m = p.path_length_matrix();
        let (ia, ic) = (m.index_of("A").unwrap(), m.index_of("C").unwrap());
        assert_eq!(m.get(ia, ic), 4.0, "t_AC must stay 4 after pruning B");
        // A's branch absorbed the collapsed unary node: length 2
        let a = p.tips().into_iter().find(|&x| p.node(x).label.as_deref() == Some("A")).unwrap();
        assert_eq!(p.node(a).length, 2.0);
    }

    #[test]
    fn prune_to_all_tips_is_identity_up_to_renumbering() {
        let t = tree("((A:1,B:1.5):1,(C:2,D:0.5):0.25):0;");
        let all: HashSet<&str> = ["A", "B", "C", "D"].into_iter().collect();
        let p = t.prune(&all).expect("prune");
        let (m0, m1) = (t.path_length_matrix(), p.path_length_matrix());
        assert_eq!(m0.labels(), m1.labels());
        for i in 0..m0.n() {
            for j in 0..m0.n() {
                assert_eq!(m0.get(i, j), m1.get(i, j), "path {i}-{j} changed");
            }
        }
    }

    #[test]
    fn prune_rejects_single_tip_and_unknown_labels() {
        let t = tree("((A:1,B:1):1,C:2):0;");
        let single: HashSet<&str> = ["A"].into_iter().collect();
        assert!(t.prune(&single).is_err(), "|keep| < 2 must fail");
        let unknown: HashSet<&str> = ["A", "Z"].into_iter().collect();
        assert!(t.prune(&unknown).is_err(), "unknown label must fail");
    }

    #[test]
    fn make_ultrametric_two_tip_example() {
        let t = tree("(A:1,B:3):0;");
        let u = t.make_ultrametric().expect("ultrametric");
        let d = u.depths();
        for tip in u.tips() {
            assert!((d[tip] - 2.0).abs() < 1e-12, "mean depth (1+3)/2 = 2, got {}", d[tip]);
        }
    }

    #[test]
    fn make_ultrametric_fixed_point_on_ultrametric_input() {
        let t = tree("((A:1,B:1):1,C:2):0;");
        let u = t.make_ultrametric().expect("ultrametric");
        for (a, b) in t.preorder().into_iter().zip(u.preorder()) {
            assert!(
                (t.node(a).length - u.node(b).length).abs() < 1e-12,
                "already-ultrametric tree should be unchanged"
            );
        }
    }

    #[test]
    fn make_ultrametric_equalizes_ragged_tree() {
        let t = tree("((A:0.3,B:2.2):1,(C:4,D:0.1):0.5):0;");
        let u = t.make_ultrametric().expect("ultrametric");
        let d = u.depths();
        let tips = u.tips();
        let t0 = d[tips[0]];
        for &tip in &tips {
            assert!((d[tip] - t0).abs() < 1e-9, "depths must be exactly equal");
        }
        for id in u.preorder() {
            assert!(u.node(id).length >= 0.0, "no negative branch lengths");
        }
    }

    #[test]
    fn make_ultrametric_rejects_zero_depth_tip() {
        let t = tree("(A:0,B:3):0;");
        assert!(t.make_ultrametric().is_err());
    }

    #[test]
    fn path_matrix_hand_checked_values() {
        let t = tree("((A:1,B:1):1,C:2):0;");
        let m = t.path_length_matrix();
        let i = |l: &str| m.index_of(l).unwrap();
        assert_eq!(m.get(i("A"), i("B")), 2.0);
        assert_eq!(m.get(i("A"), i("C")), 4.0);
        assert_eq!(m.get(i("B"), i("C")), 4.0);
        assert_eq!(m.get(i("A"), i("A")), 0.0);
    }

    #[test]
    fn path_matrix_two_tips() {
        let t = tree("(A:1,B:1);");
        let m = t.path_length_matrix();
        assert_eq!(m.get(0, 1), 2.0);
    }

    /// Independent oracle: find the LCA by intersecting ancestor chains and
    /// sum branch lengths upward on both sides.
    fn naive_path(t: &Tree, a: NodeId, b: NodeId) -> f64 {
        let mut anc = HashSet::new();
        let mut x = Some(a);
        while let Some(id) = x {
            anc.insert(id);
            x = t.node(id).parent;
        }
        let mut lca = b;
        while !anc.contains(&lca) {
            lca = t.node(lca).parent.expect("rooted tree has an LCA");
        }
        let up = |mut from: NodeId| {
            let mut s = 0.0;
            while from != lca {
                s += t.node(from).length;
                from = t.node(from).parent.unwrap();
            }
            s
        };
        up(a) + up(b)
    }

    #[test]
    fn path_matrix_matches_naive_oracle_on_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..20 {
            let t = generate::random_tree(50, &mut rng);
            let m = t.path_length_matrix();
            let tips = t.tips();
            for i in 0..tips.len() {
                for j in 0..tips.len() {
                    let want = if i == j { 0.0 } else { naive_path(&t, tips[i], tips[j]) };
                    assert!(
                        (m.get(i, j) - want).abs() < 1e-9,
                        "case {case}: path {i}-{j}: got {} want {want}",
                        m.get(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn path_matrix_csv_has_header_and_rows() {
        let t = tree("(A:1,B:1);");
        let csv = t.path_length_matrix().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("taxon,A,B"));
        assert_eq!(lines.next(), Some("A,0,2"));
        assert_eq!(lines.next(), Some("B,2,0"));
    }

    #[test]
    fn random_ultrametric_trees_are_ultrametric_and_deterministic() {
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let a = generate::random_ultrametric(40, 5.0, &mut r1);
        let b = generate::random_ultrametric(40, 5.0, &mut r2);
        assert_eq!(a.to_newick(), b.to_newick(), "same seed must give identical trees");
        assert!(a.is_ultrametric(1e-9));
        let d = a.depths();
        let tips = a.tips();
        assert!((d[tips[0]] - 5.0).abs() < 1e-9, "requested depth honored");
    }

    #[test]
    fn family_tree_generator_contains_all_families() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (t, fam) = generate::random_family_tree(60, 12, 8.0, &mut rng);
        assert_eq!(t.n_tips(), 60);
        assert_eq!(fam.len(), 60);
        assert!(t.is_ultrametric(1e-9));
        let distinct: HashSet<&str> = fam.iter().map(|(_, f)| f.as_str()).collect();
        assert_eq!(distinct.len(), 12);
        // tree tips and assignment taxa must agree
        let tips: HashSet<String> = t.tip_labels().into_iter().collect();
        for (taxon, _) in &fam {
            assert!(tips.contains(taxon), "taxon {taxon} missing from tree");
        }
    }
}
