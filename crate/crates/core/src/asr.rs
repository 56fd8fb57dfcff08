//! Ancestral-state reconstruction for phylogenetic fits.
//!
//! Conditional on the hyperparameters of one posterior draw, the OU field
//! over the full node set is jointly Gaussian, so internal-node states given
//! the tip states have an exact multivariate-normal conditional. This module
//! computes that conditional with Gaussian belief propagation on the tree —
//! one upward information-form pass and one downward pass, O(N) per draw with
//! only 2×2 linear algebra — instead of materialising the dense node
//! covariance. Two consumers share the machinery:
//!
//! * [`conditional_node_moments`] returns the exact conditional mean and
//!   covariance per internal node at fixed parameters (deterministic; used by
//!   oracle tests and diagnostics), and
//! * [`reconstruct`] draws one internal-state sample per posterior draw from
//!   the conditional and aggregates posterior summaries per node and trait.
//!
//! Family intercepts z_f are added to the phylogenetic component for nodes
//! that lie strictly inside a single family's subtree; nodes whose descendant
//! tips span several families report the phylogenetic component only and are
//! flagged.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::diagnostics::quantile;
use crate::error::{Error, Result};
use crate::model::treefield::{branch_cov, chol2, OuHyper};
use crate::model::{Dependency, Posterior};
use crate::sampler::Draws;
use crate::tree::{NodeId, Tree};

/// Seed for the reconstruction sampler when the caller does not provide one.
const ASR_SEED: u64 = 0x0a5c_97ee;

type M2 = [[f64; 2]; 2];
type V2 = [f64; 2];

/// Posterior summary of one reconstructed trait at one node.
#[derive(Debug, Clone, Copy)]
pub struct TraitSummary {
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub q97_5: f64,
}

/// Reconstruction summary for one tree node (tips included: their rows
/// reproduce the fitted latent states, or the observations for continuous
/// traits, and serve as a consistency check).
#[derive(Debug, Clone)]
pub struct NodeReconstruction {
    /// Node label if the tree carries one, otherwise `n{id}` — the same
    /// naming used for the per-node state parameters of phylo fits.
    pub node: String,
    pub is_tip: bool,
    /// True for internal nodes whose descendant tips span more than one
    /// family: no single z_f applies, so the values are the phylogenetic
    /// component only.
    pub spans_families: bool,
    pub traits: [TraitSummary; 2],
}

/// Exact conditional mean and covariance of one internal node's state pair
/// given all tip values, at fixed OU parameters.
#[derive(Debug, Clone)]
pub struct NodeMoments {
    pub node: String,
    pub mean: V2,
    pub cov: M2,
}

// ---------------------------------------------------------------------------
// 2×2 helpers (symmetric matrices as [[f64; 2]; 2])
// ---------------------------------------------------------------------------

fn inv2(m: &M2) -> Result<M2> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::numerical(
            "singular 2×2 covariance in tree reconstruction",
        ));
    }
    Ok([
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ])
}

fn matvec(m: &M2, v: V2) -> V2 {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

fn matmul(a: &M2, b: &M2) -> M2 {
    let mut out = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

fn madd(a: &M2, b: &M2) -> M2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

/// a·cov·aᵀ for a general 2×2 `a` and symmetric `cov`.
fn sandwich(a: &M2, cov: &M2) -> M2 {
    let ac = matmul(a, cov);
    let mut out = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = ac[r][0] * a[c][0] + ac[r][1] * a[c][1];
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Tree skeleton
// ---------------------------------------------------------------------------

/// Internal-node skeleton plus tip attachment, in preorder. Unlike the model
/// flattening, zero-length tip branches are accepted here: such a tip pins
/// its parent's state exactly (a clamp), which is precisely the conditional
/// the reconstruction needs.
struct Skeleton {
    /// Internal nodes, preorder (root first).
    nodes: Vec<NodeId>,
    /// Parent position within `nodes`; `usize::MAX` for the root.
    parent: Vec<usize>,
    branch: Vec<f64>,
    /// Language i → position of its parent among the internal nodes.
    tip_parent: Vec<usize>,
    /// Language i → tip branch length.
    tip_branch: Vec<f64>,
}

impl Skeleton {
    fn new(tree: &Tree) -> Result<Skeleton> {
        let mut pos_of = vec![usize::MAX; tree.len()];
        let mut nodes = Vec::new();
        let mut parent = Vec::new();
        let mut branch = Vec::new();
        let mut tip_parent = Vec::new();
        let mut tip_branch = Vec::new();
        for id in tree.preorder() {
            let node = tree.node(id);
            if node.is_tip() {
                let p = node.parent.ok_or_else(|| {
                    Error::validation("single-node tree has no internal nodes to reconstruct")
                })?;
                tip_parent.push(pos_of[p]);
                tip_branch.push(node.length);
            } else {
                let k = nodes.len();
                pos_of[id] = k;
                nodes.push(id);
                parent.push(node.parent.map(|p| pos_of[p]).unwrap_or(usize::MAX));
                branch.push(node.length);
            }
        }
        Ok(Skeleton {
            nodes,
            parent,
            branch,
            tip_parent,
            tip_branch,
        })
    }
}

/// Evidence accumulated at each internal node: either an exact value (from a
/// zero-length tip branch) or an information-form Gaussian factor over the
/// node's state.
struct Upward {
    prec: Vec<M2>,
    shift: Vec<V2>,
    clamp: Vec<Option<V2>>,
}

/// Evidence a tip value `y` at branch length `b > 0` contributes about its
/// parent state s: the transition density N(y; μ + D(s−μ), V_b) viewed as a
/// function of s is exp(−½ sᵀPs + hᵀs) with P = D V_b⁻¹ D and
/// h = D V_b⁻¹ (y − (I−D)μ).
fn edge_evidence(h: &OuHyper, vinf: &M2, b: f64, y: V2) -> Result<(M2, V2)> {
    let d = [(-h.lam[0] * b).exp(), (-h.lam[1] * b).exp()];
    let w = inv2(&branch_cov(*vinf, h.lam, b))?;
    let a = [
        y[0] - (1.0 - d[0]) * h.mu[0],
        y[1] - (1.0 - d[1]) * h.mu[1],
    ];
    let wa = matvec(&w, a);
    let prec = [
        [d[0] * w[0][0] * d[0], d[0] * w[0][1] * d[1]],
        [d[1] * w[1][0] * d[0], d[1] * w[1][1] * d[1]],
    ];
    Ok((prec, [d[0] * wa[0], d[1] * wa[1]]))
}

fn merge_clamp(slot: &mut Option<V2>, y: V2) -> Result<()> {
    match slot {
        Some(prev) => {
            if (prev[0] - y[0]).abs() > 1e-9 || (prev[1] - y[1]).abs() > 1e-9 {
                return Err(Error::validation(
                    "conflicting zero-length branches pin one node to two different values",
                ));
            }
        }
        None => *slot = Some(y),
    }
    Ok(())
}

/// Upward pass: fold tip evidence into parents, then marginalise internal
/// nodes leaf-to-root, leaving at every internal node the information-form
/// summary of all evidence in its subtree.
fn upward(skel: &Skeleton, h: &OuHyper, vinf: &M2, tips: &[V2]) -> Result<Upward> {
    let ni = skel.nodes.len();
    let mut up = Upward {
        prec: vec![[[0.0; 2]; 2]; ni],
        shift: vec![[0.0; 2]; ni],
        clamp: vec![None; ni],
    };
    for (i, &y) in tips.iter().enumerate() {
        let p = skel.tip_parent[i];
        let b = skel.tip_branch[i];
        if b <= 0.0 {
            merge_clamp(&mut up.clamp[p], y)?;
        } else {
            let (pm, hm) = edge_evidence(h, vinf, b, y)?;
            up.prec[p] = madd(&up.prec[p], &pm);
            up.shift[p] = [up.shift[p][0] + hm[0], up.shift[p][1] + hm[1]];
        }
    }
    for k in (1..ni).rev() {
        let p = skel.parent[k];
        let b = skel.branch[k];
        if let Some(y) = up.clamp[k] {
            // A known state screens off its subtree; only the transition to
            // the parent carries information (a zero-length branch makes the
            // parent equally known).
            if b <= 0.0 {
                merge_clamp(&mut up.clamp[p], y)?;
            } else {
                let (pm, hm) = edge_evidence(h, vinf, b, y)?;
                up.prec[p] = madd(&up.prec[p], &pm);
                up.shift[p] = [up.shift[p][0] + hm[0], up.shift[p][1] + hm[1]];
            }
            continue;
        }
        if b <= 0.0 {
            // Pass-through: child state coincides with the parent state.
            up.prec[p] = madd(&up.prec[p], &up.prec[k]);
            up.shift[p] = [
                up.shift[p][0] + up.shift[k][0],
                up.shift[p][1] + up.shift[k][1],
            ];
            continue;
        }
        // Marginalise s_k out of N(s_k; μ + D(s_p−μ), V_b)·exp(−½s_kᵀPs_k + hᵀs_k):
        // the resulting factor over s_p has precision D(J − J K J)D and shift
        // D J (K(Jc + h) − c), with J = V_b⁻¹, K = (J+P)⁻¹, c = (I−D)μ.
        let d = [(-h.lam[0] * b).exp(), (-h.lam[1] * b).exp()];
        let j = inv2(&branch_cov(*vinf, h.lam, b))?;
        let kk = inv2(&madd(&j, &up.prec[k]))?;
        let c = [(1.0 - d[0]) * h.mu[0], (1.0 - d[1]) * h.mu[1]];
        let jc = matvec(&j, c);
        let t = matvec(&kk, [jc[0] + up.shift[k][0], jc[1] + up.shift[k][1]]);
        let jt = matvec(&j, [t[0] - c[0], t[1] - c[1]]);
        let jkj = matmul(&matmul(&j, &kk), &j);
        let mut pm = [[0.0; 2]; 2];
        for a in 0..2 {
            for cc in 0..2 {
                pm[a][cc] = d[a] * (j[a][cc] - jkj[a][cc]) * d[cc];
            }
        }
        let p_acc = skel.parent[k];
        up.prec[p_acc] = madd(&up.prec[p_acc], &pm);
        up.shift[p_acc] = [
            up.shift[p_acc][0] + d[0] * jt[0],
            up.shift[p_acc][1] + d[1] * jt[1],
        ];
    }
    Ok(up)
}

/// Conditional of node k given its parent state: s_k | s_p ~ N(G s_p + g, S),
/// combining the branch transition with the subtree evidence at k.
fn child_conditional(h: &OuHyper, vinf: &M2, b: f64, prec: &M2, shift: &V2) -> Result<(M2, V2, M2)> {
    let d = [(-h.lam[0] * b).exp(), (-h.lam[1] * b).exp()];
    let j = inv2(&branch_cov(*vinf, h.lam, b))?;
    let s = inv2(&madd(&j, prec))?;
    let sj = matmul(&s, &j);
    let gmat = [
        [sj[0][0] * d[0], sj[0][1] * d[1]],
        [sj[1][0] * d[0], sj[1][1] * d[1]],
    ];
    let c = [(1.0 - d[0]) * h.mu[0], (1.0 - d[1]) * h.mu[1]];
    let jc = matvec(&j, c);
    let g = matvec(&s, [jc[0] + shift[0], jc[1] + shift[1]]);
    Ok((gmat, g, s))
}

/// Root marginal given all evidence: the stationary prior N(μ, V∞) times the
/// accumulated factor.
fn root_marginal(h: &OuHyper, vinf: &M2, prec: &M2, shift: &V2) -> Result<(V2, M2)> {
    let jinf = inv2(vinf)?;
    let cov = inv2(&madd(&jinf, prec))?;
    let jm = matvec(&jinf, h.mu);
    let mean = matvec(&cov, [jm[0] + shift[0], jm[1] + shift[1]]);
    Ok((mean, cov))
}

fn validate_hypers(lam: V2, sigma: V2, rho: f64, tips: &[V2]) -> Result<()> {
    if !(lam[0] > 0.0 && lam[1] > 0.0 && sigma[0] > 0.0 && sigma[1] > 0.0) {
        return Err(Error::validation("OU drift and diffusion must be positive"));
    }
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::validation("correlation must lie in (−1, 1)"));
    }
    if tips.iter().any(|y| !y[0].is_finite() || !y[1].is_finite()) {
        return Err(Error::validation("tip values must be finite"));
    }
    Ok(())
}

fn node_name(tree: &Tree, id: NodeId) -> String {
    match &tree.node(id).label {
        Some(l) => l.clone(),
        None => format!("n{id}"),
    }
}

/// Exact conditional moments of every internal node's state pair given the
/// tip values, under the stationary bivariate OU field with drift `lam`,
/// diffusion `sigma`, stationary correlation `rho` and mean `mu`. `tips`
/// holds one value pair per tip, in tree tip order. Internal nodes are
/// returned in preorder. Covariances are across the two traits at one node;
/// cross-node covariances are not reported.
pub fn conditional_node_moments(
    tree: &Tree,
    lam: V2,
    sigma: V2,
    rho: f64,
    mu: V2,
    tips: &[V2],
) -> Result<Vec<NodeMoments>> {
    if tips.len() != tree.n_tips() {
        return Err(Error::validation(format!(
            "expected {} tip values, got {}",
            tree.n_tips(),
            tips.len()
        )));
    }
    validate_hypers(lam, sigma, rho, tips)?;
    let skel = Skeleton::new(tree)?;
    let h = OuHyper { lam, sigma, rho, mu };
    let vinf = h.vinf();
    let up = upward(&skel, &h, &vinf, tips)?;
    let ni = skel.nodes.len();
    let mut mean = vec![[0.0; 2]; ni];
    let mut cov = vec![[[0.0; 2]; 2]; ni];
    for k in 0..ni {
        if let Some(y) = up.clamp[k] {
            mean[k] = y;
            cov[k] = [[0.0; 2]; 2];
            continue;
        }
        if k == 0 {
            let (m, c) = root_marginal(&h, &vinf, &up.prec[0], &up.shift[0])?;
            mean[0] = m;
            cov[0] = c;
            continue;
        }
        let p = skel.parent[k];
        let b = skel.branch[k];
        if b <= 0.0 {
            mean[k] = mean[p];
            cov[k] = cov[p];
            continue;
        }
        let (gmat, g, s) = child_conditional(&h, &vinf, b, &up.prec[k], &up.shift[k])?;
        mean[k] = [
            gmat[0][0] * mean[p][0] + gmat[0][1] * mean[p][1] + g[0],
            gmat[1][0] * mean[p][0] + gmat[1][1] * mean[p][1] + g[1],
        ];
        cov[k] = madd(&sandwich(&gmat, &cov[p]), &s);
    }
    Ok((0..ni)
        .map(|k| NodeMoments {
            node: node_name(tree, skel.nodes[k]),
            mean: mean[k],
            cov: cov[k],
        })
        .collect())
}

/// One downward ancestral sample: internal states drawn from their joint
/// conditional given the tip values (root marginal, then each child from its
/// conditional given the sampled parent).
fn downward_sample(
    skel: &Skeleton,
    h: &OuHyper,
    vinf: &M2,
    up: &Upward,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<V2>> {
    let ni = skel.nodes.len();
    let mut state = vec![[0.0; 2]; ni];
    let mut noise = |m: V2, c: &M2| -> Result<V2> {
        let l = chol2(c[0][0], c[1][0], c[1][1]).ok_or_else(|| {
            Error::numerical("conditional covariance lost positive-definiteness")
        })?;
        let e1: f64 = StandardNormal.sample(rng);
        let e2: f64 = StandardNormal.sample(rng);
        Ok([m[0] + l[0] * e1, m[1] + l[1] * e1 + l[2] * e2])
    };
    for k in 0..ni {
        if let Some(y) = up.clamp[k] {
            state[k] = y;
            continue;
        }
        if k == 0 {
            let (m, c) = root_marginal(h, vinf, &up.prec[0], &up.shift[0])?;
            state[0] = noise(m, &c)?;
            continue;
        }
        let p = skel.parent[k];
        let b = skel.branch[k];
        if b <= 0.0 {
            state[k] = state[p];
            continue;
        }
        let (gmat, g, s) = child_conditional(h, vinf, b, &up.prec[k], &up.shift[k])?;
        let m = [
            gmat[0][0] * state[p][0] + gmat[0][1] * state[p][1] + g[0],
            gmat[1][0] * state[p][0] + gmat[1][1] * state[p][1] + g[1],
        ];
        state[k] = noise(m, &s)?;
    }
    Ok(state)
}

/// Family index shared by all descendant tips of each internal node, if any.
fn uniform_family(skel: &Skeleton, fam_of: &[usize]) -> Vec<Option<usize>> {
    // sentinel: usize::MAX = no tip seen yet, usize::MAX-1 = mixed
    const EMPTY: usize = usize::MAX;
    const MIXED: usize = usize::MAX - 1;
    let mut acc = vec![EMPTY; skel.nodes.len()];
    let fold = |slot: &mut usize, f: usize| {
        if *slot == EMPTY {
            *slot = f;
        } else if *slot != f {
            *slot = MIXED;
        }
    };
    for (i, &p) in skel.tip_parent.iter().enumerate() {
        fold(&mut acc[p], fam_of[i]);
    }
    for k in (1..skel.nodes.len()).rev() {
        let v = acc[k];
        if v != EMPTY {
            let p = skel.parent[k];
            if v == MIXED {
                acc[p] = MIXED;
            } else {
                fold(&mut acc[p], v);
            }
        }
    }
    acc.into_iter()
        .map(|v| (v != EMPTY && v != MIXED).then_some(v))
        .collect()
}

/// Reconstruct ancestral states for a phylogenetic fit with a fixed internal
/// seed; see [`reconstruct_seeded`].
pub fn reconstruct(post: &Posterior, draws: &Draws, tree: &Tree) -> Result<Vec<NodeReconstruction>> {
    reconstruct_seeded(post, draws, tree, ASR_SEED)
}

/// Reconstruct ancestral states for a phylogenetic fit. For every posterior
/// draw the internal-node states are sampled from their exact conditional
/// multivariate normal given that draw's tip states and hyperparameters; the
/// per-node, per-trait summaries aggregate over draws. Results are in tree
/// preorder and cover every node: tip rows reproduce the fitted tip latents
/// (ordinal×binary likelihood) or the observed values (continuous
/// likelihood). The sampler is deterministic in `seed` regardless of thread
/// scheduling.
pub fn reconstruct_seeded(
    post: &Posterior,
    draws: &Draws,
    tree: &Tree,
    seed: u64,
) -> Result<Vec<NodeReconstruction>> {
    if post.spec().dependency != Dependency::Phylo {
        return Err(Error::validation(
            "ancestral reconstruction requires a phylogenetic dependency structure",
        ));
    }
    if draws.names() != post.names() {
        return Err(Error::validation(
            "draws do not belong to this model (parameter names differ)",
        ));
    }
    if tree.tip_labels() != post.taxa() {
        return Err(Error::validation(
            "tree tips do not match the fitted taxa (same labels, same order, required)",
        ));
    }
    let total = draws.n_chains() * draws.n_iters();
    if total == 0 {
        return Err(Error::validation("no posterior draws to reconstruct from"));
    }
    let skel = Skeleton::new(tree)?;
    let fam_of = post.family_of();
    let family = uniform_family(&skel, fam_of);
    let lay = &post.lay;
    let el = lay.eps_l.ok_or_else(|| Error::validation("fit carries no node states"))?;
    let ef = lay.eps_f.ok_or_else(|| Error::validation("fit carries no family effects"))?;
    let flat = post
        .flat
        .as_ref()
        .ok_or_else(|| Error::validation("fit carries no tree flattening"))?;
    let latent_tips = flat.include_tips;
    let n = post.n_obs();
    let ni = skel.nodes.len();
    let n_iters = draws.n_iters();

    // One sampled state per draw for every output node (internal nodes first,
    // then tips), assembled in parallel; the RNG stream is the draw index, so
    // results are independent of the rayon schedule.
    let per_draw: Vec<Vec<V2>> = (0..total)
        .into_par_iter()
        .map(|t| -> Result<Vec<V2>> {
            let row = draws.row(t / n_iters, t % n_iters);
            let rho = row[lay.rho_l];
            let sig = [row[lay.sig_l], row[lay.sig_l + 1]];
            let lam = post.lambdas_from_constrained(row);
            let m = lay.mu.expect("phylo fits carry μ");
            let mu = [row[m], row[m + 1]];
            if !(lam[0] > 0.0 && lam[1] > 0.0 && sig[0] > 0.0 && sig[1] > 0.0 && rho.abs() < 1.0) {
                return Err(Error::numerical("degenerate hyperparameters in draw"));
            }
            let h = OuHyper { lam, sigma: sig, rho, mu };
            let vinf = h.vinf();
            let zf = |i: usize| -> V2 {
                let f = fam_of[i];
                [row[ef + 2 * f], row[ef + 2 * f + 1]]
            };
            // Tip values of the OU field for this draw.
            let tips: Vec<V2> = (0..n)
                .map(|i| {
                    if latent_tips {
                        let s = el + 2 * flat.tip_state[i];
                        [row[s], row[s + 1]]
                    } else {
                        let z = zf(i);
                        [post.x[i][0] - z[0], post.x[i][1] - z[1]]
                    }
                })
                .collect();
            let up = upward(&skel, &h, &vinf, &tips)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let states = downward_sample(&skel, &h, &vinf, &up, &mut rng)?;
            let mut out = Vec::with_capacity(ni + n);
            for (k, s) in states.into_iter().enumerate() {
                match family[k] {
                    Some(f) => {
                        out.push([s[0] + row[ef + 2 * f], s[1] + row[ef + 2 * f + 1]])
                    }
                    None => out.push(s),
                }
            }
            for (i, s) in tips.iter().enumerate() {
                let z = zf(i);
                out.push([s[0] + z[0], s[1] + z[1]]);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    // Assemble summaries in tree preorder.
    let mut internal_pos = HashMap::new();
    for (k, &id) in skel.nodes.iter().enumerate() {
        internal_pos.insert(id, k);
    }
    let mut tip_pos = HashMap::new();
    for (i, id) in tree.tips().into_iter().enumerate() {
        tip_pos.insert(id, ni + i);
    }
    let summarize = |col: usize, j: usize| -> TraitSummary {
        let mut vals: Vec<f64> = per_draw.iter().map(|d| d[col][j]).collect();
        let mean = vals.iter().sum::<f64>() / total as f64;
        let var = if total > 1 {
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (total - 1) as f64
        } else {
            0.0
        };
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        TraitSummary {
            mean,
            sd: var.sqrt(),
            q2_5: quantile(&vals, 0.025),
            q97_5: quantile(&vals, 0.975),
        }
    };
    let mut recs = Vec::with_capacity(ni + n);
    for id in tree.preorder() {
        let (col, is_tip, spans) = match internal_pos.get(&id) {
            Some(&k) => (k, false, family[k].is_none()),
            None => (tip_pos[&id], true, false),
        };
        recs.push(NodeReconstruction {
            node: node_name(tree, id),
            is_tip,
            spans_families: spans,
            traits: [summarize(col, 0), summarize(col, 1)],
        });
    }
    Ok(recs)
}

/// CSV export: one row per node and trait with the posterior summaries, plus
/// the spanning flag for nodes where no single family intercept applies.
pub fn reconstruction_to_csv(recs: &[NodeReconstruction]) -> String {
    let mut out = String::from("node,trait,mean,sd,q2.5,q97.5,spans_families\n");
    for r in recs {
        for (j, t) in r.traits.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.node,
                j + 1,
                t.mean,
                t.sd,
                t.q2_5,
                t.q97_5,
                r.spans_families
            ));
        }
    }
    out
}

/// Annotated Newick export: the fitted tree with a comment per node carrying
/// the posterior means of both reconstructed traits (and the spanning flag
/// where it applies), readable by standard tree viewers.
pub fn annotated_newick(tree: &Tree, recs: &[NodeReconstruction]) -> Result<String> {
    let by_name: HashMap<&str, &NodeReconstruction> =
        recs.iter().map(|r| (r.node.as_str(), r)).collect();
    fn quote(label: &str) -> String {
        if label
            .chars()
            .any(|c| c.is_whitespace() || "():,;[]'".contains(c))
        {
            format!("'{}'", label.replace('\'', "''"))
        } else {
            label.to_string()
        }
    }
    fn walk(
        tree: &Tree,
        id: NodeId,
        by_name: &HashMap<&str, &NodeReconstruction>,
        out: &mut String,
    ) -> Result<()> {
        let node = tree.node(id);
        if !node.children.is_empty() {
            out.push('(');
            for (i, &ch) in node.children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                walk(tree, ch, by_name, out)?;
            }
            out.push(')');
        }
        let name = match &node.label {
            Some(l) => l.clone(),
            None => format!("n{id}"),
        };
        if let Some(l) = &node.label {
            out.push_str(&quote(l));
        }
        let rec = by_name.get(name.as_str()).ok_or_else(|| {
            Error::validation(format!("no reconstruction for tree node '{name}'"))
        })?;
        out.push_str(&format!(
            "[&trait1_mean={:.6},trait2_mean={:.6}{}]",
            rec.traits[0].mean,
            rec.traits[1].mean,
            if rec.spans_families { ",spans_families=true" } else { "" }
        ));
        if node.parent.is_some() {
            out.push_str(&format!(":{}", node.length));
        }
        Ok(())
    }
    let mut out = String::new();
    walk(tree, tree.root(), &by_name, &mut out)?;
    out.push(';');
    Ok(out)
}
