//! Forward simulation from the generative process of any model spec, used
//! for parameter-recovery studies and synthetic examples.

use crate::data::{TraitColumn, TraitKind, TraitTable};
use crate::error::{Error, Result};
use crate::model::treefield::{field_forward, FlatField, OuHyper};
use crate::model::{Dependency, Likelihood, ModelSpec};
use crate::tree::Tree;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// True generating parameters. Fields irrelevant to a spec (e.g. `lam` for a
/// pooled model, `cuts` for a continuous one) are ignored.
#[derive(Debug, Clone)]
pub struct TrueParams {
    pub rho_f: f64,
    pub sig_f: [f64; 2],
    pub rho_l: f64,
    pub sig_l: [f64; 2],
    pub lam: [f64; 2],
    pub mu: [f64; 2],
    /// Increasing cutpoint positions (ordinal trait has cuts.len()+1 levels).
    pub cuts: Vec<f64>,
}

impl Default for TrueParams {
    fn default() -> Self {
        TrueParams {
            rho_f: 0.0,
            sig_f: [1.0, 1.0],
            rho_l: 0.0,
            sig_l: [1.0, 1.0],
            lam: [1.0, 1.0],
            mu: [0.0, 0.0],
            cuts: vec![-1.5, -0.5, 0.5, 1.5],
        }
    }
}

/// Population structure to simulate over.
pub enum SimLayout<'a> {
    /// n independent languages (each its own singleton family).
    Pooled { n: usize },
    /// One family per entry with the given number of languages.
    Families { sizes: &'a [usize] },
    /// A time tree; `families` assigns one family label per tip, in tip
    /// order.
    Tree { tree: &'a Tree, families: &'a [String] },
}

/// Draw one dataset exactly from the generative process of `spec`.
pub fn simulate(
    spec: &ModelSpec,
    params: &TrueParams,
    layout: &SimLayout<'_>,
    seed: u64,
) -> Result<TraitTable> {
    validate(spec, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // observation-scale latent pair per language
    let (taxa, families, z): (Vec<String>, Vec<String>, Vec<[f64; 2]>) = match layout {
        SimLayout::Pooled { n } => {
            if *n == 0 {
                return Err(Error::validation("cannot simulate an empty dataset"));
            }
            let z = (0..*n)
                .map(|_| add(params.mu, bvn(&mut rng, params.rho_l, params.sig_l)))
                .collect();
            let taxa = (0..*n).map(|i| format!("t{i}")).collect();
            let families = (0..*n).map(|i| format!("fam{i}")).collect();
            (taxa, families, z)
        }
        SimLayout::Families { sizes } => {
            if sizes.is_empty() || sizes.iter().any(|&s| s == 0) {
                return Err(Error::validation("family sizes must be positive"));
            }
            let mut taxa = Vec::new();
            let mut families = Vec::new();
            let mut z = Vec::new();
            for (f, &size) in sizes.iter().enumerate() {
                let zf = bvn(&mut rng, params.rho_f, params.sig_f);
                for _ in 0..size {
                    let zl = bvn(&mut rng, params.rho_l, params.sig_l);
                    taxa.push(format!("t{}", z.len()));
                    families.push(format!("fam{f}"));
                    z.push(add(params.mu, add(zf, zl)));
                }
            }
            (taxa, families, z)
        }
        SimLayout::Tree { tree, families } => {
            let tips = tree.tip_labels();
            if families.len() != tips.len() {
                return Err(Error::validation(
                    "family labels must match the tree's tip count",
                ));
            }
            // one OU field over every node; tips read off the field
            let flat = FlatField::new(tree, true)?;
            let h = OuHyper {
                lam: params.lam,
                sigma: params.sig_l,
                rho: params.rho_l,
                mu: params.mu,
            };
            let eps: Vec<f64> =
                (0..2 * flat.n_states()).map(|_| rng.sample(StandardNormal)).collect();
            let fwd = field_forward(&flat, &h, &eps)
                .ok_or_else(|| Error::numerical("OU field simulation failed (non-PD)"))?;
            // family effects keyed by first appearance
            let mut fam_names: Vec<&String> = Vec::new();
            let mut zf_of: Vec<[f64; 2]> = Vec::new();
            let mut z = Vec::new();
            for (i, fam) in families.iter().enumerate() {
                let fi = match fam_names.iter().position(|f| *f == fam) {
                    Some(k) => k,
                    None => {
                        fam_names.push(fam);
                        zf_of.push(bvn(&mut rng, params.rho_f, params.sig_f));
                        fam_names.len() - 1
                    }
                };
                z.push(add(fwd.s[flat.tip_state[i]], zf_of[fi]));
            }
            (tips, families.to_vec(), z)
        }
    };

    let columns = match spec.likelihood {
        Likelihood::Ordbin => {
            let k = params.cuts.len() + 1;
            let levels: Vec<String> = (1..=k).map(|j| j.to_string()).collect();
            let ord: Vec<Option<f64>> = z
                .iter()
                .map(|zi| Some(ordinal_draw(&mut rng, zi[0], &params.cuts) as f64))
                .collect();
            let bin: Vec<Option<f64>> = z
                .iter()
                .map(|zi| {
                    let p = crate::model::link::sigmoid(zi[1]);
                    Some(if rng.gen::<f64>() < p { 2.0 } else { 1.0 })
                })
                .collect();
            vec![
                TraitColumn {
                    name: "trait1".into(),
                    kind: TraitKind::Ordinal { levels },
                    values: ord,
                },
                TraitColumn {
                    name: "trait2".into(),
                    kind: TraitKind::Binary { levels: ["1".into(), "2".into()] },
                    values: bin,
                },
            ]
        }
        Likelihood::Cont => vec![
            TraitColumn {
                name: "trait1".into(),
                kind: TraitKind::Continuous,
                values: z.iter().map(|zi| Some(zi[0])).collect(),
            },
            TraitColumn {
                name: "trait2".into(),
                kind: TraitKind::Continuous,
                values: z.iter().map(|zi| Some(zi[1])).collect(),
            },
        ],
    };
    TraitTable::new(taxa, families, columns)
}

fn validate(spec: &ModelSpec, params: &TrueParams) -> Result<()> {
    if params.rho_l.abs() >= 1.0 || params.rho_f.abs() >= 1.0 {
        return Err(Error::validation("correlations must lie in (−1, 1)"));
    }
    if params.sig_l.iter().chain(&params.sig_f).any(|&s| s <= 0.0) {
        return Err(Error::validation("scales must be positive"));
    }
    if spec.dependency == Dependency::Phylo && params.lam.iter().any(|&l| l <= 0.0) {
        return Err(Error::validation("drift rates must be positive"));
    }
    if spec.likelihood == Likelihood::Ordbin {
        if params.cuts.is_empty() {
            return Err(Error::validation("ordinal trait needs at least one cutpoint"));
        }
        if params.cuts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("cutpoints must strictly increase"));
        }
    }
    Ok(())
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

/// One draw from N(0, Σ(ρ, σ)).
fn bvn(rng: &mut ChaCha8Rng, rho: f64, sig: [f64; 2]) -> [f64; 2] {
    let e1: f64 = rng.sample(StandardNormal);
    let e2: f64 = rng.sample(StandardNormal);
    let w = (1.0 - rho * rho).sqrt();
    [sig[0] * e1, sig[1] * (rho * e1 + w * e2)]
}

/// Ordered-logistic draw: the latent logistic variable z + Logistic(0,1)
/// lands between cutpoints.
fn ordinal_draw(rng: &mut ChaCha8Rng, z: f64, cuts: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let l = z + (u / (1.0 - u)).ln();
    1 + cuts.iter().filter(|&&c| l > c).count()
}
