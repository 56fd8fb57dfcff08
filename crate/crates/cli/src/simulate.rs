//! `simulate`: draw a synthetic dataset from the generative model and emit
//! ready-to-fit files plus a truth manifest.
//!
//! All inputs live in one TOML truth file:
//!
//! ```toml
//! likelihood = "ordbin"        # or "cont"
//! seed = 7                     # optional; --seed overrides
//!
//! [params]                     # every field optional; defaults are the
//! rho_l = 0.8                  # standard-normal/zero-mean reference values
//! sig_l = [1.0, 1.0]
//! rho_f = 0.6
//! sig_f = [1.0, 1.0]
//! lam = [0.1, 0.05]
//! mu = [0.0, 0.0]
//! cuts = [-1.5, -0.5, 0.5, 1.5]
//!
//! [layout]
//! kind = "pooled"              # n languages, no structure
//! n = 200
//! # kind = "families"          # one entry per family
//! # sizes = [12, 5, 30]
//! # kind = "tree"              # your Newick file (families optional)
//! # tree = "my.nwk"
//! # families = ["f1", "f2"]    # per tip, in tip order
//! # kind = "random-tree"       # generated family-structured time tree
//! # tips = 200
//! # families = 17
//! # depth = 1.0
//! ```
//!
//! Output: `data.csv`, `schema.toml`, `tree.nwk` (tree layouts), and
//! `truth.toml` echoing the resolved parameters, layout, and seed. Reruns
//! with the same inputs are byte-identical.

use std::path::{Path, PathBuf};

use phylocorr::data::write_table;
use phylocorr::model::ModelSpec;
use phylocorr::sampler::{simulate, SimLayout, TrueParams};
use phylocorr::tree::{generate, newick, Tree};
use phylocorr::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{read_input, LikelihoodChoice};

/// RNG stream reserved for tree generation so dataset and tree draws stay
/// independent under one seed.
const TREE_STREAM: u64 = 101;

#[derive(clap::Args)]
pub struct SimArgs {
    /// Truth file: likelihood, true parameters, layout, seed.
    #[arg(long)]
    pub truth: PathBuf,
    /// Output directory for the dataset files.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the truth file's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthFile {
    likelihood: LikelihoodChoice,
    seed: Option<u64>,
    #[serde(default)]
    params: ParamsSection,
    layout: LayoutSection,
}

/// All-optional mirror of `TrueParams`.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsSection {
    rho_f: Option<f64>,
    sig_f: Option<[f64; 2]>,
    rho_l: Option<f64>,
    sig_l: Option<[f64; 2]>,
    lam: Option<[f64; 2]>,
    mu: Option<[f64; 2]>,
    cuts: Option<Vec<f64>>,
}

impl ParamsSection {
    fn into_params(self) -> TrueParams {
        let d = TrueParams::default();
        TrueParams {
            rho_f: self.rho_f.unwrap_or(d.rho_f),
            sig_f: self.sig_f.unwrap_or(d.sig_f),
            rho_l: self.rho_l.unwrap_or(d.rho_l),
            sig_l: self.sig_l.unwrap_or(d.sig_l),
            lam: self.lam.unwrap_or(d.lam),
            mu: self.mu.unwrap_or(d.mu),
            cuts: self.cuts.unwrap_or(d.cuts),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum LayoutSection {
    Pooled { n: usize },
    Families { sizes: Vec<usize> },
    Tree {
        tree: PathBuf,
        #[serde(default)]
        families: Option<Vec<String>>,
    },
    RandomTree {
        tips: usize,
        families: usize,
        #[serde(default = "default_depth")]
        depth: f64,
    },
}

fn default_depth() -> f64 {
    1.0
}

pub fn run(args: SimArgs) -> Result<()> {
    let truth: TruthFile = toml::from_str(&read_input(&args.truth)?)
        .map_err(|e| Error::validation(format!("truth file: {e}")))?;
    let seed = args.seed.or(truth.seed).unwrap_or(1);
    let params = truth.params.into_params();
    let spec = ModelSpec::new(truth.likelihood.likelihood(), layout_dependency(&truth.layout));

    // materialize the layout (reading or generating the tree as needed)
    let truth_dir = args.truth.parent().unwrap_or(Path::new(".")).to_path_buf();
    let (tree, families): (Option<Tree>, Option<Vec<String>>) = match &truth.layout {
        LayoutSection::Tree { tree, families } => {
            let path = if tree.is_absolute() { tree.clone() } else { truth_dir.join(tree) };
            let parsed = newick::parse(&read_input(&path)?)?;
            let fams = match families {
                Some(f) => f.clone(),
                // default: every tip its own family (isolate-style)
                None => (0..parsed.tree.n_tips()).map(|i| format!("fam{i}")).collect(),
            };
            (Some(parsed.tree), Some(fams))
        }
        LayoutSection::RandomTree { tips, families, depth } => {
            if !(*depth > 0.0) {
                return Err(Error::validation("tree depth must be positive"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(TREE_STREAM);
            let (tree, pairs) = generate::random_family_tree(*tips, *families, *depth, &mut rng);
            // assignments come back per generated label; order them by tip
            let fams = tree
                .tip_labels()
                .iter()
                .map(|tip| {
                    pairs
                        .iter()
                        .find(|(l, _)| l == tip)
                        .map(|(_, f)| f.clone())
                        .expect("generator labels every tip")
                })
                .collect();
            (Some(tree), Some(fams))
        }
        _ => (None, None),
    };
    let layout = match (&truth.layout, &tree, &families) {
        (LayoutSection::Pooled { n }, ..) => SimLayout::Pooled { n: *n },
        (LayoutSection::Families { sizes }, ..) => SimLayout::Families { sizes },
        (_, Some(t), Some(f)) => SimLayout::Tree { tree: t, families: f },
        _ => unreachable!("tree layouts materialize a tree"),
    };
    let table = simulate(&spec, &params, &layout, seed)?;

    // ---- emit files --------------------------------------------------------
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("data.csv"), write_table(&table))?;
    std::fs::write(args.out.join("schema.toml"), schema_for(truth.likelihood, &params))?;
    if let Some(t) = &tree {
        std::fs::write(args.out.join("tree.nwk"), newick::write(t))?;
    }
    // echo a re-runnable layout: user trees point at the local copy with the
    // families actually used; generated trees re-generate from the seed
    let echo = match &truth.layout {
        LayoutSection::Tree { .. } => LayoutSection::Tree {
            tree: PathBuf::from("tree.nwk"),
            families: families.clone(),
        },
        other => other.clone(),
    };
    std::fs::write(
        args.out.join("truth.toml"),
        resolved_truth(truth.likelihood, seed, &params, &echo)?,
    )?;
    println!(
        "simulated {} taxa ({}) -> {}",
        table.n(),
        truth.likelihood.as_str(),
        args.out.display()
    );
    Ok(())
}

/// Family effects only enter tree and family layouts; declare the matching
/// dependency so `simulate` validates the right parameter subset.
fn layout_dependency(layout: &LayoutSection) -> phylocorr::model::Dependency {
    match layout {
        LayoutSection::Pooled { .. } => phylocorr::model::Dependency::Pooled,
        LayoutSection::Families { .. } => phylocorr::model::Dependency::Family,
        LayoutSection::Tree { .. } | LayoutSection::RandomTree { .. } => {
            phylocorr::model::Dependency::Phylo
        }
    }
}

/// Schema TOML matching the simulated columns.
fn schema_for(likelihood: LikelihoodChoice, params: &TrueParams) -> String {
    match likelihood {
        LikelihoodChoice::Ordbin => {
            let levels: Vec<String> =
                (1..=params.cuts.len() + 1).map(|k| format!("\"{k}\"")).collect();
            format!(
                "[[column]]\nname = \"trait1\"\nkind = \"ordinal\"\nlevels = [{}]\n\n\
                 [[column]]\nname = \"trait2\"\nkind = \"binary\"\nlevels = [\"1\", \"2\"]\n",
                levels.join(", ")
            )
        }
        LikelihoodChoice::Cont => "[[column]]\nname = \"trait1\"\nkind = \"continuous\"\n\n\
             [[column]]\nname = \"trait2\"\nkind = \"continuous\"\n"
            .to_string(),
    }
}

/// The truth manifest echoed next to the dataset.
fn resolved_truth(
    likelihood: LikelihoodChoice,
    seed: u64,
    params: &TrueParams,
    layout: &LayoutSection,
) -> Result<String> {
    #[derive(Serialize)]
    struct Resolved<'a> {
        likelihood: &'a str,
        seed: u64,
        params: ResolvedParams<'a>,
        layout: &'a LayoutSection,
    }
    #[derive(Serialize)]
    struct ResolvedParams<'a> {
        rho_f: f64,
        sig_f: [f64; 2],
        rho_l: f64,
        sig_l: [f64; 2],
        lam: [f64; 2],
        mu: [f64; 2],
        cuts: &'a [f64],
    }
    let doc = Resolved {
        likelihood: likelihood.as_str(),
        seed,
        params: ResolvedParams {
            rho_f: params.rho_f,
            sig_f: params.sig_f,
            rho_l: params.rho_l,
            sig_l: params.sig_l,
            lam: params.lam,
            mu: params.mu,
            cuts: &params.cuts,
        },
        layout,
    };
    toml::to_string(&doc).map_err(|e| Error::validation(format!("truth serialization: {e}")))
}
