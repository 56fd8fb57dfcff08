//! `fit`: run the full pipeline — load, transform, align, sample — and leave
//! a self-describing run directory behind.
//!
//! Run directory layout:
//!
//! ```text
//! out/
//!   config.toml        resolved configuration, pointing at input/ copies
//!   manifest.toml      versions, seed, config hash, dataset hash, transforms
//!   input/             verbatim copies of the data, schema, and tree files
//!   aligned.csv        the table exactly as the model consumed it
//!   aligned_tree.nwk   the pruned tree (phylo runs)
//!   draws.bin          posterior draws, binary
//!   draws.csv          posterior draws, CSV
//!   summary.csv        per-parameter diagnostics summary
//!   summary.txt        the same, as an aligned text table
//! ```
//!
//! Re-executing `fit --config <out>/config.toml --out <new>` reproduces every
//! file byte-for-byte: nothing in the directory depends on wall-clock time or
//! absolute paths.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use phylocorr::data::schema::Transform;
use phylocorr::data::{load_table, log_standardize, Schema, TraitKind, TraitTable};
use phylocorr::diagnostics::{summarize, summary_table, summary_to_csv};
use phylocorr::model::Posterior;
use phylocorr::sampler::sample_posterior;
use phylocorr::tree::{newick, Tree};
use phylocorr::{Error, Result};

use crate::config::{
    dataset_hash, read_input, ConfigFlags, Manifest, RunConfig, StandardizationRecord, VERSION,
};

#[derive(clap::Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub config: ConfigFlags,
    /// Run directory to create (must not already hold a completed run).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: FitArgs) -> Result<()> {
    let cfg = RunConfig::resolve(&args.config)?;
    let out = &args.out;
    if out.join("manifest.toml").exists() {
        return Err(Error::validation(format!(
            "{} already holds a completed run; refusing to overwrite",
            out.display()
        )));
    }
    let prepared = prepare(&cfg)?;
    let spec = cfg.model_spec();
    let post = Posterior::new(spec, &prepared.table, prepared.tree.as_ref())?;
    let draws = sample_posterior(&post, &cfg.sampler_config())?;

    // ---- emit the run directory ------------------------------------------
    fs::create_dir_all(out.join("input"))?;
    fs::copy(&cfg.data, out.join("input/data.csv"))?;
    fs::copy(&cfg.schema, out.join("input/schema.toml"))?;
    if let Some(tree_path) = &cfg.tree {
        fs::copy(tree_path, out.join("input/tree.nwk"))?;
    }
    let aligned_csv = phylocorr::data::write_table(&prepared.table);
    fs::write(out.join("aligned.csv"), &aligned_csv)?;
    let tree_text = prepared.tree.as_ref().map(newick::write);
    if let Some(text) = &tree_text {
        fs::write(out.join("aligned_tree.nwk"), text)?;
    }
    draws.write_binary(&out.join("draws.bin"))?;
    draws.to_csv(fs::File::create(out.join("draws.csv"))?)?;
    let rows = summarize(&draws);
    summary_to_csv(&rows, fs::File::create(out.join("summary.csv"))?)?;
    fs::write(out.join("summary.txt"), summary_table(&rows))?;
    fs::write(out.join("config.toml"), cfg.to_run_dir_toml())?;
    let manifest = Manifest {
        tool: format!("phylocorr {VERSION}"),
        model: cfg.model_tag(),
        seed: cfg.seed,
        config_hash: cfg.config_hash()?,
        dataset_hash: dataset_hash(&aligned_csv, tree_text.as_deref()),
        n_obs: prepared.table.n(),
        n_params: post.dim(),
        standardization: prepared.standardization,
    };
    manifest.save(out)?;

    // hyperparameter summary on stdout; per-taxon latents stay in the files
    let head: Vec<_> = rows.iter().filter(|r| !r.name.contains('[')).cloned().collect();
    println!(
        "fit {} on {} taxa ({} parameters) -> {}",
        manifest.model,
        manifest.n_obs,
        manifest.n_params,
        out.display()
    );
    print!("{}", summary_table(&head));
    Ok(())
}

/// The model-ready data: complete cases, declared column transforms applied,
/// aligned with the tree when one is in play.
pub struct Prepared {
    pub table: TraitTable,
    pub tree: Option<Tree>,
    pub standardization: BTreeMap<String, StandardizationRecord>,
}

/// Shared ingestion pipeline (fit and the run-reload path of plotdata use
/// the same steps, so the dataset hash is reproducible from either end).
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let schema = Schema::parse(&read_input(&cfg.schema)?)?;
    check_schema(&schema, cfg.likelihood)?;
    let full = load_table(&cfg.data, &schema)?;
    let (complete, dropped) = full.complete_cases();
    if !dropped.is_empty() {
        eprintln!("note: dropped {} incomplete rows", dropped.len());
    }
    let (table, standardization) = apply_transforms(complete, &schema)?;
    match (&cfg.tree, cfg.model) {
        (Some(path), crate::config::ModelChoice::Phylo) => {
            let parsed = newick::parse(&read_input(path)?)?;
            let (aligned, tree, report) = phylocorr::data::align(&table, &parsed.tree)?;
            if !report.dropped_rows.is_empty() || !report.dropped_tips.is_empty() {
                eprintln!(
                    "note: alignment dropped {} table rows and pruned {} tree tips",
                    report.dropped_rows.len(),
                    report.dropped_tips.len()
                );
            }
            Ok(Prepared { table: aligned, tree: Some(tree), standardization })
        }
        (Some(_), _) => {
            eprintln!("note: tree ignored for a non-phylogenetic model");
            Ok(Prepared { table, tree: None, standardization })
        }
        (None, _) => Ok(Prepared { table, tree: None, standardization }),
    }
}

/// The two declared trait columns must match the chosen likelihood.
fn check_schema(schema: &Schema, likelihood: crate::config::LikelihoodChoice) -> Result<()> {
    if schema.columns.len() != 2 {
        return Err(Error::validation(format!(
            "bivariate models need exactly 2 trait columns, schema declares {}",
            schema.columns.len()
        )));
    }
    let kinds: Vec<&TraitKind> = schema.columns.iter().map(|c| &c.kind).collect();
    let ok = match likelihood {
        crate::config::LikelihoodChoice::Ordbin => {
            matches!(kinds[0], TraitKind::Ordinal { .. }) && matches!(kinds[1], TraitKind::Binary { .. })
        }
        crate::config::LikelihoodChoice::Cont => {
            kinds.iter().all(|k| matches!(k, TraitKind::Continuous))
        }
    };
    if !ok {
        return Err(Error::validation(format!(
            "schema columns do not fit likelihood '{}': expected {}",
            likelihood.as_str(),
            match likelihood {
                crate::config::LikelihoodChoice::Ordbin => "ordinal then binary",
                crate::config::LikelihoodChoice::Cont => "two continuous columns",
            }
        )));
    }
    Ok(())
}

/// Apply the schema-declared transforms (currently log-standardization of
/// raw continuous measurements), recording the constants for the manifest;
/// undeclared columns pass through untouched.
fn apply_transforms(
    mut table: TraitTable,
    schema: &Schema,
) -> Result<(TraitTable, BTreeMap<String, StandardizationRecord>)> {
    let mut records = BTreeMap::new();
    for sc in &schema.columns {
        if sc.transform != Transform::LogStandardize {
            continue;
        }
        let col = table.column(&sc.name).expect("schema column loaded").clone();
        let (transformed, stand) = log_standardize(&col)?;
        records.insert(sc.name.clone(), StandardizationRecord { mean: stand.mean, sd: stand.sd });
        table.replace_column(transformed)?;
    }
    Ok((table, records))
}
