//! `plotdata` subcommand: turn a finished run directory into plot-ready CSV
//! plus a minimal static SVG.
//!
//! Kinds:
//! - `scatter`: one row per language with both trait values and the family id
//!   (`scatter.csv`), plus a scatter SVG with per-family trend lines.
//! - `tree-annotation` (phylogenetic runs only): posterior ancestral-state
//!   summaries for every node (`reconstruction.csv`), the annotated Newick
//!   (`annotated.nwk`), and a cladogram SVG colored by the trait-1 mean.
//! - `crosstab` (ordinal×binary runs only): the K×2 contingency table
//!   (`crosstab.csv`) and a stacked-bar SVG.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use phylocorr::asr;
use phylocorr::data::{crosstab, TraitColumn, TraitKind};
use phylocorr::error::{Error, Result};
use phylocorr::model::{Dependency, Likelihood};

use crate::rundir;

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Run directory produced by `fit`.
    pub run: PathBuf,

    /// Which plot to produce.
    #[arg(long, value_enum)]
    pub kind: PlotKind,

    /// Output directory (default: `<run>/plots`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PlotKind {
    Scatter,
    TreeAnnotation,
    Crosstab,
}

pub fn run(args: PlotArgs) -> Result<()> {
    let run = rundir::LoadedRun::load(&args.run)?;
    let out = args.out.unwrap_or_else(|| run.dir.join("plots"));
    fs::create_dir_all(&out)?;
    let written = match args.kind {
        PlotKind::Scatter => scatter(&run, &out)?,
        PlotKind::TreeAnnotation => tree_annotation(&run, &out)?,
        PlotKind::Crosstab => cross(&run, &out)?,
    };
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Family ids in first-appearance order plus a per-row index into that order.
fn family_indices(families: &[String]) -> (Vec<String>, Vec<usize>) {
    let mut order = Vec::new();
    let mut index = HashMap::new();
    let mut per_row = Vec::with_capacity(families.len());
    for f in families {
        let next = order.len();
        let i = *index.entry(f.as_str()).or_insert_with(|| {
            order.push(f.clone());
            next
        });
        per_row.push(i);
    }
    (order, per_row)
}

/// Numeric plotting value for row i: the value itself for continuous columns,
/// the 1-based level code for discrete ones.
fn cell(col: &TraitColumn, i: usize) -> f64 {
    match col.kind {
        TraitKind::Continuous => col.value(i),
        _ => col.code(i) as f64,
    }
}

fn scatter(run: &rundir::LoadedRun, out: &std::path::Path) -> Result<Vec<PathBuf>> {
    let cols = run.table.columns();
    let (c1, c2) = (&cols[0], &cols[1]);
    let (fam_names, fam_idx) = family_indices(run.table.families());

    let mut csv = format!("taxon,{},{},family\n", c1.name, c2.name);
    let mut points = Vec::with_capacity(run.table.n());
    for (i, taxon) in run.table.taxa().iter().enumerate() {
        let (x, y) = (cell(c1, i), cell(c2, i));
        csv.push_str(&format!("{taxon},{x},{y},{}\n", run.table.families()[i]));
        points.push((x, y, fam_idx[i]));
    }
    let csv_path = out.join("scatter.csv");
    fs::write(&csv_path, csv)?;
    let svg_path = out.join("scatter.svg");
    fs::write(&svg_path, crate::svg::scatter(&points, &fam_names, &c1.name, &c2.name))?;
    Ok(vec![csv_path, svg_path])
}

fn tree_annotation(run: &rundir::LoadedRun, out: &std::path::Path) -> Result<Vec<PathBuf>> {
    if run.post.spec().dependency != Dependency::Phylo {
        return Err(Error::validation(
            "tree-annotation plots need a phylogenetic run (--model phylo)",
        ));
    }
    let tree = run
        .tree
        .as_ref()
        .ok_or_else(|| Error::validation("run directory has no aligned_tree.nwk"))?;
    let draws = run.draws()?;
    let recs = asr::reconstruct(&run.post, &draws, tree)?;

    let csv_path = out.join("reconstruction.csv");
    fs::write(&csv_path, asr::reconstruction_to_csv(&recs))?;
    let nwk_path = out.join("annotated.nwk");
    fs::write(&nwk_path, asr::annotated_newick(tree, &recs)?)?;

    let trait1_mean: HashMap<String, f64> =
        recs.iter().map(|r| (r.node.clone(), r.traits[0].mean)).collect();
    let svg_path = out.join("tree.svg");
    fs::write(&svg_path, crate::svg::tree_annotation(tree, &trait1_mean))?;
    Ok(vec![csv_path, nwk_path, svg_path])
}

fn cross(run: &rundir::LoadedRun, out: &std::path::Path) -> Result<Vec<PathBuf>> {
    if run.post.spec().likelihood != Likelihood::Ordbin {
        return Err(Error::validation(
            "crosstab plots need an ordinal×binary run (--likelihood ordbin)",
        ));
    }
    let cols = run.table.columns();
    let tab = crosstab(&cols[0], &cols[1])?;
    let csv_path = out.join("crosstab.csv");
    fs::write(&csv_path, tab.to_csv())?;
    let svg_path = out.join("crosstab.svg");
    fs::write(&svg_path, crate::svg::stacked_bars(&tab))?;
    Ok(vec![csv_path, svg_path])
}
