//! `compare`: model comparison across completed runs — PSIS-LOO Δelpd and
//! bridge-sampling log-Bayes factors against the best-marginal-likelihood
//! reference. Runs must carry the identical dataset hash; comparing fits on
//! different data is refused.

use std::path::PathBuf;

use phylocorr::compare::{compare, FittedModel};
use phylocorr::sampler::Draws;
use phylocorr::{Error, Result};

use crate::rundir::LoadedRun;

#[derive(clap::Args)]
pub struct CompareArgs {
    /// Completed run directories (at least two).
    #[arg(required = true, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    /// Directory for comparison.csv / comparison.txt (default: current dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: CompareArgs) -> Result<()> {
    if args.runs.len() < 2 {
        return Err(Error::validation("comparison needs at least two run directories"));
    }
    let loaded: Vec<LoadedRun> = args
        .runs
        .iter()
        .map(|dir| LoadedRun::load(dir))
        .collect::<Result<_>>()?;
    let reference_hash = &loaded[0].manifest.dataset_hash;
    for run in &loaded[1..] {
        if &run.manifest.dataset_hash != reference_hash {
            return Err(Error::validation(format!(
                "{} was fitted to a different dataset (hash mismatch with {})",
                run.dir.display(),
                loaded[0].dir.display()
            )));
        }
    }
    let draws: Vec<Draws> = loaded.iter().map(|r| r.draws()).collect::<Result<_>>()?;
    let models: Vec<FittedModel<'_>> = loaded
        .iter()
        .zip(&draws)
        .map(|(r, d)| FittedModel { name: &r.manifest.model, post: &r.post, draws: d })
        .collect();
    let report = compare(&models)?;

    let out = args.out.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)?;
    report.to_csv(std::fs::File::create(out.join("comparison.csv"))?)?;
    let text = report.to_text();
    std::fs::write(out.join("comparison.txt"), &text)?;
    print!("{text}");
    Ok(())
}
