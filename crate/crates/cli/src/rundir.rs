//! Reading completed run directories back for comparison and plot emission.
//!
//! The aligned table and tree stored by `fit` are reloaded verbatim — the
//! ingestion transforms are *not* re-applied, so the rebuilt posterior binds
//! to exactly the data the original run sampled from.

use std::path::{Path, PathBuf};

use phylocorr::data::{read_table, Schema, TraitTable};
use phylocorr::model::{ModelSpec, Posterior};
use phylocorr::sampler::Draws;
use phylocorr::tree::{newick, Tree};
use phylocorr::{Error, Result};

use crate::config::{read_input, Manifest};

pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub table: TraitTable,
    pub tree: Option<Tree>,
    pub post: Posterior,
}

impl LoadedRun {
    pub fn load(dir: &Path) -> Result<LoadedRun> {
        let manifest = Manifest::load(dir)?;
        let spec = spec_from_config(dir)?;
        let schema = Schema::parse(&read_input(&dir.join("input/schema.toml"))?)?;
        let table = read_table(read_input(&dir.join("aligned.csv"))?.as_bytes(), &schema)?;
        let tree_path = dir.join("aligned_tree.nwk");
        let tree = if tree_path.exists() {
            Some(newick::parse(&read_input(&tree_path)?)?.tree)
        } else {
            None
        };
        let post = Posterior::new(spec, &table, tree.as_ref())?;
        Ok(LoadedRun { dir: dir.to_path_buf(), manifest, table, tree, post })
    }

    pub fn draws(&self) -> Result<Draws> {
        let draws = Draws::read_binary(&self.dir.join("draws.bin"))?;
        if draws.names() != self.post.names() {
            return Err(Error::validation(format!(
                "draws in {} do not match the run's model",
                self.dir.display()
            )));
        }
        Ok(draws)
    }
}

/// Rebuild the ModelSpec from the run's own config.toml.
fn spec_from_config(dir: &Path) -> Result<ModelSpec> {
    #[derive(serde::Deserialize)]
    struct Slim {
        model: String,
        likelihood: String,
        #[serde(default)]
        shared_lambda: bool,
    }
    let slim: Slim = toml::from_str(&read_input(&dir.join("config.toml"))?)
        .map_err(|e| Error::validation(format!("config.toml in {}: {e}", dir.display())))?;
    let dependency = match slim.model.as_str() {
        "vanilla" => phylocorr::model::Dependency::Pooled,
        "hier" => phylocorr::model::Dependency::Family,
        "phylo" => phylocorr::model::Dependency::Phylo,
        other => return Err(Error::validation(format!("unknown model '{other}' in config"))),
    };
    let likelihood = match slim.likelihood.as_str() {
        "ordbin" => phylocorr::model::Likelihood::Ordbin,
        "cont" => phylocorr::model::Likelihood::Cont,
        other => return Err(Error::validation(format!("unknown likelihood '{other}' in config"))),
    };
    let mut spec = ModelSpec::new(likelihood, dependency);
    spec.shared_lambda = slim.shared_lambda;
    Ok(spec)
}
