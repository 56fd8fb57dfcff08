//! Run configuration: CLI flags merged over an optional TOML config file,
//! plus the content-addressed hashes recorded in run manifests.
//!
//! A config file may set any flag; explicit flags override it. Relative paths
//! inside a config file resolve against the file's own directory, which makes
//! run directories portable: the `config.toml` a fit writes points at the
//! input copies stored next to it, so re-executing from it reproduces the run
//! wherever the directory has been moved.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use phylocorr::model::{Dependency, Likelihood, ModelSpec};
use phylocorr::sampler::SamplerConfig;
use phylocorr::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Tool identification recorded in manifests (one workspace version).
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    /// Pooled: all languages exchangeable.
    Vanilla,
    /// Family-hierarchical random effects.
    Hier,
    /// Family effects plus a phylogenetic OU field.
    Phylo,
}

impl ModelChoice {
    pub fn dependency(self) -> Dependency {
        match self {
            ModelChoice::Vanilla => Dependency::Pooled,
            ModelChoice::Hier => Dependency::Family,
            ModelChoice::Phylo => Dependency::Phylo,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelChoice::Vanilla => "vanilla",
            ModelChoice::Hier => "hier",
            ModelChoice::Phylo => "phylo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodChoice {
    /// Ordinal trait 1 × binary trait 2 through latent variables.
    Ordbin,
    /// Bivariate continuous traits.
    Cont,
}

impl LikelihoodChoice {
    pub fn likelihood(self) -> Likelihood {
        match self {
            LikelihoodChoice::Ordbin => Likelihood::Ordbin,
            LikelihoodChoice::Cont => Likelihood::Cont,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LikelihoodChoice::Ordbin => "ordbin",
            LikelihoodChoice::Cont => "cont",
        }
    }
}

/// On-disk config file: every field optional so flags can fill the gaps.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    data: Option<PathBuf>,
    schema: Option<PathBuf>,
    tree: Option<PathBuf>,
    model: Option<ModelChoice>,
    likelihood: Option<LikelihoodChoice>,
    shared_lambda: Option<bool>,
    chains: Option<usize>,
    warmup: Option<usize>,
    iters: Option<usize>,
    seed: Option<u64>,
    target_accept: Option<f64>,
}

/// Flag-shaped partial configuration; `fit` embeds this via clap.
#[derive(Debug, Default, clap::Args)]
pub struct ConfigFlags {
    /// TOML config file; any flag may be set there, explicit flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trait table (CSV with taxon, family, and trait columns).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Column schema (TOML) declaring trait kinds and level orders.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Newick tree (required for --model phylo).
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Dependency structure.
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    /// Observation model.
    #[arg(long, value_enum)]
    pub likelihood: Option<LikelihoodChoice>,
    /// Tie the two OU drift rates to a single λ (phylo only).
    #[arg(long)]
    pub shared_lambda: bool,
    /// Number of chains.
    #[arg(long)]
    pub chains: Option<usize>,
    /// Warmup iterations per chain.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Post-warmup draws per chain.
    #[arg(long)]
    pub iters: Option<usize>,
    /// RNG seed (chains use counter-based streams derived from it).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dual-averaging acceptance target in (0, 1).
    #[arg(long)]
    pub target_accept: Option<f64>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: PathBuf,
    pub schema: PathBuf,
    pub tree: Option<PathBuf>,
    pub model: ModelChoice,
    pub likelihood: LikelihoodChoice,
    pub shared_lambda: bool,
    pub chains: usize,
    pub warmup: usize,
    pub iters: usize,
    pub seed: u64,
    pub target_accept: f64,
}

impl RunConfig {
    /// Merge flags over the optional config file and apply defaults;
    /// validates that every referenced path exists.
    pub fn resolve(flags: &ConfigFlags) -> Result<RunConfig> {
        let file = match &flags.config {
            Some(path) => {
                let text = read_input(path)?;
                let mut parsed: FileConfig = toml::from_str(&text)
                    .map_err(|e| Error::validation(format!("config file: {e}")))?;
                let base = path.parent().unwrap_or(Path::new("."));
                parsed.data = parsed.data.take().map(|p| rebase(base, p));
                parsed.schema = parsed.schema.take().map(|p| rebase(base, p));
                parsed.tree = parsed.tree.take().map(|p| rebase(base, p));
                parsed
            }
            None => FileConfig::default(),
        };
        let defaults = SamplerConfig::default();
        let cfg = RunConfig {
            data: flags
                .data
                .clone()
                .or(file.data)
                .ok_or_else(|| Error::validation("no data table given (--data or config file)"))?,
            schema: flags.schema.clone().or(file.schema).ok_or_else(|| {
                Error::validation("no column schema given (--schema or config file)")
            })?,
            tree: flags.tree.clone().or(file.tree),
            model: flags
                .model
                .or(file.model)
                .ok_or_else(|| Error::validation("no model given (--model or config file)"))?,
            likelihood: flags.likelihood.or(file.likelihood).ok_or_else(|| {
                Error::validation("no likelihood given (--likelihood or config file)")
            })?,
            shared_lambda: flags.shared_lambda || file.shared_lambda.unwrap_or(false),
            chains: flags.chains.or(file.chains).unwrap_or(defaults.chains),
            warmup: flags.warmup.or(file.warmup).unwrap_or(defaults.warmup),
            iters: flags.iters.or(file.iters).unwrap_or(defaults.iters),
            seed: flags.seed.or(file.seed).unwrap_or(defaults.seed),
            target_accept: flags
                .target_accept
                .or(file.target_accept)
                .unwrap_or(defaults.target_accept),
        };
        for (what, path) in [("data table", Some(&cfg.data)), ("schema", Some(&cfg.schema)), ("tree", cfg.tree.as_ref())]
        {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::validation(format!(
                        "{what} not found: {}",
                        p.display()
                    )));
                }
            }
        }
        if cfg.model == ModelChoice::Phylo && cfg.tree.is_none() {
            return Err(Error::validation("--model phylo requires --tree"));
        }
        if !(cfg.target_accept > 0.0 && cfg.target_accept < 1.0) {
            return Err(Error::validation("target_accept must lie in (0, 1)"));
        }
        Ok(cfg)
    }

    pub fn model_spec(&self) -> ModelSpec {
        let mut spec = ModelSpec::new(self.likelihood.likelihood(), self.model.dependency());
        spec.shared_lambda = self.shared_lambda;
        spec
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            chains: self.chains,
            warmup: self.warmup,
            iters: self.iters,
            target_accept: self.target_accept,
            seed: self.seed,
            ..SamplerConfig::default()
        }
    }

    /// Short model tag used as the model name in manifests and comparisons.
    pub fn model_tag(&self) -> String {
        format!("{}-{}", self.model.as_str(), self.likelihood.as_str())
    }

    /// Canonical path-free settings line entering the config hash.
    fn settings_line(&self) -> String {
        format!(
            "model={} likelihood={} shared_lambda={} chains={} warmup={} iters={} seed={} target_accept={}",
            self.model.as_str(),
            self.likelihood.as_str(),
            self.shared_lambda,
            self.chains,
            self.warmup,
            self.iters,
            self.seed,
            self.target_accept,
        )
    }

    /// Content hash of the run inputs: the settings line plus the raw bytes
    /// of the data, schema, and tree files. Independent of file paths, so a
    /// rerun from a run directory's copies hashes identically.
    pub fn config_hash(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        hasher.update(self.settings_line().as_bytes());
        for path in [Some(&self.data), Some(&self.schema), self.tree.as_ref()].into_iter().flatten()
        {
            hasher.update([0u8]);
            hasher.update(std::fs::read(path)?);
        }
        Ok(hex(&hasher.finalize()))
    }

    /// Config file written into a run directory, pointing at the input
    /// copies next to it.
    pub fn to_run_dir_toml(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("data = {:?}\n", "input/data.csv"));
        out.push_str(&format!("schema = {:?}\n", "input/schema.toml"));
        if self.tree.is_some() {
            out.push_str(&format!("tree = {:?}\n", "input/tree.nwk"));
        }
        out.push_str(&format!("model = {:?}\n", self.model.as_str()));
        out.push_str(&format!("likelihood = {:?}\n", self.likelihood.as_str()));
        out.push_str(&format!("shared_lambda = {}\n", self.shared_lambda));
        out.push_str(&format!("chains = {}\n", self.chains));
        out.push_str(&format!("warmup = {}\n", self.warmup));
        out.push_str(&format!("iters = {}\n", self.iters));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("target_accept = {}\n", self.target_accept));
        out
    }
}

/// Run manifest: enough to re-execute and to refuse cross-dataset
/// comparisons. Deliberately free of timestamps and absolute paths so a
/// rerun writes byte-identical files.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub model: String,
    pub seed: u64,
    pub config_hash: String,
    pub dataset_hash: String,
    pub n_obs: usize,
    pub n_params: usize,
    /// Per-column log-standardization constants (continuous columns only),
    /// kept for mapping fitted quantities back to the raw scale.
    #[serde(default)]
    pub standardization: BTreeMap<String, StandardizationRecord>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub mean: f64,
    pub sd: f64,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Manifest> {
        let path = dir.join("manifest.toml");
        if !path.exists() {
            return Err(Error::validation(format!(
                "{} is not a completed run directory (no manifest.toml)",
                dir.display()
            )));
        }
        toml::from_str(&read_input(&path)?)
            .map_err(|e| Error::validation(format!("manifest {}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self)
            .map_err(|e| Error::validation(format!("manifest serialization: {e}")))?;
        std::fs::write(dir.join("manifest.toml"), text)?;
        Ok(())
    }
}

/// Dataset identity: hash of the aligned table and tree exactly as the model
/// consumed them.
pub fn dataset_hash(aligned_csv: &str, tree_newick: Option<&str>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(aligned_csv.as_bytes());
    hasher.update([0u8]);
    if let Some(t) = tree_newick {
        hasher.update(t.as_bytes());
    }
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn rebase(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Read a required input file, reporting a missing path as a validation
/// failure rather than an I/O one.
pub fn read_input(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::validation(format!("file not found: {}", path.display())));
    }
    Ok(std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file_values() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["d.csv", "s.toml", "t.nwk"] {
            std::fs::write(dir.path().join(name), "x").unwrap();
        }
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(
            &cfg_path,
            "data = 'd.csv'\nschema = 's.toml'\ntree = 't.nwk'\nmodel = 'phylo'\nlikelihood = 'ordbin'\nchains = 8\nseed = 42\n",
        )
        .unwrap();
        let flags = ConfigFlags {
            config: Some(cfg_path),
            chains: Some(2),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&flags).unwrap();
        assert_eq!(cfg.chains, 2, "flag wins");
        assert_eq!(cfg.seed, 42, "file fills the gap");
        assert_eq!(cfg.model, ModelChoice::Phylo);
        assert_eq!(cfg.data, dir.path().join("d.csv"), "paths rebase onto the config dir");
        assert_eq!(cfg.warmup, 2000, "defaults apply last");
    }

    #[test]
    fn missing_required_fields_and_paths_are_validation_errors() {
        let flags = ConfigFlags::default();
        assert!(matches!(RunConfig::resolve(&flags), Err(Error::Validation(_))));

        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.csv"), "x").unwrap();
        std::fs::write(dir.path().join("s.toml"), "x").unwrap();
        let flags = ConfigFlags {
            data: Some(dir.path().join("d.csv")),
            schema: Some(dir.path().join("s.toml")),
            model: Some(ModelChoice::Phylo),
            likelihood: Some(LikelihoodChoice::Ordbin),
            ..Default::default()
        };
        // phylo without a tree
        assert!(matches!(RunConfig::resolve(&flags), Err(Error::Validation(_))));
        let flags = ConfigFlags {
            tree: Some(dir.path().join("missing.nwk")),
            ..flags
        };
        assert!(matches!(RunConfig::resolve(&flags), Err(Error::Validation(_))));
    }

    #[test]
    fn config_hash_tracks_content_not_location() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        std::fs::create_dir_all(&a).unwrap();
        std::fs::create_dir_all(&b).unwrap();
        for d in [&a, &b] {
            std::fs::write(d.join("d.csv"), "t,f,x\n1,1,0.5\n").unwrap();
            std::fs::write(d.join("s.toml"), "[[column]]\n").unwrap();
        }
        let mk = |d: &Path, chains| {
            RunConfig::resolve(&ConfigFlags {
                data: Some(d.join("d.csv")),
                schema: Some(d.join("s.toml")),
                model: Some(ModelChoice::Vanilla),
                likelihood: Some(LikelihoodChoice::Cont),
                chains,
                ..Default::default()
            })
            .unwrap()
        };
        let h_a = mk(&a, None).config_hash().unwrap();
        let h_b = mk(&b, None).config_hash().unwrap();
        assert_eq!(h_a, h_b, "same bytes, different directories");
        let h_c = mk(&a, Some(8)).config_hash().unwrap();
        assert_ne!(h_a, h_c, "settings enter the hash");
    }
}
