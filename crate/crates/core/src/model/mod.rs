//! Model definitions: the six bivariate-correlation densities and their
//! gradients over an unconstrained parameter vector.
//!
//! Three dependency structures (pooled, family random effects, family +
//! phylogenetic OU field) crossed with two observation likelihoods
//! (ordinal×binary via latent variables, continuous bivariate) give six
//! models. All share one prior set: ρ ~ Uniform(−1,1), scales and drift
//! rates ~ LogNormal(0,1), c₁ ~ Normal(0, 2), cutpoint gaps ζ ~
//! LogNormal(0, 2), μ ~ Normal(0, covariance 4I).
//!
//! Constrained scalars are sampled through smooth bijections (tanh for ρ,
//! exp for scales and gaps) with log-Jacobian corrections included, and all
//! latent effects use the non-centered parameterization, so the posterior is
//! defined over an unconstrained vector suitable for gradient-based MCMC.

pub mod cov;
pub mod link;
mod hier;
mod phylo;
mod pooled;
mod posterior;
pub(crate) mod treefield;

pub use cov::{build_phylo_cov, build_sigma, ou_cov, ou_cross_cov};
pub use link::{
    bernoulli_logit_logpmf, bernoulli_logit_logpmf_grad, ordered_logistic_logpmf,
    ordered_logistic_logpmf_grad,
};
pub use posterior::Posterior;
pub(crate) use posterior::LN_2PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bivariate correlation block: ρ ∈ (−1,1) and positive scales σ₁, σ₂.
/// The implied 2×2 covariance Σ = [[σ₁², ρσ₁σ₂],[ρσ₁σ₂, σ₂²]] is
/// positive-definite for |ρ| < 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationBlock {
    pub rho: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl CorrelationBlock {
    pub fn new(rho: f64, sigma1: f64, sigma2: f64) -> Result<Self> {
        if !rho.is_finite() || rho.abs() >= 1.0 {
            return Err(Error::validation(format!("rho = {rho} outside (-1, 1)")));
        }
        for (name, s) in [("sigma1", sigma1), ("sigma2", sigma2)] {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::validation(format!("{name} = {s} is not positive")));
            }
        }
        Ok(CorrelationBlock { rho, sigma1, sigma2 })
    }

    /// Lower Cholesky factor of Σ: z₁ = σ₁ε₁, z₂ = σ₂(ρε₁ + √(1−ρ²)ε₂).
    pub fn chol(&self) -> [[f64; 2]; 2] {
        let w = (1.0 - self.rho * self.rho).sqrt();
        [[self.sigma1, 0.0], [self.rho * self.sigma2, self.sigma2 * w]]
    }
}

/// Strictly increasing ordinal cutpoints. `min_gap` > 0 enforces the
/// phylogenetic model's minimum spacing c_{k+1} − c_k ≥ min_gap.
#[derive(Debug, Clone, PartialEq)]
pub struct Cutpoints {
    values: Vec<f64>,
    min_gap: f64,
}

impl Cutpoints {
    pub fn new(values: Vec<f64>, min_gap: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::validation("need at least one cutpoint"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite cutpoint"));
        }
        for w in values.windows(2) {
            if w[1] - w[0] < min_gap || w[1] <= w[0] {
                return Err(Error::validation(format!(
                    "cutpoints not increasing by at least {min_gap}: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Cutpoints { values, min_gap })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of ordinal levels (cutpoints + 1).
    pub fn n_levels(&self) -> usize {
        self.values.len() + 1
    }

    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }
}

/// Per-trait Ornstein–Uhlenbeck parameters: drift λ > 0 (reversion rate, in
/// 1/branch-length units), diffusion σ > 0, long-term mean μ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OUParams {
    pub lambda: f64,
    pub sigma: f64,
    pub mu: f64,
}

impl OUParams {
    pub fn new(lambda: f64, sigma: f64, mu: f64) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("sigma", sigma)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::validation(format!("{name} = {v} is not positive")));
            }
        }
        if !mu.is_finite() {
            return Err(Error::validation(format!("mu = {mu} is not finite")));
        }
        Ok(OUParams { lambda, sigma, mu })
    }

    /// Stationary variance σ²/(2λ).
    pub fn stationary_var(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.lambda)
    }
}

/// Observation likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    /// Ordinal trait (latent + cutpoints) × binary trait (latent + logit).
    Ordbin,
    /// Continuous bivariate trait pair.
    Cont,
}

/// Dependency structure across languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dependency {
    /// All languages exchangeable.
    Pooled,
    /// Family-level random effects plus language-level effects.
    Family,
    /// Family-level random effects plus a phylogenetic OU field on a tree.
    Phylo,
}

/// Prior hyperparameters, fixed to the published set by default but
/// overridable from a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSet {
    /// Log-scale sd for σ priors (LogNormal(0, ·)).
    pub sigma_log_sd: f64,
    /// Log-scale sd for λ priors.
    pub lambda_log_sd: f64,
    /// Sd of the first-cutpoint prior Normal(0, ·).
    pub c1_sd: f64,
    /// Log-scale sd for cutpoint-gap priors ζ ~ LogNormal(0, ·).
    pub zeta_log_sd: f64,
    /// Per-coordinate sd of μ ~ Normal(0, sd²·I) (covariance 4I by default).
    pub mu_sd: f64,
}

impl Default for PriorSet {
    fn default() -> Self {
        PriorSet { sigma_log_sd: 1.0, lambda_log_sd: 1.0, c1_sd: 2.0, zeta_log_sd: 2.0, mu_sd: 2.0 }
    }
}

/// Jitter policy for near-PSD covariance repairs: add `base`·(trace/dim) to
/// the diagonal, up to `max_tries` times, before failing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JitterPolicy {
    pub base: f64,
    pub max_tries: u32,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        JitterPolicy { base: 1e-9, max_tries: 3 }
    }
}

/// Full model selection: likelihood × dependency, plus the prior set, the
/// minimum cutpoint gap used in phylo mode, and numeric policies.
/// Serializable so a run's manifest pins the exact model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub likelihood: Likelihood,
    pub dependency: Dependency,
    /// Tie λ₂ := λ₁ (single drift rate). Default: two free rates.
    #[serde(default)]
    pub shared_lambda: bool,
    #[serde(default)]
    pub priors: PriorSet,
    #[serde(default)]
    pub jitter: JitterPolicy,
}

impl ModelSpec {
    pub fn new(likelihood: Likelihood, dependency: Dependency) -> Self {
        ModelSpec {
            likelihood,
            dependency,
            shared_lambda: false,
            priors: PriorSet::default(),
            jitter: JitterPolicy::default(),
        }
    }

    /// Minimum cutpoint gap: 0.01 in phylo mode, 0 otherwise.
    pub fn min_gap(&self) -> f64 {
        match self.dependency {
            Dependency::Phylo => 0.01,
            _ => 0.0,
        }
    }

    /// Parse from TOML (config-file form).
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::validation(format!("model config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("ModelSpec serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_block_validates_domain() {
        assert!(CorrelationBlock::new(0.5, 1.0, 2.0).is_ok());
        assert!(CorrelationBlock::new(1.0, 1.0, 1.0).is_err());
        assert!(CorrelationBlock::new(0.0, 0.0, 1.0).is_err());
        assert!(CorrelationBlock::new(0.0, 1.0, -2.0).is_err());
        assert!(CorrelationBlock::new(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn chol_reconstructs_sigma() {
        let b = CorrelationBlock::new(-0.6, 1.7, 0.4).unwrap();
        let l = b.chol();
        let s11 = l[0][0] * l[0][0];
        let s21 = l[1][0] * l[0][0];
        let s22 = l[1][0] * l[1][0] + l[1][1] * l[1][1];
        assert!((s11 - 1.7f64.powi(2)).abs() < 1e-12);
        assert!((s21 - (-0.6) * 1.7 * 0.4).abs() < 1e-12);
        assert!((s22 - 0.4f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn cutpoints_enforce_order_and_min_gap() {
        assert!(Cutpoints::new(vec![-1.0, 0.0, 1.0], 0.0).is_ok());
        assert!(Cutpoints::new(vec![0.0, 0.0], 0.0).is_err());
        assert!(Cutpoints::new(vec![0.0, 0.005], 0.01).is_err());
        assert!(Cutpoints::new(vec![0.0, 0.02], 0.01).is_ok());
        assert!(Cutpoints::new(vec![], 0.0).is_err());
    }

    #[test]
    fn ou_params_stationary_variance() {
        let p = OUParams::new(0.5, 1.0, 0.0).unwrap();
        assert!((p.stationary_var() - 1.0).abs() < 1e-15);
        assert!(OUParams::new(0.0, 1.0, 0.0).is_err());
        assert!(OUParams::new(1.0, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn model_spec_round_trips_through_toml_with_defaults() {
        let spec = ModelSpec::new(Likelihood::Ordbin, Dependency::Phylo);
        let text = spec.to_toml();
        let back = ModelSpec::from_toml(&text).unwrap();
        assert_eq!(spec, back);
        // sparse config: defaults fill in
        let sparse = ModelSpec::from_toml("likelihood = 'cont'\ndependency = 'pooled'").unwrap();
        assert_eq!(sparse.priors, PriorSet::default());
        assert!(!sparse.shared_lambda);
        assert_eq!(sparse.min_gap(), 0.0);
        assert_eq!(spec.min_gap(), 0.01);
    }
}
