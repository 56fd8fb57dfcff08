//! Bayesian bivariate correlation models for cross-linguistic trait data.
//!
//! The crate estimates the association between two typological traits while
//! accounting for genealogical non-independence of languages. Three
//! dependency structures are supported — pooled (independent languages),
//! family random effects, and a phylogenetic Ornstein–Uhlenbeck process on a
//! time tree — crossed with two observation models (ordinal×binary through
//! latent variables, and continuous bivariate). Fitting is gradient-based
//! MCMC; model comparison uses PSIS-LOO and bridge-sampling marginal
//! likelihoods; fitted phylogenetic models support ancestral-state
//! reconstruction.

pub mod asr;
pub mod compare;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod sampler;
pub mod tree;

pub use error::{Error, Result};
