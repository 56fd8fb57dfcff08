//! Model comparison: PSIS-LOO expected log predictive density and
//! bridge-sampling marginal likelihoods / log-Bayes factors.

mod bridge;
mod psis;

pub use bridge::{
    bridge_from_fn, log_marginal_bridge, log_marginal_bridge_seeded, BridgeEstimate,
};
pub use psis::{psis_loo, LooEstimate};

use crate::error::{Error, Result};
use crate::model::{Likelihood, Posterior};
use crate::sampler::Draws;
use rayon::prelude::*;
use std::io::Write;

/// Conditional log-likelihood of each observation under each posterior draw,
/// flattened draw-major.
#[derive(Debug, Clone)]
pub struct PointwiseLogLik {
    pub(crate) ll: Vec<f64>,
    pub n_draws: usize,
    pub n_obs: usize,
    /// True when the entries condition on sampled latent values (every model
    /// except pooled-continuous); the likelihood then does not factorize
    /// marginally and LOO estimates carry that interpretation.
    pub conditional: bool,
}

impl PointwiseLogLik {
    pub fn entry(&self, draw: usize, obs: usize) -> f64 {
        self.ll[draw * self.n_obs + obs]
    }
}

/// Evaluate the conditional pointwise log-likelihood matrix for fitted draws.
pub fn pointwise_loglik(post: &Posterior, draws: &Draws) -> Result<PointwiseLogLik> {
    if draws.names() != post.names() {
        return Err(Error::validation(
            "draws do not match the model's parameter layout",
        ));
    }
    let n_draws = draws.n_chains() * draws.n_iters();
    let rows: Vec<Vec<f64>> = (0..n_draws)
        .into_par_iter()
        .map(|s| {
            let (c, i) = (s / draws.n_iters(), s % draws.n_iters());
            post.pointwise_loglik_row(draws.row(c, i))
        })
        .collect();
    let n_obs = post.n_obs();
    let mut ll = Vec::with_capacity(n_draws * n_obs);
    for row in rows {
        debug_assert_eq!(row.len(), n_obs);
        ll.extend(row);
    }
    if ll.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(
            "non-finite pointwise log-likelihood entry; draws may be corrupt",
        ));
    }
    let conditional = post.spec().likelihood == Likelihood::Ordbin
        || post.spec().dependency != crate::model::Dependency::Pooled;
    Ok(PointwiseLogLik { ll, n_draws, n_obs, conditional })
}

/// A named fitted model awaiting comparison.
pub struct FittedModel<'a> {
    pub name: &'a str,
    pub post: &'a Posterior,
    pub draws: &'a Draws,
}

/// One comparison row; deltas are taken against the reference model (the
/// highest log marginal likelihood), whose own deltas are exactly 0.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub name: String,
    pub elpd: f64,
    pub elpd_se: f64,
    pub delta_elpd: f64,
    pub log_ml: f64,
    pub log_bf: f64,
    pub pareto_flagged: usize,
    pub conditional_loo: bool,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub reference: String,
    pub rows: Vec<ComparisonRow>,
}

/// Compare fitted models on the identical dataset by Δelpd (PSIS-LOO) and
/// log-Bayes factor (bridge sampling).
pub fn compare(models: &[FittedModel<'_>]) -> Result<ComparisonReport> {
    if models.len() < 2 {
        return Err(Error::validation("comparison needs at least two fitted models"));
    }
    let first = models[0].post;
    for m in &models[1..] {
        let p = m.post;
        if p.taxa() != first.taxa()
            || p.y_ord != first.y_ord
            || p.y_bin != first.y_bin
            || p.x != first.x
        {
            return Err(Error::validation(format!(
                "model '{}' was fitted to a different dataset",
                m.name
            )));
        }
    }
    let per_model: Vec<Result<(LooEstimate, BridgeEstimate)>> = models
        .par_iter()
        .map(|m| {
            let loo = psis_loo(&pointwise_loglik(m.post, m.draws)?)?;
            let bridge = log_marginal_bridge(m.post, m.draws)?;
            Ok((loo, bridge))
        })
        .collect();
    let mut rows = Vec::with_capacity(models.len());
    for (m, r) in models.iter().zip(per_model) {
        let (loo, bridge) = r?;
        rows.push(ComparisonRow {
            name: m.name.to_string(),
            elpd: loo.elpd,
            elpd_se: loo.se,
            delta_elpd: 0.0,
            log_ml: bridge.log_ml,
            log_bf: 0.0,
            pareto_flagged: loo.flagged,
            conditional_loo: loo.conditional,
        });
    }
    finish_report(rows)
}

/// Fill deltas against the best-marginal-likelihood reference.
pub(crate) fn finish_report(mut rows: Vec<ComparisonRow>) -> Result<ComparisonReport> {
    let best = rows
        .iter()
        .max_by(|a, b| a.log_ml.total_cmp(&b.log_ml))
        .ok_or_else(|| Error::validation("empty comparison"))?;
    let (ref_name, ref_ml, ref_elpd) = (best.name.clone(), best.log_ml, best.elpd);
    for r in &mut rows {
        r.log_bf = r.log_ml - ref_ml;
        r.delta_elpd = r.elpd - ref_elpd;
    }
    Ok(ComparisonReport { reference: ref_name, rows })
}

impl ComparisonReport {
    /// CSV rendering of the comparison table.
    pub fn to_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "model",
            "elpd",
            "elpd_se",
            "delta_elpd",
            "log_ml",
            "log_bf",
            "pareto_flagged",
            "conditional_loo",
        ])
        .map_err(|e| Error::validation(format!("comparison csv: {e}")))?;
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                format!("{:.4}", r.elpd),
                format!("{:.4}", r.elpd_se),
                format!("{:.4}", r.delta_elpd),
                format!("{:.4}", r.log_ml),
                format!("{:.4}", r.log_bf),
                r.pareto_flagged.to_string(),
                r.conditional_loo.to_string(),
            ])
            .map_err(|e| Error::validation(format!("comparison csv: {e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned text table; the reference model is marked with '*'.
    pub fn to_text(&self) -> String {
        let mut out = String::from(
            "model              log-BF      Δelpd   elpd_se  flagged\n",
        );
        for r in &self.rows {
            let mark = if r.name == self.reference { "*" } else { " " };
            out.push_str(&format!(
                "{mark}{:<17} {:>8.1} {:>10.1} {:>9.1} {:>8}\n",
                r.name, r.log_bf, r.delta_elpd, r.elpd_se, r.pareto_flagged
            ));
        }
        if self.rows.iter().any(|r| r.conditional_loo) {
            out.push_str(
                "note: elpd conditions on sampled latent values (no marginal factorization)\n",
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{TraitColumn, TraitKind, TraitTable};
    use crate::model::link::{bernoulli_logit_logpmf, ordered_logistic_logpmf};
    use crate::model::{Dependency, Likelihood, ModelSpec, LN_2PI};
    use crate::sampler::{sample_posterior, SamplerConfig};

    fn ordbin_post() -> Posterior {
        let taxa = vec!["L1".into(), "L2".into(), "L3".into()];
        let fams = vec!["f1".into(), "f1".into(), "f2".into()];
        let cols = vec![
            TraitColumn {
                name: "ord".into(),
                kind: TraitKind::Ordinal {
                    levels: (1..=5).map(|k| k.to_string()).collect(),
                },
                values: vec![Some(2.0), Some(5.0), Some(3.0)],
            },
            TraitColumn {
                name: "bin".into(),
                kind: TraitKind::Binary { levels: ["no".into(), "yes".into()] },
                values: vec![Some(1.0), Some(2.0), Some(2.0)],
            },
        ];
        let table = TraitTable::new(taxa, fams, cols).unwrap();
        let spec = ModelSpec::new(Likelihood::Ordbin, Dependency::Pooled);
        Posterior::new(spec, &table, None).unwrap()
    }

    fn cont_post(x: &[[f64; 2]]) -> Posterior {
        let taxa: Vec<String> = (0..x.len()).map(|i| format!("L{i}")).collect();
        let fams: Vec<String> = (0..x.len()).map(|i| format!("f{i}")).collect();
        let cols = vec![
            TraitColumn {
                name: "a".into(),
                kind: TraitKind::Continuous,
                values: x.iter().map(|v| Some(v[0])).collect(),
            },
            TraitColumn {
                name: "b".into(),
                kind: TraitKind::Continuous,
                values: x.iter().map(|v| Some(v[1])).collect(),
            },
        ];
        let table = TraitTable::new(taxa, fams, cols).unwrap();
        let spec = ModelSpec::new(Likelihood::Cont, Dependency::Pooled);
        Posterior::new(spec, &table, None).unwrap()
    }

    fn quick_fit(post: &Posterior, seed: u64, iters: usize) -> Draws {
        let cfg = SamplerConfig {
            chains: 2,
            warmup: 300,
            iters,
            seed,
            ..SamplerConfig::default()
        };
        sample_posterior(post, &cfg).unwrap()
    }

    #[test]
    fn ordbin_entries_reproduce_link_densities() {
        let post = ordbin_post();
        let draws = quick_fit(&post, 1, 60);
        let pl = pointwise_loglik(&post, &draws).unwrap();
        assert!(pl.conditional);
        assert_eq!(pl.n_obs, 3);
        let y_ord = [2usize, 5, 3];
        let y_bin = [1usize, 2, 2];
        for (c, s) in [(0usize, 4usize), (1usize, 17usize)] {
            let row = draws.row(c, s);
            let cuts = post.cutpoints_from_constrained(row);
            for i in 0..3 {
                let [z1, z2] = post.latent_pair(row, i, Dependency::Pooled);
                let expect = ordered_logistic_logpmf(z1, &cuts, y_ord[i])
                    + bernoulli_logit_logpmf(z2, y_bin[i]);
                let got = pl.entry(c * draws.n_iters() + s, i);
                assert!((got - expect).abs() < 1e-12, "obs {i}: {got} vs {expect}");
            }
        }
    }

    #[test]
    fn continuous_entries_are_bivariate_normal_densities() {
        let x = [[0.3, -0.4], [1.2, 0.8], [-0.5, 0.1], [0.0, 0.6]];
        let post = cont_post(&x);
        let draws = quick_fit(&post, 2, 60);
        let pl = pointwise_loglik(&post, &draws).unwrap();
        assert!(!pl.conditional);
        let row = draws.row(1, 30);
        let (rho, s1, s2) = (row[0], row[1], row[2]);
        let (m1, m2) = (row[3], row[4]);
        let det = (1.0 - rho * rho) * s1 * s1 * s2 * s2;
        for (i, xi) in x.iter().enumerate() {
            let d1 = xi[0] - m1;
            let d2 = xi[1] - m2;
            let q = (d1 * d1 / (s1 * s1) - 2.0 * rho * d1 * d2 / (s1 * s2)
                + d2 * d2 / (s2 * s2))
                / (1.0 - rho * rho);
            let expect = -LN_2PI - 0.5 * det.ln() - 0.5 * q;
            let got = pl.entry(draws.n_iters() + 30, i);
            assert!((got - expect).abs() < 1e-10, "obs {i}");
        }
    }

    #[test]
    fn mismatched_draws_are_rejected() {
        let post = ordbin_post();
        let x = [[0.3, -0.4], [1.2, 0.8], [-0.5, 0.1]];
        let other = cont_post(&x);
        let draws = quick_fit(&other, 3, 60);
        assert!(pointwise_loglik(&post, &draws).is_err());
    }

    #[test]
    fn identical_models_compare_with_zero_deltas() {
        let x = [[0.3, -0.4], [1.2, 0.8], [-0.5, 0.1], [0.4, 0.2], [0.9, -0.3]];
        let post = cont_post(&x);
        let draws = quick_fit(&post, 4, 200);
        let report = compare(&[
            FittedModel { name: "a", post: &post, draws: &draws },
            FittedModel { name: "b", post: &post, draws: &draws },
        ])
        .unwrap();
        for r in &report.rows {
            assert_eq!(r.delta_elpd, 0.0);
            assert_eq!(r.log_bf, 0.0);
        }
        let mut buf = Vec::new();
        report.to_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("model,elpd"));
        assert!(report.to_text().contains('*'));
    }

    #[test]
    fn pairwise_deltas_are_antisymmetric_across_orderings() {
        let x = [[0.3, -0.4], [1.2, 0.8], [-0.5, 0.1], [0.4, 0.2], [0.9, -0.3]];
        let post = cont_post(&x);
        let d1 = quick_fit(&post, 5, 200);
        let d2 = quick_fit(&post, 6, 200);
        let ab = compare(&[
            FittedModel { name: "a", post: &post, draws: &d1 },
            FittedModel { name: "b", post: &post, draws: &d2 },
        ])
        .unwrap();
        let ba = compare(&[
            FittedModel { name: "b", post: &post, draws: &d2 },
            FittedModel { name: "a", post: &post, draws: &d1 },
        ])
        .unwrap();
        let find = |rep: &ComparisonReport, n: &str| -> (f64, f64) {
            let r = rep.rows.iter().find(|r| r.name == n).unwrap();
            (r.delta_elpd, r.log_bf)
        };
        let (e_a1, b_a1) = find(&ab, "a");
        let (e_b1, b_b1) = find(&ab, "b");
        let (e_a2, b_a2) = find(&ba, "a");
        let (e_b2, b_b2) = find(&ba, "b");
        assert!(((e_a1 - e_b1) + (e_b2 - e_a2)).abs() < 1e-9);
        assert!(((b_a1 - b_b1) + (b_b2 - b_a2)).abs() < 1e-9);
    }

    #[test]
    fn different_datasets_refuse_to_compare() {
        let xa = [[0.3, -0.4], [1.2, 0.8], [-0.5, 0.1]];
        let xb = [[0.3, -0.4], [1.2, 0.8], [-0.5, 0.2]];
        let pa = cont_post(&xa);
        let pb = cont_post(&xb);
        let da = quick_fit(&pa, 7, 100);
        let db = quick_fit(&pb, 8, 100);
        assert!(compare(&[
            FittedModel { name: "a", post: &pa, draws: &da },
            FittedModel { name: "b", post: &pb, draws: &db },
        ])
        .is_err());
    }

    #[test]
    fn psis_tracks_exact_loo_refits_on_conjugate_model() {
        // x_i ~ N(θ, 1), θ ~ N(0, 1): exact leave-one-out predictive is
        // N(x_i; (n−1)x̄₋ᵢ/n, 1 + 1/n)
        let x = [
            0.41, -0.23, 1.05, 0.28, -0.76, 0.91, 0.12, -0.44, 0.63, 0.05, 1.32, -0.58,
            0.77, 0.19, -0.91, 0.49, 0.84, -0.12, 0.23, 0.67,
        ];
        let n = x.len() as f64;
        let sum: f64 = x.iter().sum();
        let mut exact = 0.0;
        for &xi in &x {
            let mean_i = (sum - xi) / n; // (n−1)·x̄₋ᵢ/n with the N(0,1) prior
            let var = 1.0 + 1.0 / n;
            exact += -0.5 * (LN_2PI + var.ln()) - 0.5 * (xi - mean_i) * (xi - mean_i) / var;
        }
        // posterior θ | x ~ N(sum/(n+1), 1/(n+1)): direct draws
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let (pm, pv) = (sum / (n + 1.0), 1.0 / (n + 1.0));
        let s = 4000;
        let mut ll = Vec::with_capacity(s * x.len());
        for _ in 0..s {
            let theta = pm + pv.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
            for &xi in &x {
                ll.push(-0.5 * LN_2PI - 0.5 * (xi - theta) * (xi - theta));
            }
        }
        let pl = PointwiseLogLik { ll, n_draws: s, n_obs: x.len(), conditional: false };
        let est = psis_loo(&pl).unwrap();
        assert!(
            (est.elpd - exact).abs() < 0.1,
            "PSIS {} vs exact {exact}",
            est.elpd
        );
        assert_eq!(est.flagged, 0);
    }
}
