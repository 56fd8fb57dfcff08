//! Posterior summarization and convergence diagnostics.
//!
//! `summarize` produces one row per parameter with mean, Monte-Carlo standard
//! error, sd, central 95% interval, effective sample size, and split-chain
//! rank-normalized R̂. Quantiles use type-7 linear interpolation so tables
//! are bit-reproducible given the draws; ESS uses the autocorrelation sum
//! with even-pair (initial positive / monotone sequence) truncation, with
//! autocovariances computed by FFT.

use crate::error::{Error, Result};
use crate::sampler::Draws;
use rustfft::{num_complex::Complex, FftPlanner};
use statrs::distribution::{ContinuousCDF, Normal};
use std::io::Write;

/// Inflation cap: antithetic chains can push the truncated-autocorrelation
/// ESS above the raw draw count; reported n_eff is capped at 10× total draws.
const ESS_INFLATION_CAP: f64 = 10.0;

/// Summary statistics for one parameter.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    /// sd/√n_eff; absent when n_eff is unavailable.
    pub se_mean: Option<f64>,
    pub sd: f64,
    pub q2_5: f64,
    pub q97_5: f64,
    /// Absent when the draws have zero variance.
    pub n_eff: Option<f64>,
    /// Absent for a single chain, fewer than 4 draws per chain, or zero
    /// variance.
    pub rhat: Option<f64>,
}

/// True iff 0 lies strictly outside the closed interval [2.5%, 97.5%].
pub fn credible_interval_excludes_zero(row: &SummaryRow) -> bool {
    0.0 < row.q2_5 || 0.0 > row.q97_5
}

/// Summarize every parameter of a set of draws.
pub fn summarize(draws: &Draws) -> Vec<SummaryRow> {
    (0..draws.dim())
        .map(|p| {
            let chains: Vec<Vec<f64>> =
                (0..draws.n_chains()).map(|c| draws.chain_param(c, p)).collect();
            summarize_param(&draws.names()[p], &chains)
        })
        .collect()
}

/// Summarize one parameter from its per-chain draw vectors.
pub fn summarize_param(name: &str, chains: &[Vec<f64>]) -> SummaryRow {
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let mean = pooled.iter().sum::<f64>() / n;
    let sd = if pooled.len() > 1 {
        (pooled.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = pooled;
    sorted.sort_by(|a, b| a.total_cmp(b));
    let q2_5 = quantile(&sorted, 0.025);
    let q97_5 = quantile(&sorted, 0.975);

    let split = split_chains(chains);
    let n_eff = ess(&split);
    let rhat = if chains.len() >= 2 && chains.iter().all(|c| c.len() >= 4) {
        rank_normalized_rhat(&split)
    } else {
        None
    };
    SummaryRow {
        name: name.to_string(),
        mean,
        se_mean: n_eff.map(|e| sd / e.sqrt()),
        sd,
        q2_5,
        q97_5,
        n_eff,
        rhat,
    }
}

/// Type-7 quantile (linear interpolation) of an ascending-sorted slice.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Split every chain into its first and second halves (odd middle draw
/// dropped), the form both R̂ and ESS are computed on.
fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Split-chain R̂ statistic on already-transformed chains; None when the
/// within-chain variance vanishes.
fn basic_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    if n < 2.0 || m < 2.0 {
        return None;
    }
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if !(w > 0.0) || !w.is_finite() {
        return None;
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Some((var_plus / w).sqrt())
}

/// Pooled fractional ranks mapped through the standard normal quantile
/// function: z = Φ⁻¹((rank − 3/8) / (S + 1/4)), ties by average rank.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let lens: Vec<usize> = chains.iter().map(Vec::len).collect();
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let s = pooled.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut rank = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0; // 1-based average rank of the tie run
        for &k in &order[i..=j] {
            rank[k] = avg;
        }
        i = j + 1;
    }
    let normal = Normal::standard();
    let z: Vec<f64> =
        rank.iter().map(|r| normal.inverse_cdf((r - 0.375) / (s as f64 + 0.25))).collect();
    let mut out = Vec::with_capacity(chains.len());
    let mut at = 0;
    for len in lens {
        out.push(z[at..at + len].to_vec());
        at += len;
    }
    out
}

/// Rank-normalized split R̂: the larger of the bulk statistic (on
/// rank-normalized draws) and the tail-sensitive folded statistic (on
/// rank-normalized |x − median|).
fn rank_normalized_rhat(split: &[Vec<f64>]) -> Option<f64> {
    let bulk = basic_rhat(&rank_normalize(split))?;
    let mut pooled: Vec<f64> = split.iter().flatten().copied().collect();
    pooled.sort_by(|a, b| a.total_cmp(b));
    let median = quantile(&pooled, 0.5);
    let folded: Vec<Vec<f64>> =
        split.iter().map(|c| c.iter().map(|x| (x - median).abs()).collect()).collect();
    let tail = basic_rhat(&rank_normalize(&folded))?;
    Some(bulk.max(tail))
}

/// Biased-normalized autocovariance sequence of one chain, via FFT.
fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = (0..size)
        .map(|i| Complex::new(if i < n { x[i] - mean } else { 0.0 }, 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for v in &mut buf {
        *v = Complex::new(v.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64);
    buf[..n].iter().map(|v| v.re * scale).collect()
}

/// Effective sample size over split chains: multi-chain autocorrelations
/// combined through the pooled-variance estimate, summed over consecutive
/// even–odd lag pairs while the pair sums stay positive, then forced
/// non-increasing. None when variance vanishes.
fn ess(split: &[Vec<f64>]) -> Option<f64> {
    let m = split.len() as f64;
    let n = split[0].len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let acov: Vec<Vec<f64>> = split.iter().map(|c| autocovariance(c)).collect();
    let chain_var: Vec<f64> = acov.iter().map(|a| a[0] * nf / (nf - 1.0)).collect();
    let w = chain_var.iter().sum::<f64>() / m;
    let var_plus = if split.len() > 1 {
        let means: Vec<f64> = split.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
        let grand = means.iter().sum::<f64>() / m;
        let b_over_n =
            means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>() / (m - 1.0);
        w * (nf - 1.0) / nf + b_over_n
    } else {
        w * (nf - 1.0) / nf
    };
    if !(var_plus > 0.0) || !var_plus.is_finite() {
        return None;
    }
    let rho = |t: usize| -> f64 {
        let mean_acov = acov.iter().map(|a| a[t]).sum::<f64>() / m;
        1.0 - (w - mean_acov) / var_plus
    };
    let mut pair_sums = Vec::new();
    let mut t = 0;
    while t + 1 < n {
        let p = rho(t) + rho(t + 1);
        if p <= 0.0 {
            break;
        }
        pair_sums.push(p);
        t += 2;
    }
    // initial monotone sequence: damp upward noise in the pair sums
    for k in 1..pair_sums.len() {
        if pair_sums[k] > pair_sums[k - 1] {
            pair_sums[k] = pair_sums[k - 1];
        }
    }
    let tau = -1.0 + 2.0 * pair_sums.iter().sum::<f64>();
    let total = m * nf;
    Some((total / tau.max(1.0 / ESS_INFLATION_CAP)).min(total * ESS_INFLATION_CAP))
}

/// Write the summary table as CSV.
pub fn summary_to_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["parameter", "mean", "se_mean", "sd", "q2.5", "q97.5", "n_eff", "rhat"])
        .map_err(|e| Error::validation(format!("summary csv: {e}")))?;
    for r in rows {
        let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.6}"));
        w.write_record([
            r.name.clone(),
            format!("{:.6}", r.mean),
            opt(r.se_mean),
            format!("{:.6}", r.sd),
            format!("{:.6}", r.q2_5),
            format!("{:.6}", r.q97_5),
            opt(r.n_eff),
            opt(r.rhat),
        ])
        .map_err(|e| Error::validation(format!("summary csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned plain-text summary table.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let headers = ["parameter", "mean", "se_mean", "sd", "2.5%", "97.5%", "n_eff", "Rhat"];
    let fmt_opt = |v: Option<f64>, digits: usize| {
        v.map_or("NA".to_string(), |x| format!("{x:.digits$}"))
    };
    let cells: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                format!("{:.3}", r.mean),
                fmt_opt(r.se_mean, 4),
                format!("{:.3}", r.sd),
                format!("{:.3}", r.q2_5),
                format!("{:.3}", r.q97_5),
                fmt_opt(r.n_eff.map(f64::round), 0),
                fmt_opt(r.rhat, 3),
            ]
        })
        .collect();
    let mut width = headers.map(str::len);
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    for (i, h) in headers.iter().enumerate() {
        if i > 0 {
            out.push_str("  ");
        }
        out.push_str(&format!("{h:>w$}", w = width[i]));
    }
    out.push('\n');
    for row in &cells {
        for (i, c) in row.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            out.push_str(&format!("{c:>w$}", w = width[i]));
        }
        out.push('\n');
    }
    out
}
