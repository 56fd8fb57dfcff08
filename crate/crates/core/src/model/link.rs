//! Observation links: ordered-logistic for the ordinal trait, Bernoulli-logit
//! for the binary trait.
//!
//! Both links are evaluated in numerically stable forms. The ordered-logistic
//! middle-category probability uses the identity
//! σ(a) − σ(b) = σ(a)·σ(−b)·(1 − e^{−(a−b)}) for a > b, which avoids
//! cancellation when both sigmoids saturate.

use super::Cutpoints;

/// Logistic function, stable for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x), stable for large |x|.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Log-probability that a latent value `z` falls in ordinal category `k`
/// (1-based) under cutpoints `c`: log[σ(z − c_{k−1}) − σ(z − c_k)] with
/// c_0 = −∞ and c_K = +∞.
pub fn ordered_logistic_logpmf(z: f64, c: &Cutpoints, k: usize) -> f64 {
    ordered_logistic_logpmf_grad(z, c, k).0
}

/// Log-pmf plus partial derivatives: returns (logp, d/dz, d/dc_{k−1}, d/dc_k).
/// The cutpoint partials are 0 where the corresponding bound is infinite
/// (k = 1 has no lower cutpoint, k = K no upper one).
pub fn ordered_logistic_logpmf_grad(z: f64, c: &Cutpoints, k: usize) -> (f64, f64, f64, f64) {
    let cs = c.values();
    let n_levels = cs.len() + 1;
    assert!(k >= 1 && k <= n_levels, "category {k} outside 1..={n_levels}");
    if k == 1 {
        // P = σ(c_1 − z)
        let lp = -softplus(z - cs[0]);
        let s = sigmoid(z - cs[0]);
        (lp, -s, 0.0, s)
    } else if k == n_levels {
        // P = σ(z − c_{K−1})
        let lp = -softplus(cs[k - 2] - z);
        let s = sigmoid(cs[k - 2] - z);
        (lp, s, -s, 0.0)
    } else {
        let a = z - cs[k - 2];
        let b = z - cs[k - 1];
        let t = a - b; // cutpoint gap, > 0 by the Cutpoints invariant
        let lp = -softplus(-a) - softplus(b) + (-(-t).exp_m1()).ln();
        let sa = sigmoid(-a);
        let sb = sigmoid(b);
        // d/dt ln(1 − e^{−t}) = e^{−t}/(1 − e^{−t}) = 1/(e^t − 1)
        let dt = 1.0 / t.exp_m1();
        (lp, sa - sb, -sa - dt, sb + dt)
    }
}

/// Log-probability of the binary outcome under a logit link: `y` is the
/// 1-based level code, with level 2 being the modeled "success"
/// (P(level 2) = σ(z)).
pub fn bernoulli_logit_logpmf(z: f64, y: usize) -> f64 {
    bernoulli_logit_logpmf_grad(z, y).0
}

/// Log-pmf plus d/dz.
pub fn bernoulli_logit_logpmf_grad(z: f64, y: usize) -> (f64, f64) {
    match y {
        2 => (-softplus(-z), sigmoid(-z)),
        1 => (-softplus(z), -sigmoid(z)),
        _ => panic!("binary level code {y} outside 1..=2"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Cutpoints;

    fn cuts(v: &[f64]) -> Cutpoints {
        Cutpoints::new(v.to_vec(), 0.0).unwrap()
    }

    #[test]
    fn single_cutpoint_at_z_splits_evenly() {
        let c = cuts(&[0.7]);
        let p1 = ordered_logistic_logpmf(0.7, &c, 1).exp();
        let p2 = ordered_logistic_logpmf(0.7, &c, 2).exp();
        assert!((p1 - 0.5).abs() < 1e-15);
        assert!((p2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let c = cuts(&[-0.36, 0.54, 2.03, 3.50]);
        for &z in &[-4.0, -0.36, 0.0, 1.3, 2.03, 7.5, 40.0, -40.0] {
            let total: f64 = (1..=5).map(|k| ordered_logistic_logpmf(z, &c, k).exp()).sum();
            assert!((total - 1.0).abs() < 1e-12, "z={z}: sum {total}");
        }
    }

    #[test]
    fn matches_direct_logistic_differences() {
        // direct σ-difference evaluation, safe at these moderate values
        let c = cuts(&[-0.36, 0.54, 2.03, 3.50]);
        let z = 0.0;
        let cs = [-0.36, 0.54, 2.03, 3.50];
        let direct = |k: usize| -> f64 {
            let lo = if k == 1 { 0.0 } else { sigmoid(z - cs[k - 2]) };
            let hi = if k == 5 { 0.0 } else { sigmoid(z - cs[k - 1]) };
            ((if k == 1 { 1.0 } else { lo }) - hi).ln()
        };
        for k in 1..=5 {
            let got = ordered_logistic_logpmf(z, &c, k);
            assert!(
                (got - direct(k)).abs() < 1e-12,
                "k={k}: got {got}, direct {}",
                direct(k)
            );
        }
    }

    #[test]
    fn extreme_z_keeps_finite_logs() {
        let c = cuts(&[-1.0, 0.0, 1.0, 2.0]);
        for &z in &[-500.0, 500.0] {
            for k in 1..=5 {
                let lp = ordered_logistic_logpmf(z, &c, k);
                assert!(lp.is_finite() || lp < 0.0, "z={z}, k={k}: {lp}");
                assert!(!lp.is_nan());
            }
        }
        // the favored category keeps probability ~1
        assert!(ordered_logistic_logpmf(-500.0, &c, 1).abs() < 1e-12);
        assert!(ordered_logistic_logpmf(500.0, &c, 5).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let c = cuts(&[-0.8, 0.2, 1.4, 2.9]);
        let h = 1e-6;
        for k in 1..=5 {
            for &z in &[-2.0, 0.3, 1.5, 3.4] {
                let (_, dz, dlo, dhi) = ordered_logistic_logpmf_grad(z, &c, k);
                let fd_z = (ordered_logistic_logpmf(z + h, &c, k)
                    - ordered_logistic_logpmf(z - h, &c, k))
                    / (2.0 * h);
                assert!((dz - fd_z).abs() < 1e-6, "k={k} z={z}: dz {dz} vs fd {fd_z}");

                // cutpoint partials via perturbed cutpoint vectors
                let mut lo = c.values().to_vec();
                let mut hi = c.values().to_vec();
                if k > 1 {
                    lo[k - 2] += h;
                    let fd = (ordered_logistic_logpmf(z, &cuts(&lo), k)
                        - ordered_logistic_logpmf(z, &c, k))
                        / h;
                    assert!((dlo - fd).abs() < 1e-5, "k={k} z={z}: dlo {dlo} vs fd {fd}");
                }
                if k < 5 {
                    hi[k - 1] += h;
                    let fd = (ordered_logistic_logpmf(z, &cuts(&hi), k)
                        - ordered_logistic_logpmf(z, &c, k))
                        / h;
                    assert!((dhi - fd).abs() < 1e-5, "k={k} z={z}: dhi {dhi} vs fd {fd}");
                }
            }
        }
    }

    #[test]
    fn bernoulli_logit_examples() {
        assert!((bernoulli_logit_logpmf(0.0, 2).exp() - 0.5).abs() < 1e-15);
        assert!((bernoulli_logit_logpmf(0.0, 1).exp() - 0.5).abs() < 1e-15);
        // σ(1) = 0.731058…
        assert!((bernoulli_logit_logpmf(1.0, 2).exp() - 0.731_058_578_630_004_9).abs() < 1e-12);
        // z → ∞ ⇒ P(success) → 1
        assert!(bernoulli_logit_logpmf(40.0, 2).abs() < 1e-12);
        assert!(bernoulli_logit_logpmf(40.0, 1) < -30.0);
        // complements sum to one
        for &z in &[-3.0, 0.1, 2.7] {
            let s = bernoulli_logit_logpmf(z, 1).exp() + bernoulli_logit_logpmf(z, 2).exp();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn bernoulli_gradients_match_finite_differences() {
        let h = 1e-6;
        for y in [1, 2] {
            for &z in &[-1.7, 0.0, 2.2] {
                let (_, dz) = bernoulli_logit_logpmf_grad(z, y);
                let fd =
                    (bernoulli_logit_logpmf(z + h, y) - bernoulli_logit_logpmf(z - h, y)) / (2.0 * h);
                assert!((dz - fd).abs() < 1e-6, "y={y} z={z}");
            }
        }
    }
}
