//! Covariance constructions: the 2×2 correlation block and the stationary
//! Ornstein–Uhlenbeck covariances on an ultrametric tree.

use nalgebra::{DMatrix, Matrix2};

use super::{CorrelationBlock, JitterPolicy, OUParams};
use crate::error::{Error, Result};
use crate::tree::PathMatrix;

/// The 2×2 covariance Σ = [[σ₁², ρσ₁σ₂],[ρσ₁σ₂, σ₂²]].
pub fn build_sigma(block: &CorrelationBlock) -> Matrix2<f64> {
    let CorrelationBlock { rho, sigma1, sigma2 } = *block;
    let off = rho * sigma1 * sigma2;
    Matrix2::new(sigma1 * sigma1, off, off, sigma2 * sigma2)
}

/// Stationary OU covariance between two points at tree distance `t`:
/// σ²/(2λ)·e^{−λt}. At t = 0 this is the stationary variance.
pub fn ou_cov(lambda: f64, sigma: f64, t: f64) -> f64 {
    debug_assert!(lambda > 0.0 && sigma > 0.0 && t >= 0.0);
    sigma * sigma / (2.0 * lambda) * (-lambda * t).exp()
}

/// Stationary cross-covariance between trait 1 at one tip and trait 2 at
/// another, tips separated by tree distance `t` on an ultrametric tree:
/// ρσ₁σ₂/(λ₁+λ₂)·e^{−(λ₁+λ₂)t/2}. Reduces to `ou_cov` when the traits share
/// λ and σ with ρ = 1.
pub fn ou_cross_cov(lambda1: f64, lambda2: f64, sigma1: f64, sigma2: f64, rho: f64, t: f64) -> f64 {
    debug_assert!(lambda1 > 0.0 && lambda2 > 0.0 && sigma1 > 0.0 && sigma2 > 0.0 && t >= 0.0);
    let rate = lambda1 + lambda2;
    rho * sigma1 * sigma2 / rate * (-rate * t / 2.0).exp()
}

/// Dense 2N×2N phylogenetic covariance over N tips in trait-major block form
/// [[C₁, C₁₂],[C₁₂ᵀ, C₂]], where C_a[i,j] = ou_cov(λ_a, σ_a, t_ij) and
/// C₁₂[i,j] = ou_cross_cov(λ₁, λ₂, σ₁, σ₂, ρ, t_ij).
///
/// The per-trait σ and λ come from `ou`; `block` supplies the diffusion
/// correlation ρ (its σ fields mirror the OU diffusions and are not read).
/// If the matrix fails a Cholesky check, diagonal jitter per `policy` is
/// added before giving up with the smallest eigenvalue in the error.
pub fn build_phylo_cov(
    paths: &PathMatrix,
    ou: &[OUParams; 2],
    block: &CorrelationBlock,
    policy: &JitterPolicy,
) -> Result<DMatrix<f64>> {
    let n = paths.n();
    if n == 0 {
        return Err(Error::validation("empty path matrix"));
    }
    let dim = 2 * n;
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            let t = paths.get(i, j);
            let c12 = ou_cross_cov(ou[0].lambda, ou[1].lambda, ou[0].sigma, ou[1].sigma, block.rho, t);
            m[(i, j)] = ou_cov(ou[0].lambda, ou[0].sigma, t);
            m[(n + i, n + j)] = ou_cov(ou[1].lambda, ou[1].sigma, t);
            m[(i, n + j)] = c12;
            m[(n + i, j)] = c12;
        }
    }

    let mean_diag = m.trace() / dim as f64;
    let mut tries = 0;
    loop {
        if m.clone().cholesky().is_some() {
            return Ok(m);
        }
        if tries >= policy.max_tries {
            let eig = m.clone().symmetric_eigen();
            let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            return Err(Error::numerical(format!(
                "phylogenetic covariance not positive-definite after {tries} jitter passes; \
                 smallest eigenvalue {min_eig:.3e}"
            )));
        }
        for d in 0..dim {
            m[(d, d)] += policy.base * mean_diag;
        }
        tries += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{newick, Tree};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigma_identity_at_unit_scales_zero_rho() {
        let s = build_sigma(&CorrelationBlock::new(0.0, 1.0, 1.0).unwrap());
        assert_eq!(s, Matrix2::identity());
    }

    #[test]
    fn sigma_off_diagonal_is_rho_sigma_product() {
        let s = build_sigma(&CorrelationBlock::new(0.84, 2.03, 2.11).unwrap());
        let want = 0.84 * 2.03 * 2.11; // 3.598…
        assert!((s[(0, 1)] - want).abs() < 1e-12);
        assert!((s[(0, 1)] - 3.598).abs() < 5e-4);
        assert!((s[(0, 1)] - s[(1, 0)]).abs() == 0.0);
    }

    #[test]
    fn sigma_determinant_vanishes_as_rho_approaches_one() {
        for &rho in &[0.9, 0.99, 0.999_999] {
            let s = build_sigma(&CorrelationBlock::new(rho, 1.3, 0.7).unwrap());
            let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
            let want = (1.0 - rho * rho) * 1.3f64.powi(2) * 0.7f64.powi(2);
            assert!((det - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ou_cov_examples() {
        assert!((ou_cov(0.5, 1.0, 0.0) - 1.0).abs() < 1e-15, "stationary variance");
        assert!((ou_cov(0.5, 1.0, 2.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!(ou_cov(1e6, 1.0, 0.5) < 1e-12, "large lambda kills covariance");
    }

    #[test]
    fn ou_cov_monotone_in_t_and_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let sigma = rng.gen_range(0.1..3.0);
            let lam = rng.gen_range(0.01..5.0);
            let t = rng.gen_range(0.01..10.0);
            let dt = rng.gen_range(0.01..1.0);
            let dl = rng.gen_range(0.01..1.0);
            assert!(ou_cov(lam, sigma, t + dt) < ou_cov(lam, sigma, t));
            assert!(ou_cov(lam + dl, sigma, t) < ou_cov(lam, sigma, t));
        }
    }

    #[test]
    fn ou_cross_cov_reductions() {
        // shared λ, σ, ρ=1 reduces to the single-trait covariance
        for &t in &[0.0, 0.7, 3.2] {
            let a = ou_cross_cov(0.4, 0.4, 1.3, 1.3, 1.0 - 1e-15, t);
            let b = ou_cov(0.4, 1.3, t);
            assert!((a - b).abs() < 1e-12, "t={t}");
        }
        // ρ = 0 annihilates
        assert_eq!(ou_cross_cov(0.1, 0.2, 1.0, 2.0, 0.0, 1.5), 0.0);
        // worked value: 0.5/0.4 · e^{−0.4} = 0.8379…
        let v = ou_cross_cov(0.1, 0.3, 1.0, 1.0, 0.5, 2.0);
        assert!((v - 0.5 / 0.4 * (-0.4f64).exp()).abs() < 1e-12);
        assert!((v - 0.8379).abs() < 1e-4);
    }

    fn three_tip_tree() -> Tree {
        newick::parse("((A:1,B:1):1,C:2):0;").unwrap().tree
    }

    #[test]
    fn phylo_cov_single_tip_is_stationary_sigma() {
        let tree = newick::parse("(A:1,B:1):0;").unwrap().tree;
        let paths = tree.path_length_matrix();
        // restrict attention to the diagonal blocks of one tip
        let ou = [OUParams::new(0.5, 1.0, 0.0).unwrap(), OUParams::new(0.25, 2.0, 0.0).unwrap()];
        let block = CorrelationBlock::new(0.6, 1.0, 2.0).unwrap();
        let m = build_phylo_cov(&paths, &ou, &block, &JitterPolicy::default()).unwrap();
        let n = 2;
        assert!((m[(0, 0)] - 1.0).abs() < 1e-12, "σ₁²/(2λ₁) = 1");
        assert!((m[(n, n)] - 8.0).abs() < 1e-12, "σ₂²/(2λ₂) = 8");
        assert!((m[(0, n)] - 0.6 * 2.0 / 0.75).abs() < 1e-12, "same-tip cross term");
    }

    #[test]
    fn phylo_cov_is_symmetric_and_nearly_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let tree = crate::tree::generate::random_ultrametric(12, 1.5, &mut rng);
            let paths = tree.path_length_matrix();
            let ou = [
                OUParams::new(rng.gen_range(0.05..2.0), rng.gen_range(0.2..2.0), 0.0).unwrap(),
                OUParams::new(rng.gen_range(0.05..2.0), rng.gen_range(0.2..2.0), 0.0).unwrap(),
            ];
            let block =
                CorrelationBlock::new(rng.gen_range(-0.95..0.95), ou[0].sigma, ou[1].sigma).unwrap();
            let m = build_phylo_cov(&paths, &ou, &block, &JitterPolicy::default()).unwrap();
            for i in 0..m.nrows() {
                for j in 0..i {
                    assert!((m[(i, j)] - m[(j, i)]).abs() < 1e-12, "trial {trial}: asymmetry");
                }
            }
            let min_eig = m
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!(min_eig > -1e-8, "trial {trial}: min eigenvalue {min_eig}");
        }
    }

    #[test]
    fn phylo_cov_equals_kronecker_when_lambdas_match() {
        let tree = three_tip_tree();
        let paths = tree.path_length_matrix();
        let lam = 0.35;
        let (s1, s2, rho) = (1.4, 0.6, -0.45);
        let ou = [OUParams::new(lam, s1, 0.0).unwrap(), OUParams::new(lam, s2, 0.0).unwrap()];
        let block = CorrelationBlock::new(rho, s1, s2).unwrap();
        let m = build_phylo_cov(&paths, &ou, &block, &JitterPolicy::default()).unwrap();

        // Kronecker oracle: single-trait unit-σ OU matrix K[i,j] = e^{−λ t_ij}/(2λ)
        // scaled per trait pair by [σ_a σ_b, ρ as needed]
        let n = paths.n();
        for i in 0..n {
            for j in 0..n {
                let k = (-lam * paths.get(i, j)).exp() / (2.0 * lam);
                assert!((m[(i, j)] - s1 * s1 * k).abs() < 1e-12);
                assert!((m[(n + i, n + j)] - s2 * s2 * k).abs() < 1e-12);
                assert!((m[(i, n + j)] - rho * s1 * s2 * k).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn phylo_cov_rejects_empty_input() {
        let tree = three_tip_tree();
        let paths = tree.path_length_matrix();
        let ou = [OUParams::new(0.5, 1.0, 0.0).unwrap(), OUParams::new(0.5, 1.0, 0.0).unwrap()];
        let block = CorrelationBlock::new(0.0, 1.0, 1.0).unwrap();
        assert!(build_phylo_cov(&paths, &ou, &block, &JitterPolicy::default()).is_ok());
        // a jitter policy with zero tries still succeeds on healthy input
        let strict = JitterPolicy { base: 0.0, max_tries: 0 };
        assert!(build_phylo_cov(&paths, &ou, &block, &strict).is_ok());
    }
}
