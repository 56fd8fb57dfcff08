//! Pooled (no-dependency) models: every language is an independent draw from
//! one shared bivariate distribution.
//!
//! Ordinal×binary: latent pairs z_i ~ N(0, Σ) (non-centered as z = L·ε) feed
//! an ordered-logistic and a logit link. Continuous: x_i ~ N(μ, Σ) with no
//! latents, evaluated through sufficient statistics.

use super::link::{bernoulli_logit_logpmf_grad, ordered_logistic_logpmf_grad};
use super::posterior::{LikGrads, Posterior, Unpacked, LN_2PI};

pub(crate) fn ordbin(
    post: &Posterior,
    theta: &[f64],
    up: &Unpacked,
    mut grad: Option<&mut [f64]>,
) -> Option<f64> {
    let lay = &post.lay;
    let el = lay.eps_l.expect("pooled ordbin latents");
    let cuts = up.cuts.as_ref().expect("ordbin cutpoints");
    let n_cut = cuts.values().len();
    let (s1, s2) = (up.sig_l[0], up.sig_l[1]);
    let rho = up.rho_l;
    let w = (1.0 - rho * rho).sqrt();
    let mut lik = LikGrads { dcut: vec![0.0; n_cut], ..Default::default() };
    let mut lp = 0.0;
    for i in 0..post.n {
        let (e1, e2) = (theta[el + 2 * i], theta[el + 2 * i + 1]);
        let z1 = s1 * e1;
        let z2 = s2 * (rho * e1 + w * e2);
        let k = post.y_ord[i];
        let (lp1, dz1, dlo, dhi) = ordered_logistic_logpmf_grad(z1, cuts, k);
        let (lp2, dz2) = bernoulli_logit_logpmf_grad(z2, post.y_bin[i]);
        lp += lp1 + lp2;
        if let Some(g) = grad.as_deref_mut() {
            if k >= 2 {
                lik.dcut[k - 2] += dlo;
            }
            if k <= n_cut {
                lik.dcut[k - 1] += dhi;
            }
            g[el + 2 * i] += dz1 * s1 + dz2 * s2 * rho;
            g[el + 2 * i + 1] += dz2 * s2 * w;
            lik.dsig_l[0] += dz1 * e1;
            lik.dsig_l[1] += dz2 * (rho * e1 + w * e2);
            lik.drho_l += dz2 * s2 * (e1 - rho * e2 / w);
        }
    }
    lp += Posterior::eps_prior(theta, el, 2 * lay.n_eps_l, grad.as_deref_mut());
    lp += post.fold_priors(theta, up, &lik, grad);
    Some(lp)
}

pub(crate) fn cont(
    post: &Posterior,
    theta: &[f64],
    up: &Unpacked,
    grad: Option<&mut [f64]>,
) -> Option<f64> {
    let (s1, s2, rho, mu) = (up.sig_l[0], up.sig_l[1], up.rho_l, up.mu);
    let (v11, v12, v22) = (s1 * s1, rho * s1 * s2, s2 * s2);
    let det = v11 * v22 - v12 * v12;
    if !(det > 0.0) {
        return None;
    }
    // precision matrix
    let (p11, p12, p22) = (v22 / det, -v12 / det, v11 / det);
    let nf = post.n as f64;
    let mut lp = nf * (-LN_2PI - 0.5 * det.ln());
    let mut dmu = [0.0; 2];
    // dΣ accumulates ½ Σ_i q_i q_iᵀ − (n/2) Σ⁻¹ (symmetric, full-matrix)
    let (mut g11, mut g12, mut g22) = (0.0, 0.0, 0.0);
    for xi in &post.x {
        let r = [xi[0] - mu[0], xi[1] - mu[1]];
        let q = [p11 * r[0] + p12 * r[1], p12 * r[0] + p22 * r[1]];
        lp -= 0.5 * (q[0] * r[0] + q[1] * r[1]);
        if grad.is_some() {
            dmu[0] += q[0];
            dmu[1] += q[1];
            g11 += 0.5 * q[0] * q[0];
            g12 += 0.5 * q[0] * q[1];
            g22 += 0.5 * q[1] * q[1];
        }
    }
    let mut lik = LikGrads::default();
    if grad.is_some() {
        g11 -= 0.5 * nf * p11;
        g12 -= 0.5 * nf * p12;
        g22 -= 0.5 * nf * p22;
        lik.dmu = dmu;
        // chain dΣ into (σ₁, σ₂, ρ); off-diagonal counted twice
        lik.dsig_l[0] = g11 * 2.0 * s1 + 2.0 * g12 * rho * s2;
        lik.dsig_l[1] = g22 * 2.0 * s2 + 2.0 * g12 * rho * s1;
        lik.drho_l = 2.0 * g12 * s1 * s2;
    }
    lp += post.fold_priors(theta, up, &lik, grad);
    Some(lp)
}
