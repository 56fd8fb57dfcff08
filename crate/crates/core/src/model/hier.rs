//! Family-hierarchical models: languages share a family-level bivariate
//! effect z_f ~ N(0, Σ_f) on top of a language-level part.
//!
//! Ordinal×binary: z_i = z_f(i) + z_l,i with z_l,i ~ N(0, Σ_l), both
//! non-centered. Continuous: x_i ~ N(μ + z_f(i), Σ_l) — the language-level
//! deviation is absorbed into the residual covariance, so only family
//! effects stay latent.

use super::link::{bernoulli_logit_logpmf_grad, ordered_logistic_logpmf_grad};
use super::posterior::{block_effects, fold_block_grads, LikGrads, Posterior, Unpacked, LN_2PI};

pub(crate) fn ordbin(
    post: &Posterior,
    theta: &[f64],
    up: &Unpacked,
    mut grad: Option<&mut [f64]>,
) -> Option<f64> {
    let lay = &post.lay;
    let el = lay.eps_l.expect("family ordbin language latents");
    let ef = lay.eps_f.expect("family block");
    let cuts = up.cuts.as_ref().expect("ordbin cutpoints");
    let n_cut = cuts.values().len();
    let (s1, s2, rho) = (up.sig_l[0], up.sig_l[1], up.rho_l);
    let w = (1.0 - rho * rho).sqrt();
    let zf = block_effects(theta, ef, post.n_fam, up.rho_f, up.sig_f);
    let mut dzf = vec![[0.0; 2]; post.n_fam];
    let mut lik = LikGrads { dcut: vec![0.0; n_cut], ..Default::default() };
    let mut lp = 0.0;
    for i in 0..post.n {
        let f = post.fam_of[i];
        let (e1, e2) = (theta[el + 2 * i], theta[el + 2 * i + 1]);
        let z1 = zf[f][0] + s1 * e1;
        let z2 = zf[f][1] + s2 * (rho * e1 + w * e2);
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
            dzf[f][0] += dz1;
            dzf[f][1] += dz2;
        }
    }
    if grad.is_some() {
        fold_block_grads(
            theta, ef, up.rho_f, up.sig_f, &dzf,
            &mut lik.drho_f, &mut lik.dsig_f, grad.as_deref_mut(),
        );
    }
    lp += Posterior::eps_prior(theta, ef, 2 * post.n_fam, grad.as_deref_mut());
    lp += Posterior::eps_prior(theta, el, 2 * lay.n_eps_l, grad.as_deref_mut());
    lp += post.fold_priors(theta, up, &lik, grad);
    Some(lp)
}

pub(crate) fn cont(
    post: &Posterior,
    theta: &[f64],
    up: &Unpacked,
    mut grad: Option<&mut [f64]>,
) -> Option<f64> {
    let lay = &post.lay;
    let ef = lay.eps_f.expect("family block");
    let (s1, s2, rho, mu) = (up.sig_l[0], up.sig_l[1], up.rho_l, up.mu);
    let (v11, v12, v22) = (s1 * s1, rho * s1 * s2, s2 * s2);
    let det = v11 * v22 - v12 * v12;
    if !(det > 0.0) {
        return None;
    }
    let (p11, p12, p22) = (v22 / det, -v12 / det, v11 / det);
    let zf = block_effects(theta, ef, post.n_fam, up.rho_f, up.sig_f);
    let mut dzf = vec![[0.0; 2]; post.n_fam];
    let nf = post.n as f64;
    let mut lp = nf * (-LN_2PI - 0.5 * det.ln());
    let mut dmu = [0.0; 2];
    let (mut g11, mut g12, mut g22) = (0.0, 0.0, 0.0);
    for (i, xi) in post.x.iter().enumerate() {
        let f = post.fam_of[i];
        let r = [xi[0] - mu[0] - zf[f][0], xi[1] - mu[1] - zf[f][1]];
        let q = [p11 * r[0] + p12 * r[1], p12 * r[0] + p22 * r[1]];
        lp -= 0.5 * (q[0] * r[0] + q[1] * r[1]);
        if grad.is_some() {
            dmu[0] += q[0];
            dmu[1] += q[1];
            dzf[f][0] += q[0];
            dzf[f][1] += q[1];
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
        lik.dsig_l[0] = g11 * 2.0 * s1 + 2.0 * g12 * rho * s2;
        lik.dsig_l[1] = g22 * 2.0 * s2 + 2.0 * g12 * rho * s1;
        lik.drho_l = 2.0 * g12 * s1 * s2;
        fold_block_grads(
            theta, ef, up.rho_f, up.sig_f, &dzf,
            &mut lik.drho_f, &mut lik.dsig_f, grad.as_deref_mut(),
        );
    }
    lp += Posterior::eps_prior(theta, ef, 2 * post.n_fam, grad.as_deref_mut());
    lp += post.fold_priors(theta, up, &lik, grad);
    Some(lp)
}
