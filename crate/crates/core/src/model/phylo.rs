//! Phylogenetic models: a bivariate Ornstein–Uhlenbeck field on the tree
//! (non-centered, linear in the tree size) plus independent family effects.
//!
//! Ordinal×binary: every node carries a latent state; the observation-scale
//! pair at tip i is η_i = z_f(i) + s_tip(i). Continuous: only internal nodes
//! carry states, and each tip contributes the OU transition density of
//! x_i − z_f(i) given its parent state — the branch, not an extra noise
//! term, is the residual.

use super::link::{bernoulli_logit_logpmf_grad, ordered_logistic_logpmf_grad};
use super::posterior::{block_effects, fold_block_grads, LikGrads, Posterior, Unpacked, LN_2PI};
use super::treefield::{branch_cov, field_backward, field_forward, OuGrads, OuHyper};

pub(crate) fn ordbin(
    post: &Posterior,
    theta: &[f64],
    up: &Unpacked,
    mut grad: Option<&mut [f64]>,
) -> Option<f64> {
    let lay = &post.lay;
    let flat = post.flat.as_ref().expect("phylo field");
    let el = lay.eps_l.expect("node states");
    let ef = lay.eps_f.expect("family block");
    let cuts = up.cuts.as_ref().expect("ordbin cutpoints");
    let n_cut = cuts.values().len();
    let h = OuHyper { lam: up.lam, sigma: up.sig_l, rho: up.rho_l, mu: up.mu };
    let fwd = field_forward(flat, &h, &theta[el..el + 2 * lay.n_eps_l])?;
    let zf = block_effects(theta, ef, post.n_fam, up.rho_f, up.sig_f);

    let mut lik = LikGrads { dcut: vec![0.0; n_cut], ..Default::default() };
    let mut dzf = vec![[0.0; 2]; post.n_fam];
    let mut g_state = vec![[0.0; 2]; lay.n_eps_l];
    let mut lp = 0.0;
    for i in 0..post.n {
        let f = post.fam_of[i];
        let s = fwd.s[flat.tip_state[i]];
        let eta = [zf[f][0] + s[0], zf[f][1] + s[1]];
        let k = post.y_ord[i];
        let (lp1, dz1, dlo, dhi) = ordered_logistic_logpmf_grad(eta[0], cuts, k);
        let (lp2, dz2) = bernoulli_logit_logpmf_grad(eta[1], post.y_bin[i]);
        lp += lp1 + lp2;
        if grad.is_some() {
            if k >= 2 {
                lik.dcut[k - 2] += dlo;
            }
            if k <= n_cut {
                lik.dcut[k - 1] += dhi;
            }
            let gs = &mut g_state[flat.tip_state[i]];
            gs[0] += dz1;
            gs[1] += dz2;
            dzf[f][0] += dz1;
            dzf[f][1] += dz2;
        }
    }
    if let Some(g) = grad.as_deref_mut() {
        let mut ou = OuGrads::default();
        let (gl, gr) = g.split_at_mut(el + 2 * lay.n_eps_l);
        debug_assert!(gr.is_empty());
        field_backward(flat, &h, &fwd, &mut g_state, &mut gl[el..], &mut ou);
        ou.finish(&h);
        lik.dlam = ou.dlam;
        lik.dsig_l = ou.dsigma;
        lik.drho_l = ou.drho;
        lik.dmu = ou.dmu;
        fold_block_grads(
            theta, ef, up.rho_f, up.sig_f, &dzf,
            &mut lik.drho_f, &mut lik.dsig_f, Some(g),
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
    let flat = post.flat.as_ref().expect("phylo field");
    let el = lay.eps_l.expect("node states");
    let ef = lay.eps_f.expect("family block");
    let h = OuHyper { lam: up.lam, sigma: up.sig_l, rho: up.rho_l, mu: up.mu };
    let fwd = field_forward(flat, &h, &theta[el..el + 2 * lay.n_eps_l])?;
    let zf = block_effects(theta, ef, post.n_fam, up.rho_f, up.sig_f);
    let vinf = h.vinf();

    let mut lik = LikGrads::default();
    let mut ou = OuGrads::default();
    let mut dzf = vec![[0.0; 2]; post.n_fam];
    let mut g_state = vec![[0.0; 2]; lay.n_eps_l];
    let mut lp = 0.0;
    for i in 0..post.n {
        let (p, b) = flat.tip_edge[i];
        let f = post.fam_of[i];
        let sp = fwd.s[p];
        let d = [(-h.lam[0] * b).exp(), (-h.lam[1] * b).exp()];
        let v = branch_cov(vinf, h.lam, b);
        let det = v[0][0] * v[1][1] - v[0][1] * v[0][1];
        if !(det > 0.0) {
            return None;
        }
        let (p11, p12, p22) = (v[1][1] / det, -v[0][1] / det, v[0][0] / det);
        let m = [
            h.mu[0] + d[0] * (sp[0] - h.mu[0]),
            h.mu[1] + d[1] * (sp[1] - h.mu[1]),
        ];
        let r = [
            post.x[i][0] - zf[f][0] - m[0],
            post.x[i][1] - zf[f][1] - m[1],
        ];
        let q = [p11 * r[0] + p12 * r[1], p12 * r[0] + p22 * r[1]];
        lp += -LN_2PI - 0.5 * det.ln() - 0.5 * (q[0] * r[0] + q[1] * r[1]);
        if grad.is_some() {
            dzf[f][0] += q[0];
            dzf[f][1] += q[1];
            for j in 0..2 {
                g_state[p][j] += d[j] * q[j];
                ou.dmu[j] += (1.0 - d[j]) * q[j];
                let dd = q[j] * (sp[j] - h.mu[j]);
                ou.dlam[j] += dd * (-b) * d[j];
            }
            let gm = [
                [0.5 * (q[0] * q[0] - p11), 0.5 * (q[0] * q[1] - p12)],
                [0.5 * (q[1] * q[0] - p12), 0.5 * (q[1] * q[1] - p22)],
            ];
            ou.add_branch_cov(gm, b, d, vinf);
        }
    }
    if let Some(g) = grad.as_deref_mut() {
        field_backward(flat, &h, &fwd, &mut g_state, &mut g[el..el + 2 * lay.n_eps_l], &mut ou);
        ou.finish(&h);
        lik.dlam = ou.dlam;
        lik.dsig_l = ou.dsigma;
        lik.drho_l = ou.drho;
        lik.dmu = ou.dmu;
        fold_block_grads(
            theta, ef, up.rho_f, up.sig_f, &dzf,
            &mut lik.drho_f, &mut lik.dsig_f, Some(g),
        );
    }
    lp += Posterior::eps_prior(theta, ef, 2 * post.n_fam, grad.as_deref_mut());
    lp += Posterior::eps_prior(theta, el, 2 * lay.n_eps_l, grad.as_deref_mut());
    lp += post.fold_priors(theta, up, &lik, grad);
    Some(lp)
}
