//! The posterior density object: parameter layout, transforms, priors, and
//! dispatch to the per-dependency likelihood implementations.
//!
//! All six models share one convention: the sampler sees an unconstrained
//! vector θ. Correlations enter through tanh, scales/drifts/cutpoint gaps
//! through exp (log-Jacobians included), locations directly, and every latent
//! effect as a standard-normal ε (non-centered). `constrain` maps θ
//! coordinate-by-coordinate to the interpretable scale — correlations,
//! scales, cutpoint positions, and latent *effects* (z = L·ε, or OU node
//! states for phylo models) — preserving length and order, which is what
//! summaries, comparison, and reconstruction consume.

use super::link::{bernoulli_logit_logpmf_grad, ordered_logistic_logpmf_grad};
use super::treefield::{self, FlatField, OuHyper};
use super::{hier, phylo, pooled};
use super::{Cutpoints, Dependency, Likelihood, ModelSpec};
use crate::data::{TraitKind, TraitTable};
use crate::error::{Error, Result};
use crate::tree::Tree;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Coordinate offsets into the parameter vector. `None` marks blocks a model
/// does not have.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub rho_f: Option<usize>,
    /// Two consecutive coordinates (σ_f1, σ_f2).
    pub sig_f: Option<usize>,
    pub rho_l: usize,
    pub sig_l: usize,
    /// One coordinate if `shared_lambda`, else two.
    pub lam: Option<usize>,
    pub n_lam: usize,
    pub mu: Option<usize>,
    pub c1: Option<usize>,
    pub gaps: Option<usize>,
    pub n_gaps: usize,
    /// 2·n_fam coordinates, family-major pairs.
    pub eps_f: Option<usize>,
    /// Language/node latent block, pair-major; count in `n_eps_l` (pairs).
    pub eps_l: Option<usize>,
    pub n_eps_l: usize,
    pub dim: usize,
}

/// Hyperparameters on the constrained scale, unpacked from θ.
#[derive(Debug, Clone)]
pub(crate) struct Unpacked {
    pub rho_f: f64,
    pub sig_f: [f64; 2],
    pub rho_l: f64,
    pub sig_l: [f64; 2],
    pub lam: [f64; 2],
    pub mu: [f64; 2],
    pub cuts: Option<Cutpoints>,
}

/// Likelihood-side gradients with respect to constrained hyperparameters,
/// accumulated by the model implementations and folded into unconstrained
/// coordinates (with priors) in one place.
#[derive(Debug, Clone, Default)]
pub(crate) struct LikGrads {
    pub drho_f: f64,
    pub dsig_f: [f64; 2],
    pub drho_l: f64,
    pub dsig_l: [f64; 2],
    pub dlam: [f64; 2],
    pub dmu: [f64; 2],
    pub dcut: Vec<f64>,
}

/// A model bound to its data (and tree, for phylo dependencies): a pure,
/// immutable density with gradients, safe to share across chains.
#[derive(Debug, Clone)]
pub struct Posterior {
    spec: ModelSpec,
    pub(crate) n: usize,
    pub(crate) y_ord: Vec<usize>,
    pub(crate) y_bin: Vec<usize>,
    pub(crate) x: Vec<[f64; 2]>,
    pub(crate) n_levels: usize,
    pub(crate) fam_of: Vec<usize>,
    fam_names: Vec<String>,
    pub(crate) n_fam: usize,
    taxa: Vec<String>,
    pub(crate) flat: Option<FlatField>,
    pub(crate) lay: Layout,
    names: Vec<String>,
}

impl Posterior {
    /// Bind `spec` to aligned, complete-case data (and the aligned tree for
    /// phylo dependencies).
    pub fn new(spec: ModelSpec, table: &TraitTable, tree: Option<&Tree>) -> Result<Posterior> {
        let n = table.n();
        if n == 0 {
            return Err(Error::validation("empty data table"));
        }
        for i in 0..n {
            if !table.row_complete(i) {
                return Err(Error::validation(format!(
                    "taxon '{}' has missing values; apply complete-case filtering or align first",
                    table.taxa()[i]
                )));
            }
        }
        let cols = table.columns();
        if cols.len() < 2 {
            return Err(Error::validation("need two trait columns"));
        }

        let (y_ord, y_bin, x, n_levels);
        match spec.likelihood {
            Likelihood::Ordbin => {
                let TraitKind::Ordinal { levels } = &cols[0].kind else {
                    return Err(Error::validation(format!(
                        "ordinal×binary likelihood needs an ordinal first column, got '{}'",
                        cols[0].name
                    )));
                };
                if !matches!(cols[1].kind, TraitKind::Binary { .. }) {
                    return Err(Error::validation(format!(
                        "ordinal×binary likelihood needs a binary second column, got '{}'",
                        cols[1].name
                    )));
                }
                n_levels = levels.len();
                y_ord = (0..n).map(|i| cols[0].code(i)).collect();
                y_bin = (0..n).map(|i| cols[1].code(i)).collect();
                x = Vec::new();
            }
            Likelihood::Cont => {
                for c in &cols[..2] {
                    if c.kind != TraitKind::Continuous {
                        return Err(Error::validation(format!(
                            "continuous likelihood needs continuous columns, got '{}'",
                            c.name
                        )));
                    }
                }
                x = (0..n).map(|i| [cols[0].value(i), cols[1].value(i)]).collect();
                y_ord = Vec::new();
                y_bin = Vec::new();
                n_levels = 0;
            }
        }

        let (fam_names, fam_of) = table.family_index();
        let n_fam = fam_names.len();

        let flat = match spec.dependency {
            Dependency::Phylo => {
                let tree = tree.ok_or_else(|| {
                    Error::validation("phylo dependency requires a tree")
                })?;
                if tree.tip_labels() != table.taxa() {
                    return Err(Error::validation(
                        "tree tips do not match table rows; align data and tree first",
                    ));
                }
                Some(FlatField::new(tree, spec.likelihood == Likelihood::Ordbin)?)
            }
            _ => None,
        };

        let lay = Self::build_layout(&spec, n, n_levels, n_fam, flat.as_ref());
        let names = Self::build_names(&spec, &lay, table.taxa(), &fam_names, flat.as_ref(), tree);
        Ok(Posterior {
            spec,
            n,
            y_ord,
            y_bin,
            x,
            n_levels,
            fam_of,
            fam_names,
            n_fam,
            taxa: table.taxa().to_vec(),
            flat,
            lay,
            names,
        })
    }

    fn build_layout(
        spec: &ModelSpec,
        n: usize,
        n_levels: usize,
        n_fam: usize,
        flat: Option<&FlatField>,
    ) -> Layout {
        let mut at = 0;
        let mut take = |k: usize| {
            let here = at;
            at += k;
            here
        };
        let has_fam = spec.dependency != Dependency::Pooled;
        let rho_f = has_fam.then(|| take(1));
        let sig_f = has_fam.then(|| take(2));
        let rho_l = take(1);
        let sig_l = take(2);
        let (lam, n_lam) = if spec.dependency == Dependency::Phylo {
            let k = if spec.shared_lambda { 1 } else { 2 };
            (Some(take(k)), k)
        } else {
            (None, 0)
        };
        let has_mu = spec.likelihood == Likelihood::Cont || spec.dependency == Dependency::Phylo;
        let mu = has_mu.then(|| take(2));
        let (c1, gaps, n_gaps) = if spec.likelihood == Likelihood::Ordbin {
            let c1 = take(1);
            let k = n_levels - 2;
            (Some(c1), (k > 0).then(|| take(k)), k)
        } else {
            (None, None, 0)
        };
        let eps_f = has_fam.then(|| take(2 * n_fam));
        let n_eps_l = match (spec.likelihood, spec.dependency) {
            (Likelihood::Ordbin, Dependency::Pooled | Dependency::Family) => n,
            (Likelihood::Ordbin | Likelihood::Cont, Dependency::Phylo) => {
                flat.expect("phylo layout has a field").n_states()
            }
            (Likelihood::Cont, _) => 0,
        };
        let eps_l = (n_eps_l > 0).then(|| take(2 * n_eps_l));
        Layout { rho_f, sig_f, rho_l, sig_l, lam, n_lam, mu, c1, gaps, n_gaps, eps_f, eps_l, n_eps_l, dim: at }
    }

    fn build_names(
        spec: &ModelSpec,
        lay: &Layout,
        taxa: &[String],
        fam_names: &[String],
        flat: Option<&FlatField>,
        tree: Option<&Tree>,
    ) -> Vec<String> {
        let mut names = vec![String::new(); lay.dim];
        let pooled = spec.dependency == Dependency::Pooled;
        if let (Some(rf), Some(sf)) = (lay.rho_f, lay.sig_f) {
            names[rf] = "rho_f".into();
            names[sf] = "sigma_f1".into();
            names[sf + 1] = "sigma_f2".into();
        }
        let (rho_name, sig_stem) = if pooled { ("rho", "sigma") } else { ("rho_l", "sigma_l") };
        names[lay.rho_l] = rho_name.into();
        names[lay.sig_l] = format!("{sig_stem}1");
        names[lay.sig_l + 1] = format!("{sig_stem}2");
        if let Some(l) = lay.lam {
            if lay.n_lam == 1 {
                names[l] = "lambda".into();
            } else {
                names[l] = "lambda1".into();
                names[l + 1] = "lambda2".into();
            }
        }
        if let Some(m) = lay.mu {
            names[m] = "mu1".into();
            names[m + 1] = "mu2".into();
        }
        if let Some(c1) = lay.c1 {
            names[c1] = "c1".into();
            if let Some(g) = lay.gaps {
                for j in 0..lay.n_gaps {
                    names[g + j] = format!("c{}", j + 2);
                }
            }
        }
        if let Some(ef) = lay.eps_f {
            for (f, fam) in fam_names.iter().enumerate() {
                names[ef + 2 * f] = format!("zf1[{fam}]");
                names[ef + 2 * f + 1] = format!("zf2[{fam}]");
            }
        }
        if let Some(el) = lay.eps_l {
            if spec.dependency == Dependency::Phylo {
                let flat = flat.expect("phylo");
                let tree = tree.expect("phylo");
                let stem = "s";
                for (k, &id) in flat.nodes.iter().enumerate() {
                    let label = match &tree.node(id).label {
                        Some(l) => l.clone(),
                        None => format!("n{id}"),
                    };
                    names[el + 2 * k] = format!("{stem}1[{label}]");
                    names[el + 2 * k + 1] = format!("{stem}2[{label}]");
                }
            } else {
                let stem = if pooled { "z" } else { "zl" };
                for (i, t) in taxa.iter().enumerate() {
                    names[el + 2 * i] = format!("{stem}1[{t}]");
                    names[el + 2 * i + 1] = format!("{stem}2[{t}]");
                }
            }
        }
        names
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Length of the unconstrained (and constrained) parameter vector.
    pub fn dim(&self) -> usize {
        self.lay.dim
    }

    /// Constrained-scale parameter names, one per coordinate.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn taxa(&self) -> &[String] {
        &self.taxa
    }

    pub fn family_names(&self) -> &[String] {
        &self.fam_names
    }

    pub fn family_of(&self) -> &[usize] {
        &self.fam_of
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    /// Joint log-density (priors + latents + likelihood) at unconstrained θ.
    /// Non-finite evaluations return −∞ (the sampler rejects them).
    pub fn log_posterior(&self, theta: &[f64]) -> f64 {
        self.eval(theta, None)
    }

    /// Gradient of `log_posterior`. Meaningful only where the density is
    /// finite.
    pub fn grad_log_posterior(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.lay.dim];
        self.eval(theta, Some(&mut g));
        g
    }

    /// Density and gradient in one pass (the sampler's hot path).
    pub fn logp_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(theta, Some(grad))
    }

    fn eval(&self, theta: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        assert_eq!(theta.len(), self.lay.dim, "parameter vector length");
        if let Some(g) = grad.as_deref_mut() {
            assert_eq!(g.len(), self.lay.dim);
            g.fill(0.0);
        }
        let Some(up) = self.unpack(theta) else {
            return f64::NEG_INFINITY;
        };
        let lp = match (self.spec.likelihood, self.spec.dependency) {
            (Likelihood::Ordbin, Dependency::Pooled) => {
                pooled::ordbin(self, theta, &up, grad)
            }
            (Likelihood::Cont, Dependency::Pooled) => pooled::cont(self, theta, &up, grad),
            (Likelihood::Ordbin, Dependency::Family) => hier::ordbin(self, theta, &up, grad),
            (Likelihood::Cont, Dependency::Family) => hier::cont(self, theta, &up, grad),
            (Likelihood::Ordbin, Dependency::Phylo) => phylo::ordbin(self, theta, &up, grad),
            (Likelihood::Cont, Dependency::Phylo) => phylo::cont(self, theta, &up, grad),
        };
        match lp {
            Some(v) if v.is_finite() => v,
            _ => f64::NEG_INFINITY,
        }
    }

    /// Unpack constrained hyperparameters; None flags a rejected evaluation
    /// (saturated tanh, overflowed exp).
    pub(crate) fn unpack(&self, theta: &[f64]) -> Option<Unpacked> {
        let lay = &self.lay;
        let tanh_ok = |r: f64| {
            let rho = r.tanh();
            (1.0 - rho * rho > 0.0).then_some(rho)
        };
        let exp_ok = |u: f64| {
            let v = u.exp();
            (v.is_finite() && v > 0.0).then_some(v)
        };
        let rho_l = tanh_ok(theta[lay.rho_l])?;
        let sig_l = [exp_ok(theta[lay.sig_l])?, exp_ok(theta[lay.sig_l + 1])?];
        let (rho_f, sig_f) = match (lay.rho_f, lay.sig_f) {
            (Some(r), Some(s)) => (tanh_ok(theta[r])?, [exp_ok(theta[s])?, exp_ok(theta[s + 1])?]),
            _ => (0.0, [1.0, 1.0]),
        };
        let lam = match lay.lam {
            Some(l) if lay.n_lam == 2 => [exp_ok(theta[l])?, exp_ok(theta[l + 1])?],
            Some(l) => {
                let v = exp_ok(theta[l])?;
                [v, v]
            }
            None => [1.0, 1.0],
        };
        let mu = match lay.mu {
            Some(m) => [theta[m], theta[m + 1]],
            None => [0.0, 0.0],
        };
        let cuts = match lay.c1 {
            Some(c1) => {
                let min_gap = self.spec.min_gap();
                let mut cs = Vec::with_capacity(self.n_levels - 1);
                let mut c = theta[c1];
                cs.push(c);
                if let Some(g) = lay.gaps {
                    for j in 0..lay.n_gaps {
                        c += min_gap + exp_ok(theta[g + j])?;
                        cs.push(c);
                    }
                }
                Some(Cutpoints::new(cs, 0.0).ok()?)
            }
            None => None,
        };
        Some(Unpacked { rho_f, sig_f, rho_l, sig_l, lam, mu, cuts })
    }

    /// Add hyperparameter priors (with log-Jacobians) and chain the
    /// likelihood-side constrained gradients into unconstrained coordinates.
    pub(crate) fn fold_priors(
        &self,
        theta: &[f64],
        up: &Unpacked,
        lik: &LikGrads,
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        let lay = &self.lay;
        let pr = &self.spec.priors;
        let mut lp = 0.0;
        let mut add = |idx: usize, term: f64, g: f64, grad: &mut Option<&mut [f64]>| {
            lp += term;
            if let Some(gr) = grad.as_deref_mut() {
                gr[idx] += g;
            }
        };

        // correlations: Uniform(−1,1) through tanh
        let rho_prior = |rho: f64| -> f64 { -(2.0f64).ln() + (1.0 - rho * rho).ln() };
        add(lay.rho_l, rho_prior(up.rho_l), -2.0 * up.rho_l + lik.drho_l * (1.0 - up.rho_l * up.rho_l), &mut grad);
        if let Some(r) = lay.rho_f {
            add(r, rho_prior(up.rho_f), -2.0 * up.rho_f + lik.drho_f * (1.0 - up.rho_f * up.rho_f), &mut grad);
        }

        // scales: LogNormal(0, sd) through exp ⇒ Normal(0, sd) on u
        let lognorm = |u: f64, sd: f64| -0.5 * LN_2PI - sd.ln() - u * u / (2.0 * sd * sd);
        for j in 0..2 {
            let u = theta[lay.sig_l + j];
            add(lay.sig_l + j, lognorm(u, pr.sigma_log_sd), -u / (pr.sigma_log_sd * pr.sigma_log_sd) + lik.dsig_l[j] * up.sig_l[j], &mut grad);
        }
        if let Some(s) = lay.sig_f {
            for j in 0..2 {
                let u = theta[s + j];
                add(s + j, lognorm(u, pr.sigma_log_sd), -u / (pr.sigma_log_sd * pr.sigma_log_sd) + lik.dsig_f[j] * up.sig_f[j], &mut grad);
            }
        }
        if let Some(l) = lay.lam {
            let sd2 = pr.lambda_log_sd * pr.lambda_log_sd;
            if lay.n_lam == 2 {
                for j in 0..2 {
                    let v = theta[l + j];
                    add(l + j, lognorm(v, pr.lambda_log_sd), -v / sd2 + lik.dlam[j] * up.lam[j], &mut grad);
                }
            } else {
                let v = theta[l];
                add(l, lognorm(v, pr.lambda_log_sd), -v / sd2 + (lik.dlam[0] + lik.dlam[1]) * up.lam[0], &mut grad);
            }
        }

        // locations: Normal(0, sd), identity transform
        let normal = |v: f64, sd: f64| -0.5 * LN_2PI - sd.ln() - v * v / (2.0 * sd * sd);
        if let Some(m) = lay.mu {
            for j in 0..2 {
                let v = theta[m + j];
                add(m + j, normal(v, pr.mu_sd), -v / (pr.mu_sd * pr.mu_sd) + lik.dmu[j], &mut grad);
            }
        }

        // cutpoints: c₁ ~ Normal(0, sd); gaps ζ ~ LogNormal(0, sd); the
        // position gradients dcut chain into c₁ (all) and each gap
        // (suffix sums)
        if let Some(c1) = lay.c1 {
            let v = theta[c1];
            let dcut_total: f64 = lik.dcut.iter().sum();
            add(c1, normal(v, pr.c1_sd), -v / (pr.c1_sd * pr.c1_sd) + dcut_total, &mut grad);
            if let Some(goff) = lay.gaps {
                let sd2 = pr.zeta_log_sd * pr.zeta_log_sd;
                let mut suffix = 0.0;
                for j in (0..lay.n_gaps).rev() {
                    suffix += lik.dcut[j + 1];
                    let g = theta[goff + j];
                    let zeta = g.exp();
                    add(goff + j, lognorm(g, pr.zeta_log_sd), -g / sd2 + zeta * suffix, &mut grad);
                }
            }
        }
        lp
    }

    /// Standard-normal prior over a block of ε coordinates, with gradients.
    pub(crate) fn eps_prior(
        theta: &[f64],
        offset: usize,
        count: usize,
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        let mut lp = -0.5 * LN_2PI * count as f64;
        for j in 0..count {
            let e = theta[offset + j];
            lp -= 0.5 * e * e;
            if let Some(g) = grad.as_deref_mut() {
                g[offset + j] += -e;
            }
        }
        lp
    }

    /// Map θ to the constrained scale coordinate-by-coordinate: correlations,
    /// scales, drifts, locations, cutpoint positions, and latent effects
    /// (z = L·ε for family/language blocks, OU node states for phylo blocks).
    pub fn constrain(&self, theta: &[f64]) -> Vec<f64> {
        let lay = &self.lay;
        let mut out = theta.to_vec();
        out[lay.rho_l] = theta[lay.rho_l].tanh();
        out[lay.sig_l] = theta[lay.sig_l].exp();
        out[lay.sig_l + 1] = theta[lay.sig_l + 1].exp();
        if let (Some(r), Some(s)) = (lay.rho_f, lay.sig_f) {
            out[r] = theta[r].tanh();
            out[s] = theta[s].exp();
            out[s + 1] = theta[s + 1].exp();
        }
        if let Some(l) = lay.lam {
            for j in 0..lay.n_lam {
                out[l + j] = theta[l + j].exp();
            }
        }
        if let (Some(c1), Some(g)) = (lay.c1, lay.gaps) {
            let min_gap = self.spec.min_gap();
            let mut c = theta[c1];
            for j in 0..lay.n_gaps {
                c += min_gap + theta[g + j].exp();
                out[g + j] = c;
            }
        }
        let up = self.unpack(theta);
        if let (Some(ef), Some(up)) = (lay.eps_f, up.as_ref()) {
            let l = super::CorrelationBlock { rho: up.rho_f, sigma1: up.sig_f[0], sigma2: up.sig_f[1] }.chol();
            for f in 0..self.n_fam {
                let (e1, e2) = (theta[ef + 2 * f], theta[ef + 2 * f + 1]);
                out[ef + 2 * f] = l[0][0] * e1;
                out[ef + 2 * f + 1] = l[1][0] * e1 + l[1][1] * e2;
            }
        }
        if let (Some(el), Some(up)) = (lay.eps_l, up.as_ref()) {
            match &self.flat {
                Some(flat) => {
                    let h = OuHyper { lam: up.lam, sigma: up.sig_l, rho: up.rho_l, mu: up.mu };
                    match treefield::field_forward(flat, &h, &theta[el..el + 2 * lay.n_eps_l]) {
                        Some(fwd) => {
                            for (k, s) in fwd.s.iter().enumerate() {
                                out[el + 2 * k] = s[0];
                                out[el + 2 * k + 1] = s[1];
                            }
                        }
                        None => {
                            // unreachable for draws the sampler accepted
                            for v in &mut out[el..el + 2 * lay.n_eps_l] {
                                *v = f64::NAN;
                            }
                        }
                    }
                }
                None => {
                    let l = super::CorrelationBlock { rho: up.rho_l, sigma1: up.sig_l[0], sigma2: up.sig_l[1] }.chol();
                    for i in 0..lay.n_eps_l {
                        let (e1, e2) = (theta[el + 2 * i], theta[el + 2 * i + 1]);
                        out[el + 2 * i] = l[0][0] * e1;
                        out[el + 2 * i + 1] = l[1][0] * e1 + l[1][1] * e2;
                    }
                }
            }
        }
        out
    }

    /// Per-observation log-likelihood of the observed pair given one
    /// constrained draw (latents conditioned on, not integrated).
    pub fn pointwise_loglik_row(&self, constrained: &[f64]) -> Vec<f64> {
        assert_eq!(constrained.len(), self.lay.dim);
        let lay = &self.lay;
        let mut out = Vec::with_capacity(self.n);
        match (self.spec.likelihood, self.spec.dependency) {
            (Likelihood::Ordbin, dep) => {
                let cuts = self.cutpoints_from_constrained(constrained);
                for i in 0..self.n {
                    let z = self.latent_pair(constrained, i, dep);
                    let (lp1, ..) = ordered_logistic_logpmf_grad(z[0], &cuts, self.y_ord[i]);
                    let (lp2, _) = bernoulli_logit_logpmf_grad(z[1], self.y_bin[i]);
                    out.push(lp1 + lp2);
                }
            }
            (Likelihood::Cont, Dependency::Pooled) => {
                let (rho, s1, s2) = (constrained[lay.rho_l], constrained[lay.sig_l], constrained[lay.sig_l + 1]);
                let m = lay.mu.expect("continuous has mu");
                let mu = [constrained[m], constrained[m + 1]];
                for i in 0..self.n {
                    out.push(mvn2_logpdf(
                        [self.x[i][0] - mu[0], self.x[i][1] - mu[1]],
                        s1 * s1,
                        rho * s1 * s2,
                        s2 * s2,
                    ));
                }
            }
            (Likelihood::Cont, Dependency::Family) => {
                let (rho, s1, s2) = (constrained[lay.rho_l], constrained[lay.sig_l], constrained[lay.sig_l + 1]);
                let m = lay.mu.expect("continuous has mu");
                let mu = [constrained[m], constrained[m + 1]];
                let ef = lay.eps_f.expect("family block");
                for i in 0..self.n {
                    let f = self.fam_of[i];
                    let zf = [constrained[ef + 2 * f], constrained[ef + 2 * f + 1]];
                    out.push(mvn2_logpdf(
                        [self.x[i][0] - mu[0] - zf[0], self.x[i][1] - mu[1] - zf[1]],
                        s1 * s1,
                        rho * s1 * s2,
                        s2 * s2,
                    ));
                }
            }
            (Likelihood::Cont, Dependency::Phylo) => {
                let flat = self.flat.as_ref().expect("phylo field");
                let el = lay.eps_l.expect("phylo states");
                let ef = lay.eps_f.expect("family block");
                let m = lay.mu.expect("phylo has mu");
                let mu = [constrained[m], constrained[m + 1]];
                let lam = self.lambdas_from_constrained(constrained);
                let (rho, s1, s2) = (constrained[lay.rho_l], constrained[lay.sig_l], constrained[lay.sig_l + 1]);
                let h = OuHyper { lam, sigma: [s1, s2], rho, mu };
                let vinf = h.vinf();
                for i in 0..self.n {
                    let (p, b) = flat.tip_edge[i];
                    let sp = [constrained[el + 2 * p], constrained[el + 2 * p + 1]];
                    let f = self.fam_of[i];
                    let zf = [constrained[ef + 2 * f], constrained[ef + 2 * f + 1]];
                    let d = [(-lam[0] * b).exp(), (-lam[1] * b).exp()];
                    let v = treefield::branch_cov(vinf, lam, b);
                    let r = [
                        self.x[i][0] - zf[0] - mu[0] - d[0] * (sp[0] - mu[0]),
                        self.x[i][1] - zf[1] - mu[1] - d[1] * (sp[1] - mu[1]),
                    ];
                    out.push(mvn2_logpdf(r, v[0][0], v[0][1], v[1][1]));
                }
            }
        }
        out
    }

    /// Latent observation-scale pair z_i for ordinal×binary models, read off
    /// a constrained draw.
    pub(crate) fn latent_pair(&self, constrained: &[f64], i: usize, dep: Dependency) -> [f64; 2] {
        let lay = &self.lay;
        let el = lay.eps_l.expect("ordbin latents");
        match dep {
            Dependency::Pooled => {
                [constrained[el + 2 * i], constrained[el + 2 * i + 1]]
            }
            Dependency::Family => {
                let ef = lay.eps_f.expect("family block");
                let f = self.fam_of[i];
                [
                    constrained[el + 2 * i] + constrained[ef + 2 * f],
                    constrained[el + 2 * i + 1] + constrained[ef + 2 * f + 1],
                ]
            }
            Dependency::Phylo => {
                let flat = self.flat.as_ref().expect("phylo field");
                let ef = lay.eps_f.expect("family block");
                let k = flat.tip_state[i];
                let f = self.fam_of[i];
                [
                    constrained[el + 2 * k] + constrained[ef + 2 * f],
                    constrained[el + 2 * k + 1] + constrained[ef + 2 * f + 1],
                ]
            }
        }
    }

    pub(crate) fn cutpoints_from_constrained(&self, constrained: &[f64]) -> Cutpoints {
        let lay = &self.lay;
        let c1 = lay.c1.expect("ordbin cutpoints");
        let mut cs = vec![constrained[c1]];
        if let Some(g) = lay.gaps {
            cs.extend((0..lay.n_gaps).map(|j| constrained[g + j]));
        }
        Cutpoints::new(cs, 0.0).expect("constrained cutpoints increase")
    }

    pub(crate) fn lambdas_from_constrained(&self, constrained: &[f64]) -> [f64; 2] {
        match self.lay.lam {
            Some(l) if self.lay.n_lam == 2 => [constrained[l], constrained[l + 1]],
            Some(l) => [constrained[l], constrained[l]],
            None => [1.0, 1.0],
        }
    }
}

/// Non-centered block effects z_b = L(σ, ρ)·ε_b for `n` blocks of paired ε
/// coordinates starting at `offset`.
pub(crate) fn block_effects(
    theta: &[f64],
    offset: usize,
    n: usize,
    rho: f64,
    sig: [f64; 2],
) -> Vec<[f64; 2]> {
    let w = (1.0 - rho * rho).sqrt();
    (0..n)
        .map(|b| {
            let (e1, e2) = (theta[offset + 2 * b], theta[offset + 2 * b + 1]);
            [sig[0] * e1, sig[1] * (rho * e1 + w * e2)]
        })
        .collect()
}

/// Reverse-mode fold of per-block effect gradients dz_b through z = L·ε into
/// the ε coordinates and the constrained (σ, ρ) accumulators.
pub(crate) fn fold_block_grads(
    theta: &[f64],
    offset: usize,
    rho: f64,
    sig: [f64; 2],
    dz: &[[f64; 2]],
    drho: &mut f64,
    dsig: &mut [f64; 2],
    mut grad: Option<&mut [f64]>,
) {
    let w = (1.0 - rho * rho).sqrt();
    for (b, d) in dz.iter().enumerate() {
        let (e1, e2) = (theta[offset + 2 * b], theta[offset + 2 * b + 1]);
        if let Some(g) = grad.as_deref_mut() {
            g[offset + 2 * b] += d[0] * sig[0] + d[1] * sig[1] * rho;
            g[offset + 2 * b + 1] += d[1] * sig[1] * w;
        }
        dsig[0] += d[0] * e1;
        dsig[1] += d[1] * (rho * e1 + w * e2);
        *drho += d[1] * sig[1] * (e1 - rho * e2 / w);
    }
}

/// Bivariate normal log-density of residual r under covariance
/// [[v11, v12],[v12, v22]].
pub(crate) fn mvn2_logpdf(r: [f64; 2], v11: f64, v12: f64, v22: f64) -> f64 {
    let det = v11 * v22 - v12 * v12;
    if !(det > 0.0) || !(v11 > 0.0) {
        return f64::NEG_INFINITY;
    }
    let quad = (v22 * r[0] * r[0] - 2.0 * v12 * r[0] * r[1] + v11 * r[1] * r[1]) / det;
    -LN_2PI - 0.5 * det.ln() - 0.5 * quad
}
