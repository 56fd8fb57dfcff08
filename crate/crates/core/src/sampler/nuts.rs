//! No-U-turn transitions: multinomial sampling over the trajectory, the
//! generalized U-turn criterion checked at every subtree merge (with the two
//! cross-boundary checks), dual-averaging step-size adaptation, and windowed
//! diagonal mass-matrix estimation.

use super::{DrawDiag, LogDensity, SamplerConfig};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Energy-difference threshold marking a divergent leapfrog step.
const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// One phase-space point with cached density and gradient.
#[derive(Clone)]
struct Point {
    theta: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    lp: f64,
}

impl Point {
    fn hamiltonian(&self, inv_mass: &[f64]) -> f64 {
        -self.lp + kinetic(&self.p, inv_mass)
    }
}

fn kinetic(p: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_mass).map(|(pi, mi)| pi * pi * mi).sum::<f64>()
}

fn p_sharp(p: &[f64], inv_mass: &[f64]) -> Vec<f64> {
    p.iter().zip(inv_mass).map(|(pi, mi)| pi * mi).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One leapfrog step of size `eps` in the direction already encoded in p.
/// Returns None if the density or gradient turned non-finite.
fn leapfrog<T: LogDensity>(
    target: &T,
    from: &Point,
    eps: f64,
    inv_mass: &[f64],
) -> Option<Point> {
    let dim = from.theta.len();
    let mut p: Vec<f64> = (0..dim).map(|j| from.p[j] + 0.5 * eps * from.grad[j]).collect();
    let theta: Vec<f64> =
        (0..dim).map(|j| from.theta[j] + eps * inv_mass[j] * p[j]).collect();
    let mut grad = vec![0.0; dim];
    let lp = target.logp_and_grad(&theta, &mut grad);
    if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return None;
    }
    for j in 0..dim {
        p[j] += 0.5 * eps * grad[j];
    }
    Some(Point { theta, p, grad, lp })
}

/// A (sub)trajectory in position order: `minus` is the backward end, `plus`
/// the forward end.
struct Subtree {
    minus: Point,
    plus: Point,
    /// Σ p over the subtree (the generalized-criterion integral).
    rho: Vec<f64>,
    /// Multinomially selected representative and its energy.
    sample: Point,
    /// log Σ exp(−(H − H₀)) over the subtree.
    log_w: f64,
    sum_accept: f64,
    n_leapfrog: usize,
    divergent: bool,
    turned: bool,
}

fn turned(ps_minus: &[f64], ps_plus: &[f64], rho: &[f64]) -> bool {
    dot(ps_minus, rho) <= 0.0 || dot(ps_plus, rho) <= 0.0
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

struct TreeCtx<'a, T: LogDensity> {
    target: &'a T,
    inv_mass: &'a [f64],
    eps: f64,
    h0: f64,
}

/// Build a subtree of 2^depth points starting one step beyond `from`.
/// `dir` is ±1. Invalid (divergent/turned) subtrees still report their
/// leapfrog and acceptance tallies.
fn build_tree<T: LogDensity>(
    ctx: &TreeCtx<'_, T>,
    rng: &mut ChaCha8Rng,
    from: &Point,
    dir: f64,
    depth: usize,
) -> Subtree {
    if depth == 0 {
        let step = leapfrog(ctx.target, from, dir * ctx.eps, ctx.inv_mass);
        return match step {
            Some(pt) => {
                let dh = pt.hamiltonian(ctx.inv_mass) - ctx.h0;
                let divergent = dh > DIVERGENCE_THRESHOLD || !dh.is_finite();
                let accept = (-dh).exp().min(1.0);
                Subtree {
                    rho: pt.p.clone(),
                    log_w: -dh,
                    sum_accept: if accept.is_finite() { accept } else { 0.0 },
                    n_leapfrog: 1,
                    divergent,
                    turned: false,
                    minus: pt.clone(),
                    plus: pt.clone(),
                    sample: pt,
                }
            }
            None => Subtree {
                // a rejected evaluation: flag divergent, keep tallies
                rho: from.p.clone(),
                log_w: f64::NEG_INFINITY,
                sum_accept: 0.0,
                n_leapfrog: 1,
                divergent: true,
                turned: false,
                minus: from.clone(),
                plus: from.clone(),
                sample: from.clone(),
            },
        };
    }

    let first = build_tree(ctx, rng, from, dir, depth - 1);
    if first.divergent || first.turned {
        return first;
    }
    let grow_from = if dir > 0.0 { &first.plus } else { &first.minus };
    let second = build_tree(ctx, rng, grow_from, dir, depth - 1);
    merge(rng, ctx.inv_mass, first, second, dir)
}

/// Merge two adjacent subtrees (`second` extends `first` in direction `dir`)
/// into one, multinomially reselecting the representative and applying the
/// U-turn criterion across the combined span and both inner boundaries.
fn merge(
    rng: &mut ChaCha8Rng,
    inv_mass: &[f64],
    first: Subtree,
    second: Subtree,
    dir: f64,
) -> Subtree {
    let log_w = log_sum_exp(first.log_w, second.log_w);
    let take_second = {
        let lr = second.log_w - log_w;
        lr > (rng.gen::<f64>()).ln()
    };
    let sum_accept = first.sum_accept + second.sum_accept;
    let n_leapfrog = first.n_leapfrog + second.n_leapfrog;
    let divergent = first.divergent || second.divergent;
    let (minus, plus, left, right) = if dir > 0.0 {
        (first.minus.clone(), second.plus.clone(), &first, &second)
    } else {
        (second.minus.clone(), first.plus.clone(), &second, &first)
    };
    let rho: Vec<f64> =
        left.rho.iter().zip(&right.rho).map(|(a, b)| a + b).collect();
    let ps_minus = p_sharp(&minus.p, inv_mass);
    let ps_plus = p_sharp(&plus.p, inv_mass);
    let mut is_turned =
        first.turned || second.turned || turned(&ps_minus, &ps_plus, &rho);
    // cross-boundary checks between the two subtrees
    let rho_left: Vec<f64> =
        left.rho.iter().zip(&right.minus.p).map(|(a, b)| a + b).collect();
    let rho_right: Vec<f64> =
        right.rho.iter().zip(&left.plus.p).map(|(a, b)| a + b).collect();
    is_turned = is_turned
        || turned(&ps_minus, &p_sharp(&right.minus.p, inv_mass), &rho_left)
        || turned(&p_sharp(&left.plus.p, inv_mass), &ps_plus, &rho_right);
    let sample = if take_second { second.sample } else { first.sample };
    Subtree {
        minus,
        plus,
        rho,
        sample,
        log_w,
        sum_accept,
        n_leapfrog,
        divergent,
        turned: is_turned,
    }
}

/// Outcome of one NUTS transition.
struct Transition {
    theta: Vec<f64>,
    grad: Vec<f64>,
    lp: f64,
    accept_stat: f64,
    divergent: bool,
    depth: usize,
    energy: f64,
}

fn transition<T: LogDensity>(
    target: &T,
    rng: &mut ChaCha8Rng,
    theta: &[f64],
    grad: &[f64],
    lp: f64,
    eps: f64,
    inv_mass: &[f64],
    max_depth: usize,
) -> Transition {
    let dim = theta.len();
    let p: Vec<f64> = (0..dim)
        .map(|j| {
            let n: f64 = rng.sample(StandardNormal);
            n / inv_mass[j].sqrt()
        })
        .collect();
    let start = Point { theta: theta.to_vec(), p, grad: grad.to_vec(), lp };
    let h0 = start.hamiltonian(inv_mass);
    let ctx = TreeCtx { target, inv_mass, eps, h0 };

    let mut tree = Subtree {
        rho: start.p.clone(),
        log_w: 0.0,
        sum_accept: 0.0,
        n_leapfrog: 0,
        divergent: false,
        turned: false,
        minus: start.clone(),
        plus: start.clone(),
        sample: start,
    };
    let mut depth = 0;
    let mut divergent = false;
    let mut sum_accept = 0.0;
    let mut n_leapfrog = 0usize;
    while depth < max_depth {
        let dir: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let from = if dir > 0.0 { tree.plus.clone() } else { tree.minus.clone() };
        let new = build_tree(&ctx, rng, &from, dir, depth);
        sum_accept += new.sum_accept;
        n_leapfrog += new.n_leapfrog;
        if new.divergent || new.turned {
            divergent |= new.divergent;
            break;
        }
        // biased progressive sampling: favor the fresh subtree
        let take_new = new.log_w - tree.log_w > (rng.gen::<f64>()).ln();
        let sample_keep = if take_new { new.sample.clone() } else { tree.sample.clone() };
        tree = merge(rng, inv_mass, tree, new, dir);
        tree.sample = sample_keep;
        depth += 1;
        if tree.turned {
            break;
        }
    }
    let accept_stat = if n_leapfrog > 0 { sum_accept / n_leapfrog as f64 } else { 0.0 };
    let energy = tree.sample.hamiltonian(inv_mass);
    Transition {
        theta: tree.sample.theta,
        grad: tree.sample.grad,
        lp: tree.sample.lp,
        accept_stat,
        divergent,
        depth,
        energy,
    }
}

/// Dual-averaging step-size controller (Hoffman & Gelman), with the usual
/// constants γ=0.05, t₀=10, κ=0.75 and μ = ln(10 ε₀).
struct DualAverage {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    m: f64,
}

impl DualAverage {
    fn new(eps0: f64) -> Self {
        DualAverage {
            mu: (10.0 * eps0).ln(),
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            m: 0.0,
        }
    }

    fn update(&mut self, accept: f64, target: f64) {
        const GAMMA: f64 = 0.05;
        const T0: f64 = 10.0;
        const KAPPA: f64 = 0.75;
        self.m += 1.0;
        let frac = 1.0 / (self.m + T0);
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (target - accept);
        self.log_eps = self.mu - self.m.sqrt() / GAMMA * self.h_bar;
        let eta = self.m.powf(-KAPPA);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
    }

    fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    fn averaged(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Streaming mean/variance accumulator.
#[derive(Clone)]
struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Welford { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let nf = self.n as f64;
        for j in 0..x.len() {
            let d = x[j] - self.mean[j];
            self.mean[j] += d / nf;
            self.m2[j] += d * (x[j] - self.mean[j]);
        }
    }

    /// Regularized variance estimate shrunk toward 1e-3 (Stan's rule),
    /// guarding against zero-variance coordinates in short windows.
    fn shrunk_variance(&self) -> Vec<f64> {
        let nf = self.n as f64;
        self.m2
            .iter()
            .map(|m2| {
                let var = if self.n > 1 { m2 / (nf - 1.0) } else { 1.0 };
                let v = var * (nf / (nf + 5.0)) + 1e-3 * (5.0 / (nf + 5.0));
                v.max(1e-10)
            })
            .collect()
    }
}

/// Mass-adaptation window schedule: an initial fast buffer, doubling slow
/// windows, and a terminal fast buffer, shrunk proportionally when warmup is
/// short. Returns the first slow-window start and the indices at which each
/// window closes (mass update points).
fn window_schedule(warmup: usize) -> (usize, Vec<usize>) {
    const INIT: usize = 75;
    const TERM: usize = 50;
    const BASE: usize = 25;
    if warmup < 20 {
        return (0, Vec::new());
    }
    let (init, term, base) = if INIT + TERM + BASE > warmup {
        let init = (0.15 * warmup as f64) as usize;
        let term = (0.10 * warmup as f64) as usize;
        (init, term, warmup - init - term)
    } else {
        (INIT, TERM, BASE)
    };
    let mut ends = Vec::new();
    let mut start = init;
    let mut size = base;
    loop {
        let mut end = start + size;
        // absorb a final window too small to double
        if end + 2 * size > warmup - term {
            end = warmup - term;
        }
        ends.push(end);
        if end >= warmup - term {
            break;
        }
        start = end;
        size *= 2;
    }
    (init, ends)
}

/// Step-size search: double/halve until the one-step acceptance probability
/// crosses 1/2 (Hoffman & Gelman's heuristic), with hard caps.
fn find_reasonable_epsilon<T: LogDensity>(
    target: &T,
    rng: &mut ChaCha8Rng,
    point: &Point,
    inv_mass: &[f64],
) -> f64 {
    let dim = point.theta.len();
    let p: Vec<f64> = (0..dim)
        .map(|j| {
            let n: f64 = rng.sample(StandardNormal);
            n / inv_mass[j].sqrt()
        })
        .collect();
    let start = Point { p, ..point.clone() };
    let h0 = start.hamiltonian(inv_mass);
    let mut eps = 1.0;
    let log_ratio = |eps: f64| -> f64 {
        match leapfrog(target, &start, eps, inv_mass) {
            Some(pt) => h0 - pt.hamiltonian(inv_mass),
            None => f64::NEG_INFINITY,
        }
    };
    let r0 = log_ratio(eps);
    let dir: f64 = if r0 > (0.5f64).ln() { 1.0 } else { -1.0 };
    for _ in 0..100 {
        let r = log_ratio(eps);
        if dir > 0.0 && r <= (0.5f64).ln() {
            break;
        }
        if dir < 0.0 && r > (0.5f64).ln() {
            break;
        }
        eps *= if dir > 0.0 { 2.0 } else { 0.5 };
        if !(1e-10..=1e7).contains(&eps) {
            eps = eps.clamp(1e-10, 1e7);
            break;
        }
    }
    eps
}

pub(super) struct ChainOutput {
    pub draws: Vec<(Vec<f64>, DrawDiag)>,
}

/// Run one chain end to end: initialize, warm up (step size + mass), sample.
pub(super) fn run_chain<T: LogDensity>(
    target: &T,
    cfg: &SamplerConfig,
    chain: usize,
) -> Result<ChainOutput> {
    let dim = target.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64 + 1);

    // random initialization in unconstrained space, retried until finite
    let mut point = None;
    for _ in 0..100 {
        let theta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut grad = vec![0.0; dim];
        let lp = target.logp_and_grad(&theta, &mut grad);
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            point = Some(Point { theta, p: vec![0.0; dim], grad, lp });
            break;
        }
    }
    let mut point = point.ok_or_else(|| {
        Error::sampling(format!(
            "chain {chain}: no finite log-density found in 100 random initializations"
        ))
    })?;

    let mut inv_mass = vec![1.0; dim];
    let mut eps = find_reasonable_epsilon(target, &mut rng, &point, &inv_mass);
    let mut da = DualAverage::new(eps);
    let (slow_start, ends) = window_schedule(cfg.warmup);
    let mut next_window = 0usize;
    let mut welford = Welford::new(dim);
    let mut warmup_divergences = 0usize;

    for m in 0..cfg.warmup {
        let tr = transition(
            target, &mut rng, &point.theta, &point.grad, point.lp, eps, &inv_mass, cfg.max_depth,
        );
        point = Point { theta: tr.theta, p: vec![0.0; dim], grad: tr.grad, lp: tr.lp };
        if tr.divergent {
            warmup_divergences += 1;
        }
        da.update(tr.accept_stat, cfg.target_accept);
        eps = da.current();
        // inside the slow phase, accumulate draw variance; at each window
        // close, refresh the mass matrix and restart step-size adaptation
        if next_window < ends.len() && m >= slow_start {
            welford.push(&point.theta);
            if m + 1 == ends[next_window] {
                inv_mass = welford.shrunk_variance();
                welford = Welford::new(dim);
                eps = find_reasonable_epsilon(target, &mut rng, &point, &inv_mass);
                da = DualAverage::new(eps);
                next_window += 1;
            }
        }
    }
    if cfg.warmup > 0 && warmup_divergences == cfg.warmup {
        return Err(Error::sampling(format!(
            "chain {chain}: every warmup iteration diverged"
        )));
    }
    eps = da.averaged();

    let mut draws = Vec::with_capacity(cfg.iters);
    for _ in 0..cfg.iters {
        let tr = transition(
            target, &mut rng, &point.theta, &point.grad, point.lp, eps, &inv_mass, cfg.max_depth,
        );
        point = Point { theta: tr.theta.clone(), p: vec![0.0; dim], grad: tr.grad, lp: tr.lp };
        draws.push((
            tr.theta,
            DrawDiag {
                divergent: tr.divergent,
                energy: tr.energy,
                depth: tr.depth as u32,
                step_size: eps,
            },
        ));
    }
    Ok(ChainOutput { draws })
}
