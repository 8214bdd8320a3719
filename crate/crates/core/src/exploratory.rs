//! Grid-sampled and exploratory wealth processes, Monte Carlo value
//! estimates, the mesh-convergence experiment and martingale statistics.
//!
//! The state is discounted wealth under the jump-diffusion market of
//! [`crate::market`]. A grid-sampled path draws an action at every grid node
//! and holds it until the next node; an exploratory path integrates the
//! policy-averaged dynamics, with a fresh action for every jump.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::market::{environment_step, sample_step, Episode, MarketParams};
use crate::policy::{AffineGaussian, FeedbackPolicy};
use crate::rng::{tag, StreamRng, Streams};
use crate::stats::{linear_fit, mean_se, pairwise_sum, MeanSe};

/// Uniform time grid on `[t0, horizon]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, horizon: f64, n_steps: usize) -> Result<Self> {
        ensure(horizon > t0, || {
            format!("grid end {horizon} must exceed start {t0}")
        })?;
        ensure(n_steps > 0, || "grid needs at least one step".into())?;
        Ok(Self {
            t0,
            horizon,
            n_steps,
        })
    }

    pub fn mesh(&self) -> f64 {
        (self.horizon - self.t0) / self.n_steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            self.t0 + k as f64 * self.mesh()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n_paths: usize,
}

impl From<MeanSe> for ValueEstimate {
    fn from(m: MeanSe) -> Self {
        Self {
            mean: m.mean,
            std_err: m.std_err,
            n_paths: m.n,
        }
    }
}

/// Uniform on the open interval `(0, 1)`.
pub fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// Grid sample state process. Actions use `action_rng`, market noise uses
/// `env_rng`, so two policies run on the same pair of streams see the same
/// market. The price starts at 1.
pub fn simulate_grid_sample<P, R1, R2>(
    pol: &P,
    grid: &TimeGrid,
    x0: f64,
    p: &MarketParams,
    env_rng: &mut R1,
    action_rng: &mut R2,
) -> Result<Episode>
where
    P: FeedbackPolicy + ?Sized,
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    let dt = grid.mesh();
    let mut ep = Episode::with_capacity(grid.n_steps);
    let (mut s, mut x) = (1.0, x0);
    ep.t.push(grid.t0);
    ep.s.push(s);
    ep.x.push(x);
    for k in 0..grid.n_steps {
        let t = grid.node(k);
        let a = pol.sample(t, s, x, open_uniform(action_rng))?;
        let o = environment_step(t, x, s, a, dt, p, env_rng);
        s *= o.gross_return;
        x = o.new_wealth;
        ep.a.push(a);
        ep.r.push(0.0);
        ep.t.push(grid.node(k + 1));
        ep.s.push(s);
        ep.x.push(x);
    }
    Ok(ep)
}

/// `n` grid-sampled episodes on independent per-episode streams.
pub fn simulate_grid_batch<P: FeedbackPolicy + Sync + ?Sized>(
    pol: &P,
    grid: &TimeGrid,
    x0: f64,
    p: &MarketParams,
    streams: &Streams,
    n: usize,
) -> Result<Vec<Episode>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut env = streams.stream(&[tag::ENVIRONMENT, i as u64]);
            let mut act = streams.stream(&[tag::ACTIONS, i as u64]);
            simulate_grid_sample(pol, grid, x0, p, &mut env, &mut act)
        })
        .collect()
}

/// Euler scheme for the exploratory wealth SDE on steps of length `dt` up to
/// `horizon`; jumps are sampled exactly within each step and each jump mark
/// draws its own action from `jump_rng`. The recorded actions are the policy
/// means, since no single action is applied between jumps.
pub fn simulate_exploratory<P, R1, R2>(
    pol: &P,
    dt: f64,
    horizon: f64,
    x0: f64,
    p: &MarketParams,
    env_rng: &mut R1,
    jump_rng: &mut R2,
) -> Result<Episode>
where
    P: FeedbackPolicy + ?Sized,
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    ensure(dt > 0.0, || format!("step must be positive, got {dt}"))?;
    let n = (horizon / dt).round().max(1.0) as usize;
    let dt = horizon / n as f64;
    let rs = p.sharpe_ratio() * p.sigma;
    let comp = p.lam * p.kappa();
    let jumps = (p.lam > 0.0).then(|| Poisson::new(p.lam * dt).expect("positive Poisson mean"));

    let mut ep = Episode::with_capacity(n);
    let (mut s, mut x) = (1.0_f64, x0);
    ep.t.push(0.0);
    ep.s.push(s);
    ep.x.push(x);
    for k in 0..n {
        let t = k as f64 * dt;
        let mean = pol.mean(t, s, x);
        let var = pol.variance(t);
        let z: f64 = StandardNormal.sample(env_rng);
        let dw = z * dt.sqrt();
        let mut dx = rs * mean * dt + p.sigma * (mean * mean + var).sqrt() * dw - mean * comp * dt;
        let mut jump_sum = 0.0;
        if let Some(pois) = &jumps {
            let nj = pois.sample(env_rng) as usize;
            for _ in 0..nj {
                let e: f64 = StandardNormal.sample(env_rng);
                let mark = p.m + p.delta * e;
                jump_sum += mark;
                let a = pol.sample(t, s, x, open_uniform(jump_rng))?;
                dx += a * mark.exp_m1();
            }
        }
        x += dx;
        s *= (p.log_drift() * dt + p.sigma * dw + jump_sum).exp();
        ep.a.push(mean);
        ep.r.push(0.0);
        ep.t.push(if k + 1 == n {
            horizon
        } else {
            (k + 1) as f64 * dt
        });
        ep.s.push(s);
        ep.x.push(x);
    }
    Ok(ep)
}

/// Monte Carlo estimate of the entropy-regularised cost
/// `Σ_k −θ·entropy(t_k)·e^{−βt_k}Δt + e^{−βT}·terminal(X_T)`.
pub fn estimate_value<P: FeedbackPolicy + ?Sized>(
    episodes: &[Episode],
    theta: f64,
    beta: f64,
    terminal_fn: impl Fn(f64) -> f64,
    pol: &P,
) -> Result<ValueEstimate> {
    if episodes.is_empty() {
        return Err(Error::EmptyInput("episodes"));
    }
    let first = &episodes[0].t;
    let mut running = 0.0;
    for k in 0..first.len() - 1 {
        if theta == 0.0 {
            break;
        }
        let (t, dt) = (first[k], first[k + 1] - first[k]);
        running -= theta * pol.entropy(t) * (-beta * t).exp() * dt;
    }
    let horizon = *first.last().expect("nonempty grid");
    let disc = (-beta * horizon).exp();
    let vals: Vec<f64> = episodes
        .iter()
        .map(|e| running + disc * terminal_fn(e.terminal_wealth()))
        .collect();
    Ok(mean_se(&vals).into())
}

/// Settings for the mesh-convergence experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub horizon: f64,
    pub x0: f64,
    pub z: f64,
    pub theta: f64,
    /// Step counts of the compared grids; each must divide the largest.
    pub n_steps: Vec<usize>,
    pub n_paths: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshGap {
    pub n_steps: usize,
    pub mesh: f64,
    pub value: ValueEstimate,
    pub gap: f64,
    pub gap_se: f64,
    pub inconclusive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub reference: ValueEstimate,
    pub rows: Vec<MeshGap>,
    pub slope: f64,
    pub intercept: f64,
    pub inconclusive: bool,
}

/// Compares grid-sampled values `J^{π,S}(0, x0)` with a reference value of
/// the exploratory process across meshes.
///
/// The terminal cost is `(x − w)² − (w − z)²` with `w` the policy anchor and
/// the running cost is `θ log π(a | t, X_t)` of the held action. All grids
/// share one fine noise tape per path. Each path contributes the unbiased
/// estimator obtained by replacing, step by step, the realised increment of
/// `f(t)(X_t − w)²` and of the running cost with their conditional
/// expectations given the current state and action, where `f` solves the
/// mean-feedback second-moment equation; this removes most of the market
/// noise without changing any expectation.
pub fn convergence_experiment(
    pol: &AffineGaussian,
    cfg: &ConvergenceConfig,
    p: &MarketParams,
    reference: ValueEstimate,
    streams: &Streams,
) -> Result<ConvergenceReport> {
    ensure(cfg.n_steps.len() >= 4, || {
        "need at least four meshes".into()
    })?;
    let fine = *cfg.n_steps.iter().max().expect("nonempty");
    ensure(cfg.n_steps.iter().all(|&n| n > 0 && fine % n == 0), || {
        format!("every step count must divide {fine}")
    })?;
    ensure(cfg.n_paths >= 2, || "need at least two paths".into())?;
    let dt_fine = cfg.horizon / fine as f64;

    const BLOCK: usize = 1024;
    let n_blocks = cfg.n_paths.div_ceil(BLOCK);
    let per_block: Vec<Vec<Vec<f64>>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut env = streams.stream(&[tag::ENVIRONMENT, b as u64]);
            let mut act = streams.stream(&[tag::ACTIONS, b as u64]);
            let n = BLOCK.min(cfg.n_paths - b * BLOCK);
            let mut out = vec![Vec::with_capacity(n); cfg.n_steps.len()];
            let mut log_r = vec![0.0; fine];
            let mut normals = vec![0.0; fine];
            for _ in 0..n {
                for j in 0..fine {
                    log_r[j] = sample_step(p, dt_fine, &mut env, |_| {}).log_return;
                    normals[j] = StandardNormal.sample(&mut act);
                }
                for (i, &ns) in cfg.n_steps.iter().enumerate() {
                    out[i].push(grid_path_value(
                        pol,
                        cfg,
                        p,
                        ns,
                        fine / ns,
                        &log_r,
                        &normals,
                    ));
                }
            }
            out
        })
        .collect();

    let mut rows = Vec::with_capacity(cfg.n_steps.len());
    for (i, &ns) in cfg.n_steps.iter().enumerate() {
        let vals: Vec<f64> = per_block
            .iter()
            .flat_map(|b| b[i].iter().copied())
            .collect();
        let value: ValueEstimate = mean_se(&vals).into();
        let gap = value.mean - reference.mean;
        let gap_se = value.std_err.hypot(reference.std_err);
        rows.push(MeshGap {
            n_steps: ns,
            mesh: cfg.horizon / ns as f64,
            value,
            gap,
            gap_se,
            inconclusive: gap_se > 0.3 * gap.abs(),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.mesh.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.gap.abs().ln()).collect();
    let (slope, intercept) = linear_fit(&xs, &ys);
    let inconclusive = rows.iter().any(|r| r.inconclusive);
    Ok(ConvergenceReport {
        reference,
        rows,
        slope,
        intercept,
        inconclusive,
    })
}

/// `∫_0^h e^{γs} ds`.
fn exp_integral(gamma: f64, h: f64) -> f64 {
    if gamma.abs() * h < 1e-12 {
        h
    } else {
        (gamma * h).exp_m1() / gamma
    }
}

fn grid_path_value(
    pol: &AffineGaussian,
    cfg: &ConvergenceConfig,
    p: &MarketParams,
    n_steps: usize,
    stride: usize,
    log_r: &[f64],
    normals: &[f64],
) -> f64 {
    let h = cfg.horizon / n_steps as f64;
    let (k, w, theta) = (pol.k, pol.w, cfg.theta);
    let alpha = p.mu - p.rf;
    let beta = 2.0 * alpha + p.total_variance();
    let (m1, m2) = p.gross_return_moments(h);
    let mu_r = m1 - 1.0;
    let s_r = m2 - 2.0 * m1 + 1.0;
    // f(t) = exp(−c(T − t)) makes f·E[(X − w)²] constant under the mean feedback.
    let c = 2.0 * k * alpha - k * k * p.total_variance();
    let f = |t: f64| (-c * (cfg.horizon - t)).exp();
    let r = pol.var.rate;
    let (i0, i1, i2) = (
        exp_integral(r, h),
        exp_integral(r + alpha, h),
        exp_integral(r + beta, h),
    );

    let mut y = cfg.x0 - w;
    let mut terms = Vec::with_capacity(2 * n_steps + 1);
    terms.push(f(0.0) * y * y - (w - cfg.z) * (w - cfg.z));
    for step in 0..n_steps {
        let t = step as f64 * h;
        let v = pol.var.at(t);
        let a = -k * y + v.sqrt() * normals[step * stride];
        let cdev = a + k * y;
        let next_sq = y * y + 2.0 * y * a * mu_r + a * a * s_r;
        terms.push(f(t + h) * next_sq - f(t) * y * y);
        let quad = cdev * cdev * i0
            + 2.0 * cdev * k * a * (i1 - i0)
            + k * k * a * a * (i2 - 2.0 * i1 + i0);
        let log_norm = 0.5 * (2.0 * std::f64::consts::PI * v).ln() * h - 0.25 * r * h * h;
        terms.push(-theta * (quad / (2.0 * v) + log_norm));
        let lr: f64 = log_r[step * stride..(step + 1) * stride].iter().sum();
        y += a * lr.exp_m1();
    }
    pairwise_sum(&terms)
}

/// Reference value of the exploratory process by Monte Carlo, using the
/// running cost `−θ·entropy(t)` integrated on the simulation grid.
pub fn exploratory_reference<P: FeedbackPolicy + Sync + ?Sized>(
    pol: &P,
    dt: f64,
    cfg: &ConvergenceConfig,
    omega: f64,
    p: &MarketParams,
    n_paths: usize,
    streams: &Streams,
) -> Result<ValueEstimate> {
    let eps: Vec<Episode> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut env: StreamRng = streams.stream(&[tag::ENVIRONMENT, i as u64]);
            let mut jr = streams.stream(&[tag::JUMP_ACTIONS, i as u64]);
            simulate_exploratory(pol, dt, cfg.horizon, cfg.x0, p, &mut env, &mut jr)
        })
        .collect::<Result<_>>()?;
    let n = (cfg.horizon / dt).round() as usize;
    let h = cfg.horizon / n as f64;
    // Midpoint entropy integral on the simulation grid.
    let running: f64 = (0..n)
        .map(|k| -cfg.theta * pol.entropy((k as f64 + 0.5) * h) * h)
        .sum();
    let vals: Vec<f64> = eps
        .iter()
        .map(|e| {
            let y = e.terminal_wealth() - omega;
            running + y * y - (omega - cfg.z) * (omega - cfg.z)
        })
        .collect();
    Ok(mean_se(&vals).into())
}

/// Test function `ζ(t, x, a)` for martingale statistics.
pub type TestFn<'a> = &'a (dyn Fn(f64, f64, f64) -> f64 + Sync);

/// For each test function, the per-path sum `Σ_k ζ_k δ_k` averaged over
/// paths, with
/// `δ_k = Ĵ(t_{k+1}, x_{k+1}) − Ĵ(t_k, x_k) + r_kΔt − q̂(t_k, x_k, a_k)Δt − βĴ(t_k, x_k)Δt`.
pub fn martingale_statistic(
    episodes: &[Episode],
    j_hat: impl Fn(f64, f64) -> f64 + Sync,
    q_hat: impl Fn(f64, f64, f64) -> f64 + Sync,
    beta: f64,
    test_fns: &[TestFn<'_>],
) -> Result<Vec<MeanSe>> {
    if episodes.is_empty() {
        return Err(Error::EmptyInput("episodes"));
    }
    let per_path: Vec<Vec<f64>> = episodes
        .par_iter()
        .map(|e| {
            let mut sums = vec![0.0; test_fns.len()];
            for k in 0..e.n_steps() {
                let (t, x, a) = (e.t[k], e.x[k], e.a[k]);
                let dt = e.t[k + 1] - t;
                let j0 = j_hat(t, x);
                let delta = j_hat(e.t[k + 1], e.x[k + 1]) - j0 + e.r[k] * dt
                    - q_hat(t, x, a) * dt
                    - beta * j0 * dt;
                for (s, f) in sums.iter_mut().zip(test_fns) {
                    *s += f(t, x, a) * delta;
                }
            }
            sums
        })
        .collect();
    Ok((0..test_fns.len())
        .map(|i| {
            let v: Vec<f64> = per_path.iter().map(|s| s[i]).collect();
            mean_se(&v)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ExpVariance;

    fn zero_policy() -> AffineGaussian {
        AffineGaussian {
            k: 0.0,
            w: 0.0,
            var: ExpVariance::constant(0.0),
        }
    }

    #[test]
    fn zero_exposure_keeps_initial_wealth() {
        let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let eps = simulate_grid_batch(
            &zero_policy(),
            &grid,
            1.0,
            &MarketParams::sp500_mjd(),
            &Streams::new(1),
            50,
        )
        .unwrap();
        assert!(eps.iter().all(|e| e.x.iter().all(|&x| x == 1.0)));
    }

    #[test]
    fn deterministic_value_has_zero_error() {
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let pol = zero_policy();
        let eps = simulate_grid_batch(
            &pol,
            &grid,
            1.0,
            &MarketParams::sp500_bs(),
            &Streams::new(2),
            8,
        )
        .unwrap();
        let v = estimate_value(&eps, 0.0, 0.0, |x| (x - 3.0).powi(2), &pol).unwrap();
        assert_eq!(v.mean, 4.0);
        assert_eq!(v.std_err, 0.0);
    }

    #[test]
    fn constant_statistic_vanishes() {
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let pol = AffineGaussian {
            k: 1.0,
            w: 2.0,
            var: ExpVariance::constant(0.1),
        };
        let eps = simulate_grid_batch(
            &pol,
            &grid,
            1.0,
            &MarketParams::sp500_bs(),
            &Streams::new(3),
            8,
        )
        .unwrap();
        let one = |_: f64, _: f64, _: f64| 1.0;
        let st = martingale_statistic(&eps, |_, _| 5.0, |_, _, _| 0.0, 0.0, &[&one]).unwrap();
        assert_eq!(st[0].mean, 0.0);
    }

    #[test]
    fn empty_batches_are_rejected() {
        assert!(estimate_value(&[], 0.1, 0.0, |x| x, &zero_policy()).is_err());
    }
}
