//! Entropy-regularised mean-variance portfolio selection.
//!
//! The investor minimises `E[(X_T − ω)²] − (ω − z)²` plus `θ` times the
//! expected log-density of the actions, where `ω` is the Lagrange multiplier
//! of the mean constraint `E[X_T] = z`. The value function `J^ψ` below is a
//! cost-to-go, while the q-function `q^φ` is written in the reward
//! convention: it is concave in the action and `exp(q^φ/θ)` is the policy
//! density. The learners reconcile the two conventions by working with the
//! temporal difference of the cost, `δ = J(t_{k+1}) − J(t_k) + q^φ Δt`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::exploratory::{simulate_grid_batch, TimeGrid};
use crate::market::{Episode, MarketParams};
use crate::policy::{AffineGaussian, ExpVariance};
use crate::quadrature::simpson;
use crate::rng::Streams;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MvValueParams {
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MvQParams {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
}

impl MvQParams {
    /// Gaussian policy `N(−φ₁(x − ω), θe^{φ₂+φ₃(T−t)})` induced by `q^φ`.
    pub fn policy(&self, omega: f64, theta: f64, horizon: f64) -> AffineGaussian {
        AffineGaussian {
            k: self.phi1,
            w: omega,
            var: ExpVariance {
                scale: theta * self.phi2.exp(),
                rate: self.phi3,
                horizon,
            },
        }
    }
}

/// Horizon, grid and target of the portfolio problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MvProblem {
    pub horizon: f64,
    pub dt: f64,
    pub x0: f64,
    pub z: f64,
    pub theta: f64,
}

impl Default for MvProblem {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            dt: 1.0 / 252.0,
            x0: 1.0,
            z: 1.4,
            theta: 0.1,
        }
    }
}

impl MvProblem {
    pub fn grid(&self) -> Result<TimeGrid> {
        let n = (self.horizon / self.dt).round();
        ensure(
            (n * self.dt - self.horizon).abs() <= 1e-12 * self.horizon.max(1.0),
            || format!("step {} does not divide horizon {}", self.dt, self.horizon),
        )?;
        TimeGrid::new(0.0, self.horizon, n as usize)
    }
}

/// `(x−ω)²e^{−ψ₃(T−t)} + ψ₂(t²−T²) + ψ₁(t−T) − (ω−z)²`.
pub fn value_fn(psi: &MvValueParams, t: f64, x: f64, omega: f64, z: f64, horizon: f64) -> f64 {
    let y = x - omega;
    y * y * (-psi.psi3 * (horizon - t)).exp()
        + psi.psi2 * (t * t - horizon * horizon)
        + psi.psi1 * (t - horizon)
        - (omega - z) * (omega - z)
}

/// `∂_ψ J^ψ`.
pub fn value_grad(psi: &MvValueParams, t: f64, x: f64, omega: f64, horizon: f64) -> [f64; 3] {
    let y = x - omega;
    let tau = horizon - t;
    [
        t - horizon,
        t * t - horizon * horizon,
        -tau * y * y * (-psi.psi3 * tau).exp(),
    ]
}

/// `−(e^{−φ₂−φ₃(T−t)}/2)(a+φ₁(x−ω))² − (θ/2)(log(2πθ)+φ₂+φ₃(T−t))`.
pub fn q_fn(phi: &MvQParams, t: f64, x: f64, a: f64, omega: f64, theta: f64, horizon: f64) -> f64 {
    let tau = horizon - t;
    let d = a + phi.phi1 * (x - omega);
    let e = (-phi.phi2 - phi.phi3 * tau).exp();
    -0.5 * e * d * d - 0.5 * theta * ((2.0 * PI * theta).ln() + phi.phi2 + phi.phi3 * tau)
}

/// `∂_φ q^φ`.
pub fn q_grad(
    phi: &MvQParams,
    t: f64,
    x: f64,
    a: f64,
    omega: f64,
    theta: f64,
    horizon: f64,
) -> [f64; 3] {
    let tau = horizon - t;
    let y = x - omega;
    let d = a + phi.phi1 * y;
    let e = (-phi.phi2 - phi.phi3 * tau).exp();
    let g2 = 0.5 * e * d * d - 0.5 * theta;
    [-e * d * y, g2, tau * g2]
}

/// `∫ exp(q^φ(t, x, a)/θ) da` by Simpson's rule over twelve standard
/// deviations either side of the mean.
pub fn gibbs_mass(phi: &MvQParams, t: f64, x: f64, omega: f64, theta: f64, horizon: f64) -> f64 {
    let pol = phi.policy(omega, theta, horizon);
    let mean = -phi.phi1 * (x - omega);
    let sd = pol.var.at(t).sqrt();
    simpson(mean - 12.0 * sd, mean + 12.0 * sd, 4000, |a| {
        (q_fn(phi, t, x, a, omega, theta, horizon) / theta).exp()
    })
}

/// Closed-form solution of the exploratory problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueSolution {
    pub phi: MvQParams,
    pub psi: MvValueParams,
    pub omega: f64,
    pub total_variance: f64,
    pub excess_drift: f64,
    pub theta: f64,
    pub horizon: f64,
    pub z: f64,
}

pub fn true_solution(
    p: &MarketParams,
    theta: f64,
    horizon: f64,
    z: f64,
    x0: f64,
) -> Result<TrueSolution> {
    p.validate()?;
    let rho = p.sharpe_ratio();
    if rho == 0.0 {
        return Err(Error::ZeroSharpe);
    }
    let var = p.total_variance();
    let phi1 = p.sigma * rho / var;
    let phi3 = rho * rho * p.sigma * p.sigma / var;
    let phi2 = -(2.0 * var).ln();
    let g = (phi3 * horizon).exp();
    let omega = (z * g - x0) / (g - 1.0);
    let psi3 = phi3;
    let psi = MvValueParams {
        psi1: 0.5 * theta * (psi3 * horizon + (PI * theta / var).ln()),
        psi2: -0.25 * theta * psi3,
        psi3,
    };
    Ok(TrueSolution {
        phi: MvQParams { phi1, phi2, phi3 },
        psi,
        omega,
        total_variance: var,
        excess_drift: p.mu - p.rf,
        theta,
        horizon,
        z,
    })
}

impl TrueSolution {
    pub fn policy(&self) -> AffineGaussian {
        self.phi.policy(self.omega, self.theta, self.horizon)
    }

    /// Optimal value `J*(t, x)` at the optimal multiplier.
    pub fn value(&self, t: f64, x: f64) -> f64 {
        value_fn(&self.psi, t, x, self.omega, self.z, self.horizon)
    }

    /// `∂_t J* + aρσ ∂_x J* + ½a²(σ² + σ_J²) ∂²_x J*`, the q-function in the
    /// cost convention; it equals `−q^φ` at the true `φ`.
    pub fn q_cost(&self, t: f64, x: f64, a: f64) -> f64 {
        let (t_end, y) = (self.horizon, x - self.omega);
        let f = (-self.phi.phi3 * (t_end - t)).exp();
        let dt = self.phi.phi3 * y * y * f + 2.0 * self.psi.psi2 * t + self.psi.psi1;
        let dx = 2.0 * y * f;
        let dxx = 2.0 * f;
        dt + a * self.excess_drift * dx + 0.5 * a * a * self.total_variance * dxx
    }
}

/// Robbins-Monro step towards `E[X_T] = z`: `ω ← ω − l·α·(mean(X_T) − z)`.
pub fn omega_update(
    omega: f64,
    terminal_wealths: &[f64],
    z: f64,
    alpha: f64,
    l: f64,
) -> Result<f64> {
    if terminal_wealths.is_empty() {
        return Err(Error::EmptyInput("terminal wealths"));
    }
    let mean = terminal_wealths.iter().sum::<f64>() / terminal_wealths.len() as f64;
    Ok(omega - l * alpha * (mean - z))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MvLearnerState {
    pub psi: MvValueParams,
    pub phi: MvQParams,
    pub omega: f64,
    pub iter: usize,
}

impl MvLearnerState {
    /// Zero `ψ` and `φ`.
    pub fn zero(omega: f64) -> Self {
        Self {
            psi: MvValueParams::default(),
            phi: MvQParams::default(),
            omega,
            iter: 0,
        }
    }

    fn check_finite(&self) -> Result<()> {
        let v = [
            self.psi.psi1,
            self.psi.psi2,
            self.psi.psi3,
            self.phi.phi1,
            self.phi.phi2,
            self.phi.phi3,
            self.omega,
        ];
        if v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite {
                iteration: self.iter,
                snapshot: format!("{self:?}"),
            })
        }
    }
}

/// Learning rates and the decay schedule `l(j) = j^{−decay}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MvRates {
    pub alpha_psi: f64,
    pub alpha_phi: [f64; 3],
    pub alpha_omega: f64,
    pub decay: f64,
}

impl MvRates {
    pub fn offline_bs() -> Self {
        Self {
            alpha_psi: 0.001,
            alpha_phi: [0.12, 1.5, 0.15],
            alpha_omega: 0.05,
            decay: 0.51,
        }
    }

    pub fn offline_mjd() -> Self {
        Self {
            alpha_psi: 0.001,
            alpha_phi: [0.06, 1.3, 0.11],
            alpha_omega: 0.06,
            decay: 0.51,
        }
    }

    pub fn online_bs() -> Self {
        Self {
            alpha_psi: 0.001,
            alpha_phi: [0.12, 2.9, 0.16],
            alpha_omega: 0.005,
            decay: 0.51,
        }
    }

    pub fn online_mjd() -> Self {
        Self {
            alpha_psi: 0.001,
            alpha_phi: [0.027, 1.05, 0.45],
            alpha_omega: 0.01,
            decay: 0.51,
        }
    }

    pub fn schedule(&self, j: usize) -> f64 {
        (j.max(1) as f64).powf(-self.decay)
    }
}

/// One observed transition `(t_k, x_k, a_k, r_k, x_{k+1})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub t: f64,
    pub x: f64,
    pub a: f64,
    pub r: f64,
    pub x_next: f64,
    pub dt: f64,
}

/// Accumulated parameter increments `Δψ`, `Δφ`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Increments {
    pub psi: [f64; 3],
    pub phi: [f64; 3],
}

impl Increments {
    pub fn add(&mut self, o: &Increments) {
        for i in 0..3 {
            self.psi[i] += o.psi[i];
            self.phi[i] += o.phi[i];
        }
    }

    pub fn scale(&mut self, c: f64) {
        for i in 0..3 {
            self.psi[i] *= c;
            self.phi[i] *= c;
        }
    }
}

/// Increment of a single transition: `Δψ = ξδ`, `Δφ = −ζδ` with the cost
/// temporal difference `δ = J^ψ(t_{k+1}) − J^ψ(t_k) − r_kΔt + q^φΔt`.
/// Running rewards `r_k` enter with the reward sign; the portfolio problem
/// has none.
pub fn transition_increments(
    state: &MvLearnerState,
    tr: &Transition,
    problem: &MvProblem,
) -> Increments {
    let (w, z, th, hz) = (state.omega, problem.z, problem.theta, problem.horizon);
    let t1 = tr.t + tr.dt;
    let j0 = value_fn(&state.psi, tr.t, tr.x, w, z, hz);
    let j1 = value_fn(&state.psi, t1, tr.x_next, w, z, hz);
    let q = q_fn(&state.phi, tr.t, tr.x, tr.a, w, th, hz);
    let delta = j1 - j0 - tr.r * tr.dt + q * tr.dt;
    let xi = value_grad(&state.psi, tr.t, tr.x, w, hz);
    let zeta = q_grad(&state.phi, tr.t, tr.x, tr.a, w, th, hz);
    Increments {
        psi: xi.map(|g| g * delta),
        phi: zeta.map(|g| -g * delta),
    }
}

pub fn episode_increments(state: &MvLearnerState, ep: &Episode, problem: &MvProblem) -> Increments {
    let mut inc = Increments::default();
    for k in 0..ep.n_steps() {
        let tr = Transition {
            t: ep.t[k],
            x: ep.x[k],
            a: ep.a[k],
            r: ep.r[k],
            x_next: ep.x[k + 1],
            dt: ep.t[k + 1] - ep.t[k],
        };
        inc.add(&transition_increments(state, &tr, problem));
    }
    inc
}

/// Clamp the variance parameters to keep the exponentials finite.
pub fn clamp_phi(phi: &mut MvQParams) {
    phi.phi2 = phi.phi2.clamp(-20.0, 20.0);
    phi.phi3 = phi.phi3.clamp(-5.0, 5.0);
}

/// Apply `ψ ← ψ + lα_ψΔψ`, `φ ← φ + lα_φ∘Δφ`.
pub fn apply_increments(
    state: &MvLearnerState,
    inc: &Increments,
    rates: &MvRates,
    l: f64,
) -> Result<MvLearnerState> {
    let mut next = *state;
    let d = inc;
    next.psi.psi1 += l * rates.alpha_psi * d.psi[0];
    next.psi.psi2 += l * rates.alpha_psi * d.psi[1];
    next.psi.psi3 += l * rates.alpha_psi * d.psi[2];
    next.phi.phi1 += l * rates.alpha_phi[0] * d.phi[0];
    next.phi.phi2 += l * rates.alpha_phi[1] * d.phi[1];
    next.phi.phi3 += l * rates.alpha_phi[2] * d.phi[2];
    clamp_phi(&mut next.phi);
    next.check_finite()?;
    Ok(next)
}

/// One offline iteration on a batch of episodes simulated under the same
/// policy. Episode `i` of the batch contributes its increments with weight
/// `l(first_episode + i)`, so the schedule runs over the episode count as in
/// a sequential per-episode sweep.
pub fn offline_update(
    state: &MvLearnerState,
    episodes: &[Episode],
    problem: &MvProblem,
    rates: &MvRates,
    first_episode: usize,
) -> Result<MvLearnerState> {
    if episodes.is_empty() {
        return Err(Error::EmptyInput("episodes"));
    }
    let per: Vec<Increments> = episodes
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let mut inc = episode_increments(state, e, problem);
            inc.scale(rates.schedule(first_episode + i));
            inc
        })
        .collect();
    let mut inc = Increments::default();
    for p in &per {
        inc.add(p);
    }
    let mut next = apply_increments(state, &inc, rates, 1.0)?;
    next.iter = state.iter + 1;
    Ok(next)
}

/// Online accumulation: increments of single transitions are summed and
/// applied once the batch is full.
#[derive(Clone, Debug, Default)]
pub struct OnlineAccumulator {
    pub pending: Increments,
    pub n: usize,
}

impl OnlineAccumulator {
    pub fn observe(&mut self, state: &MvLearnerState, tr: &Transition, problem: &MvProblem) {
        self.pending.add(&transition_increments(state, tr, problem));
        self.n += 1;
    }

    pub fn flush(
        &mut self,
        state: &MvLearnerState,
        rates: &MvRates,
        l: f64,
    ) -> Result<MvLearnerState> {
        let next = apply_increments(state, &self.pending, rates, l)?;
        *self = Self::default();
        Ok(next)
    }
}

/// Single-transition online update (batch of one).
pub fn online_update(
    state: &MvLearnerState,
    tr: &Transition,
    problem: &MvProblem,
    rates: &MvRates,
    l: f64,
) -> Result<MvLearnerState> {
    apply_increments(state, &transition_increments(state, tr, problem), rates, l)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfflineConfig {
    pub problem: MvProblem,
    pub rates: MvRates,
    pub iterations: usize,
    pub episodes_per_iter: usize,
    pub omega_every: usize,
    pub omega_init: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    pub problem: MvProblem,
    pub rates: MvRates,
    /// Number of episodes of length `T`.
    pub iterations: usize,
    pub batch_steps: usize,
    pub omega_every_steps: usize,
    pub omega_init: f64,
}

/// One row of the learning curve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MvHistoryRow {
    pub iter: usize,
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
    pub omega: f64,
    /// Mean terminal wealth of the iteration's episodes.
    pub mean_terminal_wealth: f64,
}

impl MvHistoryRow {
    fn new(s: &MvLearnerState, mean_terminal_wealth: f64) -> Self {
        Self {
            iter: s.iter,
            psi1: s.psi.psi1,
            psi2: s.psi.psi2,
            psi3: s.psi.psi3,
            phi1: s.phi.phi1,
            phi2: s.phi.phi2,
            phi3: s.phi.phi3,
            omega: s.omega,
            mean_terminal_wealth,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub final_state: MvLearnerState,
    pub history: Vec<MvHistoryRow>,
}

/// Offline-episodic training. Every iteration simulates a fresh batch under
/// the current policy; `ω` moves every `omega_every` iterations using the
/// terminal wealths gathered since its last move.
pub fn train_offline(
    cfg: &OfflineConfig,
    p: &MarketParams,
    streams: &Streams,
) -> Result<TrainReport> {
    let grid = cfg.problem.grid()?;
    let mut state = MvLearnerState::zero(cfg.omega_init);
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut buffer = Vec::new();
    for j in 1..=cfg.iterations {
        let pol = state
            .phi
            .policy(state.omega, cfg.problem.theta, cfg.problem.horizon);
        let eps = simulate_grid_batch(
            &pol,
            &grid,
            cfg.problem.x0,
            p,
            &streams.child(j as u64),
            cfg.episodes_per_iter,
        )?;
        state = offline_update(
            &state,
            &eps,
            &cfg.problem,
            &cfg.rates,
            (j - 1) * cfg.episodes_per_iter + 1,
        )?;
        let terminal: Vec<f64> = eps.iter().map(Episode::terminal_wealth).collect();
        let mean_terminal = terminal.iter().sum::<f64>() / terminal.len() as f64;
        buffer.extend(terminal);
        if j % cfg.omega_every == 0 {
            state.omega = omega_step(state.omega, &buffer, &cfg.problem, cfg.rates.alpha_omega)?;
            buffer.clear();
        }
        history.push(MvHistoryRow::new(&state, mean_terminal));
    }
    Ok(TrainReport {
        final_state: state,
        history,
    })
}

/// Multiplier step used by the learners: the mean terminal wealth of the
/// buffer against the target, at a constant rate.
fn omega_step(omega: f64, buffer: &[f64], problem: &MvProblem, alpha: f64) -> Result<f64> {
    let next = omega_update(omega, buffer, problem.z, alpha, 1.0)?;
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFinite {
            iteration: 0,
            snapshot: format!("omega={omega}"),
        })
    }
}

/// Online-incremental training over consecutive episodes of length `T`.
/// Parameter increments are applied every `batch_steps` observed steps and
/// the multiplier moves every `omega_every_steps` steps, in both cases
/// counting across episode boundaries. The schedule index is the episode.
pub fn train_online(
    cfg: &OnlineConfig,
    p: &MarketParams,
    streams: &Streams,
) -> Result<TrainReport> {
    use crate::exploratory::open_uniform;
    use crate::market::environment_step;
    use crate::policy::FeedbackPolicy;
    use crate::rng::tag;

    let grid = cfg.problem.grid()?;
    let dt = grid.mesh();
    let mut state = MvLearnerState::zero(cfg.omega_init);
    let mut acc = OnlineAccumulator::default();
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut buffer: Vec<f64> = Vec::new();
    let mut steps = 0usize;
    let mut since_omega = 0usize;
    for j in 1..=cfg.iterations {
        let l = cfg.rates.schedule(j);
        let mut env = streams.stream(&[tag::ENVIRONMENT, j as u64]);
        let mut act = streams.stream(&[tag::ACTIONS, j as u64]);
        let mut x = cfg.problem.x0;
        for k in 0..grid.n_steps {
            let t = grid.node(k);
            let pol = state
                .phi
                .policy(state.omega, cfg.problem.theta, cfg.problem.horizon);
            let a = pol.sample(t, 1.0, x, open_uniform(&mut act))?;
            let o = environment_step(t, x, 1.0, a, dt, p, &mut env);
            let tr = Transition {
                t,
                x,
                a,
                r: 0.0,
                x_next: o.new_wealth,
                dt,
            };
            acc.observe(&state, &tr, &cfg.problem);
            x = o.new_wealth;
            steps += 1;
            since_omega += 1;
            if acc.n == cfg.batch_steps {
                let iter = state.iter;
                state = acc.flush(&state, &cfg.rates, l)?;
                state.iter = iter;
            }
            if k + 1 == grid.n_steps {
                buffer.push(x);
            }
            if since_omega == cfg.omega_every_steps && !buffer.is_empty() {
                state.omega =
                    omega_step(state.omega, &buffer, &cfg.problem, cfg.rates.alpha_omega)?;
                buffer.clear();
                since_omega = 0;
            }
        }
        state.iter = j;
        history.push(MvHistoryRow::new(&state, x));
    }
    let _ = steps;
    Ok(TrainReport {
        final_state: state,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_matches_published_values() {
        let prob = MvProblem::default();
        let bs = true_solution(&MarketParams::sp500_bs(), 0.1, 1.0, prob.z, prob.x0).unwrap();
        assert!((bs.phi.phi1 - 1.7869).abs() < 1e-3);
        assert!((bs.phi.phi2 - 2.5610).abs() < 1e-3);
        assert!((bs.phi.phi3 - 0.1233).abs() < 1e-3);
        assert!((bs.omega - 4.4481).abs() < 1e-3);
    }

    /// The optimal value solves the exploratory HJB equation: its q-function
    /// (cost convention) is the negative of the closed-form `q^φ*`.
    #[test]
    fn optimal_value_matches_optimal_q() {
        let ts = true_solution(&MarketParams::sp500_mjd(), 0.1, 1.0, 1.4, 1.0).unwrap();
        for (t, x, a) in [(0.0, 1.0, 0.3), (0.4, 2.2, -1.0), (0.9, 5.5, 2.0)] {
            let q = q_fn(&ts.phi, t, x, a, ts.omega, ts.theta, ts.horizon);
            assert!((ts.q_cost(t, x, a) + q).abs() < 1e-12, "t={t} x={x} a={a}");
        }
    }

    /// Direct evaluation of the explicit optimal value at `t = 0`:
    /// `y²e^{−ψ₃T} + θψ₃T²/4 − (θ/2)(ψ₃T + ln(πθ/Σ))T − (ω − z)²`.
    #[test]
    fn optimal_value_at_origin() {
        let p = MarketParams::sp500_bs();
        let ts = true_solution(&p, 0.1, 1.0, 1.4, 1.0).unwrap();
        let (r, v, th) = (ts.phi.phi3, p.total_variance(), 0.1);
        let y = 1.0 - ts.omega;
        let want = y * y * (-r).exp() + th * r / 4.0
            - th / 2.0 * (r + (PI * th / v).ln())
            - (ts.omega - 1.4f64).powi(2);
        assert!((ts.value(0.0, 1.0) - want).abs() < 1e-12);
    }

    #[test]
    fn terminal_condition_is_built_in() {
        let psi = MvValueParams {
            psi1: 0.3,
            psi2: -1.0,
            psi3: 2.0,
        };
        let v = value_fn(&psi, 1.0, 2.0, 3.0, 1.4, 1.0);
        assert!((v - (1.0 - 1.6 * 1.6)).abs() < 1e-14);
    }

    #[test]
    fn zero_sharpe_is_degenerate() {
        let p = MarketParams::black_scholes(0.0, 0.2);
        assert!(matches!(
            true_solution(&p, 0.1, 1.0, 1.4, 1.0),
            Err(Error::ZeroSharpe)
        ));
    }

    #[test]
    fn omega_rule_arithmetic() {
        assert_eq!(omega_update(2.0, &[1.4, 1.4], 1.4, 0.05, 1.0).unwrap(), 2.0);
        let w = omega_update(2.0, &[2.4], 1.4, 0.05, 1.0).unwrap();
        assert!((w - 1.95).abs() < 1e-15);
    }
}
