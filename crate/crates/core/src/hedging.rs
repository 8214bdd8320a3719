//! Entropy-regularised mean-variance hedging of a short European option.
//!
//! The agent's parameters `φ₁..φ₅` stand for its view of `(μ, σ, λ, m, δ)`;
//! `φ₆` (Sharpe composite) and `φ₇` (jump volatility) are derived from them.
//! Prices and deltas come from the cosine expansion under the agent's
//! measure-changed dynamics, and jump integrals use a Gauss-Hermite rule.
//! The critic is `(x − ĥ)²f + g_e(t, S) − θ-term`, with `g_e` learned by a
//! Gaussian process at every grid time.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cos::{CosConfig, CosPricer, CosSlice, Payoff, QCharParams};
use crate::error::{ensure, Error, Result};
use crate::exploratory::{open_uniform, TimeGrid};
use crate::gp::{GpHyper, GpModel};
use crate::market::{environment_step, MarketParams};
use crate::policy::{gaussian_log_density, normal_quantile};
use crate::quadrature::GaussHermite;
use crate::rng::{tag, Streams};
use crate::stats::{mean_se, MeanSe};

/// `φ₆ = (φ₁ − r_f)/φ₂` and `φ₇ = √(φ₃(e^{2φ₄+2φ₅²} − 2e^{φ₄+φ₅²/2} + 1))`.
pub fn dependent_params(phi: &[f64; 5], rf: f64) -> Result<(f64, f64)> {
    let [p1, p2, p3, p4, p5] = *phi;
    ensure(p2 > 0.0, || format!("phi2 must be positive, got {p2}"))?;
    let phi6 = (p1 - rf) / p2;
    let radicand = p3 * crate::market::jump_variance_rate(1.0, p4, p5);
    assert!(
        radicand >= 0.0,
        "jump variance rate is a sum of squares; got {radicand}"
    );
    Ok((phi6, radicand.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HedgeParams {
    pub phi: [f64; 5],
    pub phi6: f64,
    pub phi7: f64,
    pub rf: f64,
}

impl HedgeParams {
    pub fn new(phi: [f64; 5], rf: f64) -> Result<Self> {
        ensure(phi.iter().all(|v| v.is_finite()), || {
            format!("non-finite hedge parameters {phi:?}")
        })?;
        ensure(phi[2] >= 0.0 && phi[4] >= 0.0, || {
            format!("phi3 and phi5 must be nonnegative, got {phi:?}")
        })?;
        let (phi6, phi7) = dependent_params(&phi, rf)?;
        Ok(Self {
            phi,
            phi6,
            phi7,
            rf,
        })
    }

    pub fn from_market(p: &MarketParams) -> Result<Self> {
        Self::new([p.mu, p.sigma, p.lam, p.m, p.delta], p.rf)
    }

    /// Copy with coordinate `i` (0-based) replaced.
    pub fn with(&self, i: usize, v: f64) -> Result<Self> {
        let mut phi = self.phi;
        phi[i] = v;
        Self::new(phi, self.rf)
    }

    /// `φ₂² + φ₇²`.
    pub fn total_variance(&self) -> f64 {
        self.phi[1] * self.phi[1] + self.phi7 * self.phi7
    }

    /// `φ₂²φ₆²/(φ₂² + φ₇²)`, the agent's `ρ²σ²/(σ² + σ_J²)`.
    pub fn decay_rate(&self) -> f64 {
        let s = self.phi[1] * self.phi6;
        s * s / self.total_variance()
    }

    /// `f^φ(t) = exp(−decay_rate·(T − t))`.
    pub fn f(&self, t: f64, horizon: f64) -> f64 {
        (-self.decay_rate() * (horizon - t)).exp()
    }

    pub fn q_char_params(&self) -> Result<QCharParams> {
        QCharParams::new(
            self.phi[0] - self.rf,
            self.phi[1],
            self.phi[2],
            self.phi[3],
            self.phi[4],
        )
    }

    pub fn as_market(&self) -> MarketParams {
        MarketParams {
            mu: self.phi[0],
            sigma: self.phi[1],
            lam: self.phi[2],
            m: self.phi[3],
            delta: self.phi[4],
            rf: self.rf,
        }
    }
}

/// Gauss-Hermite rule for integrals against the Gaussian jump measure.
#[derive(Clone, Debug, PartialEq)]
pub struct GhRule {
    rule: GaussHermite,
}

impl GhRule {
    pub fn new(n: usize) -> Self {
        Self {
            rule: GaussHermite::new(n),
        }
    }

    pub fn len(&self) -> usize {
        self.rule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule.is_empty()
    }

    /// Jump sizes `z_q = m + √2·δ·u_q` and weights `w_q/√π`.
    pub fn nodes(&self, m: f64, delta: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let sd = std::f64::consts::SQRT_2 * delta;
        let norm = 1.0 / PI.sqrt();
        self.rule
            .nodes
            .iter()
            .zip(&self.rule.weights)
            .map(move |(u, w)| (m + sd * u, w * norm))
    }
}

/// `∫f(z)ν(dz) ≈ λ/√π Σ w_q f(m + √2δu_q)` for `ν = λ·N(m, δ²)`.
pub fn gh_integral(f: impl Fn(f64) -> f64, lam: f64, m: f64, delta: f64, rule: &GhRule) -> f64 {
    lam * rule.nodes(m, delta).map(|(z, w)| w * f(z)).sum::<f64>()
}

/// Option and problem description shared by training and evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HedgeSetup {
    pub payoff: Payoff,
    /// Discounted strike.
    pub strike: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub theta: f64,
    pub s0_range: (f64, f64),
    /// Strike in index points used to normalise hedging errors.
    pub k_points: f64,
    pub gh_nodes: usize,
    pub cos_terms: usize,
    pub cos_width: f64,
}

impl Default for HedgeSetup {
    /// Four-month put struck at 100 with daily rebalancing.
    fn default() -> Self {
        Self {
            payoff: Payoff::Put,
            strike: 100.0,
            horizon: 1.0 / 3.0,
            n_steps: 84,
            theta: 0.1,
            s0_range: (70.0, 130.0),
            k_points: 1.0,
            gh_nodes: 20,
            cos_terms: 256,
            cos_width: 10.0,
        }
    }
}

impl HedgeSetup {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(0.0, self.horizon, self.n_steps)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.strike > 0.0 && self.horizon > 0.0 && self.n_steps > 0,
            || "strike, horizon and step count must be positive".into(),
        )?;
        ensure(self.theta >= 0.0, || {
            format!("temperature must be nonnegative, got {}", self.theta)
        })?;
        ensure(
            self.s0_range.0 > 0.0 && self.s0_range.1 >= self.s0_range.0,
            || format!("invalid initial price range {:?}", self.s0_range),
        )?;
        ensure(self.k_points > 0.0 && self.gh_nodes > 0, || {
            "k_points and gh_nodes must be positive".into()
        })
    }

    /// Log-moneyness band the pricer must cover: initial prices, plus room
    /// for the path and for Gauss-Hermite jump nodes.
    fn band(&self) -> (f64, f64) {
        (
            (self.s0_range.0 / self.strike).ln() - 1.5,
            (self.s0_range.1 / self.strike).ln() + 1.5,
        )
    }
}

/// Price, delta and the two jump sums at one `(t_k, S)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalTerms {
    pub h: f64,
    pub dh: f64,
    /// `∫(e^z − 1)(ĥ(Se^z) − ĥ(S))ν(dz)`.
    pub jump_cross: f64,
    /// `∫(ĥ(Se^z) − ĥ(S))²ν(dz)`.
    pub jump_square: f64,
}

/// The agent's pricing model for one parameter value: cosine slices at all
/// grid times before expiry.
#[derive(Clone, Debug)]
pub struct HedgeModel {
    pub hp: HedgeParams,
    setup: HedgeSetup,
    grid: TimeGrid,
    configs: Vec<CosConfig>,
    slices: Vec<CosSlice>,
    rule: GhRule,
}

impl HedgeModel {
    pub fn new(hp: HedgeParams, setup: &HedgeSetup) -> Result<Self> {
        setup.validate()?;
        let grid = setup.grid()?;
        let pricer = CosPricer {
            qp: hp.q_char_params()?,
            payoff: setup.payoff,
            strike: setup.strike,
            n_terms: setup.cos_terms,
            width_multiplier: setup.cos_width,
            band: setup.band(),
        };
        let configs = (0..grid.n_steps)
            .map(|k| pricer.config(setup.horizon - grid.node(k)))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(hp, setup.clone(), grid, configs)
    }

    /// Model at `hp` on the truncation intervals and term counts of `base`,
    /// so that prices are smooth in the parameters across a perturbation.
    pub fn with_layout(hp: HedgeParams, base: &HedgeModel) -> Result<Self> {
        Self::assemble(hp, base.setup.clone(), base.grid, base.configs.clone())
    }

    fn assemble(
        hp: HedgeParams,
        setup: HedgeSetup,
        grid: TimeGrid,
        configs: Vec<CosConfig>,
    ) -> Result<Self> {
        let qp = hp.q_char_params()?;
        let slices = configs
            .iter()
            .enumerate()
            .map(|(k, c)| CosSlice::new(setup.horizon - grid.node(k), c, &qp))
            .collect();
        let rule = GhRule::new(setup.gh_nodes);
        Ok(Self {
            hp,
            setup,
            grid,
            configs,
            slices,
            rule,
        })
    }

    pub fn setup(&self) -> &HedgeSetup {
        &self.setup
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// `(ĥ, ∂_Sĥ)` at grid index `k`; the payoff at expiry.
    pub fn price_and_delta(&self, k: usize, s: f64) -> (f64, f64) {
        if k >= self.grid.n_steps {
            let p = self.setup.payoff;
            return (p.value(s, self.setup.strike), p.slope(s, self.setup.strike));
        }
        self.slices[k].price_and_delta(s)
    }

    pub fn price(&self, k: usize, s: f64) -> f64 {
        self.price_and_delta(k, s).0
    }

    pub fn local(&self, k: usize, s: f64) -> LocalTerms {
        let (h, dh) = self.price_and_delta(k, s);
        let [_, _, lam, m, delta] = self.hp.phi;
        let (mut cross, mut square) = (0.0, 0.0);
        if lam > 0.0 {
            for (z, w) in self.rule.nodes(m, delta) {
                let dj = self.price(k, s * z.exp()) - h;
                cross += w * z.exp_m1() * dj;
                square += w * dj * dj;
            }
        }
        LocalTerms {
            h,
            dh,
            jump_cross: lam * cross,
            jump_square: lam * square,
        }
    }

    fn mean_from(&self, l: &LocalTerms, s: f64, x: f64) -> f64 {
        let p2 = self.hp.phi[1];
        let num = p2 * p2 * s * l.dh + l.jump_cross - p2 * self.hp.phi6 * (x - l.h);
        num / self.hp.total_variance()
    }

    /// Mean exposure `M^φ(t_k, S, x)`.
    pub fn policy_mean(&self, k: usize, s: f64, x: f64) -> f64 {
        self.mean_from(&self.local(k, s), s, x)
    }

    /// Action variance `θ/(2(φ₂² + φ₇²)f^φ(t_k))`.
    pub fn policy_variance(&self, k: usize) -> f64 {
        policy_variance(
            self.grid.node(k),
            &self.hp,
            self.setup.theta,
            self.setup.horizon,
        )
    }

    /// Running reward of the `g_e` stream over `[t_k, t_{k+1}]`.
    pub fn running_reward(&self, k: usize, s: f64) -> f64 {
        self.reward_from(k, &self.local(k, s), s)
    }

    fn reward_from(&self, k: usize, l: &LocalTerms, s: f64) -> f64 {
        let p2sq = self.hp.phi[1] * self.hp.phi[1];
        let f = self.hp.f(self.grid.node(k), self.setup.horizon);
        let total = p2sq * s * s * l.dh * l.dh + l.jump_square;
        let proj = p2sq * s * l.dh + l.jump_cross;
        let r = f * (total - proj * proj / self.hp.total_variance()) * self.grid.mesh();
        // Cauchy-Schwarz makes r nonnegative; clip rounding noise only.
        r.max(0.0)
    }

    pub fn log_policy(&self, k: usize, s: f64, x: f64, a: f64) -> f64 {
        gaussian_log_density(a, self.policy_mean(k, s, x), self.policy_variance(k))
    }
}

pub fn policy_variance(t: f64, hp: &HedgeParams, theta: f64, horizon: f64) -> f64 {
    theta / (2.0 * hp.total_variance() * hp.f(t, horizon))
}

/// `g_e` learned at every grid time before expiry; zero at expiry.
#[derive(Clone, Debug)]
pub struct Critic {
    grid: TimeGrid,
    models: Vec<Option<GpModel>>,
}

impl Critic {
    pub fn new(grid: TimeGrid, models: Vec<Option<GpModel>>) -> Self {
        Self { grid, models }
    }

    /// Fit one GP per grid time on `(S_k, Σ_{ℓ≥k} R_ℓ)` across episodes.
    pub fn fit(
        grid: TimeGrid,
        prices: &[Vec<f64>],
        rewards: &[Vec<f64>],
        hyper: Option<GpHyper>,
    ) -> Result<Self> {
        ensure(prices.len() == rewards.len() && !prices.is_empty(), || {
            "critic needs matching nonempty data".into()
        })?;
        let n = grid.n_steps;
        let to_go: Vec<Vec<f64>> = rewards
            .iter()
            .map(|r| {
                let mut c = vec![0.0; n];
                let mut acc = 0.0;
                for k in (0..n).rev() {
                    acc += r[k];
                    c[k] = acc;
                }
                c
            })
            .collect();
        let models = (0..n)
            .into_par_iter()
            .map(|k| {
                let xs: Vec<f64> = prices.iter().map(|p| p[k]).collect();
                let ys: Vec<f64> = to_go.iter().map(|c| c[k]).collect();
                GpModel::fit(&xs, &ys, hyper).map(Some)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, models })
    }

    pub fn g_e(&self, k: usize, s: f64) -> Result<f64> {
        if k >= self.grid.n_steps {
            return Ok(0.0);
        }
        self.models
            .get(k)
            .and_then(|m| m.as_ref())
            .map(|m| m.predict_mean(s))
            .ok_or(Error::MissingCritic(self.grid.node(k)))
    }

    /// Grid index nearest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        ((t - self.grid.t0) / self.grid.mesh())
            .round()
            .clamp(0.0, self.grid.n_steps as f64) as usize
    }
}

/// `J^{ψ,φ}(t_k, S, x)`.
pub fn critic_assemble(
    k: usize,
    s: f64,
    x: f64,
    model: &HedgeModel,
    critic: &Critic,
) -> Result<f64> {
    let grid = model.grid();
    let hp = &model.hp;
    let (theta, horizon) = (model.setup().theta, model.setup().horizon);
    let t = grid.node(k);
    let tau = horizon - t;
    let h = model.price(k, s);
    let d = x - h;
    let entropy_term = if theta > 0.0 {
        0.5 * theta
            * ((PI * theta / hp.total_variance()).ln() * tau + hp.decay_rate() * tau * tau / 2.0)
    } else {
        0.0
    };
    Ok(d * d * hp.f(t, horizon) + critic.g_e(k, s)? - entropy_term)
}

/// `∂ log π^φ(a | t_k, S, x)/∂φ_i` with the mean and variance differentiated
/// by central differences of relative step `rel_step`.
pub fn grad_log_policy_with_step(
    model: &HedgeModel,
    i: usize,
    k: usize,
    s: f64,
    x: f64,
    a: f64,
    rel_step: f64,
) -> Result<f64> {
    let hp = model.hp;
    let h = rel_step * hp.phi[i].abs().max(1e-3);
    let up = HedgeModel::with_layout(hp.with(i, hp.phi[i] + h)?, model)?;
    let dn = HedgeModel::with_layout(hp.with(i, hp.phi[i] - h)?, model)?;
    let dm = (up.policy_mean(k, s, x) - dn.policy_mean(k, s, x)) / (2.0 * h);
    let dv = (up.policy_variance(k) - dn.policy_variance(k)) / (2.0 * h);
    Ok(score(
        a,
        model.policy_mean(k, s, x),
        model.policy_variance(k),
        dm,
        dv,
    ))
}

pub fn grad_log_policy(
    model: &HedgeModel,
    i: usize,
    k: usize,
    s: f64,
    x: f64,
    a: f64,
) -> Result<f64> {
    grad_log_policy_with_step(model, i, k, s, x, a, FD_STEP)
}

const FD_STEP: f64 = 1e-5;

/// Outer derivative of the Gaussian log-density.
fn score(a: f64, mean: f64, var: f64, dm: f64, dv: f64) -> f64 {
    let d = a - mean;
    d / var * dm + (d * d / (2.0 * var * var) - 1.0 / (2.0 * var)) * dv
}

/// One hedging episode: `s`, `x` have `K + 1` entries, `a` has `K`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HedgeEpisode {
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub a: Vec<f64>,
}

impl HedgeEpisode {
    pub fn terminal_error(&self, setup: &HedgeSetup) -> f64 {
        let st = *self.s.last().expect("nonempty episode");
        let xt = *self.x.last().expect("nonempty episode");
        xt - setup.payoff.value(st, setup.strike)
    }
}

fn uniform_in<R: rand::Rng + ?Sized>(range: (f64, f64), rng: &mut R) -> f64 {
    range.0 + (range.1 - range.0) * rng.gen::<f64>()
}

/// Simulate one training episode under the stochastic policy of `model`.
/// The portfolio starts at the agent's own price of the option.
pub fn simulate_hedge_episode(
    model: &HedgeModel,
    env: &MarketParams,
    streams: &Streams,
    id: &[u64],
) -> Result<HedgeEpisode> {
    let grid = model.grid();
    let setup = model.setup();
    let dt = grid.mesh();
    let mut init = streams.stream(&[&[tag::INITIAL_STATE], id].concat());
    let mut env_rng = streams.stream(&[&[tag::ENVIRONMENT], id].concat());
    let mut act_rng = streams.stream(&[&[tag::ACTIONS], id].concat());
    let s0 = uniform_in(setup.s0_range, &mut init);
    let mut ep = HedgeEpisode {
        s: Vec::with_capacity(grid.n_steps + 1),
        x: Vec::with_capacity(grid.n_steps + 1),
        a: Vec::with_capacity(grid.n_steps),
    };
    let (mut s, mut x) = (s0, model.price(0, s0));
    ep.s.push(s);
    ep.x.push(x);
    for k in 0..grid.n_steps {
        let mean = model.policy_mean(k, s, x);
        let a =
            mean + model.policy_variance(k).sqrt() * normal_quantile(open_uniform(&mut act_rng))?;
        let o = environment_step(grid.node(k), x, s, a, dt, env, &mut env_rng);
        s *= o.gross_return;
        x = o.new_wealth;
        ep.a.push(a);
        ep.s.push(s);
        ep.x.push(x);
    }
    Ok(ep)
}

/// Learning rates, constant for `constant_iters` iterations and then
/// decaying as `(j − constant_iters)^{−decay}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HedgeRates {
    pub alpha: [f64; 5],
    pub constant_iters: usize,
    pub decay: f64,
}

impl Default for HedgeRates {
    fn default() -> Self {
        Self {
            alpha: [5e-3, 2e-5, 15.0, 1e-6, 1e-6],
            constant_iters: 30,
            decay: 0.5,
        }
    }
}

impl HedgeRates {
    pub fn schedule(&self, j: usize) -> f64 {
        if j <= self.constant_iters {
            1.0
        } else {
            ((j - self.constant_iters) as f64).powf(-self.decay)
        }
    }
}

/// Batch sums `Σ_m Σ_k (θ log π Δt − βJΔt + J_{k+1} − J_k)·∂_{φ_i} log π`
/// for `i = 1..5`, together with the mean realised cost of the batch.
pub fn actor_gradient(
    model: &HedgeModel,
    critic: &Critic,
    episodes: &[HedgeEpisode],
    beta: f64,
) -> Result<([f64; 5], f64)> {
    ensure(!episodes.is_empty(), || {
        "actor update needs episodes".into()
    })?;
    let hp = model.hp;
    let mut perturbed = Vec::with_capacity(5);
    for i in 0..5 {
        let h = FD_STEP * hp.phi[i].abs().max(1e-3);
        let up = HedgeModel::with_layout(hp.with(i, hp.phi[i] + h)?, model)?;
        let dn = HedgeModel::with_layout(hp.with(i, hp.phi[i] - h)?, model)?;
        perturbed.push((up, dn, h));
    }
    let theta = model.setup().theta;
    let dt = model.grid().mesh();
    let per: Vec<([f64; 5], f64)> = episodes
        .par_iter()
        .map(|ep| -> Result<([f64; 5], f64)> {
            let mut g = [0.0; 5];
            let mut cost = 0.0;
            let n = ep.a.len();
            let mut j_next = critic_assemble(0, ep.s[0], ep.x[0], model, critic)?;
            for k in 0..n {
                let (s, x, a) = (ep.s[k], ep.x[k], ep.a[k]);
                let j_now = j_next;
                j_next = critic_assemble(k + 1, ep.s[k + 1], ep.x[k + 1], model, critic)?;
                let (m, v) = (model.policy_mean(k, s, x), model.policy_variance(k));
                let log_pi = gaussian_log_density(a, m, v);
                let running = if theta > 0.0 {
                    theta * log_pi * dt
                } else {
                    0.0
                };
                let delta = running - beta * j_now * dt + j_next - j_now;
                cost += running;
                for (i, (up, dn, h)) in perturbed.iter().enumerate() {
                    let dm = (up.policy_mean(k, s, x) - dn.policy_mean(k, s, x)) / (2.0 * h);
                    let dv = (up.policy_variance(k) - dn.policy_variance(k)) / (2.0 * h);
                    g[i] += delta * score(a, m, v, dm, dv);
                }
            }
            let e = ep.terminal_error(model.setup());
            Ok((g, cost + e * e))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut g = [0.0; 5];
    let mut cost = 0.0;
    for (gi, c) in &per {
        for i in 0..5 {
            g[i] += gi[i];
        }
        cost += c;
    }
    Ok((g, cost / episodes.len() as f64))
}

/// `φ_i ← φ_i − (α_i/M)·l·g_i`, then re-derive `φ₆`, `φ₇`. The positivity
/// constraints are enforced by clamping, with a floor large enough that
/// the central differences of the score stay inside the domain.
pub fn actor_update(
    hp: &HedgeParams,
    grad: &[f64; 5],
    m: usize,
    rates: &HedgeRates,
    l: f64,
) -> Result<HedgeParams> {
    let mut phi = hp.phi;
    for i in 0..5 {
        phi[i] -= rates.alpha[i] / m as f64 * l * grad[i];
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            iteration: 0,
            snapshot: format!("phi={phi:?} grad={grad:?}"),
        });
    }
    phi[1] = phi[1].max(1e-4);
    phi[2] = phi[2].max(1e-6);
    phi[4] = phi[4].max(1e-6);
    HedgeParams::new(phi, hp.rf)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HedgeTrainConfig {
    pub setup: HedgeSetup,
    pub rates: HedgeRates,
    pub iterations: usize,
    pub episodes_per_iter: usize,
    pub beta: f64,
    pub gp_hyper: Option<GpHyper>,
}

impl Default for HedgeTrainConfig {
    fn default() -> Self {
        Self {
            setup: HedgeSetup::default(),
            rates: HedgeRates::default(),
            iterations: 100,
            episodes_per_iter: 32,
            beta: 0.0,
            gp_hyper: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HedgeHistoryRow {
    pub iter: usize,
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
    pub phi4: f64,
    pub phi5: f64,
    pub phi6: f64,
    pub phi7: f64,
    /// Mean realised cost of the iteration's batch.
    pub batch_objective: f64,
}

impl HedgeHistoryRow {
    fn new(iter: usize, hp: &HedgeParams, batch_objective: f64) -> Self {
        let [phi1, phi2, phi3, phi4, phi5] = hp.phi;
        Self {
            iter,
            phi1,
            phi2,
            phi3,
            phi4,
            phi5,
            phi6: hp.phi6,
            phi7: hp.phi7,
            batch_objective,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HedgeTrainReport {
    pub initial: HedgeParams,
    pub final_params: HedgeParams,
    pub history: Vec<HedgeHistoryRow>,
}

/// Actor-critic training against the environment `env`.
pub fn train_hedge(
    cfg: &HedgeTrainConfig,
    init: HedgeParams,
    env: &MarketParams,
    streams: &Streams,
) -> Result<HedgeTrainReport> {
    env.validate()?;
    let mut hp = init;
    let mut history = Vec::with_capacity(cfg.iterations);
    for j in 1..=cfg.iterations {
        let model = HedgeModel::new(hp, &cfg.setup)?;
        let episodes = (0..cfg.episodes_per_iter)
            .into_par_iter()
            .map(|m| simulate_hedge_episode(&model, env, streams, &[j as u64, m as u64]))
            .collect::<Result<Vec<_>>>()?;
        let rewards: Vec<Vec<f64>> = episodes
            .par_iter()
            .map(|ep| {
                (0..ep.a.len())
                    .map(|k| model.running_reward(k, ep.s[k]))
                    .collect()
            })
            .collect();
        let prices: Vec<Vec<f64>> = episodes.iter().map(|e| e.s.clone()).collect();
        let critic = Critic::fit(model.grid(), &prices, &rewards, cfg.gp_hyper)?;
        let (grad, objective) = actor_gradient(&model, &critic, &episodes, cfg.beta)?;
        hp = actor_update(
            &hp,
            &grad,
            episodes.len(),
            &cfg.rates,
            cfg.rates.schedule(j),
        )
        .map_err(|e| match e {
            Error::NonFinite { snapshot, .. } => Error::NonFinite {
                iteration: j,
                snapshot,
            },
            other => other,
        })?;
        history.push(HedgeHistoryRow::new(j, &hp, objective));
    }
    Ok(HedgeTrainReport {
        initial: init,
        final_params: hp,
        history,
    })
}

/// Deterministic hedging rule used at test time.
pub trait HedgeRule: Sync {
    fn initial_capital(&self, s0: f64) -> f64;
    fn exposure(&self, k: usize, s: f64, x: f64) -> f64;
}

impl HedgeRule for HedgeModel {
    fn initial_capital(&self, s0: f64) -> f64 {
        self.price(0, s0)
    }

    fn exposure(&self, k: usize, s: f64, x: f64) -> f64 {
        self.policy_mean(k, s, x)
    }
}

/// Discounted price paths on the hedging grid, `K + 1` prices each.
pub fn simulate_test_paths(
    setup: &HedgeSetup,
    env: &MarketParams,
    n: usize,
    streams: &Streams,
) -> Result<Vec<Vec<f64>>> {
    let grid = setup.grid()?;
    let dt = grid.mesh();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.stream(&[tag::TEST_EPISODES, i as u64]);
            let mut s = uniform_in(setup.s0_range, &mut rng);
            let mut path = Vec::with_capacity(grid.n_steps + 1);
            path.push(s);
            for k in 0..grid.n_steps {
                s *= environment_step(grid.node(k), 0.0, s, 0.0, dt, env, &mut rng).gross_return;
                path.push(s);
            }
            path
        })
        .collect())
}

/// Mean of `(X_T − Ĝ(S_T))²/𝒦_p²` over the test paths, with its standard error.
pub fn evaluate_hedging(rule: &dyn HedgeRule, paths: &[Vec<f64>], setup: &HedgeSetup) -> MeanSe {
    let errs: Vec<f64> = paths
        .par_iter()
        .map(|p| {
            let mut x = rule.initial_capital(p[0]);
            for k in 0..p.len() - 1 {
                let a = rule.exposure(k, p[k], x);
                x += a * (p[k + 1] / p[k] - 1.0);
            }
            let e = (x - setup.payoff.value(p[p.len() - 1], setup.strike)) / setup.k_points;
            e * e
        })
        .collect();
    mean_se(&errs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::trapezoid;

    fn truth() -> HedgeParams {
        HedgeParams::from_market(&MarketParams::hedging_truth()).unwrap()
    }

    #[test]
    fn dependent_parameters() {
        let hp = truth();
        assert!((hp.phi6 - 0.06 / 0.13).abs() < 1e-12);
        let [_, _, lam, m, d] = hp.phi;
        let dens = |z: f64| (-(z - m).powi(2) / (2.0 * d * d)).exp() / (2.0 * PI * d * d).sqrt();
        let quad = lam
            * trapezoid(m - 12.0 * d, m + 12.0 * d, 4000, |z| {
                z.exp_m1().powi(2) * dens(z)
            });
        assert!((hp.phi7 * hp.phi7 - quad).abs() < 1e-10);
        let no_jumps = HedgeParams::new([0.06, 0.13, 0.0, -0.004, 0.03], 0.0).unwrap();
        assert_eq!(no_jumps.phi7, 0.0);
        let flat = HedgeParams::new([0.02, 0.13, 1.0, 0.0, 0.1], 0.02).unwrap();
        assert_eq!(flat.phi6, 0.0);
    }

    #[test]
    fn gh_integral_moments() {
        let rule = GhRule::new(20);
        let hp = truth();
        let [_, _, lam, m, d] = hp.phi;
        assert!((gh_integral(|_| 1.0, lam, m, d, &rule) - lam).abs() < 1e-12);
        assert!((gh_integral(|z| z, lam, m, d, &rule) - lam * m).abs() < 1e-12);
        let v = gh_integral(|z| z.exp_m1().powi(2), lam, m, d, &rule);
        assert!((v - hp.phi7 * hp.phi7).abs() < 1e-10);
    }

    #[test]
    fn variance_profile() {
        let hp = truth();
        let t_end = policy_variance(1.0 / 3.0, &hp, 0.1, 1.0 / 3.0);
        assert!((t_end - 0.1 / (2.0 * hp.total_variance())).abs() < 1e-15);
        let doubled = policy_variance(0.1, &hp, 0.2, 1.0 / 3.0);
        assert!((doubled - 2.0 * policy_variance(0.1, &hp, 0.1, 1.0 / 3.0)).abs() < 1e-15);
        let v: Vec<f64> = (0..=20)
            .map(|i| policy_variance(i as f64 / 60.0, &hp, 0.1, 1.0 / 3.0))
            .collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn jump_free_mean_is_delta_hedge_plus_correction() {
        let hp = HedgeParams::new([0.06, 0.13, 0.0, -0.004, 0.03], 0.0).unwrap();
        let model = HedgeModel::new(hp, &HedgeSetup::default()).unwrap();
        let (s, x) = (95.0, 4.0);
        let (h, dh) = model.price_and_delta(10, s);
        let expected = s * dh - hp.phi6 / hp.phi[1] * (x - h);
        assert!((model.policy_mean(10, s, x) - expected).abs() < 1e-10);
        assert!(model.running_reward(10, s).abs() < 1e-12);
    }

    #[test]
    fn nothing_to_hedge_deep_out_of_the_money() {
        let model = HedgeModel::new(truth(), &HedgeSetup::default()).unwrap();
        let s = 250.0;
        let h = model.price(80, s);
        assert!(model.policy_mean(80, s, h).abs() < 1e-8);
    }

    #[test]
    fn score_vanishes_at_mode_without_variance_dependence() {
        assert_eq!(score(1.0, 1.0, 0.3, 5.0, 0.0), 0.0);
    }

    #[test]
    fn schedule_is_flat_then_decays() {
        let r = HedgeRates::default();
        assert_eq!(r.schedule(1), 1.0);
        assert_eq!(r.schedule(30), 1.0);
        assert_eq!(r.schedule(31), 1.0);
        assert!((r.schedule(34) - 0.5).abs() < 1e-15);
    }
}
