//! Merton jump-diffusion market for the discounted risky asset.
//!
//! Under the physical measure the discounted price follows
//! `dŜ/Ŝ = ρσ dt + σ dW + ∫(e^z − 1) Ñ(dt, dz)` with Poisson jump times of
//! intensity `λ` and Gaussian log-jump sizes `N(m, δ²)`. Transitions over any
//! step are sampled exactly; wealth moves with the realised gross return so
//! that price and portfolio are driven by the same noise.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::rng::{tag, Streams};
use crate::stats::{mean_se, MeanSe};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub mu: f64,
    pub sigma: f64,
    pub lam: f64,
    pub m: f64,
    pub delta: f64,
    #[serde(default)]
    pub rf: f64,
}

impl MarketParams {
    pub fn new(mu: f64, sigma: f64, lam: f64, m: f64, delta: f64, rf: f64) -> Result<Self> {
        let p = Self {
            mu,
            sigma,
            lam,
            m,
            delta,
            rf,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn black_scholes(mu: f64, sigma: f64) -> Self {
        Self {
            mu,
            sigma,
            lam: 0.0,
            m: 0.0,
            delta: 0.0,
            rf: 0.0,
        }
    }

    /// Black-Scholes simulator calibrated to daily S&P 500 returns.
    pub fn sp500_bs() -> Self {
        Self::black_scholes(0.0690, 0.1965)
    }

    /// Merton simulator calibrated to daily S&P 500 returns.
    pub fn sp500_mjd() -> Self {
        Self {
            mu: 0.0636,
            sigma: 0.1347,
            lam: 28.4910,
            m: -0.0039,
            delta: 0.0275,
            rf: 0.0,
        }
    }

    /// Ground-truth model of the hedging simulation study.
    pub fn hedging_truth() -> Self {
        Self {
            mu: 0.06,
            sigma: 0.13,
            lam: 28.0,
            m: -0.004,
            delta: 0.03,
            rf: 0.0,
        }
    }

    /// Maximum-likelihood fit used as the misspecified starting point of the
    /// hedging study.
    pub fn hedging_mle() -> Self {
        Self {
            mu: 0.1289,
            sigma: 0.1331,
            lam: 26.1091,
            m: -0.0033,
            delta: 0.0317,
            rf: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.mu, self.sigma, self.lam, self.m, self.delta, self.rf];
        ensure(all.iter().all(|v| v.is_finite()), || {
            format!("non-finite market parameter in {self:?}")
        })?;
        ensure(self.sigma > 0.0, || {
            format!("sigma must be positive, got {}", self.sigma)
        })?;
        ensure(self.lam >= 0.0, || {
            format!("jump intensity must be nonnegative, got {}", self.lam)
        })?;
        ensure(self.delta >= 0.0, || {
            format!("jump volatility must be nonnegative, got {}", self.delta)
        })
    }

    /// Sharpe ratio `(μ − r_f)/σ`.
    pub fn sharpe_ratio(&self) -> f64 {
        (self.mu - self.rf) / self.sigma
    }

    /// Mean relative jump `E[e^Z − 1]`.
    pub fn kappa(&self) -> f64 {
        (self.m + 0.5 * self.delta * self.delta).exp_m1()
    }

    /// Jump variance rate `∫(e^z − 1)² ν(dz)`.
    pub fn sigma_j_squared(&self) -> f64 {
        jump_variance_rate(self.lam, self.m, self.delta)
    }

    /// Total instantaneous variance `σ² + σ_J²`.
    pub fn total_variance(&self) -> f64 {
        self.sigma * self.sigma + self.sigma_j_squared()
    }

    /// Drift of the discounted log-price per unit time.
    pub fn log_drift(&self) -> f64 {
        self.mu - self.rf - 0.5 * self.sigma * self.sigma - self.lam * self.kappa()
    }

    /// `E[R]` and `E[R²]` of the gross discounted return over `dt`.
    pub fn gross_return_moments(&self, dt: f64) -> (f64, f64) {
        let rs = self.mu - self.rf;
        let m1 = (rs * dt).exp();
        let m2 = ((2.0 * rs + self.total_variance()) * dt).exp();
        (m1, m2)
    }
}

/// `λ(e^{2m+2δ²} − 2e^{m+δ²/2} + 1)`, written as a sum of two nonnegative
/// terms so that it never rounds below zero.
pub fn jump_variance_rate(lam: f64, m: f64, delta: f64) -> f64 {
    let d2 = delta * delta;
    let k = (m + 0.5 * d2).exp_m1();
    lam * (k * k + (2.0 * m + d2).exp() * d2.exp_m1())
}

/// Result of one environment step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub gross_return: f64,
    pub n_jumps: u32,
    pub new_wealth: f64,
}

/// Noise behind one exact transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDraw {
    pub log_return: f64,
    /// Brownian increment `W_{t+dt} − W_t`.
    pub dw: f64,
    pub n_jumps: u32,
    pub jump_sum: f64,
}

/// Exact draw of one step, reporting each jump mark to `on_jump`.
pub fn sample_step<R: Rng + ?Sized>(
    p: &MarketParams,
    dt: f64,
    rng: &mut R,
    mut on_jump: impl FnMut(f64),
) -> StepDraw {
    let z: f64 = StandardNormal.sample(rng);
    let dw = z * dt.sqrt();
    let mut n_jumps = 0u32;
    let mut jump_sum = 0.0;
    let mean_jumps = p.lam * dt;
    if mean_jumps > 0.0 {
        let n = Poisson::new(mean_jumps)
            .expect("positive Poisson mean")
            .sample(rng) as u32;
        for _ in 0..n {
            let e: f64 = StandardNormal.sample(rng);
            let mark = p.m + p.delta * e;
            on_jump(mark);
            jump_sum += mark;
        }
        n_jumps = n;
    }
    StepDraw {
        log_return: p.log_drift() * dt + p.sigma * dw + jump_sum,
        dw,
        n_jumps,
        jump_sum,
    }
}

/// One exact draw of `log(Ŝ_{t+dt}/Ŝ_t)`.
pub fn sample_log_return<R: Rng + ?Sized>(p: &MarketParams, dt: f64, rng: &mut R) -> f64 {
    sample_step(p, dt, rng, |_| {}).log_return
}

/// Advance wealth `x` holding dollar exposure `a` over `[t, t+dt]`.
/// The step is time-homogeneous, so `t` and `s` do not affect the draw.
pub fn environment_step<R: Rng + ?Sized>(
    _t: f64,
    x: f64,
    s: f64,
    a: f64,
    dt: f64,
    p: &MarketParams,
    rng: &mut R,
) -> StepOutcome {
    debug_assert!(dt > 0.0 && s > 0.0);
    let d = sample_step(p, dt, rng, |_| {});
    let gross_return = d.log_return.exp();
    StepOutcome {
        gross_return,
        n_jumps: d.n_jumps,
        new_wealth: x + a * (gross_return - 1.0),
    }
}

/// Aligned per-step record of one episode. `t`, `s`, `x` have one more entry
/// than `a` and `r`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub r: Vec<f64>,
}

impl Episode {
    pub fn with_capacity(n_steps: usize) -> Self {
        Self {
            t: Vec::with_capacity(n_steps + 1),
            s: Vec::with_capacity(n_steps + 1),
            x: Vec::with_capacity(n_steps + 1),
            a: Vec::with_capacity(n_steps),
            r: Vec::with_capacity(n_steps),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.a.len()
    }

    pub fn terminal_wealth(&self) -> f64 {
        *self.x.last().expect("episode has an initial state")
    }
}

/// Summary of a single-horizon path for measure-change checks.
#[derive(Clone, Debug, PartialEq)]
pub struct PricePath {
    pub horizon: f64,
    pub w_t: f64,
    pub marks: Vec<f64>,
    pub s_t: f64,
}

pub fn simulate_price_path<R: Rng + ?Sized>(
    p: &MarketParams,
    s0: f64,
    horizon: f64,
    n_steps: usize,
    rng: &mut R,
) -> PricePath {
    let dt = horizon / n_steps as f64;
    let mut marks = Vec::new();
    let mut w_t = 0.0;
    let mut log_s = s0.ln();
    for _ in 0..n_steps {
        let d = sample_step(p, dt, rng, |z| marks.push(z));
        w_t += d.dw;
        log_s += d.log_return;
    }
    PricePath {
        horizon,
        w_t,
        marks,
        s_t: log_s.exp(),
    }
}

/// Density `dQ/dP` on `F_T` of the variance-optimal martingale measure,
/// `None` when a jump makes a Doléans-Dade factor nonpositive.
pub fn radon_nikodym_weight(path: &PricePath, p: &MarketParams) -> Option<f64> {
    let eta = p.sharpe_ratio() * p.sigma / p.total_variance();
    if eta == 0.0 {
        return Some(1.0);
    }
    let t = path.horizon;
    let mut log_w = -eta * p.sigma * path.w_t - 0.5 * eta * eta * p.sigma * p.sigma * t
        + eta * p.lam * p.kappa() * t;
    for &z in &path.marks {
        let f = 1.0 - eta * z.exp_m1();
        if f <= 0.0 {
            return None;
        }
        log_w += f.ln();
    }
    Some(log_w.exp())
}

/// Λ-weighted Monte Carlo of `E^Q[g(Ŝ_τ)]` from physical-measure paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightedMc {
    pub estimate: MeanSe,
    pub rejected: usize,
}

pub fn q_expectation_mc(
    p: &MarketParams,
    s0: f64,
    tau: f64,
    n_paths: usize,
    streams: &Streams,
    g: impl Fn(f64) -> f64 + Sync,
) -> WeightedMc {
    const BLOCK: usize = 4096;
    let n_blocks = n_paths.div_ceil(BLOCK);
    let blocks: Vec<(Vec<f64>, usize)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = streams.stream(&[tag::MEASURE_CHANGE, b as u64]);
            let n = BLOCK.min(n_paths - b * BLOCK);
            let mut vals = Vec::with_capacity(n);
            let mut rejected = 0;
            for _ in 0..n {
                let path = simulate_price_path(p, s0, tau, 1, &mut rng);
                match radon_nikodym_weight(&path, p) {
                    Some(w) => vals.push(w * g(path.s_t)),
                    None => {
                        rejected += 1;
                        vals.push(0.0);
                    }
                }
            }
            (vals, rejected)
        })
        .collect();
    let rejected = blocks.iter().map(|b| b.1).sum();
    let vals: Vec<f64> = blocks.into_iter().flat_map(|b| b.0).collect();
    WeightedMc {
        estimate: mean_se(&vals),
        rejected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::simpson;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sharpe_ratios_of_simulators() {
        assert!((MarketParams::sp500_bs().sharpe_ratio() - 0.351145).abs() < 1e-5);
        assert!((MarketParams::sp500_mjd().sharpe_ratio() - 0.472160).abs() < 1e-5);
    }

    #[test]
    fn jump_variance_matches_quadrature() {
        let p = MarketParams::sp500_mjd();
        let dens = |z: f64| {
            let u = (z - p.m) / p.delta;
            (-0.5 * u * u).exp() / (p.delta * (2.0 * std::f64::consts::PI).sqrt())
        };
        let q = p.lam
            * simpson(p.m - 10.0 * p.delta, p.m + 10.0 * p.delta, 4000, |z| {
                z.exp_m1().powi(2) * dens(z)
            });
        assert!((q - p.sigma_j_squared()).abs() < 1e-10);
        assert!((p.sigma_j_squared() - 0.0218).abs() < 1e-4);
    }

    #[test]
    fn zero_exposure_keeps_wealth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = MarketParams::sp500_mjd();
        for _ in 0..100 {
            let o = environment_step(0.0, 1.3, 1.0, 0.0, 1.0 / 252.0, &p, &mut rng);
            assert_eq!(o.new_wealth, 1.3);
            assert!(o.gross_return > 0.0);
        }
    }

    #[test]
    fn zero_sharpe_means_unit_weight() {
        let p = MarketParams {
            mu: 0.0,
            ..MarketParams::sp500_mjd()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let path = simulate_price_path(&p, 1.0, 1.0, 5, &mut rng);
        assert_eq!(radon_nikodym_weight(&path, &p), Some(1.0));
    }
}
