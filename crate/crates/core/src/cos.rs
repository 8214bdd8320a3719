//! Fourier-cosine valuation of European puts and calls under the
//! variance-optimal martingale measure of the jump-diffusion market.
//!
//! With `Y_τ = log(Ŝ_{t+τ}/Ŝ_t)` and `x = log(S/K)`, the price is the
//! truncated cosine expansion
//! `Σ′_k Re(Φ(u_k) e^{iu_k(x−a)}) V_k`, `u_k = kπ/(b−a)`, where `Φ` is the
//! characteristic function of `Y_τ` under the pricing measure and `V_k` are
//! the cosine coefficients of the payoff in log-moneyness.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::market::{jump_variance_rate, MarketParams};
use crate::stats::KahanSum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Payoff {
    Call,
    Put,
}

impl Payoff {
    pub fn value(&self, s: f64, strike: f64) -> f64 {
        match self {
            Payoff::Call => (s - strike).max(0.0),
            Payoff::Put => (strike - s).max(0.0),
        }
    }

    /// Derivative of the payoff in `s` (right-continuous at the kink).
    pub fn slope(&self, s: f64, strike: f64) -> f64 {
        match self {
            Payoff::Call => {
                if s >= strike {
                    1.0
                } else {
                    0.0
                }
            }
            Payoff::Put => {
                if s < strike {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Parameters of the pricing-measure characteristic function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QCharParams {
    pub sigma: f64,
    pub lam: f64,
    pub m: f64,
    pub delta: f64,
    /// `ρσ/(σ² + σ_J²)`.
    pub eta: f64,
}

impl QCharParams {
    pub fn new(excess_drift: f64, sigma: f64, lam: f64, m: f64, delta: f64) -> Result<Self> {
        let var = sigma * sigma + jump_variance_rate(lam, m, delta);
        ensure(var > 0.0, || "total variance must be positive".into())?;
        Ok(Self {
            sigma,
            lam,
            m,
            delta,
            eta: excess_drift / var,
        })
    }

    pub fn from_market(p: &MarketParams) -> Result<Self> {
        Self::new(p.mu - p.rf, p.sigma, p.lam, p.m, p.delta)
    }

    pub fn sigma_j_squared(&self) -> f64 {
        jump_variance_rate(self.lam, self.m, self.delta)
    }

    fn kappa(&self) -> f64 {
        (self.m + 0.5 * self.delta * self.delta).exp_m1()
    }

    /// Drift of `Y` per unit time under the pricing measure.
    pub fn q_drift(&self) -> f64 {
        self.eta * self.sigma_j_squared() - 0.5 * self.sigma * self.sigma - self.lam * self.kappa()
    }

    /// `A(u) = ∫(e^{iuz} − 1) ν′(dz)` with `ν′(dz) = (1 − η(e^z − 1)) ν(dz)`.
    pub fn jump_exponent(&self, u: Complex64) -> Complex64 {
        if self.lam == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let i = Complex64::i();
        let d2 = self.delta * self.delta;
        let jump_cf = (i * u * self.m - 0.5 * d2 * u * u).exp();
        let tilted = (self.m + 0.5 * d2 + i * u * (self.m + d2) - 0.5 * d2 * u * u).exp();
        let mgf1 = (self.m + 0.5 * d2).exp();
        self.lam * (jump_cf - 1.0) - self.lam * self.eta * (tilted - jump_cf - mgf1 + 1.0)
    }
}

/// Characteristic function `E^Q[e^{iuY_τ}]`; `u` may be complex.
pub fn char_fn_q(u: Complex64, tau: f64, qp: &QCharParams) -> Complex64 {
    let i = Complex64::i();
    let s2 = qp.sigma * qp.sigma;
    (i * u * tau * qp.q_drift() - 0.5 * s2 * u * u * tau + tau * qp.jump_exponent(u)).exp()
}

/// Truncation interval `c₁ ∓ L√(c₂ + √c₄)` for `Y_τ` from its leading
/// cumulants, ignoring the tilt of the jump measure.
pub fn truncation_range(qp: &QCharParams, tau: f64, l: f64) -> (f64, f64) {
    let (m, d2) = (qp.m, qp.delta * qp.delta);
    let c1 = qp.q_drift() * tau;
    let c2 = (qp.sigma * qp.sigma + qp.lam * (m * m + d2)) * tau;
    let c4 = qp.lam * (m.powi(4) + 6.0 * m * m * d2 + 3.0 * d2 * d2) * tau;
    let half = l * (c2 + c4.sqrt()).sqrt();
    (c1 - half, c1 + half)
}

/// Term count, truncation interval and payoff of a cosine expansion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosConfig {
    pub n_terms: usize,
    pub a: f64,
    pub b: f64,
    pub payoff: Payoff,
    /// Discounted strike.
    pub strike: f64,
}

impl CosConfig {
    pub fn new(n_terms: usize, a: f64, b: f64, payoff: Payoff, strike: f64) -> Result<Self> {
        ensure(a < 0.0 && b > 0.0, || {
            format!("truncation interval [{a}, {b}] must contain 0")
        })?;
        ensure(n_terms >= 16, || {
            format!("need at least 16 terms, got {n_terms}")
        })?;
        ensure(strike > 0.0, || {
            format!("strike must be positive, got {strike}")
        })?;
        Ok(Self {
            n_terms,
            a,
            b,
            payoff,
            strike,
        })
    }
}

/// `∫_c^d e^y cos(kπ(y−a)/(b−a)) dy`.
pub fn chi(k: usize, a: f64, b: f64, c: f64, d: f64) -> f64 {
    let w = k as f64 * std::f64::consts::PI / (b - a);
    let (cd, cc) = ((w * (d - a)).cos(), (w * (c - a)).cos());
    let (sd, sc) = ((w * (d - a)).sin(), (w * (c - a)).sin());
    let (ed, ec) = (d.exp(), c.exp());
    (cd * ed - cc * ec + w * (sd * ed - sc * ec)) / (1.0 + w * w)
}

/// `∫_c^d cos(kπ(y−a)/(b−a)) dy`.
pub fn psi(k: usize, a: f64, b: f64, c: f64, d: f64) -> f64 {
    if k == 0 {
        return d - c;
    }
    let w = k as f64 * std::f64::consts::PI / (b - a);
    ((w * (d - a)).sin() - (w * (c - a)).sin()) / w
}

/// Cosine coefficients of the payoff on `[a, b]`.
pub fn vk_coefficients(cfg: &CosConfig) -> Vec<f64> {
    let (a, b) = (cfg.a, cfg.b);
    let scale = 2.0 / (b - a) * cfg.strike;
    (0..cfg.n_terms)
        .map(|k| match cfg.payoff {
            Payoff::Put => scale * (psi(k, a, b, a, 0.0) - chi(k, a, b, a, 0.0)),
            Payoff::Call => scale * (chi(k, a, b, 0.0, b) - psi(k, a, b, 0.0, b)),
        })
        .collect()
}

/// Cosine expansion at one time to expiry with the characteristic function
/// and payoff coefficients folded together; cheap to evaluate at many prices.
#[derive(Clone, Debug)]
pub struct CosSlice {
    pub tau: f64,
    a: f64,
    b: f64,
    strike: f64,
    coeffs: Vec<Complex64>,
}

impl CosSlice {
    pub fn new(tau: f64, cfg: &CosConfig, qp: &QCharParams) -> Self {
        let vk = vk_coefficients(cfg);
        let width = cfg.b - cfg.a;
        let coeffs = vk
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let u = k as f64 * std::f64::consts::PI / width;
                let w = if k == 0 { 0.5 } else { 1.0 };
                char_fn_q(Complex64::new(u, 0.0), tau, qp) * (w * v)
            })
            .collect();
        Self {
            tau,
            a: cfg.a,
            b: cfg.b,
            strike: cfg.strike,
            coeffs,
        }
    }

    pub fn covers(&self, s: f64) -> bool {
        let x = (s / self.strike).ln();
        x > self.a && x < self.b
    }

    /// Price and `∂/∂S` in one pass.
    pub fn price_and_delta(&self, s: f64) -> (f64, f64) {
        let x = (s / self.strike).ln();
        let width = self.b - self.a;
        let theta = std::f64::consts::PI * (x - self.a) / width;
        let step = Complex64::from_polar(1.0, theta);
        let mut rot = Complex64::new(1.0, 0.0);
        let mut price = KahanSum::new();
        let mut slope = KahanSum::new();
        for (k, c) in self.coeffs.iter().enumerate() {
            let term = c * rot;
            price.add(term.re);
            // Re(i·u_k·term) = −u_k·Im(term).
            slope.add(-(k as f64) * term.im);
            rot *= step;
            if k % 64 == 63 {
                // Renormalise the rotation to stop drift in long sums.
                rot /= rot.norm();
            }
        }
        let delta = slope.value() * std::f64::consts::PI / width / s;
        (price.value(), delta)
    }

    pub fn price(&self, s: f64) -> f64 {
        self.price_and_delta(s).0
    }

    pub fn delta(&self, s: f64) -> f64 {
        self.price_and_delta(s).1
    }
}

fn warn_if_outside(cfg: &CosConfig, s: f64) {
    let x = (s / cfg.strike).ln();
    if !(x > cfg.a && x < cfg.b) {
        log::warn!(
            "log-moneyness {x:.4} outside truncation interval [{:.4}, {:.4}]",
            cfg.a,
            cfg.b
        );
    }
}

/// Option value at time to expiry `tau` and price `s`.
pub fn cos_price(tau: f64, s: f64, cfg: &CosConfig, qp: &QCharParams) -> f64 {
    if tau <= 0.0 {
        return cfg.payoff.value(s, cfg.strike);
    }
    warn_if_outside(cfg, s);
    CosSlice::new(tau, cfg, qp).price(s)
}

/// `∂/∂S` of [`cos_price`].
pub fn cos_delta(tau: f64, s: f64, cfg: &CosConfig, qp: &QCharParams) -> f64 {
    if tau <= 0.0 {
        return cfg.payoff.slope(s, cfg.strike);
    }
    warn_if_outside(cfg, s);
    CosSlice::new(tau, cfg, qp).delta(s)
}

/// Zero-rate Black-Scholes put price and delta, used as a reference.
pub fn black_scholes_put(s: f64, strike: f64, sigma: f64, tau: f64) -> (f64, f64) {
    use crate::policy::normal_cdf;
    let sd = sigma * tau.sqrt();
    let d1 = ((s / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    (
        strike * normal_cdf(-d2) - s * normal_cdf(-d1),
        -normal_cdf(-d1),
    )
}

const MAX_TERMS: usize = 4096;

fn terms_needed(sigma: f64, tau: f64, width: f64) -> usize {
    let v = sigma * sigma * tau;
    if v <= 0.0 {
        return MAX_TERMS;
    }
    let u_max = (80.0 / v).sqrt();
    (u_max * width / std::f64::consts::PI).ceil() as usize
}

/// Pricer for a fixed option and parameter set, producing slices whose
/// interval covers log-moneyness in `[band.0, band.1]` in addition to the
/// cumulant range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosPricer {
    pub qp: QCharParams,
    pub payoff: Payoff,
    pub strike: f64,
    pub n_terms: usize,
    pub width_multiplier: f64,
    pub band: (f64, f64),
}

impl CosPricer {
    /// `n_terms` is a floor: short maturities on a wide interval get enough
    /// terms for the diffusive part of `Φ` to decay below `e^{−40}`.
    pub fn config(&self, tau: f64) -> Result<CosConfig> {
        let (a, b) = truncation_range(&self.qp, tau, self.width_multiplier);
        let (a, b) = ((a + self.band.0).min(-1e-3), (b + self.band.1).max(1e-3));
        let n = terms_needed(self.qp.sigma, tau, b - a)
            .clamp(self.n_terms, MAX_TERMS.max(self.n_terms));
        CosConfig::new(n, a, b, self.payoff, self.strike)
    }

    pub fn slice(&self, tau: f64) -> Result<CosSlice> {
        Ok(CosSlice::new(tau, &self.config(tau)?, &self.qp))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp_bs(sigma: f64) -> QCharParams {
        QCharParams::new(0.05, sigma, 0.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn char_fn_at_zero_is_one() {
        let qp = QCharParams::from_market(&MarketParams::hedging_truth()).unwrap();
        let v = char_fn_q(Complex64::new(0.0, 0.0), 0.4, &qp);
        assert!((v - 1.0).norm() < 1e-15);
    }

    #[test]
    fn martingale_identity() {
        let qp = QCharParams::from_market(&MarketParams::hedging_truth()).unwrap();
        let v = char_fn_q(Complex64::new(0.0, -1.0), 1.0 / 3.0, &qp);
        assert!((v - 1.0).norm() < 1e-12);
    }

    #[test]
    fn kernels_match_quadrature() {
        let (a, b) = (-1.3, 0.9);
        for k in [0, 1, 7, 40] {
            let w = k as f64 * std::f64::consts::PI / (b - a);
            let qc = crate::quadrature::simpson(a, 0.2, 20_000, |y| y.exp() * (w * (y - a)).cos());
            let qs = crate::quadrature::simpson(a, 0.2, 20_000, |y| (w * (y - a)).cos());
            assert!((chi(k, a, b, a, 0.2) - qc).abs() < 1e-10);
            assert!((psi(k, a, b, a, 0.2) - qs).abs() < 1e-10);
        }
    }

    #[test]
    fn black_scholes_reduction() {
        let qp = qp_bs(0.2);
        let (a, b) = truncation_range(&qp, 1.0 / 3.0, 10.0);
        let cfg = CosConfig::new(256, a, b, Payoff::Put, 100.0).unwrap();
        for s in [80.0, 100.0, 120.0] {
            let (bs, bd) = black_scholes_put(s, 100.0, 0.2, 1.0 / 3.0);
            assert!((cos_price(1.0 / 3.0, s, &cfg, &qp) - bs).abs() < 1e-6);
            assert!((cos_delta(1.0 / 3.0, s, &cfg, &qp) - bd).abs() < 1e-6);
        }
    }

    #[test]
    fn gaussian_range_width() {
        let (a, b) = truncation_range(&qp_bs(0.2), 1.0, 10.0);
        assert!((b - a - 4.0).abs() < 1e-12);
    }
}
