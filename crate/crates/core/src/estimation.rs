//! Maximum-likelihood fits of the Black-Scholes and Merton models to daily
//! log-returns, price-file loading and iid bootstrap of return series.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::market::MarketParams;
use crate::optim::NelderMead;
use crate::rng::{tag, Streams};

pub const TRADING_DAYS: f64 = 252.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    /// Years per observation.
    pub dt: f64,
    pub returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(dt: f64, returns: Vec<f64>) -> Result<Self> {
        ensure(dt > 0.0, || {
            format!("observation interval must be positive, got {dt}")
        })?;
        ensure(returns.iter().all(|r| r.is_finite()), || {
            "returns must be finite".into()
        })?;
        Ok(Self { dt, returns })
    }

    /// Log-returns of consecutive prices.
    pub fn from_prices(dt: f64, prices: &[f64]) -> Result<Self> {
        Self::new(dt, prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// Closed-form Black-Scholes fit: `σ̂² = v/dt`, `μ̂ = r̄/dt + σ̂²/2`, with `v`
/// the maximum-likelihood (divide-by-n) variance of the returns.
pub fn mle_bs(rs: &ReturnSeries) -> Result<(f64, f64)> {
    ensure(rs.len() >= 2, || "at least two returns are required".into())?;
    let n = rs.len() as f64;
    let mean = rs.returns.iter().sum::<f64>() / n;
    let var = rs.returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    ensure(var > 0.0, || "returns have zero variance".into())?;
    let s2 = var / rs.dt;
    Ok((mean / rs.dt + 0.5 * s2, s2.sqrt()))
}

pub fn bs_log_likelihood(rs: &ReturnSeries, mu: f64, sigma: f64) -> f64 {
    let v = sigma * sigma * rs.dt;
    let m = (mu - 0.5 * sigma * sigma) * rs.dt;
    rs.returns.iter().map(|r| normal_log_pdf(*r, m, v)).sum()
}

fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (d * d / var + (2.0 * std::f64::consts::PI * var).ln())
}

/// Merton log-likelihood with the Poisson mixture truncated at `j_max` jumps
/// per observation.
pub fn mjd_log_likelihood(rs: &ReturnSeries, p: &MarketParams, j_max: usize) -> f64 {
    if !(p.sigma > 0.0 && p.lam >= 0.0 && p.delta >= 0.0) {
        return f64::NEG_INFINITY;
    }
    let dt = rs.dt;
    let ld = p.lam * dt;
    let drift = (p.mu - 0.5 * p.sigma * p.sigma - p.lam * p.kappa()) * dt;
    // Component log-weights, means and variances.
    let mut comps = Vec::with_capacity(j_max + 1);
    let mut log_w = -ld;
    for j in 0..=j_max {
        if j > 0 {
            if ld == 0.0 {
                break;
            }
            log_w += ld.ln() - (j as f64).ln();
        }
        let jf = j as f64;
        comps.push((
            log_w,
            drift + jf * p.m,
            p.sigma * p.sigma * dt + jf * p.delta * p.delta,
        ));
    }
    rs.returns
        .iter()
        .map(|&r| {
            let terms: Vec<f64> = comps
                .iter()
                .map(|(lw, m, v)| lw + normal_log_pdf(r, *m, *v))
                .collect();
            let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln()
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MjdFit {
    pub params: MarketParams,
    pub log_likelihood: f64,
    /// Best objective of every start, in start order.
    pub start_values: Vec<f64>,
    pub converged: bool,
}

fn to_unconstrained(p: &MarketParams) -> Vec<f64> {
    vec![
        p.mu,
        p.sigma.ln(),
        p.lam.max(1e-8).ln(),
        p.m,
        p.delta.max(1e-8).ln(),
    ]
}

fn from_unconstrained(x: &[f64]) -> MarketParams {
    MarketParams {
        mu: x[0],
        sigma: x[1].exp(),
        lam: x[2].exp(),
        m: x[3],
        delta: x[4].exp(),
        rf: 0.0,
    }
}

/// Starting point derived from the data: the Gaussian drift, part of the
/// Gaussian volatility as diffusion, and moderate daily-scale jumps.
pub fn mjd_start(rs: &ReturnSeries) -> Result<MarketParams> {
    let (mu, sigma) = mle_bs(rs)?;
    Ok(MarketParams {
        mu,
        sigma: 0.8 * sigma,
        lam: 20.0,
        m: 0.0,
        delta: 2.0 * sigma * rs.dt.sqrt(),
        rf: 0.0,
    })
}

/// Maximise the Merton likelihood by Nelder-Mead on `(μ, ln σ, ln λ, m, ln δ)`
/// from `init` and `n_starts − 1` jittered copies of it; the best start wins.
pub fn mle_mjd(
    rs: &ReturnSeries,
    init: &MarketParams,
    j_max: usize,
    n_starts: usize,
    streams: &Streams,
) -> Result<MjdFit> {
    ensure(j_max >= 3, || {
        format!("j_max must be at least 3, got {j_max}")
    })?;
    ensure(rs.len() >= 5, || {
        "at least five returns are required".into()
    })?;
    ensure(
        [init.mu, init.sigma, init.lam, init.m, init.delta]
            .iter()
            .all(|v| v.is_finite())
            && init.sigma > 0.0,
        || format!("invalid initial parameters {init:?}"),
    )?;
    let x0 = to_unconstrained(init);
    let starts: Vec<Vec<f64>> = (0..n_starts.max(1))
        .map(|i| {
            if i == 0 {
                return x0.clone();
            }
            let mut rng = streams.stream(&[tag::MULTISTART, i as u64]);
            let scale = [0.1, 0.3, 0.5, 0.005, 0.3];
            x0.iter()
                .zip(scale)
                .map(|(v, s)| v + s * (2.0 * rng.gen::<f64>() - 1.0))
                .collect()
        })
        .collect();
    let nm = NelderMead {
        max_iter: 20_000,
        f_tol: 1e-10,
        x_tol: 1e-9,
        step: 0.1,
    };
    let n = rs.len() as f64;
    let results: Vec<_> = starts
        .par_iter()
        .map(|x| {
            let mut best = nm.minimize(
                |x| -mjd_log_likelihood(rs, &from_unconstrained(x), j_max) / n,
                x,
            );
            // One restart from the optimum guards against early simplex collapse.
            let again = nm.minimize(
                |x| -mjd_log_likelihood(rs, &from_unconstrained(x), j_max) / n,
                &best.x,
            );
            if again.f <= best.f {
                best = again;
            }
            best
        })
        .collect();
    let start_values: Vec<f64> = results.iter().map(|r| -r.f * n).collect();
    let best = results
        .iter()
        .filter(|r| r.f.is_finite())
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .ok_or_else(|| Error::OptimizerFailed(format!("objective values {start_values:?}")))?;
    Ok(MjdFit {
        params: from_unconstrained(&best.x),
        log_likelihood: -best.f * n,
        start_values,
        converged: best.converged,
    })
}

/// `n` price paths of `horizon_steps` returns drawn iid with replacement
/// from `rs`, each compounded from a price given by `s0`.
pub fn bootstrap_episodes<R: Rng + ?Sized>(
    rs: &ReturnSeries,
    horizon_steps: usize,
    n: usize,
    mut s0: impl FnMut(&mut R) -> f64,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if rs.is_empty() {
        return Err(Error::EmptyInput("return series"));
    }
    Ok((0..n)
        .map(|_| {
            let mut s = s0(rng);
            let mut path = Vec::with_capacity(horizon_steps + 1);
            path.push(s);
            for _ in 0..horizon_steps {
                s *= rs.returns[rng.gen_range(0..rs.len())].exp();
                path.push(s);
            }
            path
        })
        .collect())
}

/// Read a two-column `date,close` CSV (an optional header row is skipped)
/// and return daily log-returns of the closes.
pub fn load_prices(path: &Path) -> Result<ReturnSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut closes = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec?;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if rec.len() != 2 {
            return Err(parse_err(format!(
                "expected 2 fields (date, close), found {}",
                rec.len()
            )));
        }
        let close = match rec[1].parse::<f64>() {
            Ok(v) => v,
            Err(_) if line == 1 => continue,
            Err(_) => return Err(parse_err(format!("close {:?} is not a number", &rec[1]))),
        };
        if !(close > 0.0 && close.is_finite()) {
            return Err(parse_err(format!("close must be positive, got {close}")));
        }
        closes.push(close);
    }
    if closes.len() < 2 {
        return Err(Error::EmptyInput("price file needs at least two closes"));
    }
    ReturnSeries::from_prices(1.0 / TRADING_DAYS, &closes)
}

/// Write `date,close` rows; dates are the row indices.
pub fn write_prices(path: &Path, closes: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "close"])?;
    for (i, c) in closes.iter().enumerate() {
        w.write_record([i.to_string(), format!("{c:e}")])?;
    }
    w.flush()?;
    Ok(())
}
