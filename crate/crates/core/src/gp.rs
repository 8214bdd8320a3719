//! One-dimensional Gaussian-process regression with an RBF kernel.
//!
//! Used by the hedging critic to learn the cumulative-reward surface as a
//! function of the price at each grid time. The prior mean is the sample
//! mean of the targets; hyperparameters are either supplied or picked by
//! maximising the log marginal likelihood over a fixed grid.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub lengthscale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

#[derive(Clone, Debug)]
pub struct GpModel {
    xs: Vec<f64>,
    ys: Vec<f64>,
    prior_mean: f64,
    hyper: GpHyper,
    /// Noise actually used after jitter escalation.
    noise_used: f64,
    alpha: DVector<f64>,
    log_marginal: f64,
}

fn rbf(x: f64, y: f64, h: &GpHyper) -> f64 {
    let d = x - y;
    h.signal_var * (-d * d / (2.0 * h.lengthscale * h.lengthscale)).exp()
}

struct Factored {
    chol: Cholesky<f64, Dyn>,
    noise: f64,
}

/// Factor `K + σ_n²I`, escalating the diagonal when needed.
fn factor(xs: &[f64], h: &GpHyper) -> Result<Factored> {
    let n = xs.len();
    let k = DMatrix::from_fn(n, n, |i, j| rbf(xs[i], xs[j], h));
    let mut extra = 0.0;
    let mut rel = JITTER_START;
    loop {
        let noise = h.noise_var + extra;
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += noise;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(Factored { chol, noise });
        }
        if rel > JITTER_MAX {
            return Err(Error::IllConditionedKernel);
        }
        extra = rel * h.signal_var;
        rel *= 10.0;
    }
}

fn log_marginal(f: &Factored, centered: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let n = centered.len() as f64;
    let log_det: f64 = f
        .chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
        * 2.0;
    -0.5 * centered.dot(alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Median of the pairwise distances between distinct inputs.
fn median_distance(xs: &[f64]) -> f64 {
    let mut d = Vec::new();
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let v = (xs[i] - xs[j]).abs();
            if v > 0.0 {
                d.push(v);
            }
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Hyperparameter candidates: lengthscales `median·2^k` for `k = −2..=7`,
/// noise variances `s²·10^{−6..−1}` on a log grid, `s²` the target variance.
pub fn hyper_grid(xs: &[f64], ys: &[f64]) -> Vec<GpHyper> {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let s2 = if var > 0.0 { var } else { 1.0 };
    let med = median_distance(xs);
    let mut out = Vec::with_capacity(100);
    for k in -2..=7 {
        let ell = med * 2f64.powi(k);
        for i in 0..10 {
            let e = -6.0 + 5.0 * i as f64 / 9.0;
            out.push(GpHyper {
                lengthscale: ell,
                signal_var: s2,
                noise_var: s2 * 10f64.powf(e),
            });
        }
    }
    out
}

impl GpModel {
    /// Fit to `(xs, ys)`. Training points are sorted by input first so that
    /// the result does not depend on their order.
    pub fn fit(xs: &[f64], ys: &[f64], hyper: Option<GpHyper>) -> Result<Self> {
        ensure(xs.len() == ys.len(), || {
            format!("{} inputs but {} targets", xs.len(), ys.len())
        })?;
        ensure(xs.len() >= 2, || {
            "at least two training points are required".into()
        })?;
        ensure(xs.iter().chain(ys).all(|v| v.is_finite()), || {
            "training data must be finite".into()
        })?;
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]).then(ys[i].total_cmp(&ys[j])));
        let xs: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();

        match hyper {
            Some(h) => {
                ensure(
                    h.lengthscale > 0.0 && h.signal_var > 0.0 && h.noise_var >= 0.0,
                    || format!("invalid GP hyperparameters {h:?}"),
                )?;
                Self::fit_with(xs, ys, h)
            }
            None => {
                let mut best: Option<GpModel> = None;
                for h in hyper_grid(&xs, &ys) {
                    let Ok(m) = Self::fit_with(xs.clone(), ys.clone(), h) else {
                        continue;
                    };
                    if best
                        .as_ref()
                        .map_or(true, |b| m.log_marginal > b.log_marginal)
                    {
                        best = Some(m);
                    }
                }
                best.ok_or(Error::IllConditionedKernel)
            }
        }
    }

    fn fit_with(xs: Vec<f64>, ys: Vec<f64>, h: GpHyper) -> Result<Self> {
        let n = ys.len() as f64;
        let prior_mean = ys.iter().sum::<f64>() / n;
        let centered = DVector::from_iterator(ys.len(), ys.iter().map(|y| y - prior_mean));
        let f = factor(&xs, &h)?;
        let alpha = f.chol.solve(&centered);
        let lml = log_marginal(&f, &centered, &alpha);
        Ok(Self {
            xs,
            ys,
            prior_mean,
            hyper: h,
            noise_used: f.noise,
            alpha,
            log_marginal: lml,
        })
    }

    pub fn predict_mean(&self, x: f64) -> f64 {
        let mut s = 0.0;
        for (xi, a) in self.xs.iter().zip(self.alpha.iter()) {
            s += rbf(x, *xi, &self.hyper) * a;
        }
        self.prior_mean + s
    }

    pub fn hyper(&self) -> GpHyper {
        self.hyper
    }

    pub fn noise_used(&self) -> f64 {
        self.noise_used
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn training_points(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }
}
