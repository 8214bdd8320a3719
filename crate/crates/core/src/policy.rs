//! Gaussian stochastic feedback policies.
//!
//! A policy is a Gaussian whose mean is a feedback function of the state and
//! whose variance depends on time only. Actions are generated by the inverse
//! CDF transform `a = mean + √V · Φ⁻¹(u)`, so a policy together with a stream
//! of uniforms fully determines the action sequence.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Standard normal quantile.
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::QuantileOutOfRange(u));
    }
    Ok(standard_normal().inverse_cdf(u))
}

pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub trait FeedbackPolicy {
    /// Mean action at time `t`, price `s` and wealth `x`.
    fn mean(&self, t: f64, s: f64, x: f64) -> f64;

    /// Action variance at time `t`.
    fn variance(&self, t: f64) -> f64;

    fn sample(&self, t: f64, s: f64, x: f64, u: f64) -> Result<f64> {
        Ok(self.mean(t, s, x) + self.variance(t).sqrt() * normal_quantile(u)?)
    }

    fn log_density(&self, t: f64, s: f64, x: f64, a: f64) -> f64 {
        gaussian_log_density(a, self.mean(t, s, x), self.variance(t))
    }

    fn entropy(&self, t: f64) -> f64 {
        gaussian_entropy(self.variance(t))
    }
}

pub fn gaussian_log_density(a: f64, mean: f64, var: f64) -> f64 {
    let d = a - mean;
    -d * d / (2.0 * var) - 0.5 * (2.0 * PI * var).ln()
}

pub fn gaussian_entropy(var: f64) -> f64 {
    0.5 * (2.0 * PI * E * var).ln()
}

/// `V(t) = scale · exp(rate · (T − t))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpVariance {
    pub scale: f64,
    pub rate: f64,
    pub horizon: f64,
}

impl ExpVariance {
    pub fn constant(v: f64) -> Self {
        Self {
            scale: v,
            rate: 0.0,
            horizon: 0.0,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.scale * (self.rate * (self.horizon - t)).exp()
    }
}

/// Policy with mean `−k(x − w)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineGaussian {
    pub k: f64,
    pub w: f64,
    pub var: ExpVariance,
}

impl FeedbackPolicy for AffineGaussian {
    fn mean(&self, _t: f64, _s: f64, x: f64) -> f64 {
        -self.k * (x - self.w)
    }

    fn variance(&self, t: f64) -> f64 {
        self.var.at(t)
    }
}

/// Policy with an arbitrary mean function of `(t, s, x)`.
pub struct MeanFnPolicy<M> {
    pub mean: M,
    pub var: ExpVariance,
}

impl<M: Fn(f64, f64, f64) -> f64> FeedbackPolicy for MeanFnPolicy<M> {
    fn mean(&self, t: f64, s: f64, x: f64) -> f64 {
        (self.mean)(t, s, x)
    }

    fn variance(&self, t: f64) -> f64 {
        self.var.at(t)
    }
}

impl<P: FeedbackPolicy + ?Sized> FeedbackPolicy for &P {
    fn mean(&self, t: f64, s: f64, x: f64) -> f64 {
        (**self).mean(t, s, x)
    }

    fn variance(&self, t: f64) -> f64 {
        (**self).variance(t)
    }
}
