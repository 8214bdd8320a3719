//! Gauss-Hermite rules and a composite trapezoid helper.
//!
//! The Hermite rule is the physicists' one: `∫ e^{-u²} f(u) du ≈ Σ w_q f(u_q)`.
//! Nodes come from Newton iteration on the three-term recurrence of the
//! orthonormal Hermite polynomials, which is accurate to machine precision
//! for the rule sizes used here.

use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        let pim4 = PI.powf(-0.25);
        let half = n.div_ceil(2);
        let mut z = 0.0_f64;
        for i in 0..half {
            // Initial guesses for the largest roots first.
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let jf = j as f64;
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        // Ascending order.
        nodes.reverse();
        weights.reverse();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[f(Z)]` for `Z ~ N(mean, sd²)`.
    pub fn normal_expectation(&self, mean: f64, sd: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let scale = std::f64::consts::SQRT_2 * sd;
        let mut s = 0.0;
        for (u, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mean + scale * u);
        }
        s / PI.sqrt()
    }
}

/// Composite trapezoid rule with `n` subintervals.
pub fn trapezoid(a: f64, b: f64, n: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + i as f64 * h);
    }
    s * h
}

/// Composite Simpson rule; `n` is rounded up to an even count.
pub fn simpson(a: f64, b: f64, n: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_sqrt_pi() {
        for n in [1, 2, 5, 20, 40] {
            let r = GaussHermite::new(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - PI.sqrt()).abs() < 1e-13, "n={n}: {s}");
        }
    }

    #[test]
    fn two_point_rule_is_exact() {
        let r = GaussHermite::new(2);
        let u = 0.5_f64.sqrt();
        assert!((r.nodes[0] + u).abs() < 1e-15 && (r.nodes[1] - u).abs() < 1e-15);
    }

    #[test]
    fn normal_moments_are_exact_to_high_degree() {
        let r = GaussHermite::new(20);
        let m2 = r.normal_expectation(0.3, 1.7, |z| z * z);
        assert!((m2 - (0.09 + 1.7 * 1.7)).abs() < 1e-12);
        let m4 = r.normal_expectation(0.0, 1.0, |z| z.powi(4));
        assert!((m4 - 3.0).abs() < 1e-12);
        // Lognormal moment: E[e^Z] = e^{μ+σ²/2}.
        let e = r.normal_expectation(-0.004, 0.03, f64::exp);
        assert!((e - (-0.004_f64 + 0.00045).exp()).abs() < 1e-15);
    }

    #[test]
    fn simpson_integrates_cubic_exactly() {
        let v = simpson(0.0, 2.0, 4, |x| x * x * x);
        assert!((v - 4.0).abs() < 1e-13);
    }
}
