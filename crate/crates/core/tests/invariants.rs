//! Property tests of structural invariants across modules.

use num_complex::Complex64;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use jumprl::cos::{char_fn_q, CosPricer, Payoff, QCharParams};
use jumprl::estimation::{bootstrap_episodes, mjd_log_likelihood, ReturnSeries};
use jumprl::gp::{GpHyper, GpModel};
use jumprl::hedging::{gh_integral, GhRule, HedgeModel, HedgeParams, HedgeSetup};
use jumprl::market::{sample_log_return, MarketParams};
use jumprl::mv::{gibbs_mass, MvQParams};
use jumprl::quadrature::trapezoid;
use jumprl::rng::Streams;
use jumprl::stats::{ks_critical_1pct, ks_statistic};

fn market() -> impl Strategy<Value = MarketParams> {
    (
        -0.1..0.3f64,
        0.05..0.5f64,
        0.0..50.0f64,
        -0.1..0.05f64,
        0.005..0.1f64,
    )
        .prop_map(|(mu, sigma, lam, m, delta)| {
            MarketParams::new(mu, sigma, lam, m, delta, 0.0).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gibbs_density_integrates_to_one(
        phi1 in -3.0..3.0f64, phi2 in -1.0..4.0f64, phi3 in 0.0..1.0f64,
        t in 0.0..1.0f64, x in -2.0..4.0f64, omega in 0.5..6.0f64, theta in 0.01..1.0f64,
    ) {
        let mass = gibbs_mass(&MvQParams { phi1, phi2, phi3 }, t, x, omega, theta, 1.0);
        prop_assert!((mass - 1.0).abs() < 1e-8, "mass {mass}");
    }

    #[test]
    fn q_measure_is_a_martingale(p in market(), tau in 0.01..2.0f64) {
        let qp = QCharParams::from_market(&p).unwrap();
        let v = char_fn_q(Complex64::new(0.0, -1.0), tau, &qp);
        prop_assert!((v - 1.0).norm() < 1e-10);
        prop_assert!((char_fn_q(Complex64::new(0.0, 0.0), tau, &qp) - 1.0).norm() < 1e-14);
    }

    #[test]
    fn put_call_parity(p in market(), tau in 0.02..1.0f64, m in 0.85..1.15f64) {
        let strike = 100.0;
        let slice = |payoff| CosPricer {
            qp: QCharParams::from_market(&p).unwrap(),
            payoff,
            strike,
            n_terms: 512,
            width_multiplier: 12.0,
            band: (0.0, 0.0),
        }
        .slice(tau)
        .unwrap();
        let s = m * strike;
        let (call, put) = (slice(Payoff::Call).price(s), slice(Payoff::Put).price(s));
        prop_assert!((call - put - (s - strike)).abs() < 1e-6, "call {call} put {put}");
        prop_assert!(put >= (strike - s).max(0.0) - 1e-8);
    }

    #[test]
    fn gh_matches_trapezoid_for_smooth_integrands(lam in 0.0..50.0f64, m in -0.1..0.1f64, delta in 0.005..0.1f64) {
        let f = |z: f64| (z.exp() - 1.0).powi(2);
        let gh = gh_integral(f, lam, m, delta, &GhRule::new(20));
        let tr = lam * trapezoid(m - 12.0 * delta, m + 12.0 * delta, 20_000, |z| {
            f(z) * (-(z - m).powi(2) / (2.0 * delta * delta)).exp() / (delta * (2.0 * std::f64::consts::PI).sqrt())
        });
        prop_assert!((gh - tr).abs() <= 1e-9 * tr.abs().max(1e-12), "gh {gh} trapezoid {tr}");
    }

    #[test]
    fn running_reward_is_nonnegative(p in market(), k in 0usize..21, s in 60.0..140.0f64) {
        let setup = HedgeSetup::default();
        let model = HedgeModel::new(HedgeParams::from_market(&p).unwrap(), &setup).unwrap();
        let k = k.min(setup.n_steps - 1);
        let r = model.running_reward(k, s);
        prop_assert!(r >= 0.0 && r.is_finite(), "reward {r}");
        prop_assert!(model.policy_variance(k) > 0.0);
    }

    #[test]
    fn likelihood_truncation_is_stable(p in market(), seed in 0u64..1000) {
        let dt = 1.0 / 252.0;
        let mut rng = Streams::new(seed).stream(&[0]);
        let r: Vec<f64> = (0..50).map(|_| sample_log_return(&p, dt, &mut rng)).collect();
        let rs = ReturnSeries::new(dt, r).unwrap();
        let (a, b) = (mjd_log_likelihood(&rs, &p, 8), mjd_log_likelihood(&rs, &p, 12));
        prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "j_max 8: {a}, 12: {b}");
    }

    #[test]
    fn gp_is_invariant_to_input_order(
        pts in prop::collection::vec((-3.0..3.0f64, -2.0..2.0f64), 3..12),
        shift in 0usize..11,
        x in -4.0..4.0f64,
    ) {
        let hyper = GpHyper { lengthscale: 0.7, signal_var: 1.0, noise_var: 1e-3 };
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        let mut rot = pts.clone();
        rot.rotate_left(shift % pts.len());
        rot.reverse();
        let (xr, yr): (Vec<f64>, Vec<f64>) = rot.into_iter().unzip();
        let a = GpModel::fit(&xs, &ys, Some(hyper)).unwrap().predict_mean(x);
        let b = GpModel::fit(&xr, &yr, Some(hyper)).unwrap().predict_mean(x);
        prop_assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn gp_handles_repeated_inputs(x0 in -2.0..2.0f64, y0 in -1.0..1.0f64, n in 2usize..8) {
        let xs = vec![x0; n];
        let ys = vec![y0; n];
        let gp = GpModel::fit(&xs, &ys, None).unwrap();
        prop_assert!((gp.predict_mean(x0) - y0).abs() < 1e-6);
    }
}

/// Distribution function of one MJD log-return as a Poisson mixture of
/// normals, summed to negligible tail mass.
fn mjd_cdf(p: &MarketParams, dt: f64, x: f64) -> f64 {
    let mean_jumps = p.lam * dt;
    let mut weight = (-mean_jumps).exp();
    let mut total = 0.0;
    for n in 0..40 {
        if n > 0 {
            weight *= mean_jumps / n as f64;
        }
        let nf = n as f64;
        let mean = p.log_drift() * dt + nf * p.m;
        let sd = (p.sigma * p.sigma * dt + nf * p.delta * p.delta).sqrt();
        total += weight * Normal::new(mean, sd).unwrap().cdf(x);
    }
    total
}

#[test]
fn simulated_returns_follow_the_mixture_law() {
    let dt = 1.0 / 12.0;
    for (i, p) in [MarketParams::sp500_bs(), MarketParams::hedging_truth()]
        .iter()
        .enumerate()
    {
        let mut rng = Streams::new(11).stream(&[i as u64]);
        let xs: Vec<f64> = (0..20_000)
            .map(|_| sample_log_return(p, dt, &mut rng))
            .collect();
        let d = ks_statistic(&xs, |x| mjd_cdf(p, dt, x));
        assert!(d < ks_critical_1pct(xs.len() as f64), "KS {d} for {p:?}");
    }
}

#[test]
fn bootstrap_preserves_the_return_distribution() {
    let p = MarketParams::hedging_truth();
    let dt = 1.0 / 252.0;
    let streams = Streams::new(5);
    let mut rng = streams.stream(&[0]);
    let rs = ReturnSeries::new(
        dt,
        (0..2000)
            .map(|_| sample_log_return(&p, dt, &mut rng))
            .collect(),
    )
    .unwrap();
    let mut rng = streams.stream(&[1]);
    let paths = bootstrap_episodes(&rs, 1, 20_000, |_| 100.0, &mut rng).unwrap();
    let drawn: Vec<f64> = paths.iter().map(|q| (q[1] / q[0]).ln()).collect();
    // Empirical CDF of the source series as the reference.
    let mut sorted = rs.returns.clone();
    sorted.sort_by(f64::total_cmp);
    let ecdf = |x: f64| sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64;
    let d = ks_statistic(&drawn, ecdf);
    assert!(d < ks_critical_1pct(drawn.len() as f64), "KS {d}");
}
