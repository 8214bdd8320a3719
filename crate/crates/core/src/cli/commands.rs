//! One function per subcommand. Each reads its configuration section,
//! runs the experiment and hands its tables and reports to the artifact
//! writer.

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::artifacts::{sha256_hex, ArtifactDir};
use super::config::*;
use super::CliError;
use crate::cos::{black_scholes_put, CosPricer, Payoff, QCharParams};
use crate::estimation::{
    bs_log_likelihood, load_prices, mjd_log_likelihood, mjd_start, mle_bs, mle_mjd, ReturnSeries,
    TRADING_DAYS,
};
use crate::exploratory::{
    convergence_experiment, exploratory_reference, martingale_statistic, simulate_grid_batch,
    ConvergenceConfig, TestFn, TimeGrid, ValueEstimate,
};
use crate::hedging::{
    evaluate_hedging, simulate_test_paths, train_hedge, HedgeModel, HedgeParams, HedgeSetup,
    HedgeTrainConfig,
};
use crate::market::{sample_log_return, MarketParams};
use crate::mv::{
    train_offline, train_online, true_solution, MvLearnerState, MvProblem, MvRates, OfflineConfig,
    OnlineConfig, TrainReport, TrueSolution,
};
use crate::rng::{tag, Streams};

/// Result of a command: plain runs just succeed, checks pass or fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Check(bool),
}

pub struct Ctx<'a> {
    pub seed: u64,
    pub streams: Streams,
    pub out: &'a mut ArtifactDir,
}

fn invalid(e: String) -> CliError {
    CliError::Validation(e)
}

#[derive(Default, Serialize)]
struct PathRow {
    path: usize,
    step: usize,
    t: f64,
    price: f64,
}

#[derive(Default, Serialize)]
struct CloseRow {
    date: usize,
    close: f64,
}

pub fn simulate(s: &SimulateSection, ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let p = s.market.resolve().map_err(invalid)?;
    let n = check_step(s.horizon, s.dt).map_err(invalid)?;
    let dt = s.horizon / n as f64;
    let paths: Vec<Vec<f64>> = (0..s.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ctx.streams.stream(&[tag::ENVIRONMENT, i as u64]);
            let mut price = s.s0;
            let mut path = Vec::with_capacity(n + 1);
            path.push(price);
            for _ in 0..n {
                price *= sample_log_return(&p, dt, &mut rng).exp();
                path.push(price);
            }
            path
        })
        .collect();
    let rows: Vec<PathRow> = paths
        .iter()
        .enumerate()
        .flat_map(|(i, path)| {
            path.iter().enumerate().map(move |(k, &price)| PathRow {
                path: i,
                step: k,
                t: k as f64 * dt,
                price,
            })
        })
        .collect();
    ctx.out.csv("paths.csv", &rows)?;
    let closes: Vec<CloseRow> = paths[0]
        .iter()
        .enumerate()
        .map(|(date, &close)| CloseRow { date, close })
        .collect();
    ctx.out.csv("prices.csv", &closes)?;
    ctx.out.json(
        "report.json",
        &json!({ "market": p, "n_paths": s.n_paths, "n_steps": n, "dt": dt }),
    )?;
    Ok(Outcome::Done)
}

#[derive(Default, Serialize)]
struct FitRow {
    model: String,
    mu: f64,
    sigma: f64,
    lam: f64,
    m: f64,
    delta: f64,
    log_likelihood: f64,
}

impl FitRow {
    fn new(model: &str, p: &MarketParams, log_likelihood: f64) -> Self {
        Self {
            model: model.into(),
            mu: p.mu,
            sigma: p.sigma,
            lam: p.lam,
            m: p.m,
            delta: p.delta,
            log_likelihood,
        }
    }
}

pub fn estimate(s: &EstimateSection, ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let (rs, truth) = match &s.prices {
        Some(path) => (load_prices(path)?, None),
        None => {
            let p = s.market.resolve().map_err(invalid)?;
            let n = (s.years * TRADING_DAYS).round() as usize;
            let dt = 1.0 / TRADING_DAYS;
            let mut rng = ctx.streams.stream(&[tag::ESTIMATION, 0]);
            let r: Vec<f64> = (0..n)
                .map(|_| sample_log_return(&p, dt, &mut rng))
                .collect();
            (ReturnSeries::new(dt, r)?, Some(p))
        }
    };
    let (mu, sigma) = mle_bs(&rs)?;
    let bs = MarketParams::black_scholes(mu, sigma);
    let bs_ll = bs_log_likelihood(&rs, mu, sigma);
    let fit = mle_mjd(&rs, &mjd_start(&rs)?, s.j_max, s.n_starts, &ctx.streams)?;
    let mut rows = vec![
        FitRow::new("bs", &bs, bs_ll),
        FitRow::new("mjd", &fit.params, fit.log_likelihood),
    ];
    let truth_ll = truth.map(|p| mjd_log_likelihood(&rs, &p, s.j_max));
    if let (Some(p), Some(ll)) = (truth, truth_ll) {
        rows.push(FitRow::new("truth", &p, ll));
    }
    ctx.out.csv("parameters.csv", &rows)?;
    ctx.out.json(
        "estimate.json",
        &json!({
            "n_returns": rs.len(),
            "dt": rs.dt,
            "bs": { "params": bs, "log_likelihood": bs_ll },
            "mjd": fit,
            "truth": truth.map(|p| json!({ "params": p, "log_likelihood": truth_ll })),
        }),
    )?;
    Ok(Outcome::Done)
}

#[derive(Default, Serialize)]
struct MvParamRow {
    source: String,
    psi1: f64,
    psi2: f64,
    psi3: f64,
    phi1: f64,
    phi2: f64,
    phi3: f64,
    omega: f64,
}

impl MvParamRow {
    fn learned(s: &MvLearnerState) -> Self {
        Self {
            source: "learned".into(),
            psi1: s.psi.psi1,
            psi2: s.psi.psi2,
            psi3: s.psi.psi3,
            phi1: s.phi.phi1,
            phi2: s.phi.phi2,
            phi3: s.phi.phi3,
            omega: s.omega,
        }
    }

    fn truth(t: &TrueSolution) -> Self {
        Self {
            source: "true".into(),
            psi1: t.psi.psi1,
            psi2: t.psi.psi2,
            psi3: t.psi.psi3,
            phi1: t.phi.phi1,
            phi2: t.phi.phi2,
            phi3: t.phi.phi3,
            omega: t.omega,
        }
    }
}

fn default_rates(p: &MarketParams, online: bool) -> MvRates {
    match (p.lam == 0.0, online) {
        (true, false) => MvRates::offline_bs(),
        (false, false) => MvRates::offline_mjd(),
        (true, true) => MvRates::online_bs(),
        (false, true) => MvRates::online_mjd(),
    }
}

fn write_mv(
    ctx: &mut Ctx,
    report: &TrainReport,
    p: &MarketParams,
    problem: &MvProblem,
    rates: &MvRates,
) -> Result<(), CliError> {
    let truth = true_solution(p, problem.theta, problem.horizon, problem.z, problem.x0).ok();
    let mut rows = vec![MvParamRow::learned(&report.final_state)];
    rows.extend(truth.as_ref().map(MvParamRow::truth));
    ctx.out.csv("history.csv", &report.history)?;
    ctx.out.csv("parameters.csv", &rows)?;
    ctx.out.json(
        "report.json",
        &json!({ "final_state": report.final_state, "true_solution": truth, "rates": rates, "problem": problem }),
    )?;
    Ok(())
}

pub fn train_mv_offline(s: &MvOfflineSection, ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let p = s.market.resolve().map_err(invalid)?;
    let problem = MvProblem {
        horizon: s.horizon,
        dt: s.dt,
        x0: s.x0,
        z: s.z,
        theta: s.theta,
    };
    let rates = s.rates.unwrap_or_else(|| default_rates(&p, false));
    let cfg = OfflineConfig {
        problem,
        rates,
        iterations: s.iterations,
        episodes_per_iter: s.episodes_per_iter,
        omega_every: s.omega_every,
        omega_init: s.omega_init,
    };
    let report = train_offline(&cfg, &p, &ctx.streams)?;
    write_mv(ctx, &report, &p, &problem, &rates)?;
    Ok(Outcome::Done)
}

pub fn train_mv_online(s: &MvOnlineSection, ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let p = s.market.resolve().map_err(invalid)?;
    let problem = MvProblem {
        horizon: s.horizon,
        dt: s.dt,
        x0: s.x0,
        z: s.z,
        theta: s.theta,
    };
    let rates = s.rates.unwrap_or_else(|| default_rates(&p, true));
    let cfg = OnlineConfig {
        problem,
        rates,
        iterations: s.iterations,
        batch_steps: s.batch_steps,
        omega_every_steps: s.omega_every_steps,
        omega_init: s.omega_init,
    };
    let report = train_online(&cfg, &p, &ctx.streams)?;
    write_mv(ctx, &report, &p, &problem, &rates)?;
    Ok(Outcome::Done)
}

#[derive(Default, Serialize)]
struct EvalRow {
    policy: String,
    mse: f64,
    std_err: f64,
    n: usize,
}

fn evaluate(
    named: &[(String, HedgeParams)],
    setup: &HedgeSetup,
    env: &MarketParams,
    n: usize,
    streams: &Streams,
) -> Result<Vec<EvalRow>, CliError> {
    let paths = simulate_test_paths(setup, env, n, streams)?;
    named
        .iter()
        .map(|(name, hp)| {
            let model = HedgeModel::new(*hp, setup)?;
            let r = evaluate_hedging(&model, &paths, setup);
            Ok(EvalRow {
                policy: name.clone(),
                mse: r.mean,
                std_err: r.std_err,
                n: r.n,
            })
        })
        .collect()
}

pub fn train_hedge_cmd(s: &TrainHedgeSection, ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let env = s.env.resolve().map_err(invalid)?;
    let init = HedgeParams::from_market(&s.init.resolve().map_err(invalid)?)?;
    let cfg = HedgeTrainConfig {
        setup: s.setup.clone(),
        rates: s.rates,
        iterations: s.iterations,
        episodes_per_iter: s.episodes_per_iter,
        beta: s.beta,
        gp_hyper: s.gp_hyper,
    };
    let report = train_hedge(&cfg, init, &env, &ctx.streams)?;
    let named = [
        ("initial".to_string(), report.initial),
        ("learned".to_string(), report.final_params),
    ];
    let eval = evaluate(&named, &s.setup, &env, s.test_episodes, &ctx.streams)?;
    ctx.out.csv("history.csv", &report.history)?;
    ctx.out.csv("evaluation.csv", &eval)?;
    ctx.out.json("params.json", &report)?;
    Ok(Outcome::Done)
}

/// Parameters stored by `train-hedge` (its final parameters) or a bare
/// parameter record.
fn read_params(path: &PathBuf) -> Result<HedgeParams, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let v = v.get("final_params").cloned().unwrap_or(v);
    let hp: HedgeParams = serde_json::from_value(v)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    // Re-derive the dependent parameters rather than trusting the file.
    Ok(HedgeParams::new(hp.phi, hp.rf)?)
}

pub fn eval_hedge(s: &EvalHedgeSection, ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let env = s.env.resolve().map_err(invalid)?;
    let named = s
        .policies
        .iter()
        .map(|pol| {
            let hp = match (&pol.market, &pol.params_file) {
                (Some(m), _) => HedgeParams::from_market(&m.resolve().map_err(invalid)?)?,
                (None, Some(f)) => read_params(f)?,
                (None, None) => {
                    return Err(invalid(format!("policy {} has no parameters", pol.name)))
                }
            };
            Ok((pol.name.clone(), hp))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let eval = evaluate(&named, &s.setup, &env, s.test_episodes, &ctx.streams)?;
    ctx.out.csv("evaluation.csv", &eval)?;
    ctx.out.json(
        "policies.json",
        &named
            .iter()
            .map(|(n, hp)| json!({ "name": n, "params": hp }))
            .collect::<Vec<_>>(),
    )?;
    Ok(Outcome::Done)
}

#[derive(Default, Serialize)]
struct GapRow {
    n_steps: usize,
    mesh: f64,
    value: f64,
    std_err: f64,
    gap: f64,
    gap_se: f64,
    inconclusive: bool,
}

#[derive(Serialize, Deserialize)]
struct CachedReference {
    key: String,
    reference: ValueEstimate,
}

const REFERENCE_STREAM: u64 = 0x5245_4631;

/// Monte Carlo reference of the exploratory process, reused across runs
/// whose inputs hash to the same key.
fn cached_reference(
    s: &ConvergenceSection,
    ts: &TrueSolution,
    p: &MarketParams,
    cc: &ConvergenceConfig,
    ctx: &mut Ctx,
) -> Result<(ValueEstimate, bool), CliError> {
    let dir = s
        .cache_dir
        .clone()
        .unwrap_or_else(|| ctx.out.root().join("cache"));
    let inputs = json!({
        "market": p, "horizon": s.horizon, "x0": s.x0, "z": s.z, "theta": s.theta,
        "dt": s.reference_dt, "paths": s.reference_paths, "seed": ctx.seed,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let key = sha256_hex(inputs.to_string().as_bytes());
    let file = dir.join(format!("reference-{key}.json"));
    if let Ok(text) = fs::read_to_string(&file) {
        if let Ok(c) = serde_json::from_str::<CachedReference>(&text) {
            if c.key == key {
                log::info!("using cached reference {}", file.display());
                return Ok((c.reference, true));
            }
        }
    }
    let pol = ts.policy();
    let reference = exploratory_reference(
        &pol,
        s.reference_dt,
        cc,
        ts.omega,
        p,
        s.reference_paths,
        &ctx.streams.child(REFERENCE_STREAM),
    )?;
    fs::create_dir_all(&dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    let text = serde_json::to_string_pretty(&CachedReference { key, reference })
        .map_err(crate::Error::from)?;
    fs::write(&file, text).map_err(|e| CliError::Output(format!("{}: {e}", file.display())))?;
    Ok((reference, false))
}

pub fn convergence(s: &ConvergenceSection, ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let p = s.market.resolve().map_err(invalid)?;
    let ts = true_solution(&p, s.theta, s.horizon, s.z, s.x0)?;
    let cc = ConvergenceConfig {
        horizon: s.horizon,
        x0: s.x0,
        z: s.z,
        theta: s.theta,
        n_steps: s.n_steps.clone(),
        n_paths: s.n_paths,
    };
    let (reference, cached) = match s.reference {
        ReferenceKind::ClosedForm => (
            ValueEstimate {
                mean: ts.value(0.0, s.x0),
                std_err: 0.0,
                n_paths: 0,
            },
            false,
        ),
        ReferenceKind::MonteCarlo => cached_reference(s, &ts, &p, &cc, ctx)?,
    };
    let report = convergence_experiment(&ts.policy(), &cc, &p, reference, &ctx.streams)?;
    let rows: Vec<GapRow> = report
        .rows
        .iter()
        .map(|r| GapRow {
            n_steps: r.n_steps,
            mesh: r.mesh,
            value: r.value.mean,
            std_err: r.value.std_err,
            gap: r.gap,
            gap_se: r.gap_se,
            inconclusive: r.inconclusive,
        })
        .collect();
    let pass =
        !report.inconclusive && report.slope >= s.slope_band.0 && report.slope <= s.slope_band.1;
    ctx.out.csv("convergence.csv", &rows)?;
    ctx.out.json(
        "report.json",
        &json!({
            "reference": report.reference, "reference_kind": s.reference, "reference_cached": cached,
            "slope": report.slope, "intercept": report.intercept, "inconclusive": report.inconclusive,
            "slope_band": s.slope_band, "pass": pass,
        }),
    )?;
    Ok(Outcome::Check(pass))
}

#[derive(Default, Serialize)]
struct StatRow {
    test_fn: String,
    mean: f64,
    std_err: f64,
    z_score: f64,
    pass: bool,
}

pub fn martingale_check(s: &MartingaleSection, ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let p = s.market.resolve().map_err(invalid)?;
    let n = check_step(s.horizon, s.dt).map_err(invalid)?;
    let ts = true_solution(&p, s.theta, s.horizon, s.z, s.x0)?;
    let grid = TimeGrid::new(0.0, s.horizon, n)?;
    let eps = simulate_grid_batch(&ts.policy(), &grid, s.x0, &p, &ctx.streams, s.n_episodes)?;
    let (w, k) = (ts.omega, ts.phi.phi1);
    let one = |_: f64, _: f64, _: f64| 1.0;
    let time = |t: f64, _: f64, _: f64| t;
    let dev = move |_: f64, x: f64, _: f64| x - w;
    let centred = move |_: f64, x: f64, a: f64| a + k * (x - w);
    let names = ["1", "t", "x-omega", "a+phi1(x-omega)"];
    let fns: [TestFn<'_>; 4] = [&one, &time, &dev, &centred];
    // The shift is applied to q in the reward convention.
    let stats = martingale_statistic(
        &eps,
        |t, x| ts.value(t, x),
        |t, x, a| ts.q_cost(t, x, a) - s.q_shift,
        s.beta,
        &fns,
    )?;
    let rows: Vec<StatRow> = names
        .iter()
        .zip(&stats)
        .map(|(name, st)| {
            let z = st.z_score(0.0);
            StatRow {
                test_fn: name.to_string(),
                mean: st.mean,
                std_err: st.std_err,
                z_score: z,
                pass: z.abs() <= s.n_se,
            }
        })
        .collect();
    let pass = rows.iter().all(|r| r.pass);
    ctx.out.csv("martingale.csv", &rows)?;
    ctx.out.json(
        "report.json",
        &json!({ "pass": pass, "n_episodes": s.n_episodes, "q_shift": s.q_shift, "n_se": s.n_se }),
    )?;
    Ok(Outcome::Check(pass))
}

#[derive(Default, Serialize)]
struct PriceRow {
    tau: f64,
    spot: f64,
    price: f64,
    delta: f64,
}

pub fn price(s: &PriceSection, ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let p = s.market.resolve().map_err(invalid)?;
    let qp = QCharParams::from_market(&p)?;
    let lo = s.spots.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.spots.iter().copied().fold(0.0, f64::max);
    let pricer = CosPricer {
        qp,
        payoff: s.payoff,
        strike: s.strike,
        n_terms: s.n_terms,
        width_multiplier: s.width,
        band: ((lo / s.strike).ln(), (hi / s.strike).ln()),
    };
    let mut rows = Vec::with_capacity(s.taus.len() * s.spots.len());
    let mut bs_err: f64 = 0.0;
    for &tau in &s.taus {
        let slice = pricer.slice(tau)?;
        for &spot in &s.spots {
            let (price, delta) = slice.price_and_delta(spot);
            if p.lam == 0.0 {
                let (put, put_delta) = black_scholes_put(spot, s.strike, p.sigma, tau);
                let (v, d) = match s.payoff {
                    Payoff::Put => (put, put_delta),
                    Payoff::Call => (put + spot - s.strike, put_delta + 1.0),
                };
                bs_err = bs_err.max((price - v).abs()).max((delta - d).abs());
            }
            rows.push(PriceRow {
                tau,
                spot,
                price,
                delta,
            });
        }
    }
    ctx.out.csv("prices.csv", &rows)?;
    let reference = (p.lam == 0.0).then_some(bs_err);
    ctx.out.json(
        "report.json",
        &json!({ "market": p, "black_scholes_max_abs_error": reference }),
    )?;
    Ok(Outcome::Done)
}
