//! Experiment configuration: one TOML file with a table per subcommand.
//!
//! Every field has a default matching the published protocols, so an empty
//! file (or no file at all) reproduces them. Relative paths are resolved
//! against the directory holding the configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cos::Payoff;
use crate::gp::GpHyper;
use crate::hedging::{HedgeRates, HedgeSetup};
use crate::market::MarketParams;
use crate::mv::MvRates;

/// A market either by preset name or as explicit parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MarketChoice {
    Preset(String),
    Custom(MarketParams),
}

pub const PRESETS: [&str; 4] = ["sp500-bs", "sp500-mjd", "hedging-truth", "hedging-mle"];

impl MarketChoice {
    fn preset(name: &str) -> Self {
        MarketChoice::Preset(name.to_string())
    }

    pub fn resolve(&self) -> Result<MarketParams, String> {
        let p = match self {
            MarketChoice::Preset(name) => match name.as_str() {
                "sp500-bs" => MarketParams::sp500_bs(),
                "sp500-mjd" => MarketParams::sp500_mjd(),
                "hedging-truth" => MarketParams::hedging_truth(),
                "hedging-mle" => MarketParams::hedging_mle(),
                other => {
                    return Err(format!(
                        "unknown market preset {other:?}; expected one of {PRESETS:?}"
                    ))
                }
            },
            MarketChoice::Custom(p) => *p,
        };
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub simulate: SimulateSection,
    pub estimate: EstimateSection,
    pub train_mv_offline: MvOfflineSection,
    pub train_mv_online: MvOnlineSection,
    pub train_hedge: TrainHedgeSection,
    pub eval_hedge: EvalHedgeSection,
    pub convergence: ConvergenceSection,
    pub martingale_check: MartingaleSection,
    pub price: PriceSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub market: MarketChoice,
    pub s0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            market: MarketChoice::preset("sp500-mjd"),
            s0: 100.0,
            horizon: 1.0,
            dt: 1.0 / 252.0,
            n_paths: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    /// Daily closes; when absent a path is simulated from `market`.
    pub prices: Option<PathBuf>,
    pub market: MarketChoice,
    pub years: f64,
    pub j_max: usize,
    pub n_starts: usize,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            prices: None,
            market: MarketChoice::preset("hedging-truth"),
            years: 15.0,
            j_max: 10,
            n_starts: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MvOfflineSection {
    pub market: MarketChoice,
    pub horizon: f64,
    pub dt: f64,
    pub x0: f64,
    pub z: f64,
    pub theta: f64,
    pub iterations: usize,
    pub episodes_per_iter: usize,
    pub omega_every: usize,
    pub omega_init: f64,
    /// Defaults to the published rates for the chosen simulator.
    pub rates: Option<MvRates>,
}

impl Default for MvOfflineSection {
    fn default() -> Self {
        Self {
            market: MarketChoice::preset("sp500-bs"),
            horizon: 1.0,
            dt: 1.0 / 252.0,
            x0: 1.0,
            z: 1.4,
            theta: 0.1,
            iterations: 20_000,
            episodes_per_iter: 32,
            omega_every: 10,
            omega_init: 1.4,
            rates: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MvOnlineSection {
    pub market: MarketChoice,
    pub horizon: f64,
    pub dt: f64,
    pub x0: f64,
    pub z: f64,
    pub theta: f64,
    pub iterations: usize,
    pub batch_steps: usize,
    pub omega_every_steps: usize,
    pub omega_init: f64,
    pub rates: Option<MvRates>,
}

impl Default for MvOnlineSection {
    fn default() -> Self {
        Self {
            market: MarketChoice::preset("sp500-mjd"),
            horizon: 1.0,
            dt: 1.0 / 252.0,
            x0: 1.0,
            z: 1.4,
            theta: 0.1,
            iterations: 20_000,
            batch_steps: 128,
            omega_every_steps: 252,
            omega_init: 1.4,
            rates: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHedgeSection {
    pub env: MarketChoice,
    pub init: MarketChoice,
    pub iterations: usize,
    pub episodes_per_iter: usize,
    pub beta: f64,
    pub test_episodes: usize,
    pub gp_hyper: Option<GpHyper>,
    pub setup: HedgeSetup,
    pub rates: HedgeRates,
}

impl Default for TrainHedgeSection {
    fn default() -> Self {
        Self {
            env: MarketChoice::preset("hedging-truth"),
            init: MarketChoice::preset("hedging-mle"),
            iterations: 100,
            episodes_per_iter: 32,
            beta: 0.0,
            test_episodes: 500,
            gp_hyper: None,
            setup: HedgeSetup::default(),
            rates: HedgeRates::default(),
        }
    }
}

/// A hedging rule to evaluate: plug-in parameters of a market, or the
/// learned parameters stored by `train-hedge` in `params.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPolicy {
    pub name: String,
    #[serde(default)]
    pub market: Option<MarketChoice>,
    #[serde(default)]
    pub params_file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalHedgeSection {
    pub env: MarketChoice,
    pub test_episodes: usize,
    pub policies: Vec<EvalPolicy>,
    pub setup: HedgeSetup,
}

impl Default for EvalHedgeSection {
    fn default() -> Self {
        Self {
            env: MarketChoice::preset("hedging-truth"),
            test_episodes: 500,
            policies: vec![
                EvalPolicy {
                    name: "plug-in".into(),
                    market: Some(MarketChoice::preset("hedging-mle")),
                    params_file: None,
                },
                EvalPolicy {
                    name: "truth".into(),
                    market: Some(MarketChoice::preset("hedging-truth")),
                    params_file: None,
                },
            ],
            setup: HedgeSetup::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// Closed-form optimal value, exact for the optimal policy.
    ClosedForm,
    /// Monte Carlo of the exploratory process, cached on disk.
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    pub market: MarketChoice,
    pub horizon: f64,
    pub x0: f64,
    pub z: f64,
    pub theta: f64,
    pub n_steps: Vec<usize>,
    pub n_paths: usize,
    pub reference: ReferenceKind,
    pub reference_dt: f64,
    pub reference_paths: usize,
    /// Defaults to `<out>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub slope_band: (f64, f64),
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            market: MarketChoice::preset("sp500-bs"),
            horizon: 1.0,
            x0: 1.0,
            z: 1.4,
            theta: 0.1,
            n_steps: vec![4, 8, 16, 32, 64],
            n_paths: 200_000,
            reference: ReferenceKind::ClosedForm,
            reference_dt: 1.0 / 1024.0,
            reference_paths: 20_000,
            cache_dir: None,
            slope_band: (0.7, 1.3),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MartingaleSection {
    pub market: MarketChoice,
    pub horizon: f64,
    pub dt: f64,
    pub x0: f64,
    pub z: f64,
    pub theta: f64,
    pub n_episodes: usize,
    pub beta: f64,
    /// Constant added to the candidate q-function.
    pub q_shift: f64,
    pub n_se: f64,
}

impl Default for MartingaleSection {
    fn default() -> Self {
        Self {
            market: MarketChoice::preset("sp500-mjd"),
            horizon: 1.0,
            dt: 1.0 / 252.0,
            x0: 1.0,
            z: 1.1,
            theta: 0.1,
            n_episodes: 10_000,
            beta: 0.0,
            q_shift: 0.0,
            n_se: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceSection {
    pub market: MarketChoice,
    pub payoff: Payoff,
    pub strike: f64,
    pub spots: Vec<f64>,
    pub taus: Vec<f64>,
    pub n_terms: usize,
    pub width: f64,
}

impl Default for PriceSection {
    fn default() -> Self {
        Self {
            market: MarketChoice::preset("hedging-truth"),
            payoff: Payoff::Put,
            strike: 100.0,
            spots: vec![80.0, 90.0, 100.0, 110.0, 120.0],
            taus: vec![1.0 / 12.0, 1.0 / 3.0],
            n_terms: 256,
            width: 10.0,
        }
    }
}

impl ExperimentConfig {
    /// Parse a configuration file and make its relative paths absolute.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.estimate.prices.as_mut() {
            fix(p);
        }
        for pol in &mut cfg.eval_hedge.policies {
            if let Some(p) = pol.params_file.as_mut() {
                fix(p);
            }
        }
        if let Some(p) = cfg.convergence.cache_dir.as_mut() {
            fix(p);
        }
        Ok(cfg)
    }
}

/// `dt` must divide `horizon` to within 1e-12.
pub fn check_step(horizon: f64, dt: f64) -> Result<usize, String> {
    if !(horizon > 0.0 && dt > 0.0 && horizon.is_finite()) {
        return Err(format!("horizon {horizon} and step {dt} must be positive"));
    }
    let n = (horizon / dt).round();
    if n < 1.0 || (n * dt - horizon).abs() > 1e-12 {
        return Err(format!("step {dt} does not divide horizon {horizon}"));
    }
    Ok(n as usize)
}

fn positive(name: &str, v: f64) -> Result<(), String> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be positive, got {v}"))
    }
}

fn nonzero(name: &str, v: usize) -> Result<(), String> {
    if v > 0 {
        Ok(())
    } else {
        Err(format!("{name} must be positive"))
    }
}

fn existing_file(name: &str, p: &Path) -> Result<(), String> {
    if p.is_file() {
        Ok(())
    } else {
        Err(format!("{name}: {} is not a readable file", p.display()))
    }
}

impl SimulateSection {
    pub fn validate(&self) -> Result<(), String> {
        self.market.resolve()?;
        positive("s0", self.s0)?;
        check_step(self.horizon, self.dt)?;
        nonzero("n_paths", self.n_paths)
    }
}

impl EstimateSection {
    pub fn validate(&self) -> Result<(), String> {
        match &self.prices {
            Some(p) => existing_file("prices", p)?,
            None => {
                self.market.resolve()?;
                positive("years", self.years)?;
            }
        }
        if self.j_max < 3 {
            return Err(format!("j_max must be at least 3, got {}", self.j_max));
        }
        nonzero("n_starts", self.n_starts)
    }
}

impl MvOfflineSection {
    pub fn validate(&self) -> Result<(), String> {
        self.market.resolve()?;
        check_step(self.horizon, self.dt)?;
        positive("theta", self.theta)?;
        nonzero("episodes_per_iter", self.episodes_per_iter)?;
        nonzero("omega_every", self.omega_every)
    }
}

impl MvOnlineSection {
    pub fn validate(&self) -> Result<(), String> {
        self.market.resolve()?;
        check_step(self.horizon, self.dt)?;
        positive("theta", self.theta)?;
        nonzero("batch_steps", self.batch_steps)?;
        nonzero("omega_every_steps", self.omega_every_steps)
    }
}

impl TrainHedgeSection {
    pub fn validate(&self) -> Result<(), String> {
        self.env.resolve()?;
        self.init.resolve()?;
        self.setup.validate().map_err(|e| e.to_string())?;
        nonzero("episodes_per_iter", self.episodes_per_iter)?;
        nonzero("test_episodes", self.test_episodes)
    }
}

impl EvalHedgeSection {
    pub fn validate(&self) -> Result<(), String> {
        self.env.resolve()?;
        self.setup.validate().map_err(|e| e.to_string())?;
        nonzero("test_episodes", self.test_episodes)?;
        if self.policies.is_empty() {
            return Err("at least one policy is required".into());
        }
        for p in &self.policies {
            match (&p.market, &p.params_file) {
                (Some(m), None) => {
                    m.resolve()?;
                }
                (None, Some(f)) => existing_file(&format!("policy {}", p.name), f)?,
                _ => {
                    return Err(format!(
                        "policy {} needs exactly one of market, params_file",
                        p.name
                    ))
                }
            }
        }
        Ok(())
    }
}

impl ConvergenceSection {
    pub fn validate(&self) -> Result<(), String> {
        self.market.resolve()?;
        positive("horizon", self.horizon)?;
        positive("theta", self.theta)?;
        if self.n_steps.len() < 4 {
            return Err("n_steps needs at least four meshes".into());
        }
        nonzero("n_paths", self.n_paths)?;
        if self.reference == ReferenceKind::MonteCarlo {
            check_step(self.horizon, self.reference_dt)?;
            nonzero("reference_paths", self.reference_paths)?;
        }
        if self.slope_band.0 > self.slope_band.1 {
            return Err(format!("empty slope band {:?}", self.slope_band));
        }
        Ok(())
    }
}

impl MartingaleSection {
    pub fn validate(&self) -> Result<(), String> {
        self.market.resolve()?;
        check_step(self.horizon, self.dt)?;
        positive("theta", self.theta)?;
        positive("n_se", self.n_se)?;
        if self.n_episodes < 2 {
            return Err("n_episodes must be at least 2".into());
        }
        Ok(())
    }
}

impl PriceSection {
    pub fn validate(&self) -> Result<(), String> {
        self.market.resolve()?;
        positive("strike", self.strike)?;
        positive("width", self.width)?;
        nonzero("n_terms", self.n_terms)?;
        if self.spots.is_empty() || self.taus.is_empty() {
            return Err("spots and taus must be nonempty".into());
        }
        for &s in &self.spots {
            positive("spot", s)?;
        }
        for &t in &self.taus {
            positive("tau", t)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: ExperimentConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.train_mv_offline.iterations, 20_000);
        assert!((cfg.simulate.dt - 1.0 / 252.0).abs() < 1e-15);
    }

    #[test]
    fn partial_sections_and_custom_markets() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            seed = 9
            [train-mv-offline]
            iterations = 0
            market = { mu = 0.1, sigma = 0.2, lam = 0.0, m = 0.0, delta = 0.0 }
            [train-hedge.setup]
            n_steps = 21
            horizon = 0.08333333333333333
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.train_mv_offline.iterations, 0);
        assert_eq!(cfg.train_mv_offline.market.resolve().unwrap().mu, 0.1);
        assert_eq!(cfg.train_hedge.setup.n_steps, 21);
        assert_eq!(cfg.train_hedge.setup.strike, 100.0);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("[simulate]\nn_path = 3").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[simulat]").is_err());
    }

    #[test]
    fn step_must_divide_horizon() {
        assert_eq!(check_step(1.0, 1.0 / 252.0).unwrap(), 252);
        assert!(check_step(1.0, 0.3).is_err());
        assert!(check_step(1.0, 0.0).is_err());
    }

    #[test]
    fn unknown_preset_is_reported() {
        assert!(MarketChoice::Preset("nikkei".into()).resolve().is_err());
    }
}
