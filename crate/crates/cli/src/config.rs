//! Run configuration: flat dotted keys from a config file, overridable by
//! command-line flags of the same names and by the seed environment variable.
//!
//! Precedence, lowest to highest: profile defaults, config file, the
//! `MATCHSIM_SEED` environment variable, command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use matchsim::gap::{GridSpec, Hyperparams, ModelMode};
use matchsim::market::{LogNormalParams, MarketConfig};
use matchsim::policy::{BatchSource, HybridConfig, PolicyKind};

pub const SEED_ENV_VAR: &str = "MATCHSIM_SEED";

/// Configuration problem: wrong key, unparsable value, inconsistent settings.
/// Exits with code 1, as opposed to runtime failures (code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicySelect {
    Greedy,
    Patient,
    Hybrid,
}

impl fmt::Display for PolicySelect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySelect::Greedy => write!(f, "greedy"),
            PolicySelect::Patient => write!(f, "patient"),
            PolicySelect::Hybrid => write!(f, "hybrid"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    None,
    Density(Vec<f64>),
    Tau(Vec<f64>),
    Window(Vec<f64>),
}

/// Everything a harness command needs, in one resolved bundle.
#[derive(Debug, Clone)]
pub struct Settings {
    pub market: MarketConfig,
    pub policy: PolicySelect,
    pub hybrid: HybridConfig,
    /// Independent runs per configuration point.
    pub k: u32,
    /// Master seed; per-run seeds derive from (master, sweep index, run index).
    pub seed: u64,
    pub sweep: SweepAxis,
    pub out: PathBuf,
    pub model_path: Option<PathBuf>,
    pub workers: usize,
    pub grid: GridSpec,
    pub taus: Vec<f64>,
    pub hyper: Hyperparams,
    /// Schedule-report interval; defaults to the measurement window.
    pub interval: Option<(f64, f64)>,
    /// Mean waits over matched agents only (drops censored waits).
    pub matched_only_wait: bool,
}

impl Settings {
    /// Named parameter profile: `desk` halves the horizon for quick runs,
    /// `paper` uses the full-scale defaults.
    pub fn profile(name: &str) -> Result<Self, ConfigError> {
        let (horizon, warmup) = match name {
            "desk" => (50.0, 25.0),
            "paper" => (100.0, 50.0),
            other => return err(format!("unknown profile `{other}` (expected desk or paper)")),
        };
        Ok(Settings {
            market: MarketConfig {
                lambda: 100.0,
                p: 0.08,
                horizon,
                warmup,
                seed: 2024,
                departure: LogNormalParams { mu: -1.5, sigma: 0.5 },
            },
            policy: PolicySelect::Hybrid,
            hybrid: HybridConfig::new(0.10, 0.3),
            k: 10,
            seed: 2024,
            sweep: SweepAxis::None,
            out: PathBuf::from("out"),
            model_path: None,
            workers: 0,
            grid: GridSpec::default(),
            taus: vec![0.01, 0.10, 0.15],
            hyper: Hyperparams::default(),
            interval: None,
            matched_only_wait: false,
        })
    }

    /// Apply one dotted key. Both the config-file parser and the CLI flag
    /// layer funnel through here so validation is uniform.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |what: &str| ConfigError(format!("key `{key}`: invalid {what} `{value}`"));
        let f64v = || value.parse::<f64>().map_err(|_| bad("number"));
        let u64v = || value.parse::<u64>().map_err(|_| bad("integer"));
        let list = || -> Result<Vec<f64>, ConfigError> {
            value
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| bad("number list")))
                .collect()
        };
        match key {
            "market.lambda" => self.market.lambda = f64v()?,
            "market.p" => self.market.p = f64v()?,
            "market.d" => {
                let d = f64v()?;
                if self.market.lambda <= 0.0 {
                    return err("market.d requires a positive market.lambda");
                }
                self.market.p = d / self.market.lambda;
            }
            "market.T" => self.market.horizon = f64v()?,
            "market.T0" => self.market.warmup = f64v()?,
            "market.mu" => self.market.departure.mu = f64v()?,
            "market.sigma" => self.market.departure.sigma = f64v()?,
            "hybrid.tau" => self.hybrid.tau = f64v()?,
            "hybrid.w" => self.hybrid.w = f64v()?,
            "hybrid.min_samples" => self.hybrid.min_samples = u64v()? as usize,
            "hybrid.initial" => {
                self.hybrid.initial_policy = match value {
                    "greedy" => PolicyKind::Greedy,
                    "patient" => PolicyKind::Patient,
                    _ => return Err(bad("policy kind")),
                }
            }
            "hybrid.batch_source" => {
                self.hybrid.batch_source = match value {
                    "reported" => BatchSource::ReportedSojourns,
                    "observed" => BatchSource::ObservedPerishes,
                    _ => return Err(bad("batch source (reported|observed)")),
                }
            }
            "experiment.policy" => {
                self.policy = match value {
                    "greedy" => PolicySelect::Greedy,
                    "patient" => PolicySelect::Patient,
                    "hybrid" => PolicySelect::Hybrid,
                    _ => return Err(bad("policy")),
                }
            }
            "experiment.k" => self.k = u64v()? as u32,
            "experiment.seed" => self.seed = u64v()?,
            "experiment.workers" => self.workers = u64v()? as usize,
            "sweep.axis" => {
                self.sweep = match value {
                    "none" => SweepAxis::None,
                    "d" => SweepAxis::Density(default_axis_values(&self.sweep)),
                    "tau" => SweepAxis::Tau(default_axis_values(&self.sweep)),
                    "w" => SweepAxis::Window(default_axis_values(&self.sweep)),
                    _ => return Err(bad("sweep axis (none|d|tau|w)")),
                }
            }
            "sweep.values" => {
                let values = list()?;
                self.sweep = match &self.sweep {
                    SweepAxis::None => {
                        return err("set sweep.axis before sweep.values");
                    }
                    SweepAxis::Density(_) => SweepAxis::Density(values),
                    SweepAxis::Tau(_) => SweepAxis::Tau(values),
                    SweepAxis::Window(_) => SweepAxis::Window(values),
                }
            }
            "output.path" => self.out = PathBuf::from(value),
            "model.path" => self.model_path = Some(PathBuf::from(value)),
            "grid.mu_min" => self.grid.mu_min = f64v()?,
            "grid.mu_max" => self.grid.mu_max = f64v()?,
            "grid.mu_step" => self.grid.mu_step = f64v()?,
            "grid.sigma_min" => self.grid.sigma_min = f64v()?,
            "grid.sigma_max" => self.grid.sigma_max = f64v()?,
            "grid.sigma_step" => self.grid.sigma_step = f64v()?,
            "heatmap.taus" => self.taus = list()?,
            "calibrate.mode" => {
                self.hyper.mode = match value {
                    "regress" => ModelMode::Regress,
                    "classify" => ModelMode::Classify { tau: self.hybrid.tau },
                    _ => return Err(bad("mode (regress|classify)")),
                }
            }
            "calibrate.epochs" => self.hyper.max_epochs = u64v()? as usize,
            "calibrate.lr" => self.hyper.learning_rate = f64v()?,
            "calibrate.holdout" => self.hyper.holdout_frac = f64v()?,
            "schedule.from" => {
                let to = self.interval.map(|(_, t)| t).unwrap_or(self.market.horizon);
                self.interval = Some((f64v()?, to));
            }
            "schedule.to" => {
                let from = self.interval.map(|(f, _)| f).unwrap_or(self.market.warmup);
                self.interval = Some((from, f64v()?));
            }
            "metrics.matched_only_wait" => {
                self.matched_only_wait = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    _ => return Err(bad("boolean")),
                }
            }
            _ => return err(format!("unknown config key `{key}`")),
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(format!(
                    "{}:{}: expected `key = value`, got `{raw}`",
                    path.display(),
                    lineno + 1
                ));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Final consistency pass after all layers applied.
    pub fn finish(mut self) -> Result<Self, ConfigError> {
        self.market.seed = self.seed;
        self.market
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        self.hybrid.validate().map_err(ConfigError)?;
        if self.k < 1 {
            return err("experiment.k must be >= 1");
        }
        match &self.sweep {
            SweepAxis::Density(vs) => {
                if vs.iter().any(|&d| d <= 0.0) {
                    return err("sweep d values must be > 0");
                }
            }
            SweepAxis::Tau(vs) => {
                if vs.iter().any(|&t| t < 0.0) {
                    return err("sweep tau values must be >= 0");
                }
            }
            SweepAxis::Window(vs) => {
                if vs.iter().any(|&w| w <= 0.0) {
                    return err("sweep w values must be > 0");
                }
            }
            SweepAxis::None => {}
        }
        Ok(self)
    }

    /// Canonical one-line description embedded in every output file; equal
    /// settings produce byte-identical files.
    pub fn fingerprint(&self) -> String {
        let sweep = match &self.sweep {
            SweepAxis::None => "none".to_string(),
            SweepAxis::Density(v) => format!("d:{}", join(v)),
            SweepAxis::Tau(v) => format!("tau:{}", join(v)),
            SweepAxis::Window(v) => format!("w:{}", join(v)),
        };
        format!(
            "config: market.lambda={} market.p={} market.T={} market.T0={} market.mu={} market.sigma={} \
             experiment.policy={} experiment.k={} experiment.seed={} hybrid.tau={} hybrid.w={} sweep={}",
            self.market.lambda,
            self.market.p,
            self.market.horizon,
            self.market.warmup,
            self.market.departure.mu,
            self.market.departure.sigma,
            self.policy,
            self.k,
            self.seed,
            self.hybrid.tau,
            self.hybrid.w,
            sweep,
        )
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn default_axis_values(current: &SweepAxis) -> Vec<f64> {
    match current {
        SweepAxis::Density(v) | SweepAxis::Tau(v) | SweepAxis::Window(v) => v.clone(),
        SweepAxis::None => Vec::new(),
    }
}
