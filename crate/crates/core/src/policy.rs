//! Matching policies: the two static baselines and the adaptive hybrid
//! controller that alternates between them.

use serde::{Deserialize, Serialize};

use crate::estimate::{fit_lognormal, SampleBatch};
use crate::market::LogNormalParams;
use crate::sim::{MarketOps, WindowDecision};

/// Floor applied to the estimated sigma before model inference, keeping
/// degenerate batches inside the training box.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// The two static policies the hybrid controller alternates between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    Greedy,
    Patient,
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyKind::Greedy => write!(f, "greedy"),
            PolicyKind::Patient => write!(f, "patient"),
        }
    }
}

/// What ran: a static policy or the hybrid controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyTag {
    Static(PolicyKind),
    Hybrid,
}

impl std::fmt::Display for PolicyTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyTag::Static(k) => write!(f, "{k}"),
            PolicyTag::Hybrid => write!(f, "hybrid"),
        }
    }
}

/// Event hooks dispatched by the simulation loop.
pub trait Policy {
    fn tag(&self) -> PolicyTag;

    /// Boundary period, if the policy wants `WindowBoundary` events.
    fn window(&self) -> Option<f64> {
        None
    }

    fn on_arrival(&mut self, ops: &mut MarketOps<'_>, agent: u64);

    /// Invoked when a still-waiting agent's sojourn elapses. Must resolve the
    /// agent (match or perish).
    fn on_critical(&mut self, ops: &mut MarketOps<'_>, agent: u64);

    fn on_boundary(&mut self, _ops: &mut MarketOps<'_>, _index: u64, _time: f64) {}
}

/// Match each arrival immediately to a uniformly random compatible pool
/// member; agents whose sojourn elapses unmatched perish.
#[derive(Debug, Default, Clone, Copy)]
pub struct Greedy;

impl Policy for Greedy {
    fn tag(&self) -> PolicyTag {
        PolicyTag::Static(PolicyKind::Greedy)
    }

    fn on_arrival(&mut self, ops: &mut MarketOps<'_>, agent: u64) {
        if ops.try_match_uniform(agent).is_none() {
            ops.join_pool(agent);
        }
    }

    fn on_critical(&mut self, ops: &mut MarketOps<'_>, agent: u64) {
        ops.perish(agent);
    }
}

/// Defer matching until an agent becomes critical; match then or perish.
#[derive(Debug, Default, Clone, Copy)]
pub struct Patient;

impl Policy for Patient {
    fn tag(&self) -> PolicyTag {
        PolicyTag::Static(PolicyKind::Patient)
    }

    fn on_arrival(&mut self, ops: &mut MarketOps<'_>, agent: u64) {
        ops.join_pool(agent);
    }

    fn on_critical(&mut self, ops: &mut MarketOps<'_>, agent: u64) {
        if ops.try_match_uniform(agent).is_none() {
            ops.perish(agent);
        }
    }
}

/// Source of the per-window estimation batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchSource {
    /// Sojourn times reported at arrival (default; censoring-free).
    ReportedSojourns,
    /// Sojourn times of agents observed perishing during the window.
    ObservedPerishes,
}

/// Controller parameters for the hybrid policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    /// Loss tolerance threshold; the next window runs Patient iff the
    /// predicted gap score is >= tau.
    pub tau: f64,
    /// Decision window size.
    pub w: f64,
    /// Minimum batch size for estimation; smaller batches retain the
    /// incumbent policy.
    pub min_samples: usize,
    pub initial_policy: PolicyKind,
    pub batch_source: BatchSource,
}

impl HybridConfig {
    pub fn new(tau: f64, w: f64) -> Self {
        HybridConfig {
            tau,
            w,
            min_samples: 2,
            initial_policy: PolicyKind::Patient,
            batch_source: BatchSource::ReportedSojourns,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(format!("window size must be finite and > 0, got {}", self.w));
        }
        if !(self.tau >= 0.0) {
            return Err(format!("tau must be >= 0, got {}", self.tau));
        }
        if self.min_samples < 2 {
            return Err(format!("min_samples must be >= 2, got {}", self.min_samples));
        }
        Ok(())
    }
}

/// Predicts the greedy/patient loss-gap score for estimated departure
/// parameters. Implemented by the trained model and by test constants.
pub trait GapScorer: Sync {
    fn score(&self, params: LogNormalParams) -> f64;

    /// Policy for the next window. The default thresholds the score at the
    /// runtime tau; classifier-mode models override this with their own
    /// training threshold.
    fn decide(&self, params: LogNormalParams, tau: f64) -> PolicyKind {
        if self.score(params) >= tau {
            PolicyKind::Patient
        } else {
            PolicyKind::Greedy
        }
    }
}

/// A fixed score regardless of input; useful as a limiting case.
#[derive(Debug, Clone, Copy)]
pub struct ConstantGap(pub f64);

impl GapScorer for ConstantGap {
    fn score(&self, _params: LogNormalParams) -> f64 {
        self.0
    }
}

/// The windowed controller: collect departure data, re-estimate the
/// log-normal parameters at each boundary, and threshold the predicted gap
/// score to pick the policy for the next window.
pub struct Hybrid<'m> {
    cfg: HybridConfig,
    scorer: &'m dyn GapScorer,
    active: PolicyKind,
    batch: Vec<f64>,
    window_index: u64,
}

impl<'m> Hybrid<'m> {
    pub fn new(cfg: HybridConfig, scorer: &'m dyn GapScorer) -> Self {
        let active = cfg.initial_policy;
        Hybrid { cfg, scorer, active, batch: Vec::new(), window_index: 0 }
    }

    pub fn active_kind(&self) -> PolicyKind {
        self.active
    }
}

impl Policy for Hybrid<'_> {
    fn tag(&self) -> PolicyTag {
        PolicyTag::Hybrid
    }

    fn window(&self) -> Option<f64> {
        Some(self.cfg.w)
    }

    fn on_arrival(&mut self, ops: &mut MarketOps<'_>, agent: u64) {
        if self.cfg.batch_source == BatchSource::ReportedSojourns {
            self.batch.push(ops.sojourn_of(agent));
        }
        match self.active {
            PolicyKind::Greedy => {
                if ops.try_match_uniform(agent).is_none() {
                    ops.join_pool(agent);
                }
            }
            PolicyKind::Patient => ops.join_pool(agent),
        }
    }

    fn on_critical(&mut self, ops: &mut MarketOps<'_>, agent: u64) {
        let perished = match self.active {
            PolicyKind::Greedy => {
                ops.perish(agent);
                true
            }
            PolicyKind::Patient => {
                if ops.try_match_uniform(agent).is_none() {
                    ops.perish(agent);
                    true
                } else {
                    false
                }
            }
        };
        if perished && self.cfg.batch_source == BatchSource::ObservedPerishes {
            self.batch.push(ops.sojourn_of(agent));
        }
    }

    fn on_boundary(&mut self, ops: &mut MarketOps<'_>, index: u64, time: f64) {
        let mut decision = WindowDecision {
            index,
            start: time,
            kind: self.active,
            mu_hat: None,
            sigma_hat: None,
            score: None,
        };
        if self.batch.len() >= self.cfg.min_samples {
            let est = fit_lognormal(&SampleBatch::new(self.batch.clone(), self.window_index))
                .expect("sojourns are positive and batch is large enough");
            let model_input = LogNormalParams { mu: est.mu, sigma: est.sigma.max(SIGMA_FLOOR) };
            let score = self.scorer.score(model_input);
            self.active = self.scorer.decide(model_input, self.cfg.tau);
            decision.kind = self.active;
            decision.mu_hat = Some(est.mu);
            decision.sigma_hat = Some(est.sigma);
            decision.score = Some(score);
        }
        ops.record_window_decision(decision);
        self.batch.clear();
        self.window_index = index + 1;
    }
}
