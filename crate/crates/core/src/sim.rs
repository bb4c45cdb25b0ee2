//! The event loop and the per-run trace it produces.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::events::{build_event_calendar, EventKind};
use crate::market::{Agent, AgentStatus, MarketConfig, MarketError, PairCompat, Pool};
use crate::policy::{Policy, PolicyKind, PolicyTag};
use crate::rng::Streams;

/// Arrival/match/perish/remaining counts over one cohort.
///
/// Conservation holds by construction: every arrival ends matched, perished,
/// or still waiting at T.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub arrivals: u64,
    /// Matched agents (a match adds two on the full-horizon counter).
    pub matched: u64,
    pub perished: u64,
    pub remaining: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AgentOutcome {
    Matched { partner: u64 },
    Perished,
    Waiting,
}

/// Resolution record for one agent; `resolution` is `None` while waiting at T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: u64,
    pub arrival: f64,
    pub sojourn: f64,
    pub resolution: Option<f64>,
    pub outcome: AgentOutcome,
}

/// One hybrid window decision, exported for the schedule report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowDecision {
    pub index: u64,
    pub start: f64,
    pub kind: PolicyKind,
    pub mu_hat: Option<f64>,
    pub sigma_hat: Option<f64>,
    pub score: Option<f64>,
}

/// Everything a run produces; all reported metrics derive from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub policy: PolicyTag,
    pub config: MarketConfig,
    /// Counters over every arrival in [0, T]; satisfies A = M + D + Z_T.
    pub full: Counters,
    /// Counters over the measurement cohort (arrivals in [T0, T]; `matched`
    /// counts cohort members, so a cohort/non-cohort match adds one).
    pub window: Counters,
    /// Right-continuous step function of |Z_t|, as (time, size) change points.
    pub pool_sizes: Vec<(f64, u64)>,
    pub per_agent: Vec<AgentRecord>,
    /// Per-window policy choices (empty for static runs).
    pub policy_schedule: Vec<WindowDecision>,
}

impl TraceSummary {
    /// Serialized form of the market outcome alone (no policy schedule or
    /// tag); two traces with equal fingerprints saw identical arrivals,
    /// sojourns, matches, and perishes.
    pub fn market_fingerprint(&self) -> String {
        serde_json::to_string(&(&self.full, &self.window, &self.pool_sizes, &self.per_agent))
            .expect("trace serializes")
    }
}

/// Engine surface exposed to policy hooks.
pub struct MarketOps<'a> {
    now: f64,
    agents: &'a mut [Agent],
    pool: &'a mut Pool,
    selection: &'a mut ChaCha8Rng,
    warmup: f64,
    full: &'a mut Counters,
    window: &'a mut Counters,
    schedule: &'a mut Vec<WindowDecision>,
}

impl MarketOps<'_> {
    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn sojourn_of(&self, agent: u64) -> f64 {
        self.agents[agent as usize].sojourn
    }

    fn in_cohort(&self, agent: u64) -> bool {
        self.agents[agent as usize].arrival >= self.warmup
    }

    fn is_waiting(&self, agent: u64) -> bool {
        self.agents[agent as usize].status == AgentStatus::Waiting
    }

    fn count_arrival(&mut self, agent: u64) {
        self.full.arrivals += 1;
        self.window.arrivals += u64::from(self.in_cohort(agent));
    }

    /// Attempt to match `agent` to a uniformly random compatible waiting
    /// agent. On success both agents are resolved and removed from the pool;
    /// the selection stream is consumed only when two or more candidates
    /// exist.
    pub fn try_match_uniform(&mut self, agent: u64) -> Option<u64> {
        let candidates = self.pool.compatible_candidates(agent);
        let partner = match candidates.len() {
            0 => return None,
            1 => candidates[0],
            n => candidates[self.selection.gen_range(0..n)],
        };
        let t = self.now;
        self.agents[agent as usize].status = AgentStatus::Matched { partner, time: t };
        self.agents[partner as usize].status = AgentStatus::Matched { partner: agent, time: t };
        self.pool.remove(partner);
        self.pool.remove(agent);
        self.full.matched += 2;
        self.window.matched += u64::from(self.in_cohort(agent)) + u64::from(self.in_cohort(partner));
        Some(partner)
    }

    /// The agent stays unmatched and joins the waiting pool.
    pub fn join_pool(&mut self, agent: u64) {
        self.pool.insert(agent);
    }

    /// The agent departs unmatched at the current time.
    pub fn perish(&mut self, agent: u64) {
        self.agents[agent as usize].status = AgentStatus::Perished { time: self.now };
        self.pool.remove(agent);
        self.full.perished += 1;
        self.window.perished += u64::from(self.in_cohort(agent));
    }

    pub fn record_window_decision(&mut self, decision: WindowDecision) {
        self.schedule.push(decision);
    }
}

/// Run one policy over the horizon and collect the trace.
///
/// Deterministic: equal (config, policy parameters) give byte-identical
/// traces. Panics if a policy leaves an agent unresolved after its own
/// critical event (a malformed hook).
pub fn simulate(cfg: &MarketConfig, policy: &mut dyn Policy) -> Result<TraceSummary, MarketError> {
    cfg.validate()?;
    let mut streams = Streams::from_master(cfg.seed);
    let (mut agents, events) = build_event_calendar(cfg, &mut streams, policy.window());

    let mut pool = Pool::new(PairCompat::new(streams.compat_seed, cfg.p));
    let mut full = Counters::default();
    let mut window = Counters::default();
    let mut schedule = Vec::new();
    let mut pool_sizes = vec![(0.0, 0u64)];

    for ev in &events {
        if ev.time > cfg.horizon {
            break;
        }
        let mut ops = MarketOps {
            now: ev.time,
            agents: &mut agents,
            pool: &mut pool,
            selection: &mut streams.selection,
            warmup: cfg.warmup,
            full: &mut full,
            window: &mut window,
            schedule: &mut schedule,
        };
        match ev.kind {
            EventKind::WindowBoundary { index } => {
                policy.on_boundary(&mut ops, index, ev.time);
            }
            EventKind::Arrival(id) => {
                ops.count_arrival(id);
                policy.on_arrival(&mut ops, id);
            }
            EventKind::Critical(id) => {
                if !ops.is_waiting(id) {
                    continue; // lazily invalidated: agent already resolved
                }
                policy.on_critical(&mut ops, id);
                assert!(
                    !ops.is_waiting(id),
                    "policy left agent {id} waiting past its critical time at t={}",
                    ev.time
                );
            }
        }
        if pool.len() as u64 != pool_sizes.last().unwrap().1 {
            pool_sizes.push((ev.time, pool.len() as u64));
        }
    }

    full.remaining = pool.len() as u64;
    window.remaining = pool.iter().filter(|&id| agents[id as usize].arrival >= cfg.warmup).count() as u64;

    let per_agent = agents
        .iter()
        .map(|a| {
            let (resolution, outcome) = match a.status {
                AgentStatus::Waiting => (None, AgentOutcome::Waiting),
                AgentStatus::Matched { partner, time } => (Some(time), AgentOutcome::Matched { partner }),
                AgentStatus::Perished { time } => (Some(time), AgentOutcome::Perished),
            };
            AgentRecord { id: a.id, arrival: a.arrival, sojourn: a.sojourn, resolution, outcome }
        })
        .collect();

    Ok(TraceSummary {
        policy: policy.tag(),
        config: *cfg,
        full,
        window,
        pool_sizes,
        per_agent,
        policy_schedule: schedule,
    })
}

/// Fraction of cohort arrivals that perished: the loss L of a run.
pub(crate) fn window_loss(trace: &TraceSummary) -> f64 {
    if trace.window.arrivals == 0 {
        0.0
    } else {
        trace.window.perished as f64 / trace.window.arrivals as f64
    }
}
