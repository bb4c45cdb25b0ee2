//! Event-driven simulator of a dynamic matching market with perishable agents.
//!
//! Agents arrive as a Poisson stream, carry a private log-normally distributed
//! sojourn time, and either match with a compatible partner or perish when the
//! sojourn elapses. Pairwise compatibility is an independent Bernoulli draw,
//! realized lazily from a counter-based generator so that any two runs on the
//! same seed see the same compatibility graph.
//!
//! Three matching policies are provided:
//!
//! - **Greedy**: match each arrival immediately to a uniformly random
//!   compatible pool member, if any exists.
//! - **Patient**: defer matching until an agent's sojourn elapses; match then
//!   or perish.
//! - **Hybrid**: a windowed controller that re-estimates the departure
//!   distribution each window and switches between the two static policies by
//!   thresholding a predicted loss gap.
//!
//! The crate also contains the learning pipeline behind the hybrid controller:
//! log-normal point estimation ([`estimate`]), a paired-simulation oracle for
//! the greedy/patient loss gap, and a small from-scratch MLP that regresses
//! the gap surface ([`gap`], [`mlp`]).

pub mod estimate;
pub mod events;
pub mod gap;
pub mod market;
pub mod metrics;
pub mod mlp;
pub mod policy;
pub mod rng;
pub mod sim;

pub use estimate::{fit_lognormal, EstimationError, SampleBatch};
pub use events::{build_event_calendar, Event, EventKind};
pub use gap::{
    extract_decision_boundary, score_oracle, train, ContourPoint, GapModel, GapSample, GridSpec,
    Hyperparams, ModelMode, OracleConfig, TrainReport,
};
pub use market::{Agent, AgentStatus, LogNormalParams, MarketConfig, PairCompat, Pool};
pub use metrics::{compute_congestion, compute_loss, compute_mean_wait, compute_usage, MetricsReport};
pub use policy::{
    BatchSource, ConstantGap, GapScorer, Greedy, Hybrid, HybridConfig, Patient, Policy, PolicyKind,
};
pub use rng::{run_seed, Streams};
pub use sim::{simulate, AgentOutcome, AgentRecord, Counters, TraceSummary, WindowDecision};
