//! Performance measures over a completed trace: loss, waiting time,
//! congestion, and policy usage.

use serde::{Deserialize, Serialize};

use crate::policy::{PolicyKind, PolicyTag};
use crate::sim::{AgentOutcome, TraceSummary};

/// All reported measures for one run, over the measurement window [T0, T].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub loss: f64,
    pub mean_wait: f64,
    pub congestion: f64,
    pub usage_patient: f64,
    pub usage_greedy: f64,
    pub switch_count: u64,
    pub d: f64,
    pub window: (f64, f64),
    /// Set when the measurement cohort was empty and loss/wait defaulted to 0.
    pub empty_cohort: bool,
}

impl MetricsReport {
    pub fn from_trace(trace: &TraceSummary) -> Self {
        let (t0, t1) = (trace.config.warmup, trace.config.horizon);
        let (usage_patient, usage_greedy, switch_count) = compute_usage(trace, t0, t1);
        MetricsReport {
            loss: compute_loss(trace),
            mean_wait: compute_mean_wait(trace, false),
            congestion: compute_congestion(trace, t0, t1),
            usage_patient,
            usage_greedy,
            switch_count,
            d: trace.config.density(),
            window: (t0, t1),
            empty_cohort: trace.window.arrivals == 0,
        }
    }
}

/// Fraction of cohort arrivals that perished, D/A. By conservation this
/// equals (A - M - Z_T)/A. An empty cohort reports 0 (flagged upstream).
pub fn compute_loss(trace: &TraceSummary) -> f64 {
    crate::sim::window_loss(trace)
}

/// Mean time-in-pool until resolution over the cohort; agents still waiting
/// at T contribute the right-censored wait T - arrival. With `matched_only`
/// the mean runs over matched cohort agents alone.
pub fn compute_mean_wait(trace: &TraceSummary, matched_only: bool) -> f64 {
    let t0 = trace.config.warmup;
    let horizon = trace.config.horizon;
    let mut total = 0.0;
    let mut n = 0u64;
    for rec in &trace.per_agent {
        if rec.arrival < t0 {
            continue;
        }
        if matched_only && !matches!(rec.outcome, AgentOutcome::Matched { .. }) {
            continue;
        }
        total += rec.resolution.unwrap_or(horizon) - rec.arrival;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Exact integral of the pool-size step function over [t0, t1].
pub fn pool_integral(trace: &TraceSummary, t0: f64, t1: f64) -> f64 {
    let steps = &trace.pool_sizes;
    let mut total = 0.0;
    for (i, &(start, size)) in steps.iter().enumerate() {
        let end = steps.get(i + 1).map_or(trace.config.horizon, |&(t, _)| t);
        let lo = start.max(t0);
        let hi = end.min(t1);
        if hi > lo {
            total += (hi - lo) * size as f64;
        }
    }
    total
}

/// Time-averaged pool size over [t0, t1].
pub fn compute_congestion(trace: &TraceSummary, t0: f64, t1: f64) -> f64 {
    if t1 <= t0 {
        return 0.0;
    }
    pool_integral(trace, t0, t1) / (t1 - t0)
}

/// Fraction of decision windows run under each policy, restricted to windows
/// starting in [t0, t1], plus the number of switches between adjacent
/// restricted windows. Static runs report their single kind. If no window
/// starts inside the interval, the incumbent window covering t0 counts.
pub fn compute_usage(trace: &TraceSummary, t0: f64, t1: f64) -> (f64, f64, u64) {
    let kinds: Vec<PolicyKind> = match trace.policy {
        PolicyTag::Static(kind) => vec![kind],
        PolicyTag::Hybrid => {
            let restricted: Vec<PolicyKind> = trace
                .policy_schedule
                .iter()
                .filter(|wd| wd.start >= t0 && wd.start <= t1)
                .map(|wd| wd.kind)
                .collect();
            if restricted.is_empty() {
                trace
                    .policy_schedule
                    .iter()
                    .rev()
                    .find(|wd| wd.start <= t0)
                    .map(|wd| vec![wd.kind])
                    .unwrap_or_default()
            } else {
                restricted
            }
        }
    };
    if kinds.is_empty() {
        return (0.0, 0.0, 0);
    }
    let patient = kinds.iter().filter(|k| **k == PolicyKind::Patient).count() as f64;
    let switches = kinds.windows(2).filter(|pair| pair[0] != pair[1]).count() as u64;
    let n = kinds.len() as f64;
    (patient / n, (n - patient) / n, switches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{LogNormalParams, MarketConfig};
    use crate::sim::{AgentRecord, Counters, WindowDecision};

    fn empty_trace(t0: f64, t1: f64) -> TraceSummary {
        TraceSummary {
            policy: PolicyTag::Static(PolicyKind::Patient),
            config: MarketConfig {
                lambda: 1.0,
                p: 0.5,
                horizon: t1,
                warmup: t0,
                seed: 0,
                departure: LogNormalParams { mu: 0.0, sigma: 0.0 },
            },
            full: Counters::default(),
            window: Counters::default(),
            pool_sizes: vec![(0.0, 0)],
            per_agent: vec![],
            policy_schedule: vec![],
        }
    }

    fn record(id: u64, arrival: f64, resolution: Option<f64>, outcome: AgentOutcome) -> AgentRecord {
        let sojourn = resolution.map(|r| r - arrival).unwrap_or(10.0).max(0.1);
        AgentRecord { id, arrival, sojourn, resolution, outcome }
    }

    #[test]
    fn loss_formula_direct() {
        let mut t = empty_trace(0.0, 10.0);
        t.window = Counters { arrivals: 10, matched: 6, perished: 3, remaining: 1 };
        assert!((compute_loss(&t) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn loss_of_empty_cohort_is_zero_and_flagged() {
        let t = empty_trace(0.0, 10.0);
        assert_eq!(compute_loss(&t), 0.0);
        assert!(MetricsReport::from_trace(&t).empty_cohort);
    }

    #[test]
    fn mean_wait_single_agent() {
        let mut t = empty_trace(0.0, 10.0);
        t.window.arrivals = 1;
        t.per_agent = vec![record(0, 1.0, Some(3.0), AgentOutcome::Perished)];
        assert!((compute_mean_wait(&t, false) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mean_wait_censors_waiting_agents() {
        let mut t = empty_trace(0.0, 10.0);
        t.per_agent = vec![
            record(0, 2.0, None, AgentOutcome::Waiting),
            record(1, 4.0, Some(5.0), AgentOutcome::Matched { partner: 9 }),
        ];
        // censored wait 8 and matched wait 1
        assert!((compute_mean_wait(&t, false) - 4.5).abs() < 1e-12);
        assert!((compute_mean_wait(&t, true) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn congestion_single_agent_throughout() {
        let mut t = empty_trace(2.0, 6.0);
        t.pool_sizes = vec![(0.0, 0), (1.0, 1)];
        assert!((compute_congestion(&t, 2.0, 6.0) - 1.0).abs() < 1e-12);
        assert_eq!(compute_congestion(&empty_trace(2.0, 6.0), 2.0, 6.0), 0.0);
    }

    #[test]
    fn congestion_matches_total_waits_on_closed_trace() {
        // one cohort: two agents overlap in the pool; integral equals the
        // sum of their waits exactly.
        let mut t = empty_trace(0.0, 10.0);
        t.per_agent = vec![
            record(0, 1.0, Some(4.0), AgentOutcome::Perished),
            record(1, 2.0, Some(4.0), AgentOutcome::Matched { partner: 0 }),
        ];
        t.pool_sizes = vec![(0.0, 0), (1.0, 1), (2.0, 2), (4.0, 0)];
        let waits: f64 = t.per_agent.iter().map(|r| r.resolution.unwrap() - r.arrival).sum();
        assert!((pool_integral(&t, 0.0, 10.0) - waits).abs() < 1e-12);
    }

    #[test]
    fn usage_static_run() {
        let t = empty_trace(0.0, 10.0);
        let (p, g, s) = compute_usage(&t, 0.0, 10.0);
        assert_eq!((p, g, s), (1.0, 0.0, 0));
    }

    #[test]
    fn usage_alternating_schedule() {
        let mut t = empty_trace(0.0, 4.0);
        t.policy = PolicyTag::Hybrid;
        t.policy_schedule = [PolicyKind::Patient, PolicyKind::Greedy, PolicyKind::Patient, PolicyKind::Greedy]
            .iter()
            .enumerate()
            .map(|(i, &kind)| WindowDecision {
                index: i as u64,
                start: i as f64,
                kind,
                mu_hat: None,
                sigma_hat: None,
                score: None,
            })
            .collect();
        let (p, g, s) = compute_usage(&t, 0.0, 4.0);
        assert!((p - 0.5).abs() < 1e-12);
        assert!((g - 0.5).abs() < 1e-12);
        assert_eq!(s, 3);
    }

    #[test]
    fn usage_falls_back_to_covering_window() {
        // single window starting before the interval: w > T behaves like the
        // initial-default single window.
        let mut t = empty_trace(5.0, 10.0);
        t.policy = PolicyTag::Hybrid;
        t.policy_schedule = vec![WindowDecision {
            index: 0,
            start: 0.0,
            kind: PolicyKind::Patient,
            mu_hat: None,
            sigma_hat: None,
            score: None,
        }];
        let (p, g, s) = compute_usage(&t, 5.0, 10.0);
        assert_eq!((p, g, s), (1.0, 0.0, 0));
    }
}
