//! Shared test support: an independent fixed-step re-simulation used as an
//! oracle for the event-driven engine, plus config helpers.
//!
//! The fixed-step simulator shares only the sampled inputs (arrivals,
//! sojourns, compatibility function, selection stream) with the engine; its
//! pool bookkeeping, event sweeping, and matching logic are written from
//! scratch here.

use matchsim::events::build_event_calendar;
use matchsim::market::{LogNormalParams, MarketConfig, PairCompat};
use matchsim::policy::PolicyKind;
use matchsim::rng::Streams;
use matchsim::sim::{AgentOutcome, TraceSummary};
use rand::Rng;

pub fn desk_config(seed: u64) -> MarketConfig {
    MarketConfig {
        lambda: 100.0,
        p: 0.08,
        horizon: 50.0,
        warmup: 25.0,
        seed,
        departure: LogNormalParams { mu: 0.0, sigma: 1.0 },
    }
}

/// Outcome record of the naive simulator, comparable against the engine's
/// per-agent records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaiveOutcome {
    Matched { partner: u64 },
    Perished,
    Waiting,
}

pub fn trace_outcomes(trace: &TraceSummary) -> Vec<NaiveOutcome> {
    trace
        .per_agent
        .iter()
        .map(|r| match r.outcome {
            AgentOutcome::Matched { partner } => NaiveOutcome::Matched { partner },
            AgentOutcome::Perished => NaiveOutcome::Perished,
            AgentOutcome::Waiting => NaiveOutcome::Waiting,
        })
        .collect()
}

/// Re-simulate a static policy by sweeping fixed time steps of width `dt`,
/// using the same sampled arrivals/sojourns, the same pair-compatibility
/// function, and the same partner-selection stream as the engine run.
pub fn fixed_step_outcomes(cfg: &MarketConfig, kind: PolicyKind, dt: f64) -> Vec<NaiveOutcome> {
    let mut streams = Streams::from_master(cfg.seed);
    let (agents, _) = build_event_calendar(cfg, &mut streams, None);
    let compat = PairCompat::new(streams.compat_seed, cfg.p);
    let mut selection = streams.selection;

    let n = agents.len();
    let mut outcome = vec![NaiveOutcome::Waiting; n];
    let mut resolved = vec![false; n];
    let mut pool: Vec<u64> = Vec::new();

    // criticals sorted by (time, id); arrivals are already time-sorted
    let mut criticals: Vec<(f64, u64)> = agents.iter().map(|a| (a.critical, a.id)).collect();
    criticals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut next_arrival = 0usize;
    let mut next_critical = 0usize;

    let mut pick_partner = |pool: &[u64], selection: &mut rand_chacha::ChaCha8Rng, id: u64| {
        let candidates: Vec<u64> = pool
            .iter()
            .copied()
            .filter(|&other| other != id && compat.are_compatible(id, other).unwrap())
            .collect();
        match candidates.len() {
            0 => None,
            1 => Some(candidates[0]),
            m => Some(candidates[selection.gen_range(0..m)]),
        }
    };

    let steps = (cfg.horizon / dt).ceil() as u64;
    for step in 0..=steps {
        let t_hi = ((step + 1) as f64 * dt).min(cfg.horizon);
        let t_lo = step as f64 * dt;
        if t_lo > cfg.horizon {
            break;
        }

        // gather events due in (t_lo, t_hi] (step 0 also takes t = 0)
        #[derive(Clone, Copy)]
        enum Due {
            Arrival(u64),
            Critical(u64),
        }
        let mut due: Vec<(f64, u8, u64, Due)> = Vec::new();
        while next_arrival < n {
            let a = &agents[next_arrival];
            let in_window = a.arrival <= t_hi && (a.arrival > t_lo || (step == 0 && a.arrival >= 0.0));
            if !in_window {
                break;
            }
            due.push((a.arrival, 0, a.id, Due::Arrival(a.id)));
            next_arrival += 1;
        }
        while next_critical < criticals.len() {
            let (tc, id) = criticals[next_critical];
            let in_window = tc <= t_hi && (tc > t_lo || (step == 0 && tc >= 0.0));
            if !in_window {
                break;
            }
            due.push((tc, 1, id, Due::Critical(id)));
            next_critical += 1;
        }
        due.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        for (_, _, _, ev) in due {
            match (ev, kind) {
                (Due::Arrival(id), PolicyKind::Greedy) => {
                    if let Some(partner) = pick_partner(&pool, &mut selection, id) {
                        outcome[id as usize] = NaiveOutcome::Matched { partner };
                        outcome[partner as usize] = NaiveOutcome::Matched { partner: id };
                        resolved[id as usize] = true;
                        resolved[partner as usize] = true;
                        pool.retain(|&x| x != partner);
                    } else {
                        let pos = pool.binary_search(&id).unwrap_err();
                        pool.insert(pos, id);
                    }
                }
                (Due::Arrival(id), PolicyKind::Patient) => {
                    let pos = pool.binary_search(&id).unwrap_err();
                    pool.insert(pos, id);
                }
                (Due::Critical(id), _) => {
                    if resolved[id as usize] {
                        continue;
                    }
                    match kind {
                        PolicyKind::Greedy => {
                            outcome[id as usize] = NaiveOutcome::Perished;
                            resolved[id as usize] = true;
                            pool.retain(|&x| x != id);
                        }
                        PolicyKind::Patient => {
                            if let Some(partner) = pick_partner(&pool, &mut selection, id) {
                                outcome[id as usize] = NaiveOutcome::Matched { partner };
                                outcome[partner as usize] = NaiveOutcome::Matched { partner: id };
                                resolved[id as usize] = true;
                                resolved[partner as usize] = true;
                                pool.retain(|&x| x != partner && x != id);
                            } else {
                                outcome[id as usize] = NaiveOutcome::Perished;
                                resolved[id as usize] = true;
                                pool.retain(|&x| x != id);
                            }
                        }
                    }
                }
            }
        }
    }

    outcome
}
