//! Event calendar for the continuous-time simulation.

use std::cmp::Ordering;

use rand::Rng;

use crate::market::{Agent, MarketConfig};
use crate::rng::Streams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// A decision-window boundary at t = k * w (hybrid runs only).
    WindowBoundary { index: u64 },
    /// Agent arrival; the agent is identified by its dense id.
    Arrival(u64),
    /// An agent's sojourn elapses. Stale if the agent already resolved.
    Critical(u64),
}

impl EventKind {
    /// Tie-break priority at equal timestamps: a window boundary governs the
    /// events at its own timestamp, and an arrival at time t is still eligible
    /// to match an agent whose sojourn elapses at t.
    fn priority(&self) -> u8 {
        match self {
            EventKind::WindowBoundary { .. } => 0,
            EventKind::Arrival(_) => 1,
            EventKind::Critical(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Event {
    fn sort_key(&self) -> (f64, u8, u64) {
        (self.time, self.kind.priority(), self.seq)
    }

    pub fn cmp_order(&self, other: &Self) -> Ordering {
        let (ta, pa, sa) = self.sort_key();
        let (tb, pb, sb) = other.sort_key();
        ta.total_cmp(&tb).then(pa.cmp(&pb)).then(sa.cmp(&sb))
    }
}

/// Draws the full calendar for one run: Poisson arrivals on [0, T], one
/// critical event per agent at `arrival + sojourn`, and (when `window` is
/// given) boundaries at t = 0, w, 2w, ... strictly below T.
///
/// Returns the agents in arrival order (ids are dense arrival indices) plus
/// the events sorted by (time, priority, seq).
pub fn build_event_calendar(
    cfg: &MarketConfig,
    streams: &mut Streams,
    window: Option<f64>,
) -> (Vec<Agent>, Vec<Event>) {
    let mut agents = Vec::new();
    let mut events = Vec::new();
    let mut seq = 0u64;

    if let Some(w) = window {
        assert!(w > 0.0, "window size must be positive");
        let count = (cfg.horizon / w).ceil() as u64;
        for k in 0..count {
            let t = k as f64 * w;
            if t >= cfg.horizon {
                break;
            }
            events.push(Event {
                time: t,
                seq,
                kind: EventKind::WindowBoundary { index: k },
            });
            seq += 1;
        }
    }

    if cfg.lambda > 0.0 {
        let mut t = 0.0f64;
        loop {
            // inter-arrival ~ Exp(lambda); 1 - u in (0, 1] avoids ln(0)
            let u: f64 = streams.arrivals.gen();
            t += -(1.0 - u).ln() / cfg.lambda;
            if t > cfg.horizon {
                break;
            }
            let id = agents.len() as u64;
            let sojourn = cfg.departure.sample(&mut streams.sojourns);
            let agent = Agent::new(id, t, sojourn);
            events.push(Event { time: t, seq, kind: EventKind::Arrival(id) });
            seq += 1;
            events.push(Event { time: agent.critical, seq, kind: EventKind::Critical(id) });
            seq += 1;
            agents.push(agent);
        }
    }

    events.sort_unstable_by(Event::cmp_order);
    (agents, events)
}
