//! Shared execution helpers: seeded multi-run batches and their aggregate
//! statistics.

use anyhow::{Context, Result};
use matchsim::gap::GapModel;
use matchsim::market::MarketConfig;
use matchsim::metrics::{compute_congestion, compute_loss, compute_mean_wait, compute_usage};
use matchsim::policy::{Greedy, Hybrid, HybridConfig, Patient};
use matchsim::rng::run_seed;
use matchsim::sim::TraceSummary;
use rayon::prelude::*;

use crate::config::{PolicySelect, Settings};

/// Run one simulation with the selected policy.
pub fn run_one(
    market: &MarketConfig,
    policy: PolicySelect,
    hybrid: &HybridConfig,
    model: Option<&GapModel>,
) -> Result<TraceSummary> {
    let trace = match policy {
        PolicySelect::Greedy => matchsim::sim::simulate(market, &mut Greedy),
        PolicySelect::Patient => matchsim::sim::simulate(market, &mut Patient),
        PolicySelect::Hybrid => {
            let model = model.context("hybrid policy requires a trained model file")?;
            let mut controller = Hybrid::new(*hybrid, model);
            matchsim::sim::simulate(market, &mut controller)
        }
    };
    Ok(trace.map_err(anyhow::Error::from)?)
}

/// Per-run metric values collected over a batch of k runs.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub loss: Vec<f64>,
    pub wait: Vec<f64>,
    pub congestion: Vec<f64>,
    pub usage_patient: Vec<f64>,
    pub usage_greedy: Vec<f64>,
    pub switch_count: Vec<f64>,
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Execute k runs at one sweep point; run seeds derive from
/// (master, sweep index, run index) so adding sweep points never perturbs
/// existing ones. Runs execute in parallel, results stay in run order.
pub fn run_batch(
    settings: &Settings,
    market: &MarketConfig,
    policy: PolicySelect,
    hybrid: &HybridConfig,
    model: Option<&GapModel>,
    sweep_index: u64,
) -> Result<Batch> {
    let traces: Result<Vec<TraceSummary>> = (0..settings.k)
        .into_par_iter()
        .map(|r| {
            let cfg = MarketConfig {
                seed: run_seed(settings.seed, sweep_index, r as u64),
                ..*market
            };
            run_one(&cfg, policy, hybrid, model)
        })
        .collect();
    let traces = traces?;

    let mut batch = Batch::default();
    for trace in &traces {
        let (t0, t1) = (trace.config.warmup, trace.config.horizon);
        let (up, ug, sc) = compute_usage(trace, t0, t1);
        batch.loss.push(compute_loss(trace));
        batch.wait.push(compute_mean_wait(trace, settings.matched_only_wait));
        batch.congestion.push(compute_congestion(trace, t0, t1));
        batch.usage_patient.push(up);
        batch.usage_greedy.push(ug);
        batch.switch_count.push(sc as f64);
    }
    Ok(batch)
}

/// One formatted row of the sweep CSV.
pub fn sweep_row(
    policy: PolicySelect,
    tau: Option<f64>,
    w: Option<f64>,
    market: &MarketConfig,
    k: u32,
    batch: &Batch,
) -> String {
    let (loss, loss_se) = mean_se(&batch.loss);
    let (wait, wait_se) = mean_se(&batch.wait);
    let (cong, cong_se) = mean_se(&batch.congestion);
    let (up, _) = mean_se(&batch.usage_patient);
    let (ug, _) = mean_se(&batch.usage_greedy);
    let (sc, _) = mean_se(&batch.switch_count);
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        policy,
        opt(tau),
        opt(w),
        market.density(),
        market.lambda,
        market.horizon,
        market.warmup,
        k,
        loss,
        loss_se,
        wait,
        wait_se,
        cong,
        cong_se,
        up,
        ug,
        sc,
    )
}

pub const SWEEP_HEADER: &str = "policy,tau,w,d,lambda,T,T0,k,loss_mean,loss_se,wait_mean,wait_se,\
congestion_mean,congestion_se,usage_patient,usage_greedy,switch_count_mean";
