//! The greedy/patient loss-gap surface: paired-simulation oracle, grid
//! labeling, a trained regression/classification model over it, and decision
//! boundary extraction.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{LogNormalParams, MarketConfig};
use crate::mlp::{fit_full_batch, gradient_check, LossKind, Mlp};
use crate::policy::{GapScorer, Greedy, Patient, PolicyKind};
use crate::rng::run_seed;
use crate::sim::simulate;

/// Scores above this cap stand in for an infinite ratio (patient loss hit
/// zero while greedy loss did not).
pub const SCORE_CAP: f64 = 10.0;

/// Floor applied to scores before the regression transform.
const SCORE_FLOOR: f64 = -0.5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset: {0}")]
    BadDataset(String),
    #[error("malformed model file: {0}")]
    BadModel(String),
    #[error("gradient check failed: max relative error {0:.3e} (limit 1e-4)")]
    GradientCheck(f64),
    #[error("training aborted: {0}")]
    Training(String),
}

/// One labeled point of the gap surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSample {
    pub mu: f64,
    pub sigma: f64,
    /// k-run average losses over the measurement window.
    pub loss_greedy: f64,
    pub loss_patient: f64,
    /// loss_greedy / loss_patient - 1; zero when both losses are zero.
    pub score: f64,
    pub k: u32,
    pub d: f64,
    /// True when the raw ratio was infinite and the score was capped.
    pub capped: bool,
}

/// Simulation setup shared by every oracle evaluation; the departure field of
/// `market` is replaced per grid point.
#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    pub market: MarketConfig,
    /// Paired runs averaged per point.
    pub runs: u32,
}

/// Estimate the gap score at one parameter point by k paired runs: greedy and
/// patient see identical seeds, hence identical arrivals, sojourns, and
/// compatibility graphs.
pub fn score_oracle(
    params: LogNormalParams,
    ocfg: &OracleConfig,
    point_index: u64,
) -> GapSample {
    assert!(ocfg.runs >= 1, "need at least one run");
    let mut loss_g = 0.0;
    let mut loss_p = 0.0;
    for r in 0..ocfg.runs {
        let cfg = MarketConfig {
            departure: params,
            seed: run_seed(ocfg.market.seed, point_index, r as u64),
            ..ocfg.market
        };
        let tg = simulate(&cfg, &mut Greedy).expect("valid oracle config");
        let tp = simulate(&cfg, &mut Patient).expect("valid oracle config");
        loss_g += crate::sim::window_loss(&tg);
        loss_p += crate::sim::window_loss(&tp);
    }
    loss_g /= ocfg.runs as f64;
    loss_p /= ocfg.runs as f64;
    let score = if loss_p > 0.0 {
        loss_g / loss_p - 1.0
    } else if loss_g > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    GapSample {
        mu: params.mu,
        sigma: params.sigma,
        loss_greedy: loss_g,
        loss_patient: loss_p,
        score,
        k: ocfg.runs,
        d: ocfg.market.density(),
        capped: false,
    }
}

/// Rectangular (mu, sigma) grid; points are generated sigma-major (one row
/// per sigma value, mu ascending within a row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub mu_min: f64,
    pub mu_max: f64,
    pub mu_step: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            mu_min: -2.0,
            mu_max: 2.0,
            mu_step: 0.2,
            sigma_min: 0.05,
            sigma_max: 2.0,
            sigma_step: 0.05,
        }
    }
}

fn axis_values(min: f64, max: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0 && max >= min, "bad axis spec");
    let n = ((max - min) / step).round() as usize + 1;
    (0..n).map(|i| min + i as f64 * step).collect()
}

impl GridSpec {
    pub fn mu_values(&self) -> Vec<f64> {
        axis_values(self.mu_min, self.mu_max, self.mu_step)
    }

    pub fn sigma_values(&self) -> Vec<f64> {
        axis_values(self.sigma_min, self.sigma_max, self.sigma_step)
    }

    pub fn points(&self) -> Vec<LogNormalParams> {
        let mus = self.mu_values();
        self.sigma_values()
            .iter()
            .flat_map(|&sigma| mus.iter().map(move |&mu| LogNormalParams { mu, sigma }))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.mu_values().len() * self.sigma_values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Label every grid point with the oracle, in parallel. Infinite scores are
/// stored capped at [`SCORE_CAP`] with the flag set.
pub fn build_training_grid(grid: &GridSpec, ocfg: &OracleConfig) -> Vec<GapSample> {
    grid.points()
        .into_par_iter()
        .enumerate()
        .map(|(idx, params)| {
            let mut sample = score_oracle(params, ocfg, idx as u64);
            if sample.score.is_infinite() {
                sample.score = SCORE_CAP;
                sample.capped = true;
            }
            sample
        })
        .collect()
}

pub const DATASET_HEADER: &str = "mu,sigma,loss_greedy,loss_patient,score,k,d,capped";

/// Write the dataset as delimiter-separated text. Comment lines (prefixed
/// `# `) precede the header.
pub fn save_dataset(path: &Path, samples: &[GapSample], comments: &[String]) -> Result<(), ModelError> {
    let io_err = |source| ModelError::Io { path: path.display().to_string(), source };
    let mut out = std::fs::File::create(path).map_err(io_err)?;
    let mut body = String::new();
    for c in comments {
        body.push_str(&format!("# {c}\n"));
    }
    body.push_str(DATASET_HEADER);
    body.push('\n');
    for s in samples {
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.mu, s.sigma, s.loss_greedy, s.loss_patient, s.score, s.k, s.d, u8::from(s.capped)
        ));
    }
    out.write_all(body.as_bytes()).map_err(io_err)
}

pub fn load_dataset(path: &Path) -> Result<Vec<GapSample>, ModelError> {
    let io_err = |source| ModelError::Io { path: path.display().to_string(), source };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut samples = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != DATASET_HEADER {
                return Err(ModelError::BadDataset(format!(
                    "line {}: expected header `{DATASET_HEADER}`",
                    lineno + 1
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(ModelError::BadDataset(format!(
                "line {}: expected 8 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64, ModelError> {
            fields[i].parse().map_err(|_| {
                ModelError::BadDataset(format!("line {}: bad number `{}`", lineno + 1, fields[i]))
            })
        };
        samples.push(GapSample {
            mu: num(0)?,
            sigma: num(1)?,
            loss_greedy: num(2)?,
            loss_patient: num(3)?,
            score: num(4)?,
            k: num(5)? as u32,
            d: num(6)?,
            capped: fields[7] == "1",
        });
    }
    if !saw_header {
        return Err(ModelError::BadDataset("missing header row".into()));
    }
    Ok(samples)
}

/// What the model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelMode {
    /// Regress the gap score; one model serves every runtime tau.
    Regress,
    /// Binary classifier of 1{score >= tau}, specific to its training tau.
    Classify { tau: f64 },
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Full layer chain, input through output.
    pub layer_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Early-stop patience in epochs without relative improvement.
    pub patience: usize,
    pub holdout_frac: f64,
    pub mode: ModelMode,
    pub init_seed: u64,
    pub split_seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            layer_sizes: vec![2, 16, 16, 1],
            learning_rate: 0.05,
            max_epochs: 20_000,
            patience: 2_000,
            holdout_frac: 0.2,
            mode: ModelMode::Regress,
            init_seed: 0x6d6c70,
            split_seed: 0x73706c,
        }
    }
}

/// Per-coordinate input range observed on the training grid; inference clamps
/// into this box (no extrapolation) and rescales to [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBox {
    pub mu_min: f64,
    pub mu_max: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl NormBox {
    fn from_samples(samples: &[GapSample]) -> Result<Self, ModelError> {
        let mut b = NormBox {
            mu_min: f64::INFINITY,
            mu_max: f64::NEG_INFINITY,
            sigma_min: f64::INFINITY,
            sigma_max: f64::NEG_INFINITY,
        };
        for s in samples {
            b.mu_min = b.mu_min.min(s.mu);
            b.mu_max = b.mu_max.max(s.mu);
            b.sigma_min = b.sigma_min.min(s.sigma);
            b.sigma_max = b.sigma_max.max(s.sigma);
        }
        if !(b.mu_max > b.mu_min && b.sigma_max > b.sigma_min) {
            return Err(ModelError::BadDataset(
                "training points must span a non-degenerate (mu, sigma) box".into(),
            ));
        }
        Ok(b)
    }

    fn normalize(&self, p: LogNormalParams) -> Vec<f64> {
        let mu = p.mu.clamp(self.mu_min, self.mu_max);
        let sigma = p.sigma.clamp(self.sigma_min, self.sigma_max);
        vec![
            2.0 * (mu - self.mu_min) / (self.mu_max - self.mu_min) - 1.0,
            2.0 * (sigma - self.sigma_min) / (self.sigma_max - self.sigma_min) - 1.0,
        ]
    }
}

/// Squash the score onto the scale the regressor is trained on. Monotone, so
/// thresholding is preserved; near-identity over the small scores where the
/// runtime taus live, and compresses the capped plateau.
#[inline]
pub fn transform_score(score: f64) -> f64 {
    score.clamp(SCORE_FLOOR, SCORE_CAP).ln_1p()
}

#[inline]
fn inverse_transform(z: f64) -> f64 {
    z.exp_m1()
}

/// The trained gap model: MLP weights plus the input normalization box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapModel {
    pub format_version: u32,
    pub mode: ModelMode,
    pub layer_sizes: Vec<usize>,
    pub norm: NormBox,
    mlp: Mlp,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

impl GapModel {
    /// Deterministic forward pass. Regress mode returns the predicted gap
    /// score; classify mode returns the positive-class probability.
    pub fn predict_score(&self, params: LogNormalParams) -> f64 {
        let x = self.norm.normalize(params);
        let raw = self.mlp.forward(&x)[0];
        match self.mode {
            ModelMode::Regress => inverse_transform(raw),
            ModelMode::Classify { .. } => 1.0 / (1.0 + (-raw).exp()),
        }
    }

    /// Policy choice for the given runtime tolerance. A classifier is bound
    /// to its training tau and ignores the runtime value.
    pub fn decide(&self, params: LogNormalParams, tau: f64) -> PolicyKind {
        match self.mode {
            ModelMode::Regress => {
                if self.predict_score(params) >= tau {
                    PolicyKind::Patient
                } else {
                    PolicyKind::Greedy
                }
            }
            ModelMode::Classify { .. } => {
                if self.predict_score(params) >= 0.5 {
                    PolicyKind::Patient
                } else {
                    PolicyKind::Greedy
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let io_err = |source| ModelError::Io { path: path.display().to_string(), source };
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| ModelError::BadModel(e.to_string()))?;
        std::fs::write(path, text).map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let io_err = |source| ModelError::Io { path: path.display().to_string(), source };
        let text = std::fs::read_to_string(path).map_err(io_err)?;
        let model: GapModel =
            serde_json::from_str(&text).map_err(|e| ModelError::BadModel(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::BadModel(format!(
                "unsupported format version {}",
                model.format_version
            )));
        }
        if model.mlp.layer_sizes() != model.layer_sizes || model.layer_sizes.first() != Some(&2) {
            return Err(ModelError::BadModel("layer size chain mismatch".into()));
        }
        if !(model.norm.mu_max > model.norm.mu_min && model.norm.sigma_max > model.norm.sigma_min) {
            return Err(ModelError::BadModel("degenerate normalization box".into()));
        }
        Ok(model)
    }
}

impl GapScorer for GapModel {
    fn score(&self, params: LogNormalParams) -> f64 {
        self.predict_score(params)
    }

    fn decide(&self, params: LogNormalParams, tau: f64) -> PolicyKind {
        GapModel::decide(self, params, tau)
    }
}

/// Quality summary of one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Max relative error of analytic vs central-difference gradients,
    /// measured before training was accepted.
    pub gradient_check_error: f64,
    pub epochs_run: usize,
    pub final_train_loss: f64,
    /// Regress mode: RMSE on the transformed score scale over held-out
    /// points (training points when no holdout was reserved).
    pub held_out_rmse: Option<f64>,
    /// Classify mode: held-out accuracy at probability 0.5. Regress mode:
    /// held-out agreement of 1{predicted >= 0.10} with oracle labels.
    pub held_out_accuracy: f64,
    pub train_size: usize,
    pub holdout_size: usize,
}

/// Train a gap model on labeled samples. The analytic gradient is verified
/// against central finite differences at 10 random coordinates before any
/// training step runs.
pub fn train(samples: &[GapSample], hp: &Hyperparams) -> Result<(GapModel, TrainReport), ModelError> {
    if samples.is_empty() {
        return Err(ModelError::BadDataset("empty dataset".into()));
    }
    if hp.layer_sizes.first() != Some(&2) || hp.layer_sizes.last() != Some(&1) {
        return Err(ModelError::Training(format!(
            "layer chain must run 2 -> ... -> 1, got {:?}",
            hp.layer_sizes
        )));
    }
    let norm = NormBox::from_samples(samples)?;

    let (loss_kind, target): (LossKind, fn(&GapSample, f64) -> f64) = match hp.mode {
        ModelMode::Regress => (LossKind::SquaredError, |s, _| transform_score(s.score)),
        ModelMode::Classify { .. } => (
            LossKind::LogisticCrossEntropy,
            |s, tau| f64::from(s.score >= tau),
        ),
    };
    let tau_train = match hp.mode {
        ModelMode::Classify { tau } => tau,
        ModelMode::Regress => 0.0,
    };

    let xs: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| norm.normalize(LogNormalParams { mu: s.mu, sigma: s.sigma }))
        .collect();
    let ys: Vec<f64> = samples.iter().map(|s| target(s, tau_train)).collect();

    // deterministic holdout split
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.split_seed);
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let n_holdout = ((samples.len() as f64) * hp.holdout_frac).floor() as usize;
    let (holdout_idx, train_idx) = order.split_at(n_holdout);
    let take = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>, Vec<usize>) {
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        (
            sorted.iter().map(|&i| xs[i].clone()).collect(),
            sorted.iter().map(|&i| ys[i]).collect(),
            sorted,
        )
    };
    let (train_xs, train_ys, _) = take(train_idx);
    let (holdout_xs, holdout_ys, holdout_sorted) = take(holdout_idx);

    let mut mlp = Mlp::new(&hp.layer_sizes, hp.init_seed);
    let grad_err = gradient_check(&mlp, &train_xs, &train_ys, loss_kind, 10, hp.init_seed ^ 0x67726164);
    if grad_err >= 1e-4 {
        return Err(ModelError::GradientCheck(grad_err));
    }

    let stats = fit_full_batch(
        &mut mlp,
        &train_xs,
        &train_ys,
        loss_kind,
        hp.learning_rate,
        hp.max_epochs,
        hp.patience,
    )
    .map_err(ModelError::Training)?;

    let model = GapModel {
        format_version: MODEL_FORMAT_VERSION,
        mode: hp.mode,
        layer_sizes: hp.layer_sizes.clone(),
        norm,
        mlp,
    };

    // held-out evaluation; falls back to the training set when no holdout
    let (eval_xs, eval_ys, eval_idx): (&[Vec<f64>], &[f64], Vec<usize>) = if holdout_xs.is_empty() {
        let idx: Vec<usize> = {
            let mut v = train_idx.to_vec();
            v.sort_unstable();
            v
        };
        (&train_xs, &train_ys, idx)
    } else {
        (&holdout_xs, &holdout_ys, holdout_sorted)
    };

    let (rmse, accuracy) = match hp.mode {
        ModelMode::Regress => {
            let mut se = 0.0;
            let mut correct = 0usize;
            for (x, (&y, &i)) in eval_xs.iter().zip(eval_ys.iter().zip(&eval_idx)) {
                let z = model.mlp.forward(x)[0];
                se += (z - y) * (z - y);
                let predicted_patient = inverse_transform(z) >= 0.1;
                let label_patient = samples[i].score >= 0.1;
                correct += usize::from(predicted_patient == label_patient);
            }
            (
                Some((se / eval_xs.len() as f64).sqrt()),
                correct as f64 / eval_xs.len() as f64,
            )
        }
        ModelMode::Classify { .. } => {
            let correct = eval_xs
                .iter()
                .zip(eval_ys)
                .filter(|(x, &y)| {
                    let p = 1.0 / (1.0 + (-model.mlp.forward(x)[0]).exp());
                    (p >= 0.5) == (y >= 0.5)
                })
                .count();
            (None, correct as f64 / eval_xs.len() as f64)
        }
    };

    Ok((
        model,
        TrainReport {
            gradient_check_error: grad_err,
            epochs_run: stats.epochs_run,
            final_train_loss: stats.final_loss,
            held_out_rmse: rmse,
            held_out_accuracy: accuracy,
            train_size: train_xs.len(),
            holdout_size: holdout_xs.len(),
        },
    ))
}

/// One point of a decision-boundary contour. `rising` marks crossings where
/// the score passes tau from below as mu increases (the greedy-to-patient
/// side of the ridge); falling crossings bound the degenerate high-mu region
/// where both losses vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourPoint {
    pub sigma: f64,
    pub mu: f64,
    pub rising: bool,
}

fn crossings(mus: &[f64], scores: &[f64], tau: f64) -> Vec<(f64, bool)> {
    let mut out = Vec::new();
    for i in 0..mus.len().saturating_sub(1) {
        let (a, b) = (scores[i] - tau, scores[i + 1] - tau);
        if a == 0.0 {
            out.push((mus[i], b > 0.0));
        } else if a * b < 0.0 {
            let t = a / (a - b);
            out.push((mus[i] + t * (mus[i + 1] - mus[i]), b > 0.0));
        }
    }
    if let Some(&last) = scores.last() {
        if last == tau && scores.len() >= 2 {
            out.push((*mus.last().unwrap(), scores[scores.len() - 2] < tau));
        }
    }
    out
}

/// For each sigma grid line, the mu value(s) where the model's predicted
/// score crosses tau (linear interpolation between adjacent grid points).
/// Lines without a crossing are omitted.
pub fn extract_decision_boundary(model: &GapModel, tau: f64, grid: &GridSpec) -> Vec<ContourPoint> {
    let mus = grid.mu_values();
    let mut out = Vec::new();
    for sigma in grid.sigma_values() {
        let scores: Vec<f64> = mus
            .iter()
            .map(|&mu| model.predict_score(LogNormalParams { mu, sigma }))
            .collect();
        for (mu, rising) in crossings(&mus, &scores, tau) {
            out.push(ContourPoint { sigma, mu, rising });
        }
    }
    out
}

/// Same scan over the oracle-labeled samples themselves (samples must be the
/// sigma-major output of [`build_training_grid`] on `grid`).
pub fn oracle_decision_boundary(
    samples: &[GapSample],
    tau: f64,
    grid: &GridSpec,
) -> Vec<ContourPoint> {
    let mus = grid.mu_values();
    let sigmas = grid.sigma_values();
    assert_eq!(samples.len(), mus.len() * sigmas.len(), "samples do not tile the grid");
    let mut out = Vec::new();
    for (row, &sigma) in sigmas.iter().enumerate() {
        let scores: Vec<f64> = samples[row * mus.len()..(row + 1) * mus.len()]
            .iter()
            .map(|s| s.score)
            .collect();
        for (mu, rising) in crossings(&mus, &scores, tau) {
            out.push(ContourPoint { sigma, mu, rising });
        }
    }
    out
}
