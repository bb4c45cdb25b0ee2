//! Log-normal point estimation from positive sojourn samples.

use thiserror::Error;

use crate::market::LogNormalParams;

#[derive(Debug, Error, PartialEq)]
pub enum EstimationError {
    #[error("insufficient data: need at least 2 samples, got {0}")]
    InsufficientData(usize),
    #[error("invalid sample: sojourn times must be strictly positive, got {0}")]
    InvalidSample(f64),
}

/// Sojourn samples collected during one decision window.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub values: Vec<f64>,
    pub window_index: u64,
}

impl SampleBatch {
    pub fn new(values: Vec<f64>, window_index: u64) -> Self {
        SampleBatch { values, window_index }
    }
}

/// Maximum-likelihood fit: mean and population (1/n) standard deviation of
/// the log samples. The 1/n variance keeps the estimator exactly the MLE;
/// at realistic window sizes the difference from 1/(n-1) is negligible.
pub fn fit_lognormal(batch: &SampleBatch) -> Result<LogNormalParams, EstimationError> {
    let n = batch.values.len();
    if n < 2 {
        return Err(EstimationError::InsufficientData(n));
    }
    let mut logs = Vec::with_capacity(n);
    for &x in &batch.values {
        if !(x > 0.0) || !x.is_finite() {
            return Err(EstimationError::InvalidSample(x));
        }
        logs.push(x.ln());
    }
    // identical samples short-circuit so sigma is exactly zero (the mean of
    // n copies of one float can differ from it by an ulp)
    if logs.iter().all(|&l| l == logs[0]) {
        return Ok(LogNormalParams { mu: logs[0], sigma: 0.0 });
    }
    let mu = logs.iter().sum::<f64>() / n as f64;
    let var = logs.iter().map(|l| (l - mu) * (l - mu)).sum::<f64>() / n as f64;
    Ok(LogNormalParams { mu, sigma: var.sqrt() })
}
