//! Loss and prediction-error metrics.

use std::collections::BTreeMap;

use crate::error::{invalid, FnnError, Result};

fn check(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(FnnError::DimensionMismatch(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(invalid("empty prediction vector"));
    }
    Ok(())
}

/// `R = Σ (y − ŷ)²`.
pub fn squared_error_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, y)| (y - p).powi(2)).sum())
}

/// `R / N`.
pub fn mean_squared_error(pred: &[f64], target: &[f64]) -> Result<f64> {
    Ok(squared_error_loss(pred, target)? / pred.len() as f64)
}

/// `1 − Σ(y − ŷ)² / Σ(y − ȳ)²`. NaN when the targets are constant.
pub fn r_squared(pred: &[f64], target: &[f64]) -> Result<f64> {
    let sse = squared_error_loss(pred, target)?;
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let sst: f64 = target.iter().map(|y| (y - mean).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// Population (divide-by-N) variance.
pub fn population_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// `MSPE / Var(y)` with the population variance of the observed targets.
pub fn mep(pred: &[f64], target: &[f64]) -> Result<f64> {
    Ok(mean_squared_error(pred, target)? / population_variance(target))
}

/// Divides every model's MSPE by the smallest one.
pub fn rmspe(mspe_by_model: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    if mspe_by_model.is_empty() {
        return Err(invalid("no models to compare"));
    }
    if let Some((name, v)) = mspe_by_model.iter().find(|(_, v)| !(**v > 0.0)) {
        return Err(invalid(format!("MSPE of {name} is not positive: {v}")));
    }
    let min = mspe_by_model.values().copied().fold(f64::INFINITY, f64::min);
    Ok(mspe_by_model
        .iter()
        .map(|(k, v)| (k.clone(), v / min))
        .collect())
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
