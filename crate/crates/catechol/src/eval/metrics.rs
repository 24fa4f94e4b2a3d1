//! Error metrics and the inverse-variance ensemble combiner.

use super::EvalError;

pub const ENSEMBLE_EPSILON: f64 = 1e-6;

/// Per-target and pooled mean squared error.
pub fn mse(pred: &[[f64; 3]], truth: &[[f64; 3]]) -> Result<([f64; 3], f64), EvalError> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(EvalError::ShapeMismatch {
            what: "mse",
            lhs: pred.len(),
            rhs: truth.len(),
        });
    }
    let n = pred.len() as f64;
    let mut per_target = [0.0; 3];
    for (p, t) in pred.iter().zip(truth) {
        for k in 0..3 {
            per_target[k] += (p[k] - t[k]).powi(2) / n;
        }
    }
    let pooled = per_target.iter().sum::<f64>() / 3.0;
    Ok((per_target, pooled))
}

/// Unbiased sample standard deviation; 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Variance of one prediction's three outputs, the paper's per-row
/// uncertainty proxy.
pub fn row_variance(pred: &[f64; 3]) -> f64 {
    let mean = (pred[0] + pred[1] + pred[2]) / 3.0;
    pred.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / 3.0
}

/// Inverse-variance weighted combination of two predictions,
/// componentwise, with weights w = 1/(sigma^2 + epsilon).
pub fn ensemble_combine(pred_a: &[f64; 3], pred_b: &[f64; 3], var_a: f64, var_b: f64) -> [f64; 3] {
    let w_a = 1.0 / (var_a.max(0.0) + ENSEMBLE_EPSILON);
    let w_b = 1.0 / (var_b.max(0.0) + ENSEMBLE_EPSILON);
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[k] = (w_a * pred_a[k] + w_b * pred_b[k]) / (w_a + w_b);
    }
    out
}

/// Clamp a baseline prediction into the physical yield range.
pub fn clamp_unit(pred: &[f64; 3]) -> [f64; 3] {
    [
        pred[0].clamp(0.0, 1.0),
        pred[1].clamp(0.0, 1.0),
        pred[2].clamp(0.0, 1.0),
    ]
}
