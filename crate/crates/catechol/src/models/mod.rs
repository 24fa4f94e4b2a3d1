//! The three predictors and their training loops.

pub mod deep;
pub mod gbdt;
pub mod gnn;
pub mod train;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error("bad model input: {0}")]
    BadInput(String),
    #[error("insufficient data: {rows} rows, need at least {needed}")]
    InsufficientData { rows: usize, needed: usize },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error(transparent)]
    Optim(#[from] crate::autodiff::OptimError),
}

/// Scalar conditions normalized to roughly unit scale before entering any
/// network: T' = (T - 60)/60, tau' = tau/300, pctB' = pctB/100.
pub fn normalize_conditions(temperature_c: f64, residence_time_s: f64, pct_b: f64) -> [f64; 3] {
    [
        (temperature_c - 60.0) / 60.0,
        residence_time_s / 300.0,
        pct_b / 100.0,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_ranges() {
        assert_eq!(normalize_conditions(60.0, 0.0, 0.0), [0.0, 0.0, 0.0]);
        assert_eq!(normalize_conditions(120.0, 300.0, 100.0), [1.0, 1.0, 1.0]);
        assert_eq!(normalize_conditions(90.0, 150.0, 50.0), [0.5, 0.5, 0.5]);
    }
}
