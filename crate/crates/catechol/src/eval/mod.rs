//! Cross-validated benchmarking: split plans, metrics, the fold runner
//! and report emission.

pub mod benchmark;
pub mod metrics;
pub mod splits;

pub use benchmark::{
    ablation_suite, build_features, dataset_digest, run_benchmark, sha256_hex, AblationReport,
    BenchmarkReport, BenchmarkRequest, FeatureContext, FoldResult, Method, RunSettings,
};
pub use metrics::{clamp_unit, ensemble_combine, mse, row_variance, sample_std};
pub use splits::{carve_validation, make_splits, Fold, Protocol, SplitPlan};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown protocol '{0}' (expected loso, loro or random)")]
    BadProtocol(String),
    #[error("unknown method '{0}' (expected gbdt, deepmodel, ensemble, gnn or mlp)")]
    BadMethod(String),
    #[error("too few groups for {protocol}: found {found}, need at least 2")]
    TooFewGroups {
        protocol: &'static str,
        found: usize,
    },
    #[error("shape mismatch in {what}: {lhs} vs {rhs}")]
    ShapeMismatch {
        what: &'static str,
        lhs: usize,
        rhs: usize,
    },
    #[error("unknown override key '{0}'")]
    BadOverride(String),
    #[error("bad override value for '{key}': {message}")]
    BadOverrideValue { key: String, message: String },
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Drfp(#[from] crate::drfp::DrfpError),
    #[error(transparent)]
    Descriptor(#[from] crate::descriptors::DescriptorError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
