//! Reaction yield prediction for catechol alkylation in solvent mixtures.
//!
//! The crate covers the full pipeline: SMILES parsing into molecular
//! graphs, graph featurization and batching, reaction difference
//! fingerprints, solvent descriptor tables with PCA, a small reverse-mode
//! autodiff engine, the three models (graph attention network, deep
//! tabular network, gradient boosted trees), inverse-variance ensembling
//! and the cross-validation harness behind the CLI.

pub mod autodiff;
pub mod data;
pub mod descriptors;
pub mod drfp;
pub mod eval;
pub mod featurize;
pub mod models;
pub mod smiles;
