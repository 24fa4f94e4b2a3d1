//! Minimal reverse-mode automatic differentiation.
//!
//! The models in this crate are small enough that a dense, f64, tape-based
//! engine is both simpler and easier to verify than an external framework.
//! All operators carry finite-difference checks in the test suite.

pub mod mat;
pub mod optim;
pub mod rng;
pub mod tape;

pub use mat::Mat;
pub use optim::{OptimError, ParamStore, Parameter, PlateauScheduler};
pub use tape::{sigmoid, AutodiffError, NodeId, Tape};
