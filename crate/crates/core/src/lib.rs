//! Joint-objective training core.
//!
//! An enhancer network is trained against two objectives at once: a
//! regression loss toward clean targets and a classification loss routed
//! through a frozen proxy classifier. The [`combiner`] module decides how
//! the two gradients are mixed at every step: a calibration coefficient
//! keeps the update from fighting the regression direction, and an adaptive
//! surrogate-prior coefficient reweights the regression term over time.
//! [`trainer`] wires both into a Langevin-noise SGD loop, and [`task`]
//! provides a synthetic desk-scale data pipeline (class-conditional clean
//! features, SNR-controlled noise mixing, frozen proxy/evaluator models).
//!
//! The crate is `no_std` + `alloc`; all IO, file formats, and the CLI live
//! in the companion `auxcal-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod combiner;
pub mod error;
pub mod net;
pub mod objective;
pub mod rng;
pub mod task;
pub mod trainer;
pub mod vecmath;

pub use combiner::{CombinerConfig, CombinerState};
pub use error::CoreError;
pub use net::{Activation, NetworkSpec, OutputActivation};
pub use objective::{ClsBatch, ProxyModel, RegBatch};
pub use task::{EvaluatorSet, TaskSpec};
pub use trainer::{Mode, RunReport, TaskBundle, TrainerConfig};
pub use vecmath::{Matrix, ParamVector};
