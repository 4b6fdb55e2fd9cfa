//! Decoupled classifiers with a learned group partition.
//!
//! A system is a pooled logistic classifier, `K` decoupled logistic
//! classifiers and a group-assignment network. Training maximizes a smooth
//! surrogate of a fairness objective under which every sample should prefer
//! its own group's classifier over the pooled one and over every other
//! group's classifier.

pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod models;
pub mod objective;
pub mod rng;
pub mod training;

pub use data::{Dataset, Schema};
pub use error::{Error, Result};
pub use models::{init_system, TrainedSystem};
pub use training::{train_dafh, TrainConfig};
