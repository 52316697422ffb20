//! Tabular partially observable RL with privileged state access during training.
//!
//! On the single-agent side there are exact and finite-memory beliefs along with
//! expert distillation through learned decoders. A belief-weighted asymmetric
//! actor-critic learns its own approximate belief from explored data. On the
//! multi-agent side, optimistic value iteration runs over shared common
//! information and state-based equilibria are executed through per-agent
//! decoders. Instances are small enough to check against enumeration.
//!
//! The `examples/` directory has one runnable program per capability:
//! `cargo run --example NAME`.

pub mod asymmetric_ac;
pub mod baselines;
pub mod belief;
pub mod distill;
pub mod env;
pub mod error;
pub mod harness;
pub mod learning;
pub mod marl;
pub mod mdp;
pub mod model;
pub mod observability;
pub mod policy;
pub mod util;

pub use error::{Error, Result};
