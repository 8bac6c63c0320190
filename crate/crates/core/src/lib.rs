//! Bilevel Bayesian optimization guided by expert hypotheses.
//!
//! Hypotheses are linear constraint systems over a box-bounded search space.
//! The [`engine`] alternates local GP-BO inside each hypothesis with global
//! GP-BO over the whole space.

pub mod acquisition;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod gp;
pub mod harness;
pub mod her;
pub mod nelder_mead;
pub mod objectives;
pub mod space;
pub mod trace;

pub use dataset::Dataset;
pub use engine::{run, EngineConfig};
pub use error::{Error, Result};
pub use space::{Hypothesis, SearchSpace};
pub use trace::{Source, Trace, TraceRecord};
