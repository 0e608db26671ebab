//! Simulation of Sequential Pull/No-pull Bandits (SPNB).
//!
//! Arms are offered one at a time in a fixed order; each group of `K` steps is
//! a round, and at every step the learner either pulls the offered arm or
//! skips it. The crate provides:
//!
//! * [`env`]: arm sets, the round clock and seeded Bernoulli feedback;
//! * [`policy`]: UCB1, Bayes-UCB, Thompson sampling and UCB-E;
//! * [`seq`]: the naive one-pull-per-round adapter and the Seq meta-algorithm;
//! * [`elimination`]: UCBrev+ and SR+, which pull every surviving arm each round;
//! * [`metrics`]: regret and identification metrics and closed-form bounds;
//! * [`experiments`]: instance generators, data loaders and scenarios;
//! * [`runner`]: seeded batches, in parallel or sequentially, written to CSV.

pub mod beta;
pub mod elimination;
pub mod env;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod policy;
pub mod runner;
pub mod seq;

pub use env::{ArmSet, Environment, FeedbackSource, FeedbackTable, LazyFeedback, RngStream, RoundClock};
pub use error::{Error, Result};
pub use experiments::{ExperimentConfig, Scenario};
pub use policy::{Policy, PolicyKind, PolicyParams, PolicyState};
pub use runner::{run_batch, run_batch_with, Algorithm, BatchOutput, Execution, RunResult};
pub use seq::{Action, BaiResult, StopMode, Trace};
