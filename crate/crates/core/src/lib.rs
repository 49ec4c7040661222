//! Synthetic multi-problem bandit lab for studying how a fixed rollout budget
//! `C = B_p * n * M` should be split between problems per batch, rollouts
//! per problem and update steps, plus the frontier analysis that turns
//! sweeps into a recommended `n*(C)`.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod frontier;
pub mod metrics;
pub mod policy;
pub mod population;
pub mod seed;
pub mod sweep;
pub mod trainer;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use policy::PolicyState;
pub use population::{generate_population, Population, PopulationConfig, Problem};
pub use trainer::{run_training, Recipe, RunLog, TrainConfig};
