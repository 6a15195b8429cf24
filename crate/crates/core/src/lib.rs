//! Intrinsic variable selection with Shapley population variable importance,
//! cross-fitting, multiple imputation and error-rate-controlling selection.

pub mod data;
pub mod error;
pub mod learners;
pub mod missingness;
pub mod predictiveness;
pub mod seed;
pub mod selection;
pub mod sim;
pub mod spvim;
pub mod stats;

pub use data::{Dataset, FeatureSet, FoldAssignment, OutcomeKind};
pub use error::{Error, Result};
pub use predictiveness::{Measure, PredictivenessEstimate};
pub use missingness::{MiceOptions, PooledEstimate};
pub use selection::{select, ErrorControl, SelectionConfig, SelectionResult};
pub use spvim::{estimate_spvim, SpvimEstimate, SpvimOptions};
