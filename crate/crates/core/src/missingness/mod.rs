//! Missing-data machinery: MAR amputation for simulation, multiple
//! imputation by chained equations with predictive mean matching, and
//! Rubin's-rules pooling of importance estimates.

mod amputation;
mod mice;
mod rubin;

pub use amputation::{ampute, monotone_violations, AmputationSpec};
pub use mice::{mice_impute, write_imputations, ImputationManifest, MiceOptions};
pub use rubin::{pool_rubin, pool_rubin_values, PooledEstimate};
