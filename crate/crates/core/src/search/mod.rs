//! Losses and the search loops: first-order bi-level and single-level
//! optimization of network weights and architecture weights.

mod config;
mod losses;
mod train;

pub use config::{LossVariant, NoiseSchedule, Optimization, SearchConfig, ZeroOneScope};
pub use losses::{alpha_objective, polarization, zero_one_loss, zero_one_loss_abs, Objective};
pub use train::{run_search, stream_rng, LossReport, SearchOutcome, Searcher, Split};
