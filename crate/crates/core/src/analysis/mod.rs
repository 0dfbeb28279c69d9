//! Metrics over search trajectories and their export.

mod dominance;
mod export;
mod metrics;
mod trajectory;

pub use dominance::{
    boundary_epoch, count_dominant, default_rule, dominance_over_time, extinction_order, skip_boundaries,
    DominanceCount, DominanceRule, Extinction, EXTINCTION_LEVEL,
};
pub use export::{export_heatmap, export_trajectory, parse_trajectory_csv, trajectory_csv, Heatmap, CSV_HEADER};
pub use metrics::{
    departed_fraction, discrepancy, epochs_to_departure, histogram, is_non_monotone, mean_discrepancy,
    polarized_fraction, sigma_histogram,
};
pub use trajectory::{Snapshot, Trajectory};
