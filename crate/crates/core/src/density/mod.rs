//! Trajectory density estimation and the entropy machinery built on it.

mod entropy;
mod features;
mod mog;
pub mod theory;
pub mod verify;

pub use entropy::{buffer_goal_entropy, goal_entropy_estimate};
pub use features::{flatten_goals, Standardizer, TrajectoryFeature, SCALE_FLOOR};
pub use mog::{fit_mog, mog_density, MogConfig, MogFit, MogParams, MOG_MAGIC, VARIANCE_FLOOR};
pub use theory::{
    check_entropy_increase, check_lower_bound, complementary_density, entropy, majorization_gap,
    proposal_distribution, random_simplex, EntropyReport, LowerBoundReport,
};
