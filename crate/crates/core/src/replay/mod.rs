//! Episodic replay with uniform, hindsight, rank-prioritized and
//! sum-tree prioritized sampling.

mod buffer;
mod her;
mod priority;
mod sampler;
mod sum_tree;

pub use buffer::{EpisodicBuffer, StoreReceipt, Trajectory};
pub use her::{her_relabel, HerConfig, HerStrategy, RelabeledSample};
pub use priority::{compute_priorities, PriorityTable};
pub use sampler::{sample_batch, PerConfig, PerState, Sampler};
pub use sum_tree::SumTree;
