use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{her_relabel, EpisodicBuffer, HerConfig, PriorityTable, RelabeledSample, SumTree};
use crate::envs::EnvSpec;
use crate::error::{MepError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerConfig {
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub priority_floor: f64,
}

impl Default for PerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta_start: 0.4,
            beta_end: 1.0,
            priority_floor: 1e-6,
        }
    }
}

impl PerConfig {
    /// Linearly annealed importance exponent at training fraction `progress`.
    pub fn beta_at(&self, progress: f64) -> f64 {
        let f = progress.clamp(0.0, 1.0);
        self.beta_start + f * (self.beta_end - self.beta_start)
    }
}

/// Transition-level proportional priorities. Leaf `slot * T + t` holds
/// `priority^alpha` of transition `t` of the episode in buffer slot `slot`.
#[derive(Debug, Clone)]
pub struct PerState {
    tree: SumTree,
    horizon: usize,
    config: PerConfig,
    max_priority: f64,
}

impl PerState {
    pub fn new(buffer_capacity: usize, horizon: usize, config: PerConfig) -> Self {
        Self {
            tree: SumTree::new(buffer_capacity * horizon),
            horizon,
            config,
            max_priority: 1.0,
        }
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn config(&self) -> &PerConfig {
        &self.config
    }

    /// New episodes enter at the largest priority seen so far.
    pub fn on_store(&mut self, slot: usize) -> Result<()> {
        let p = self.max_priority.powf(self.config.alpha);
        for t in 0..self.horizon {
            self.tree.update(slot * self.horizon + t, p)?;
        }
        Ok(())
    }

    pub fn update_priorities(&mut self, leaves: &[usize], td_errors: &[f64]) -> Result<()> {
        crate::error::check_len(leaves.len(), td_errors.len())?;
        for (&leaf, &td) in leaves.iter().zip(td_errors) {
            if !td.is_finite() {
                return Err(MepError::NonFinite("td error"));
            }
            let p = td.abs() + self.config.priority_floor;
            self.max_priority = self.max_priority.max(p);
            self.tree.update(leaf, p.powf(self.config.alpha))?;
        }
        Ok(())
    }
}

/// How trajectories (or transitions) are drawn from the buffer.
#[derive(Debug, Clone, Copy)]
pub enum Sampler<'a> {
    Uniform,
    /// Trajectory by rank priority, timestep uniform.
    Mep(&'a PriorityTable),
    /// Transition proportional to `priority^alpha`, weighted by
    /// `(N P)^(-beta)` normalized by the batch maximum.
    Per { state: &'a PerState, beta: f64 },
}

/// Draws `batch_size` transitions and applies hindsight relabeling when
/// `her` is given.
pub fn sample_batch<R: Rng + ?Sized>(
    buffer: &EpisodicBuffer,
    sampler: Sampler<'_>,
    batch_size: usize,
    her: Option<&HerConfig>,
    spec: &EnvSpec,
    rng: &mut R,
) -> Result<Vec<RelabeledSample>> {
    if buffer.is_empty() {
        return Err(MepError::EmptyBuffer);
    }
    let horizon = buffer.horizon().expect("non-empty buffer has a horizon");
    let mut batch = Vec::with_capacity(batch_size);
    match sampler {
        Sampler::Uniform => {
            for _ in 0..batch_size {
                let traj = buffer.get(rng.random_range(0..buffer.len())).unwrap();
                let t = rng.random_range(0..horizon);
                batch.push(her_relabel(traj, t, spec, her, rng)?);
            }
        }
        Sampler::Mep(table) => {
            table.check_current(buffer)?;
            for _ in 0..batch_size {
                let traj = buffer.get(table.sample_index(rng)).unwrap();
                let t = rng.random_range(0..horizon);
                batch.push(her_relabel(traj, t, spec, her, rng)?);
            }
        }
        Sampler::Per { state, beta } => {
            if state.horizon != horizon {
                return Err(MepError::Shape {
                    expected: horizon,
                    actual: state.horizon,
                });
            }
            let total = state.tree.total();
            if !(total > 0.0) {
                return Err(MepError::InvalidArgument("sum-tree holds no priority mass".into()));
            }
            let n = buffer.num_transitions() as f64;
            let mut max_w = 0.0f64;
            for _ in 0..batch_size {
                let leaf = state.tree.find_prefix(rng.random::<f64>() * total);
                let (slot, t) = (leaf / horizon, leaf % horizon);
                let traj = buffer.get_slot(slot).ok_or_else(|| {
                    MepError::InvalidArgument(format!("priority on empty buffer slot {slot}"))
                })?;
                let prob = state.tree.get(leaf) / total;
                let w = (n * prob).powf(-beta);
                max_w = max_w.max(w);
                let mut s = her_relabel(traj, t, spec, her, rng)?;
                s.td_weight = w;
                s.leaf = Some(leaf);
                batch.push(s);
            }
            for s in &mut batch {
                s.td_weight /= max_w;
            }
        }
    }
    Ok(batch)
}
