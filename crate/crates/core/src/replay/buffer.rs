use crate::envs::{GoalVec, State};
use crate::error::{check_len, MepError, Result};

/// One fixed-length episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `T + 1` states, `states[0]` being the reset state.
    pub states: Vec<State>,
    /// `T` actions; `actions[t]` moves `states[t]` to `states[t + 1]`.
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub env_goal: GoalVec,
    /// The achieved-goal slices of `states`.
    pub achieved_goals: Vec<GoalVec>,
    /// Insertion index, assigned by [`EpisodicBuffer::store_episode`].
    pub id: u64,
}

impl Trajectory {
    pub fn new(
        states: Vec<State>,
        actions: Vec<Vec<f64>>,
        rewards: Vec<f64>,
        env_goal: GoalVec,
    ) -> Result<Self> {
        let achieved_goals = states.iter().map(|s| s.achieved_goal.clone()).collect();
        let traj = Self {
            states,
            actions,
            rewards,
            env_goal,
            achieved_goals,
            id: 0,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn goal_dim(&self) -> usize {
        self.env_goal.len()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.actions.len();
        if t == 0 {
            return Err(MepError::InvalidArgument("trajectory has no transitions".into()));
        }
        check_len(t + 1, self.states.len())?;
        check_len(t, self.rewards.len())?;
        check_len(t + 1, self.achieved_goals.len())?;
        for (s, g) in self.states.iter().zip(&self.achieved_goals) {
            if &s.achieved_goal != g {
                return Err(MepError::InvalidArgument(
                    "achieved_goals must mirror the states' achieved-goal slices".into(),
                ));
            }
            check_len(self.env_goal.len(), g.len())?;
        }
        let finite = self
            .states
            .iter()
            .flat_map(|s| s.achieved_goal.iter().chain(&s.context))
            .chain(self.actions.iter().flatten())
            .chain(&self.rewards)
            .chain(&self.env_goal)
            .all(|v| v.is_finite());
        if !finite {
            return Err(MepError::NonFinite("trajectory"));
        }
        Ok(())
    }

    /// Sum of rewards over the episode.
    pub fn episode_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Where a stored episode landed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreReceipt {
    pub id: u64,
    pub slot: usize,
    pub evicted: Option<u64>,
}

/// Ring buffer of whole episodes with oldest-first eviction.
///
/// Slots are stable for the lifetime of an episode, which lets
/// transition-level structures index by `slot * T + t`.
#[derive(Debug, Clone)]
pub struct EpisodicBuffer {
    capacity: usize,
    slots: Vec<Trajectory>,
    /// Slot holding the oldest episode once the buffer has wrapped.
    oldest: usize,
    next_id: u64,
    horizon: Option<usize>,
}

impl EpisodicBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(MepError::InvalidArgument("buffer capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            slots: Vec::new(),
            oldest: 0,
            next_id: 0,
            horizon: None,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Horizon shared by every stored episode, once one has been stored.
    pub fn horizon(&self) -> Option<usize> {
        self.horizon
    }

    pub fn num_transitions(&self) -> usize {
        self.len() * self.horizon.unwrap_or(0)
    }

    pub fn store_episode(&mut self, mut trajectory: Trajectory) -> Result<StoreReceipt> {
        trajectory.validate()?;
        if let Some(t) = self.horizon {
            check_len(t, trajectory.horizon())?;
        } else {
            self.horizon = Some(trajectory.horizon());
        }
        let id = self.next_id;
        self.next_id += 1;
        trajectory.id = id;
        if self.slots.len() < self.capacity {
            self.slots.push(trajectory);
            return Ok(StoreReceipt {
                id,
                slot: self.slots.len() - 1,
                evicted: None,
            });
        }
        let slot = self.oldest;
        let evicted = std::mem::replace(&mut self.slots[slot], trajectory).id;
        self.oldest = (self.oldest + 1) % self.capacity;
        Ok(StoreReceipt {
            id,
            slot,
            evicted: Some(evicted),
        })
    }

    /// Slot of the `i`-th oldest episode.
    pub fn slot_of(&self, i: usize) -> usize {
        if self.slots.len() < self.capacity {
            i
        } else {
            (self.oldest + i) % self.capacity
        }
    }

    /// The `i`-th oldest episode.
    pub fn get(&self, i: usize) -> Option<&Trajectory> {
        if i >= self.len() {
            return None;
        }
        self.slots.get(self.slot_of(i))
    }

    pub fn get_slot(&self, slot: usize) -> Option<&Trajectory> {
        self.slots.get(slot)
    }

    /// Episodes from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Trajectory> + '_ {
        (0..self.len()).map(move |i| &self.slots[self.slot_of(i)])
    }

    pub fn ids(&self) -> Vec<u64> {
        self.iter().map(|t| t.id).collect()
    }
}
