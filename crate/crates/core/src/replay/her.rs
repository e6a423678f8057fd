use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::envs::{compute_reward, EnvSpec, GoalVec, State};
use crate::error::{MepError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HerStrategy {
    /// Substitute an achieved goal from a uniformly chosen later timestep.
    Future,
    /// Substitute the last achieved goal of the episode.
    Final,
}

impl FromStr for HerStrategy {
    type Err = MepError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "future" => Ok(HerStrategy::Future),
            "final" => Ok(HerStrategy::Final),
            _ => Err(MepError::UnknownName {
                kind: "relabel strategy",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HerConfig {
    pub strategy: HerStrategy,
    pub relabel_prob: f64,
}

impl Default for HerConfig {
    fn default() -> Self {
        // relabel_prob = k / (k + 1) with k = 4 substituted goals per real one.
        Self {
            strategy: HerStrategy::Future,
            relabel_prob: 0.8,
        }
    }
}

/// A single transition ready for a critic/actor update.
#[derive(Debug, Clone, PartialEq)]
pub struct RelabeledSample {
    pub state: State,
    pub action: Vec<f64>,
    pub next_state: State,
    pub goal: GoalVec,
    pub reward: f64,
    /// Importance weight; 1 unless sampled by PER.
    pub td_weight: f64,
    pub trajectory_id: u64,
    pub t: usize,
    /// Timestep whose achieved goal replaced the environment goal.
    pub goal_index: Option<usize>,
    /// Sum-tree leaf, for PER priority updates.
    pub leaf: Option<usize>,
}

/// Builds the sample for transition `t` of `trajectory`, substituting the
/// goal with probability `relabel_prob` and recomputing the reward.
pub fn her_relabel<R: Rng + ?Sized>(
    trajectory: &Trajectory,
    t: usize,
    spec: &EnvSpec,
    her: Option<&HerConfig>,
    rng: &mut R,
) -> Result<RelabeledSample> {
    let horizon = trajectory.horizon();
    if t >= horizon {
        return Err(MepError::InvalidArgument(format!(
            "timestep {t} out of range for horizon {horizon}"
        )));
    }
    let goal_index = match her {
        Some(cfg) if cfg.relabel_prob > 0.0 && rng.random::<f64>() < cfg.relabel_prob => {
            Some(match cfg.strategy {
                HerStrategy::Future => rng.random_range(t + 1..=horizon),
                HerStrategy::Final => horizon,
            })
        }
        _ => None,
    };
    let (goal, reward) = match goal_index {
        Some(i) => {
            let g = trajectory.achieved_goals[i].clone();
            let r = compute_reward(&trajectory.achieved_goals[t + 1], &g, spec)?;
            (g, r)
        }
        None => (trajectory.env_goal.clone(), trajectory.rewards[t]),
    };
    Ok(RelabeledSample {
        state: trajectory.states[t].clone(),
        action: trajectory.actions[t].clone(),
        next_state: trajectory.states[t + 1].clone(),
        goal,
        reward,
        td_weight: 1.0,
        trajectory_id: trajectory.id,
        t,
        goal_index,
        leaf: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvKind, PointEnv};
    use crate::replay::buffer::tests::line_trajectory;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> EnvSpec {
        *PointEnv::new(EnvKind::PointReach).spec()
    }

    #[test]
    fn zero_prob_keeps_env_goal() {
        let traj = line_trajectory(50, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = HerConfig { strategy: HerStrategy::Future, relabel_prob: 0.0 };
        for t in 0..50 {
            let s = her_relabel(&traj, t, &spec(), Some(&cfg), &mut rng).unwrap();
            assert_eq!(s.goal, traj.env_goal);
            assert_eq!(s.reward, traj.rewards[t]);
            assert_eq!(s.goal_index, None);
        }
    }

    #[test]
    fn next_step_goal_always_rewarded() {
        let traj = line_trajectory(1, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = HerConfig { strategy: HerStrategy::Future, relabel_prob: 1.0 };
        let s = her_relabel(&traj, 0, &spec(), Some(&cfg), &mut rng).unwrap();
        assert_eq!(s.goal_index, Some(1));
        assert_eq!(s.reward, 0.0);
    }

    #[test]
    fn future_goals_come_from_later_steps() {
        let traj = line_trajectory(50, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = HerConfig { strategy: HerStrategy::Future, relabel_prob: 1.0 };
        for t in 0..50 {
            for _ in 0..20 {
                let s = her_relabel(&traj, t, &spec(), Some(&cfg), &mut rng).unwrap();
                let i = s.goal_index.unwrap();
                assert!(i > t && i <= 50);
                assert_eq!(s.goal, traj.achieved_goals[i]);
                let r = compute_reward(&s.next_state.achieved_goal, &s.goal, &spec()).unwrap();
                assert_eq!(s.reward, r);
            }
        }
    }

    #[test]
    fn final_strategy_uses_last_goal() {
        let traj = line_trajectory(10, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = HerConfig { strategy: HerStrategy::Final, relabel_prob: 1.0 };
        let s = her_relabel(&traj, 4, &spec(), Some(&cfg), &mut rng).unwrap();
        assert_eq!(s.goal, traj.achieved_goals[10]);
    }

    #[test]
    fn out_of_range_timestep() {
        let traj = line_trajectory(5, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(her_relabel(&traj, 5, &spec(), None, &mut rng).is_err());
    }
}
