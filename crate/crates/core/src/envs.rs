//! Point-mass reaching tasks with sparse goal-conditioned rewards.
//!
//! The state is `achieved_goal ‖ context` where the achieved goal is the
//! 2-D position and the context is the last (clamped) action. Episodes have
//! a fixed horizon and never terminate early.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, MepError, Result};

pub type GoalVec = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub achieved_goal: GoalVec,
    pub context: Vec<f64>,
}

impl State {
    /// Full observation vector `achieved_goal ‖ context`.
    pub fn observation(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.achieved_goal.len() + self.context.len());
        v.extend_from_slice(&self.achieved_goal);
        v.extend_from_slice(&self.context);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub goal_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub tolerance: f64,
    pub action_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    PointReach,
    DriftReach,
}

impl EnvKind {
    pub const ALL: [EnvKind; 2] = [EnvKind::PointReach, EnvKind::DriftReach];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::PointReach => "point_reach",
            EnvKind::DriftReach => "drift_reach",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = MepError;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| MepError::UnknownName {
                kind: "environment",
                name: s.to_string(),
            })
    }
}

pub const ARENA_CENTER: [f64; 2] = [0.5, 0.5];
const STEP_SCALE: f64 = 0.05;
const DRIFT: [f64; 2] = [-0.02, 0.0];

/// Sparse reward: `0` when `‖achieved − desired‖₂ ≤ tolerance`, else `−1`.
pub fn compute_reward(achieved: &[f64], desired: &[f64], spec: &EnvSpec) -> Result<f64> {
    check_len(spec.goal_dim, achieved.len())?;
    check_len(spec.goal_dim, desired.len())?;
    Ok(if goal_distance(achieved, desired) <= spec.tolerance {
        0.0
    } else {
        -1.0
    })
}

pub fn goal_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: State,
    pub reward: f64,
    pub done: bool,
    pub is_success: bool,
}

/// A point in the unit square moved by velocity commands.
#[derive(Debug, Clone)]
pub struct PointEnv {
    kind: EnvKind,
    spec: EnvSpec,
    drift: [f64; 2],
    position: [f64; 2],
    last_action: [f64; 2],
    goal: [f64; 2],
    t: usize,
}

impl PointEnv {
    pub fn new(kind: EnvKind) -> Self {
        let drift = match kind {
            EnvKind::PointReach => [0.0, 0.0],
            EnvKind::DriftReach => DRIFT,
        };
        Self {
            kind,
            spec: EnvSpec {
                state_dim: 4,
                goal_dim: 2,
                action_dim: 2,
                horizon: 50,
                tolerance: 0.05,
                action_bound: 1.0,
            },
            drift,
            position: ARENA_CENTER,
            last_action: [0.0; 2],
            goal: ARENA_CENTER,
            t: 0,
        }
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    pub fn goal(&self) -> GoalVec {
        self.goal.to_vec()
    }

    fn state(&self) -> State {
        State {
            achieved_goal: self.position.to_vec(),
            context: self.last_action.to_vec(),
        }
    }

    /// Starts an episode: goal uniform over the unit square, position at the
    /// arena center, zero context.
    pub fn reset(&mut self, seed: u64) -> (State, GoalVec) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.goal = [rng.random::<f64>(), rng.random::<f64>()];
        self.position = ARENA_CENTER;
        self.last_action = [0.0; 2];
        self.t = 0;
        (self.state(), self.goal())
    }

    /// Overrides the goal of the current episode (used by scripted checks).
    pub fn set_goal(&mut self, goal: [f64; 2]) {
        self.goal = goal;
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.t >= self.spec.horizon {
            return Err(MepError::EpisodeFinished(self.t));
        }
        check_len(self.spec.action_dim, action.len())?;
        if !action.iter().all(|a| a.is_finite()) {
            return Err(MepError::NonFinite("action"));
        }
        let bound = self.spec.action_bound;
        for (i, raw) in action.iter().enumerate() {
            let a = raw.clamp(-bound, bound);
            self.last_action[i] = a;
            self.position[i] = (self.position[i] + STEP_SCALE * a + self.drift[i]).clamp(0.0, 1.0);
        }
        self.t += 1;
        let reward = compute_reward(&self.position, &self.goal, &self.spec)?;
        Ok(StepOutcome {
            state: self.state(),
            reward,
            done: self.t == self.spec.horizon,
            is_success: reward == 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> EnvSpec {
        *PointEnv::new(EnvKind::PointReach).spec()
    }

    #[test]
    fn names_roundtrip() {
        for k in EnvKind::ALL {
            assert_eq!(k.name().parse::<EnvKind>().unwrap(), k);
        }
        assert!("fetch_push".parse::<EnvKind>().is_err());
    }

    #[test]
    fn reset_starts_at_center() {
        let mut env = PointEnv::new(EnvKind::PointReach);
        for seed in [0, 1, 99] {
            let (s, g) = env.reset(seed);
            assert_eq!(s.achieved_goal, vec![0.5, 0.5]);
            assert_eq!(s.context, vec![0.0, 0.0]);
            assert!(g.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = PointEnv::new(EnvKind::DriftReach);
        let mut b = PointEnv::new(EnvKind::DriftReach);
        assert_eq!(a.reset(42), b.reset(42));
        assert_ne!(a.reset(42).1, b.reset(43).1);
    }

    #[test]
    fn reward_at_goal_is_zero() {
        let mut env = PointEnv::new(EnvKind::PointReach);
        env.reset(0);
        env.set_goal([0.55, 0.5]);
        let out = env.step(&[1.0, 0.0]).unwrap();
        assert_eq!(out.state.achieved_goal, vec![0.55, 0.5]);
        assert_eq!(out.reward, 0.0);
        assert!(out.is_success);
    }

    #[test]
    fn reward_two_tolerances_away_is_minus_one() {
        let s = spec();
        assert_eq!(compute_reward(&[0.2, 0.2], &[0.3, 0.2], &s).unwrap(), -1.0);
        let mut env = PointEnv::new(EnvKind::PointReach);
        env.reset(0);
        env.set_goal([0.5, 0.6]);
        let out = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(out.reward, -1.0);
        assert!(!out.is_success);
    }

    #[test]
    fn reward_boundary() {
        let s = spec();
        assert_eq!(compute_reward(&[0.3, 0.3], &[0.3, 0.3], &s).unwrap(), 0.0);
        assert_eq!(compute_reward(&[0.0, 0.0], &[0.05, 0.0], &s).unwrap(), 0.0);
        assert_eq!(compute_reward(&[0.0, 0.0], &[0.05 + 1e-9, 0.0], &s).unwrap(), -1.0);
        assert!(compute_reward(&[0.0], &[0.0, 0.0], &s).is_err());
    }

    #[test]
    fn walls_clamp_position() {
        let mut env = PointEnv::new(EnvKind::PointReach);
        env.reset(3);
        for _ in 0..20 {
            let out = env.step(&[5.0, -5.0]).unwrap();
            assert!(out.state.achieved_goal.iter().all(|x| (0.0..=1.0).contains(x)));
            assert_eq!(out.state.context, vec![1.0, -1.0]);
        }
        assert_eq!(env.state().achieved_goal, vec![1.0, 0.0]);
    }

    #[test]
    fn fixed_horizon_then_error() {
        let mut env = PointEnv::new(EnvKind::DriftReach);
        env.reset(5);
        env.set_goal([0.5, 0.5]);
        for t in 1..=50 {
            let out = env.step(&[0.0, 0.0]).unwrap();
            assert_eq!(out.done, t == 50);
        }
        assert!(matches!(env.step(&[0.0, 0.0]), Err(MepError::EpisodeFinished(50))));
    }

    #[test]
    fn drift_pushes_left() {
        let mut env = PointEnv::new(EnvKind::DriftReach);
        env.reset(0);
        let out = env.step(&[0.0, 0.0]).unwrap();
        assert!((out.state.achieved_goal[0] - 0.48).abs() < 1e-12);
        assert_eq!(out.state.achieved_goal[1], 0.5);
    }

    #[test]
    fn step_reward_matches_compute_reward() {
        let mut env = PointEnv::new(EnvKind::DriftReach);
        let (_, g) = env.reset(17);
        let mut a = [0.3, -0.7];
        for _ in 0..50 {
            let out = env.step(&a).unwrap();
            assert_eq!(out.reward, compute_reward(&out.state.achieved_goal, &g, env.spec()).unwrap());
            a = [-a[1], a[0]];
        }
    }
}
