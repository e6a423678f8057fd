use crate::error::{check_len, MepError, Result};
use crate::replay::Trajectory;

/// Smallest per-dimension scale; constant dimensions standardize to zero.
pub const SCALE_FLOOR: f64 = 1e-8;

/// A flattened, standardized achieved-goal trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFeature {
    pub vector: Vec<f64>,
}

impl AsRef<[f64]> for TrajectoryFeature {
    fn as_ref(&self) -> &[f64] {
        &self.vector
    }
}

/// Row-major flattening `(g_0, g_1, …, g_T)` of the achieved goals.
pub fn flatten_goals(trajectory: &Trajectory) -> Vec<f64> {
    trajectory.achieved_goals.iter().flatten().copied().collect()
}

/// Per-dimension affine standardization of flattened goal trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub horizon: usize,
    pub goal_dim: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(horizon: usize, goal_dim: usize) -> Self {
        let n = (horizon + 1) * goal_dim;
        Self {
            horizon,
            goal_dim,
            mean: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    /// Mean and population standard deviation of every feature dimension.
    pub fn fit<'a, I>(trajectories: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Trajectory>,
    {
        let mut iter = trajectories.into_iter().peekable();
        let first = iter.peek().ok_or(MepError::EmptyBuffer)?;
        let (horizon, goal_dim) = (first.horizon(), first.goal_dim());
        let n_dim = (horizon + 1) * goal_dim;
        let mut sum = vec![0.0; n_dim];
        let mut sum_sq = vec![0.0; n_dim];
        let mut rows = Vec::new();
        for t in iter {
            let row = flatten_goals(t);
            check_len(n_dim, row.len())?;
            for (s, v) in sum.iter_mut().zip(&row) {
                *s += v;
            }
            rows.push(row);
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        for row in &rows {
            for ((ss, v), m) in sum_sq.iter_mut().zip(row).zip(&mean) {
                *ss += (v - m) * (v - m);
            }
        }
        let scale = sum_sq.iter().map(|ss| (ss / n).sqrt().max(SCALE_FLOOR)).collect();
        Ok(Self {
            horizon,
            goal_dim,
            mean,
            scale,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn featurize(&self, trajectory: &Trajectory) -> Result<TrajectoryFeature> {
        check_len(self.horizon, trajectory.horizon())?;
        check_len(self.goal_dim, trajectory.goal_dim())?;
        let raw = flatten_goals(trajectory);
        let vector = raw
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect();
        Ok(TrajectoryFeature { vector })
    }

    pub fn unstandardize(&self, feature: &TrajectoryFeature) -> Result<Vec<f64>> {
        check_len(self.feature_dim(), feature.vector.len())?;
        Ok(feature
            .vector
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((z, m), s)| z * s + m)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::State;

    fn traj(goals: &[[f64; 2]]) -> Trajectory {
        let states: Vec<State> = goals
            .iter()
            .map(|g| State {
                achieved_goal: g.to_vec(),
                context: vec![0.0, 0.0],
            })
            .collect();
        let t = goals.len() - 1;
        Trajectory::new(states, vec![vec![0.0, 0.0]; t], vec![-1.0; t], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn flattening_with_identity() {
        let s = Standardizer::identity(1, 2);
        let f = s.featurize(&traj(&[[0.0, 0.0], [1.0, 1.0]])).unwrap();
        assert_eq!(f.vector, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn constant_dimension_is_floored() {
        let ts = [traj(&[[0.5, 0.1], [0.2, 0.3]]), traj(&[[0.5, 0.4], [0.6, 0.7]])];
        let s = Standardizer::fit(&ts).unwrap();
        assert_eq!(s.scale[0], SCALE_FLOOR);
        for t in &ts {
            assert_eq!(s.featurize(t).unwrap().vector[0], 0.0);
        }
        assert!((s.scale[1] - 0.15).abs() < 1e-12);
    }

    #[test]
    fn unstandardize_inverts() {
        let ts = [
            traj(&[[0.5, 0.1], [0.2, 0.3], [0.9, 0.0]]),
            traj(&[[0.5, 0.4], [0.6, 0.7], [0.1, 0.2]]),
            traj(&[[0.5, 0.9], [0.3, 0.2], [0.4, 0.4]]),
        ];
        let s = Standardizer::fit(&ts).unwrap();
        for t in &ts {
            let back = s.unstandardize(&s.featurize(t).unwrap()).unwrap();
            for (a, b) in back.iter().zip(flatten_goals(t)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn horizon_mismatch() {
        let s = Standardizer::identity(3, 2);
        assert!(s.featurize(&traj(&[[0.0, 0.0], [1.0, 1.0]])).is_err());
        assert!(Standardizer::fit(std::iter::empty()).is_err());
    }
}
