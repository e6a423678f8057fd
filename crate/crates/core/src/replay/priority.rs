//! Rank-based trajectory priorities built from density estimates.
//!
//! Trajectories are ranked by estimated density in descending order, so the
//! most common trajectory gets rank 1 and the rarest rank `N`. Each
//! trajectory is then replayed with probability `rank / (N (N + 1) / 2)`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::EpisodicBuffer;
use crate::error::{check_len, MepError, Result};

#[derive(Debug, Clone)]
pub struct PriorityTable {
    /// Ids of the trajectories, oldest first, matching buffer order.
    pub trajectory_ids: Vec<u64>,
    pub log_density: Vec<f64>,
    pub density: Vec<f64>,
    /// Density normalized over the buffer.
    pub normalized_prob: Vec<f64>,
    /// `p (1 - p) / Z`.
    pub proposal_prob: Vec<f64>,
    /// 1-based rank; the lowest density holds rank `N`.
    pub rank: Vec<usize>,
    pub sample_prob: Vec<f64>,
    /// `Z = Σ p (1 - p)`.
    pub normalization: f64,
    /// Set when every density was zero and sampling fell back to uniform.
    pub uniform_fallback: bool,
    sampler: WeightedIndex<f64>,
}

impl PriorityTable {
    /// Builds the table from per-trajectory log densities, which avoids
    /// underflow for high-dimensional trajectory features.
    pub fn from_log_densities(trajectory_ids: &[u64], log_density: &[f64]) -> Result<Self> {
        check_len(trajectory_ids.len(), log_density.len())?;
        let n = log_density.len();
        if n == 0 {
            return Err(MepError::EmptyBuffer);
        }
        if log_density.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(MepError::NonFinite("trajectory density"));
        }

        let max = log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let uniform_fallback = max == f64::NEG_INFINITY;
        let normalized_prob: Vec<f64> = if uniform_fallback {
            vec![1.0 / n as f64; n]
        } else {
            let w: Vec<f64> = log_density.iter().map(|l| (l - max).exp()).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        };

        let unnorm: Vec<f64> = normalized_prob.iter().map(|p| p * (1.0 - p)).collect();
        let normalization: f64 = unnorm.iter().sum();
        let proposal_prob = if normalization > 0.0 {
            unnorm.iter().map(|q| q / normalization).collect()
        } else {
            // One trajectory carries all the mass.
            normalized_prob.clone()
        };

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            log_density[b]
                .partial_cmp(&log_density[a])
                .expect("NaN rejected above")
                .then(trajectory_ids[a].cmp(&trajectory_ids[b]))
        });
        let mut rank = vec![0; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r + 1;
        }

        let sample_prob: Vec<f64> = if uniform_fallback {
            vec![1.0 / n as f64; n]
        } else {
            let total = (n * (n + 1) / 2) as f64;
            rank.iter().map(|&r| r as f64 / total).collect()
        };
        let sampler = WeightedIndex::new(&sample_prob)
            .map_err(|e| MepError::InvalidArgument(format!("sampling weights: {e}")))?;

        Ok(Self {
            trajectory_ids: trajectory_ids.to_vec(),
            log_density: log_density.to_vec(),
            density: log_density.iter().map(|l| l.exp()).collect(),
            normalized_prob,
            proposal_prob,
            rank,
            sample_prob,
            normalization,
            uniform_fallback,
            sampler,
        })
    }

    pub fn len(&self) -> usize {
        self.rank.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rank.is_empty()
    }

    /// Draws a buffer position (oldest = 0) with probability `sample_prob`.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }

    /// Errors unless the table was built for exactly the buffer's contents.
    pub fn check_current(&self, buffer: &EpisodicBuffer) -> Result<()> {
        let fresh = buffer.len() == self.len()
            && buffer
                .iter()
                .zip(&self.trajectory_ids)
                .all(|(t, id)| t.id == *id);
        if fresh {
            Ok(())
        } else {
            Err(MepError::StalePriorities {
                table: self.len(),
                buffer: buffer.len(),
            })
        }
    }
}

/// Priority table for the buffer from raw (non-negative) densities, one per
/// stored trajectory in oldest-first order.
pub fn compute_priorities(buffer: &EpisodicBuffer, densities: &[f64]) -> Result<PriorityTable> {
    check_len(buffer.len(), densities.len())?;
    if densities.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(MepError::InvalidArgument(
            "densities must be finite and non-negative".into(),
        ));
    }
    let logs: Vec<f64> = densities.iter().map(|d| d.ln()).collect();
    PriorityTable::from_log_densities(&buffer.ids(), &logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(d: &[f64]) -> PriorityTable {
        let ids: Vec<u64> = (0..d.len() as u64).collect();
        let logs: Vec<f64> = d.iter().map(|x| x.ln()).collect();
        PriorityTable::from_log_densities(&ids, &logs).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn worked_example() {
        let t = table(&[0.01, 0.003, 0.02]);
        assert_eq!(t.rank, vec![2, 3, 1]);
        close(&t.sample_prob, &[2.0 / 6.0, 3.0 / 6.0, 1.0 / 6.0]);
        close(&t.normalized_prob, &[0.01 / 0.033, 0.003 / 0.033, 0.02 / 0.033]);
        assert!(!t.uniform_fallback);
    }

    #[test]
    fn ties_favor_older_id_for_lower_rank() {
        let t = table(&[0.5, 0.5]);
        assert_eq!(t.rank, vec![1, 2]);
        close(&t.sample_prob, &[1.0 / 3.0, 2.0 / 3.0]);
        let t = table(&[2.0; 5]);
        assert_eq!(t.rank, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn single_trajectory() {
        let t = table(&[3.7]);
        assert_eq!(t.rank, vec![1]);
        assert_eq!(t.sample_prob, vec![1.0]);
        assert_eq!(t.proposal_prob, vec![1.0]);
    }

    #[test]
    fn all_zero_falls_back_to_uniform() {
        let t = table(&[0.0, 0.0, 0.0, 0.0]);
        assert!(t.uniform_fallback);
        assert_eq!(t.sample_prob, vec![0.25; 4]);
    }

    #[test]
    fn proposal_is_p_times_one_minus_p() {
        let t = table(&[0.8, 0.2]);
        close(&t.proposal_prob, &[0.5, 0.5]);
        assert!((t.normalization - 0.32).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_densities() {
        let ids = [0u64, 1];
        assert!(PriorityTable::from_log_densities(&ids, &[0.0, f64::NAN]).is_err());
        assert!(PriorityTable::from_log_densities(&ids, &[0.0]).is_err());
        assert!(PriorityTable::from_log_densities(&[], &[]).is_err());
    }

    #[test]
    fn huge_log_density_gaps_do_not_underflow_ranks() {
        let ids = [0u64, 1, 2];
        let t = PriorityTable::from_log_densities(&ids, &[-900.0, -2000.0, -1000.0]).unwrap();
        assert_eq!(t.rank, vec![1, 3, 2]);
        assert!((t.normalized_prob.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
