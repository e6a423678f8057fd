use std::collections::BTreeMap;

use crate::error::{check_len, MepError, Result};
use crate::replay::EpisodicBuffer;

/// Plug-in entropy (nats) of goals histogrammed on a uniform grid with
/// `resolution` cells per axis over the box `[low, high]^d`. Points outside
/// the box are clipped into the border cells.
pub fn goal_entropy_estimate<'a, I>(goals: I, resolution: usize, low: f64, high: f64) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    if resolution < 2 {
        return Err(MepError::InvalidArgument("grid resolution must be at least 2".into()));
    }
    if !(high > low) {
        return Err(MepError::InvalidArgument("empty goal box".into()));
    }
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut total = 0usize;
    let mut dim = None;
    for g in goals {
        match dim {
            None => dim = Some(g.len()),
            Some(d) => check_len(d, g.len())?,
        }
        let cell: Vec<usize> = g
            .iter()
            .map(|x| {
                let u = ((x - low) / (high - low) * resolution as f64).floor();
                (u.max(0.0) as usize).min(resolution - 1)
            })
            .collect();
        *counts.entry(cell).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(MepError::EmptyBuffer);
    }
    let n = total as f64;
    Ok(-counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>())
}

/// Entropy of the final achieved goals in the buffer over the unit box.
pub fn buffer_goal_entropy(buffer: &EpisodicBuffer, resolution: usize) -> Result<f64> {
    goal_entropy_estimate(
        buffer
            .iter()
            .map(|t| t.achieved_goals.last().expect("validated trajectory").as_slice()),
        resolution,
        0.0,
        1.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_has_zero_entropy() {
        let goals = vec![vec![0.31, 0.72]; 100];
        let h = goal_entropy_estimate(goals.iter().map(Vec::as_slice), 10, 0.0, 1.0).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn uniform_over_cells_is_log_m() {
        // One goal at the center of each of m = 7 distinct cells, 3 times over.
        let goals: Vec<Vec<f64>> = (0..21).map(|i| vec![(i % 7) as f64 / 10.0 + 0.05, 0.55]).collect();
        let h = goal_entropy_estimate(goals.iter().map(Vec::as_slice), 10, 0.0, 1.0).unwrap();
        assert!((h - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn edges_are_clipped() {
        let goals = [vec![1.0, 1.0], vec![0.95, 0.99], vec![-0.1, 0.0], vec![0.0, 0.01]];
        let h = goal_entropy_estimate(goals.iter().map(Vec::as_slice), 10, 0.0, 1.0).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bad_arguments() {
        let goals = [vec![0.5, 0.5]];
        assert!(goal_entropy_estimate(goals.iter().map(Vec::as_slice), 1, 0.0, 1.0).is_err());
        assert!(goal_entropy_estimate(std::iter::empty(), 10, 0.0, 1.0).is_err());
    }
}
