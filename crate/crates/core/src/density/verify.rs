//! Randomized sweeps over the inequalities in [`super::theory`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::theory::{
    check_entropy_increase, check_lower_bound, majorization_gap, proposal_distribution,
    random_simplex,
};
use crate::error::Result;

/// Entropy may drop by at most this much due to rounding.
pub const ENTROPY_SLACK: f64 = 1e-12;
/// Below this the entropy gain counts as zero.
pub const EQUALITY_TOL: f64 = 1e-9;
pub const MAJORIZATION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub name: &'static str,
    pub checked: usize,
    pub passed: usize,
    /// Smallest margin seen (entropy gain, bound gap or partial-sum gap).
    pub worst_margin: f64,
    pub worst_instance: Vec<f64>,
    /// First violating instance, if any.
    pub first_failure: Option<Vec<f64>>,
}

impl SweepSummary {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checked: 0,
            passed: 0,
            worst_margin: f64::INFINITY,
            worst_instance: Vec::new(),
            first_failure: None,
        }
    }

    fn record(&mut self, margin: f64, ok: bool, instance: &[f64]) {
        self.checked += 1;
        if ok {
            self.passed += 1;
        } else if self.first_failure.is_none() {
            self.first_failure = Some(instance.to_vec());
        }
        if margin < self.worst_margin {
            self.worst_margin = margin;
            self.worst_instance = instance.to_vec();
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checked > 0 && self.passed == self.checked
    }
}

fn draw_n(rng: &mut ChaCha8Rng, sizes: (usize, usize)) -> usize {
    rng.random_range(sizes.0..=sizes.1)
}

/// Random interior simplexes: the proposal entropy never falls below the
/// original (within [`ENTROPY_SLACK`]) and only ties on uniform inputs.
/// Uniform vectors of every size in `sizes` are checked in addition.
pub fn sweep_entropy_increase(instances: usize, sizes: (usize, usize), seed: u64) -> Result<SweepSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SweepSummary::new("entropy_increase");
    for _ in 0..instances {
        let n = draw_n(&mut rng, sizes);
        let p = random_simplex(n, &mut rng);
        let r = check_entropy_increase(&p)?;
        // A strict gain above the tie tolerance also rules out any loss.
        s.record(r.delta, r.delta > EQUALITY_TOL, &p);
    }
    for n in sizes.0.max(2)..=sizes.1 {
        let p = vec![1.0 / n as f64; n];
        let r = check_entropy_increase(&p)?;
        s.record(r.delta.abs().max(0.0), r.delta.abs() < EQUALITY_TOL, &p);
    }
    Ok(s)
}

/// Random interior simplexes with non-negative returns, at least one
/// positive: the surrogate stays strictly below the weighted entropy.
/// Instances are stored as `p ‖ returns`.
pub fn sweep_lower_bound(instances: usize, sizes: (usize, usize), seed: u64) -> Result<SweepSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SweepSummary::new("lower_bound");
    for _ in 0..instances {
        let n = draw_n(&mut rng, sizes);
        let p = random_simplex(n, &mut rng);
        let mut returns: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random_range(0.0..50.0) })
            .collect();
        if returns.iter().all(|r| *r == 0.0) {
            let i = rng.random_range(0..n);
            returns[i] = 1.0;
        }
        let r = check_lower_bound(&p, &returns)?;
        let mut inst = p.clone();
        inst.extend_from_slice(&returns);
        let ok = r.holds && r.eta_l < r.eta_h && r.min_term_margin >= 0.0;
        s.record(r.eta_h - r.eta_l, ok, &inst);
    }
    Ok(s)
}

/// Descending partial sums of `p` dominate those of its proposal.
pub fn sweep_majorization(instances: usize, sizes: (usize, usize), seed: u64) -> Result<SweepSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SweepSummary::new("majorization");
    for _ in 0..instances {
        let n = draw_n(&mut rng, sizes);
        let p = random_simplex(n, &mut rng);
        let (q, _) = proposal_distribution(&p)?;
        let gap = majorization_gap(&p, &q)?;
        s.record(gap, gap >= -MAJORIZATION_SLACK, &p);
    }
    Ok(s)
}
