//! The complementary density, the `p (1 - p)` proposal distribution and
//! numerical checks of the two properties the prioritization relies on:
//!
//! * the weighted entropy `Σ p ln(1/p) R` is bounded below by the surrogate
//!   `Σ p (1 - p) R` for non-negative returns `R`;
//! * the proposal has at least the entropy of `p`, because `p` majorizes it.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{check_len, MepError, Result};

/// Tolerance on `Σ p = 1` for inputs to the checkers.
const SIMPLEX_TOL: f64 = 1e-9;

fn validate_interior_simplex(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(MepError::InvalidSimplex("empty".into()));
    }
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v > 0.0 && **v < 1.0)) {
        return Err(MepError::InvalidSimplex(format!("p[{i}] = {v} is outside (0, 1)")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(MepError::InvalidSimplex(format!("sums to {s}")));
    }
    Ok(())
}

/// Shannon entropy in nats; zero-probability entries contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Unnormalized complementary density `1 - p_i`.
pub fn complementary_density(p: &[f64]) -> Result<Vec<f64>> {
    validate_interior_simplex(p)?;
    Ok(p.iter().map(|x| 1.0 - x).collect())
}

/// `q_i = p_i (1 - p_i) / Z` with `Z = Σ p_j (1 - p_j)`.
pub fn proposal_distribution(p: &[f64]) -> Result<(Vec<f64>, f64)> {
    if p.len() < 2 {
        return Err(MepError::InvalidSimplex(
            "the proposal needs at least two outcomes (Z = 0 otherwise)".into(),
        ));
    }
    validate_interior_simplex(p)?;
    let unnorm: Vec<f64> = p.iter().map(|x| x * (1.0 - x)).collect();
    let z: f64 = unnorm.iter().sum();
    Ok((unnorm.iter().map(|u| u / z).collect(), z))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyReport {
    pub h_p: f64,
    pub h_q: f64,
    /// `h_q - h_p`.
    pub delta: f64,
}

/// Entropy of `p` against the entropy of its proposal distribution.
pub fn check_entropy_increase(p: &[f64]) -> Result<EntropyReport> {
    let (q, _) = proposal_distribution(p)?;
    let h_p = entropy(p);
    let h_q = entropy(&q);
    Ok(EntropyReport {
        h_p,
        h_q,
        delta: h_q - h_p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundReport {
    /// Return-weighted entropy `Σ p ln(1/p) R`.
    pub eta_h: f64,
    /// Surrogate `Z · E_q[R] = Σ p (1 - p) R`.
    pub eta_l: f64,
    /// Smallest per-outcome gap `p (ln(1/p) - (1 - p)) R`, never negative.
    pub min_term_margin: f64,
    /// `eta_l < eta_h`, or equality when every return is zero.
    pub holds: bool,
}

/// Compares the return-weighted entropy with its surrogate lower bound.
/// Returns must be non-negative: with negative returns the inequality flips.
pub fn check_lower_bound(p: &[f64], returns: &[f64]) -> Result<LowerBoundReport> {
    validate_interior_simplex(p)?;
    check_len(p.len(), returns.len())?;
    if let Some((i, r)) = returns.iter().enumerate().find(|(_, r)| !(**r >= 0.0) || !r.is_finite()) {
        return Err(MepError::InvalidArgument(format!(
            "return[{i}] = {r}; the bound is only defined for non-negative returns"
        )));
    }
    let mut eta_h = 0.0;
    let mut eta_l = 0.0;
    let mut min_term_margin = f64::INFINITY;
    for (pi, ri) in p.iter().zip(returns) {
        let info = -pi.ln();
        eta_h += pi * info * ri;
        eta_l += pi * (1.0 - pi) * ri;
        min_term_margin = min_term_margin.min(pi * (info - (1.0 - pi)) * ri);
    }
    let any_positive = returns.iter().any(|r| *r > 0.0);
    let holds = if any_positive { eta_l < eta_h } else { eta_l == eta_h };
    Ok(LowerBoundReport {
        eta_h,
        eta_l,
        min_term_margin,
        holds,
    })
}

/// `min_k (Σ_{i≤k} p_(i) − Σ_{i≤k} q_(i))` over descending-sorted partial
/// sums for `k < n` (the full sums are both 1); non-negative exactly when
/// `p` majorizes `q`. Zero for a single outcome.
pub fn majorization_gap(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len(p.len(), q.len())?;
    let sorted_desc = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| b.partial_cmp(a).expect("finite probabilities"));
        s
    };
    let (ps, qs) = (sorted_desc(p), sorted_desc(q));
    let (mut cp, mut cq) = (0.0, 0.0);
    if ps.len() < 2 {
        return Ok(0.0);
    }
    let mut gap = f64::INFINITY;
    for (a, b) in ps.iter().zip(&qs).take(ps.len() - 1) {
        cp += a;
        cq += b;
        gap = gap.min(cp - cq);
    }
    Ok(gap)
}

/// Uniformly random point of the open simplex (Dirichlet(1, …, 1)).
pub fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let e: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let s: f64 = e.iter().sum();
        let p: Vec<f64> = e.iter().map(|x| x / s).collect();
        if p.iter().all(|x| *x > 0.0 && *x < 1.0) {
            return p;
        }
    }
}
