use super::{MlpGrads, MlpParams};
use crate::error::{check_len, MepError, Result};

/// Floor added to the relative-error denominator.
const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index (weights first, then biases) of the worst entry.
    pub worst_index: usize,
    /// Analytic and numeric values at `worst_index`.
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    pub pass: bool,
}

/// Derivative of `f` at 0 by central differences, halving the step from `h`
/// until two successive estimates agree. Agreement allows `1e-7` relative
/// plus the f64 cancellation noise of a difference of values near `scale`.
///
/// A ReLU network loss is piecewise smooth; an estimate whose interval
/// straddles a kink changes when the step halves, so the first agreeing pair
/// lies on one smooth piece. A large first step keeps cancellation noise far
/// below the slope of tiny gradient entries.
fn halving_central<F: FnMut(f64) -> f64>(mut f: F, h: f64, scale: f64) -> f64 {
    const HALVINGS: usize = 16;
    let mut hh = h;
    let mut prev = (f(hh) - f(-hh)) / (2.0 * hh);
    for _ in 0..HALVINGS {
        hh /= 2.0;
        let d = (f(hh) - f(-hh)) / (2.0 * hh);
        let noise = 64.0 * f64::EPSILON * scale.abs().max(f64::MIN_POSITIVE) / hh;
        if (d - prev).abs() <= 1e-7 * d.abs() + noise {
            return d;
        }
        prev = d;
    }
    prev
}

/// Compares `analytic` against numeric derivatives of `loss` around `params`,
/// entry by entry (see [`halving_central`]; `step` is the first step). Relative
/// error is `|a - n| / (max(|a|, |n|) + 1e-8)`.
pub fn gradient_check<F>(
    params: &MlpParams,
    loss: F,
    analytic: &MlpGrads,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&MlpParams) -> f64,
{
    analytic.same_shape(params)?;
    if !(step > 0.0) {
        return Err(MepError::InvalidArgument("finite-difference step must be positive".into()));
    }
    let n = params.num_params();
    let mut probe = params.clone();
    let scale = loss(params);
    let mut worst = (0.0f64, 0usize, 0.0f64, 0.0f64);
    for idx in 0..n {
        let orig = params.flat_get(idx);
        let numeric = halving_central(
            |d| {
                probe.flat_set(idx, orig + d);
                loss(&probe)
            },
            step,
            scale,
        );
        probe.flat_set(idx, orig);
        let a = analytic.flat_get(idx);
        if !numeric.is_finite() || !a.is_finite() {
            return Err(MepError::NonFinite("gradient check"));
        }
        let rel = (a - numeric).abs() / (a.abs().max(numeric.abs()) + REL_FLOOR);
        if rel > worst.0 {
            worst = (rel, idx, a, numeric);
        }
    }
    Ok(GradCheckReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        worst_analytic: worst.2,
        worst_numeric: worst.3,
        checked: n,
        pass: worst.0 < tolerance,
    })
}

/// Mean squared error `1/(2B) * sum ||f(x) - y||^2` over a batch, with its
/// analytic gradient.
pub fn mse_loss(params: &MlpParams, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, MlpGrads)> {
    check_len(inputs.len(), targets.len())?;
    if inputs.is_empty() {
        return Err(MepError::InvalidArgument("empty batch".into()));
    }
    let scale = 1.0 / inputs.len() as f64;
    let mut grads = MlpGrads::zeros_like(params);
    let mut total = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        let cache = params.forward_cached(x)?;
        check_len(params.output_dim(), y.len())?;
        let diff: Vec<f64> = cache.output().iter().zip(y).map(|(o, t)| o - t).collect();
        total += 0.5 * scale * diff.iter().map(|d| d * d).sum::<f64>();
        let upstream: Vec<f64> = diff.iter().map(|d| d * scale).collect();
        params.backward_into(&cache, &upstream, &mut grads)?;
    }
    Ok((total, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::OutputActivation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sum_sq(p: &MlpParams) -> f64 {
        p.weights.iter().chain(&p.biases).flatten().map(|v| v * v).sum()
    }

    #[test]
    fn kink_inside_first_step_is_stepped_over() {
        // relu(x - 3e-5)^2 + x at x = 0: the kink sits inside the first
        // step but the slope at 0 is exactly 1.
        let f = |x: f64| (x - 3e-5).max(0.0).powi(2) + x;
        let d = halving_central(f, 1e-3, 1.0);
        assert!((d - 1.0).abs() < 1e-9, "{d}");
        // tiny slopes survive a large step
        let d = halving_central(|x| 1.0 + 2e-8 * x, 1e-3, 1.0);
        assert!((d - 2e-8).abs() < 1e-12, "{d}");
    }

    #[test]
    fn quadratic_loss_matches_to_machine_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = MlpParams::init(&[2, 3, 1], OutputActivation::Identity, &mut rng).unwrap();
        let mut g = MlpGrads::zeros_like(&p);
        for idx in 0..p.num_params() {
            g.flat_set(idx, 2.0 * p.flat_get(idx));
        }
        let r = gradient_check(&p, sum_sq, &g, 1e-5, 1e-9).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.checked, 13);
    }

    #[test]
    fn random_mlp_with_mse_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for out in [OutputActivation::Identity, OutputActivation::Tanh] {
            let p = MlpParams::init(&[4, 8, 8, 2], out, &mut rng).unwrap();
            let xs: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let ys: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let (_, g) = mse_loss(&p, &xs, &ys).unwrap();
            let r = gradient_check(&p, |q| mse_loss(q, &xs, &ys).unwrap().0, &g, 1e-5, 1e-4).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn corrupted_gradient_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = MlpParams::init(&[2, 3, 1], OutputActivation::Identity, &mut rng).unwrap();
        let mut g = MlpGrads::zeros_like(&p);
        for idx in 0..p.num_params() {
            g.flat_set(idx, 2.0 * p.flat_get(idx));
        }
        let i = 4;
        g.flat_set(i, g.flat_get(i) * 2.0);
        let r = gradient_check(&p, sum_sq, &g, 1e-5, 1e-4).unwrap();
        assert!(!r.pass);
        assert_eq!(r.worst_index, i);
    }
}
