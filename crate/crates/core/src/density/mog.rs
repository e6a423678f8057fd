//! Diagonal-covariance Gaussian mixtures fitted by expectation-maximization.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, MepError, Result};
use crate::nn::checkpoint::{expect_magic, read_f64s, read_u32, write_f64s, write_u32};
use crate::stats::log_sum_exp;

/// Lower bound on every component variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const MOG_MAGIC: &[u8; 6] = b"MEPGM1";

#[derive(Debug, Clone, PartialEq)]
pub struct MogParams {
    /// Mixing coefficients on the simplex.
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Diagonal covariances.
    pub variances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MogConfig {
    pub components: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for MogConfig {
    fn default() -> Self {
        Self {
            components: 3,
            max_iters: 50,
            tol: 1e-4,
            seed: 0,
        }
    }
}

struct Prepared {
    log_norm: Vec<f64>,
    inv_var: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MogFit {
    pub params: MogParams,
    /// Mean per-sample log-likelihood of each successive parameter set.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    /// Set when fewer distinct samples than requested components existed.
    pub clamped_components: Option<usize>,
}

impl MogParams {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 {
            return Err(MepError::DensityFit("mixture has no components".into()));
        }
        check_len(k, self.means.len())?;
        check_len(k, self.variances.len())?;
        let d = self.dim();
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(MepError::DensityFit(format!("mixing weights sum to {sum}")));
        }
        for (m, v) in self.means.iter().zip(&self.variances) {
            check_len(d, m.len())?;
            check_len(d, v.len())?;
            if v.iter().any(|x| !(*x >= VARIANCE_FLOOR) || !x.is_finite()) {
                return Err(MepError::DensityFit("variance below floor".into()));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(MepError::NonFinite("mixture mean"));
            }
        }
        Ok(())
    }

    fn prepare(&self) -> Prepared {
        let d = self.dim() as f64;
        let log_norm = self
            .weights
            .iter()
            .zip(&self.variances)
            .map(|(w, v)| {
                let log_w = if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY };
                let log_det: f64 = v.iter().map(|x| x.ln()).sum();
                log_w - 0.5 * (d * (2.0 * PI).ln() + log_det)
            })
            .collect();
        let inv_var = self
            .variances
            .iter()
            .map(|v| v.iter().map(|x| 1.0 / x).collect())
            .collect();
        Prepared { log_norm, inv_var }
    }

    /// `ln c_k + ln N(x | mean_k, diag var_k)` for every component.
    fn component_log_pdfs(&self, prep: &Prepared, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for ((m, iv), ln) in self.means.iter().zip(&prep.inv_var).zip(&prep.log_norm) {
            let quad: f64 = x
                .iter()
                .zip(m)
                .zip(iv)
                .map(|((xi, mi), w)| (xi - mi) * (xi - mi) * w)
                .sum();
            out.push(ln - 0.5 * quad);
        }
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_densities(&[x])?[0])
    }

    /// [`MogParams::log_density`] for many points, sharing the per-component
    /// setup.
    pub fn log_densities<F: AsRef<[f64]>>(&self, xs: &[F]) -> Result<Vec<f64>> {
        let prep = self.prepare();
        let mut buf = Vec::with_capacity(self.components());
        xs.iter()
            .map(|x| {
                check_len(self.dim(), x.as_ref().len())?;
                self.component_log_pdfs(&prep, x.as_ref(), &mut buf);
                Ok(log_sum_exp(&buf))
            })
            .collect()
    }

    /// `Σ_k c_k N(x | μ_k, Σ_k)`; underflows to 0 only far in the tails of
    /// high-dimensional features, prefer [`MogParams::log_density`] there.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_density(x)?.exp())
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        self.validate()?;
        w.write_all(MOG_MAGIC)?;
        write_u32(w, self.components())?;
        write_u32(w, self.dim())?;
        write_f64s(w, &self.weights)?;
        for m in &self.means {
            write_f64s(w, m)?;
        }
        for v in &self.variances {
            write_f64s(w, v)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        expect_magic(r, MOG_MAGIC)?;
        let k = read_u32(r)?;
        let d = read_u32(r)?;
        let weights = read_f64s(r, k)?;
        let means = (0..k).map(|_| read_f64s(r, d)).collect::<Result<_>>()?;
        let variances = (0..k).map(|_| read_f64s(r, d)).collect::<Result<_>>()?;
        let p = Self {
            weights,
            means,
            variances,
        };
        p.validate()?;
        Ok(p)
    }
}

pub fn mog_density(params: &MogParams, x: &[f64]) -> Result<f64> {
    params.density(x)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn count_distinct<F: AsRef<[f64]>>(data: &[F], limit: usize) -> usize {
    let mut seen: Vec<&[f64]> = Vec::new();
    for x in data {
        let x = x.as_ref();
        if !seen.contains(&x) {
            seen.push(x);
            if seen.len() >= limit {
                break;
            }
        }
    }
    seen.len()
}

/// D²-weighted seeding of `k` centers.
fn seed_centers<F: AsRef<[f64]>>(data: &[F], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centers = vec![data[rng.random_range(0..n)].as_ref().to_vec()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x.as_ref(), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = data[idx].as_ref().to_vec();
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min(sq_dist(x.as_ref(), &c));
        }
        centers.push(c);
    }
    centers
}

/// Fits a `config.components`-component diagonal mixture with EM.
///
/// Stops once the mean log-likelihood improves by less than `config.tol`, or
/// after `config.max_iters` M-steps. The returned parameters are those whose
/// log-likelihood was recorded last.
pub fn fit_mog<F: AsRef<[f64]>>(data: &[F], config: &MogConfig) -> Result<MogFit> {
    let n = data.len();
    if n == 0 {
        return Err(MepError::DensityFit("no samples to fit".into()));
    }
    if config.components == 0 {
        return Err(MepError::InvalidArgument("component count must be positive".into()));
    }
    let dim = data[0].as_ref().len();
    for x in data {
        check_len(dim, x.as_ref().len())?;
        if x.as_ref().iter().any(|v| !v.is_finite()) {
            return Err(MepError::NonFinite("density feature"));
        }
    }
    let distinct = count_distinct(data, config.components);
    let k = config.components.min(distinct);
    let clamped_components = (k < config.components).then_some(k);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centers = seed_centers(data, k, &mut rng);

    let mut global_mean = vec![0.0; dim];
    for x in data {
        for (m, v) in global_mean.iter_mut().zip(x.as_ref()) {
            *m += v / n as f64;
        }
    }
    let mut global_var = vec![0.0; dim];
    for x in data {
        for ((s, v), m) in global_var.iter_mut().zip(x.as_ref()).zip(&global_mean) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    global_var.iter_mut().for_each(|v| *v = v.max(VARIANCE_FLOOR));

    let mut params = MogParams {
        weights: vec![1.0 / k as f64; k],
        means: centers,
        variances: vec![global_var; k],
    };

    let mut resp = vec![0.0; n * k];
    let mut buf = Vec::with_capacity(k);
    let mut history = Vec::new();
    let mut converged = false;
    for iter in 0..=config.max_iters {
        // E-step.
        let mut ll = 0.0;
        let prep = params.prepare();
        for (i, x) in data.iter().enumerate() {
            params.component_log_pdfs(&prep, x.as_ref(), &mut buf);
            let lse = log_sum_exp(&buf);
            ll += lse;
            for (r, l) in resp[i * k..(i + 1) * k].iter_mut().zip(&buf) {
                *r = (l - lse).exp();
            }
        }
        ll /= n as f64;
        if !ll.is_finite() {
            return Err(MepError::DensityFit(format!("log-likelihood became {ll}")));
        }
        if let Some(&prev) = history.last() {
            if ll - prev < config.tol {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        if iter == config.max_iters {
            break;
        }

        // M-step.
        let mut nk = vec![0.0; k];
        for i in 0..n {
            for c in 0..k {
                nk[c] += resp[i * k + c];
            }
        }
        for c in 0..k {
            if nk[c] <= 0.0 {
                // No responsibility anywhere: the component drops out.
                params.weights[c] = 0.0;
                continue;
            }
            let mut mean = vec![0.0; dim];
            for (i, x) in data.iter().enumerate() {
                let r = resp[i * k + c];
                if r == 0.0 {
                    continue;
                }
                for (m, v) in mean.iter_mut().zip(x.as_ref()) {
                    *m += r * v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= nk[c]);
            let mut var = vec![0.0; dim];
            for (i, x) in data.iter().enumerate() {
                let r = resp[i * k + c];
                if r == 0.0 {
                    continue;
                }
                for ((s, v), m) in var.iter_mut().zip(x.as_ref()).zip(&mean) {
                    *s += r * (v - m) * (v - m);
                }
            }
            var.iter_mut()
                .for_each(|s| *s = (*s / nk[c]).max(VARIANCE_FLOOR));
            params.weights[c] = nk[c] / n as f64;
            params.means[c] = mean;
            params.variances[c] = var;
        }
        let total: f64 = params.weights.iter().sum();
        params.weights.iter_mut().for_each(|w| *w /= total);
    }

    // A converged final E-step evaluated the pre-M-step parameters, so the
    // returned parameters always match the last history entry.
    Ok(MogFit {
        params,
        log_likelihood: history,
        converged,
        clamped_components,
    })
}
