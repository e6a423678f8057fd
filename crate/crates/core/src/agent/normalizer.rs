use crate::error::{check_len, Result};

/// Running mean/std normalizer with clipping of the standardized output.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    count: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub clip_range: f64,
    pub eps: f64,
}

impl Normalizer {
    pub fn new(dim: usize, clip_range: f64) -> Self {
        Self {
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
            count: 0.0,
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            clip_range,
            eps: 0.01,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    /// Accumulates one observation; call [`Normalizer::recompute`] to
    /// refresh `mean`/`std`.
    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        check_len(self.dim(), x.len())?;
        for ((s, q), v) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(x) {
            *s += v;
            *q += v * v;
        }
        self.count += 1.0;
        Ok(())
    }

    pub fn recompute(&mut self) {
        if self.count == 0.0 {
            return;
        }
        let floor = self.eps * self.eps;
        for i in 0..self.dim() {
            let m = self.sum[i] / self.count;
            let var = (self.sum_sq[i] / self.count - m * m).max(floor);
            self.mean[i] = m;
            self.std[i] = var.sqrt();
        }
    }

    /// Replaces the statistics wholesale (checkpoint restore).
    pub fn set_stats(&mut self, mean: Vec<f64>, std: Vec<f64>) -> Result<()> {
        check_len(self.dim(), mean.len())?;
        check_len(self.dim(), std.len())?;
        self.mean = mean;
        self.std = std;
        Ok(())
    }

    pub fn normalize_into(&self, x: &[f64], out: &mut Vec<f64>) {
        let c = self.clip_range;
        out.extend(
            x.iter()
                .zip(&self.mean)
                .zip(&self.std)
                .map(|((v, m), s)| ((v - m) / s).clamp(-c, c)),
        );
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        self.normalize_into(x, &mut out);
        out
    }
}
