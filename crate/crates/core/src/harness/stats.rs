//! Streaming moments with Welford updates and Chan merges.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Running mean and co-moment matrix of a fixed-length observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    pub count: u64,
    pub mean: Vec<f64>,
    /// Row-major Σ (x−mean)(x−mean)ᵀ.
    pub comoment: Vec<f64>,
}

impl Welford {
    pub fn new(dim: usize) -> Self {
        Welford { count: 0, mean: vec![0.0; dim], comoment: vec![0.0; dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) {
        let d = self.dim();
        assert_eq!(x.len(), d, "observation length");
        self.count += 1;
        let n = self.count as f64;
        let before: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, db) in self.mean.iter_mut().zip(&before) {
            *m += db / n;
        }
        for i in 0..d {
            let after_i = x[i] - self.mean[i];
            for j in 0..d {
                self.comoment[i * d + j] += after_i * before[j];
            }
        }
    }

    /// Pairwise merge; exact in exact arithmetic, so a fixed merge order fixes the bits.
    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let d = self.dim();
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for i in 0..d {
            for j in 0..d {
                self.comoment[i * d + j] += other.comoment[i * d + j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl * nb / n;
        }
        self.count += other.count;
    }

    /// Unbiased covariance.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let den = (self.count as f64 - 1.0).max(1.0);
        (0..d).map(|i| (0..d).map(|j| self.comoment[i * d + j] / den).collect()).collect()
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.comoment[i * self.dim() + i] / (self.count as f64 - 1.0).max(1.0)
    }

    pub fn se_mean(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| (self.variance(i) / self.count as f64).sqrt()).collect()
    }
}

/// Covariance of an observation vector with standard errors per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceWithSe {
    pub count: u64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
}

/// Layout of the augmented vector (x−K, (x−K)_i(x−K)_j for i ≥ j) used for covariance SEs.
pub fn augmented_dim(dim: usize) -> usize {
    dim + dim * (dim + 1) / 2
}

fn pair_slot(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    dim + i * (i + 1) / 2 + j
}

pub fn augment(x: &[f64], shift: &[f64], out: &mut Vec<f64>) {
    let d = x.len();
    out.clear();
    out.extend(x.iter().zip(shift).map(|(a, k)| a - k));
    for i in 0..d {
        for j in 0..=i {
            out.push(out[i] * out[j]);
        }
    }
}

/// Covariance and its delta-method SE from moments of the augmented vector.
///
/// With u = x − K and δ = E u, the centered product is
/// u_i u_j − δ_i u_j − δ_j u_i + δ_i δ_j, whose variance is a quadratic form
/// in the augmented covariance.
pub fn covariance_from_augmented(acc: &Welford, dim: usize, shift: &[f64]) -> Result<CovarianceWithSe> {
    if acc.dim() != augmented_dim(dim) {
        return Err(Error::Params("accumulator is not an augmented one".into()));
    }
    if acc.count < 2 {
        return Err(Error::Params("need at least two replicas".into()));
    }
    let n = acc.count as f64;
    let c = acc.covariance();
    let delta = &acc.mean[..dim];
    let mean: Vec<f64> = delta.iter().zip(shift).map(|(u, k)| u + k).collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    let mut se = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in 0..=i {
            let p = pair_slot(dim, i, j);
            let v = (acc.mean[p] - delta[i] * delta[j]) * n / (n - 1.0);
            // coefficients of (y_ij, u_i, u_j) in the centered product
            let idx = [p, i, j];
            let w = [1.0, -delta[j], -delta[i]];
            let mut var = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    var += w[a] * w[b] * c[idx[a]][idx[b]];
                }
            }
            cov[i][j] = v;
            cov[j][i] = v;
            se[i][j] = (var.max(0.0) / n).sqrt();
            se[j][i] = se[i][j];
        }
    }
    Ok(CovarianceWithSe { count: acc.count, mean, cov, se })
}
