//! Shared-nothing parallel replicas with order-fixed merging.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split_seed;
use super::stats::{augment, augmented_dim, covariance_from_augmented, CovarianceWithSe, Welford};
use crate::{Error, Result};

/// Replicas per chunk. Chunks are accumulated sequentially and merged in index
/// order, so the result does not depend on how chunks land on threads.
pub const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Moments {
    /// Means, covariance and SEs of the means.
    First,
    /// Additionally SEs of the covariance entries (augmented accumulator).
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub replicas: u64,
    pub dim: usize,
    pub moments: Moments,
    /// Shift K subtracted before the product accumulation (replica 0's output).
    pub shift: Vec<f64>,
    pub acc: Welford,
}

impl EnsembleStats {
    pub fn mean(&self) -> Vec<f64> {
        match self.moments {
            Moments::First => self.acc.mean.clone(),
            Moments::Second => self.acc.mean[..self.dim].iter().zip(&self.shift).map(|(u, k)| u + k).collect(),
        }
    }

    pub fn se_mean(&self) -> Vec<f64> {
        self.acc.se_mean()[..self.dim].to_vec()
    }

    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let c = self.acc.covariance();
        c[..self.dim].iter().map(|r| r[..self.dim].to_vec()).collect()
    }

    pub fn covariance_with_se(&self) -> Result<CovarianceWithSe> {
        if self.moments != Moments::Second {
            return Err(Error::Params("covariance SEs need Moments::Second".into()));
        }
        covariance_from_augmented(&self.acc, self.dim, &self.shift)
    }
}

fn run_one<F>(task: &F, master: u64, index: u64) -> Result<Vec<f64>>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    let seed = split_seed(master, index);
    match catch_unwind(AssertUnwindSafe(|| task(seed))) {
        Ok(Ok(v)) if v.iter().all(|x| x.is_finite()) => Ok(v),
        Ok(Ok(_)) => Err(Error::Replica { index, seed, msg: "non-finite observation".into() }),
        Ok(Err(e)) => Err(Error::Replica { index, seed, msg: e.to_string() }),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(Error::Replica { index, seed, msg })
        }
    }
}

/// Run `task(seed)` for replicas 0..replicas with seed = split_seed(master, index)
/// on `workers` threads (0 = all cores). Any failing replica aborts the run.
pub fn ensemble_run<F>(task: F, replicas: usize, workers: usize, master_seed: u64) -> Result<EnsembleStats>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    ensemble_run_with(task, replicas, workers, master_seed, Moments::First)
}

pub fn ensemble_run_with<F>(
    task: F,
    replicas: usize,
    workers: usize,
    master_seed: u64,
    moments: Moments,
) -> Result<EnsembleStats>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    if replicas < 2 {
        return Err(Error::Params(format!("need at least 2 replicas, got {replicas}")));
    }
    let first = run_one(&task, master_seed, 0)?;
    let dim = first.len();
    let shift = match moments {
        Moments::First => vec![0.0; dim],
        Moments::Second => first.clone(),
    };
    let acc_dim = match moments {
        Moments::First => dim,
        Moments::Second => augmented_dim(dim),
    };
    let chunks: Vec<(usize, usize)> = (0..replicas).step_by(CHUNK).map(|s| (s, (s + CHUNK).min(replicas))).collect();
    let body = || -> Result<Vec<Welford>> {
        chunks
            .par_iter()
            .map(|&(lo, hi)| {
                let mut acc = Welford::new(acc_dim);
                let mut buf = Vec::with_capacity(acc_dim);
                for idx in lo..hi {
                    let x = if idx == 0 { first.clone() } else { run_one(&task, master_seed, idx as u64)? };
                    if x.len() != dim {
                        let seed = split_seed(master_seed, idx as u64);
                        return Err(Error::Replica {
                            index: idx as u64,
                            seed,
                            msg: "observation length changed".into(),
                        });
                    }
                    match moments {
                        Moments::First => acc.push(&x),
                        Moments::Second => {
                            augment(&x, &shift, &mut buf);
                            acc.push(&buf);
                        }
                    }
                }
                Ok(acc)
            })
            .collect()
    };
    let parts = if workers == 0 {
        body()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(body)?
    };
    let mut acc = Welford::new(acc_dim);
    for p in &parts {
        acc.merge(p);
    }
    Ok(EnsembleStats { replicas: replicas as u64, dim, moments, shift, acc })
}

/// Ordered collection of per-replica outputs, for statistics that need the raw samples.
pub fn ensemble_collect<T, F>(task: F, replicas: usize, workers: usize, master_seed: u64) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let body = || -> Result<Vec<T>> {
        (0..replicas as u64)
            .into_par_iter()
            .map(|idx| {
                let seed = split_seed(master_seed, idx);
                match catch_unwind(AssertUnwindSafe(|| task(seed))) {
                    Ok(Ok(v)) => Ok(v),
                    Ok(Err(e)) => Err(Error::Replica { index: idx, seed, msg: e.to_string() }),
                    Err(_) => Err(Error::Replica { index: idx, seed, msg: "panic".into() }),
                }
            })
            .collect()
    };
    if workers == 0 {
        body()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(body)
    }
}
