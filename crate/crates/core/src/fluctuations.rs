//! Gaussian fluctuations of the ε→0 limit: covariance by contour integrals, the
//! fluctuation SDE and its Euler–Maruyama ensemble, and Monte Carlo estimates
//! from simulated arrays.

use crate::contour::Contour;
use crate::error::{Error, Result};
use crate::linalg::{gaussian_factor, sym_eigenvalues, CompensatedSum};
use crate::moments::{lln_profile, LlnProfile, LlnSpec};
use crate::qcore::{flat_index, InterlacingArray};
use crate::SimRng;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const COV_NODES: usize = 64;
/// Relative radii (fraction of the gap between the speed cluster and 0) of the inner and outer circles.
const INNER_FRACTION: f64 = 0.2;
const OUTER_FRACTION: f64 = 0.45;
pub const PSD_TOL: f64 = 1e-8;
const BLOWUP: f64 = 1e12;

fn cluster(a: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || a.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Params("speeds must be positive".into()));
    }
    let lo = a.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = a.iter().cloned().fold(0.0, f64::max);
    Ok(((lo + hi) / 2.0, (hi - lo) / 2.0))
}

/// z ↦ (1/2πi)^{r-1}∮…∮ 𝔉(n, r; z, z_2, …, z_r) dz_2…dz_r at every node z of
/// `circle`, with all r variables on that circle.
fn marginal(n: usize, r: usize, tau: f64, a: &[f64], circle: &Contour) -> Vec<C64> {
    let rule = circle.rule();
    let m = rule.len();
    let w_of = |z: C64| -> C64 {
        let mut w = (-z * tau).exp() * z.powi(-(r as i32));
        for &al in &a[..n] {
            w *= al / (al - z);
        }
        w
    };
    let f: Vec<C64> = rule.iter().map(|&(z, wt)| wt * w_of(z)).collect();
    let nodes: Vec<C64> = rule.iter().map(|p| p.0).collect();
    let sign = if (r * (r + 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    // 1/r! from 𝔉 times (r-1)! from ordering the remaining variables
    let c = sign / r as f64;
    (0..m)
        .into_par_iter()
        .map(|i0| {
            let z0 = nodes[i0];
            let base = w_of(z0) * c;
            if r == 1 {
                return base;
            }
            let mut acc = CompensatedSum::default();
            let mut idx: Vec<usize> = Vec::with_capacity(r - 1);
            combos(&nodes, &f, z0, r - 1, 0, &mut idx, C64::new(1.0, 0.0), &mut acc);
            base * acc.value()
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn combos(
    nodes: &[C64],
    f: &[C64],
    z0: C64,
    need: usize,
    start: usize,
    idx: &mut Vec<usize>,
    prod: C64,
    acc: &mut CompensatedSum,
) {
    if idx.len() == need {
        acc.add(prod);
        return;
    }
    let left = need - idx.len();
    for j in start..=nodes.len() - left {
        let d0 = z0 - nodes[j];
        let mut p = prod * f[j] * d0 * d0;
        if p == C64::new(0.0, 0.0) {
            continue;
        }
        for &i in idx.iter() {
            let d = nodes[j] - nodes[i];
            p *= d * d;
        }
        idx.push(j);
        combos(nodes, f, z0, need, j + 1, idx, p, acc);
        idx.pop();
    }
}

/// Evaluator for C(n_i, r_i; n_j, r_j) at fixed τ and speeds; caches the
/// reduced one-variable marginals on both circles.
pub struct CovarianceEvaluator {
    tau: f64,
    a: Vec<f64>,
    outer: Contour,
    inner: Contour,
    cache: std::sync::Mutex<std::collections::HashMap<(usize, usize, bool), std::sync::Arc<Vec<C64>>>>,
}

impl CovarianceEvaluator {
    pub fn new(tau: f64, a: &[f64]) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Params(format!("tau must be positive, got {tau}")));
        }
        let (s, spread) = cluster(a)?;
        let gap = s - spread;
        if gap <= 0.0 {
            return Err(Error::Contour("speed cluster touches 0".into()));
        }
        let center = C64::new(s, 0.0);
        Ok(CovarianceEvaluator {
            tau,
            a: a.to_vec(),
            outer: Contour::circle(center, spread + OUTER_FRACTION * gap, COV_NODES)?,
            inner: Contour::circle(center, spread + INNER_FRACTION * gap, COV_NODES)?,
            cache: Default::default(),
        })
    }

    fn marginal(&self, n: usize, r: usize, outer: bool) -> std::sync::Arc<Vec<C64>> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(&(n, r, outer)) {
            return v.clone();
        }
        let c = if outer { &self.outer } else { &self.inner };
        let v = std::sync::Arc::new(marginal(n, r, self.tau, &self.a, c));
        self.cache.lock().expect("cache lock").insert((n, r, outer), v.clone());
        v
    }

    fn denominator(&self, n: usize, r: usize, outer: bool) -> Result<f64> {
        let c = if outer { &self.outer } else { &self.inner };
        let mut acc = CompensatedSum::default();
        for (m, (_, w)) in self.marginal(n, r, outer).iter().zip(c.rule()) {
            acc.add(m * w);
        }
        let v = acc.value();
        if !(v.re.abs() > 1e-280) {
            return Err(Error::Quadrature(format!("denominator underflow for (n={n}, r={r})")));
        }
        Ok(v.re)
    }

    /// C(n1, r1; n2, r2); the argument with the larger level takes the outer circle.
    pub fn block(&self, n1: usize, r1: usize, n2: usize, r2: usize) -> Result<f64> {
        let levels = self.a.len();
        for (n, r) in [(n1, r1), (n2, r2)] {
            if n == 0 || n > levels || r > n {
                return Err(Error::Params(format!("need 0 <= r <= n <= {levels}, got n={n}, r={r}")));
            }
        }
        if r1 == 0 || r2 == 0 {
            return Ok(0.0);
        }
        let ((ni, ri), (nj, rj)) = if n1 >= n2 { ((n1, r1), (n2, r2)) } else { ((n2, r2), (n1, r1)) };
        let mi = self.marginal(ni, ri, true);
        let mj = self.marginal(nj, rj, false);
        let ro = self.outer.rule();
        let rin = self.inner.rule();
        let mut acc = CompensatedSum::default();
        for (&(z, wz), fz) in ro.iter().zip(mi.iter()) {
            let mut row = C64::new(0.0, 0.0);
            for (&(w, ww), fw) in rin.iter().zip(mj.iter()) {
                row += ww * fw / (z - w);
            }
            acc.add(wz * fz * z * row);
        }
        let num = acc.value() * (-(ri as f64) * rj as f64);
        let den = self.denominator(ni, ri, true)? * self.denominator(nj, rj, false)?;
        Ok(num.re / den)
    }

    /// Cov(ξ^{(n)}_k, ξ^{(n')}_{k'}) by second differences in r.
    pub fn single(&self, n: usize, k: usize, n2: usize, k2: usize) -> Result<f64> {
        if k == 0 || k > n || k2 == 0 || k2 > n2 {
            return Err(Error::Params(format!("coordinate out of range: ({n},{k}), ({n2},{k2})")));
        }
        let (r, r2) = (n - k + 1, n2 - k2 + 1);
        Ok(self.block(n, r, n2, r2)? - self.block(n, r - 1, n2, r2)? - self.block(n, r, n2, r2 - 1)?
            + self.block(n, r - 1, n2, r2 - 1)?)
    }
}

/// C(n1, r1; n2, r2) at time τ with speeds a (length >= max level).
pub fn xi_covariance(n1: usize, r1: usize, n2: usize, r2: usize, tau: f64, a: &[f64]) -> Result<f64> {
    CovarianceEvaluator::new(tau, a)?.block(n1, r1, n2, r2)
}

/// Cov(ξ^{(n)}_k, ξ^{(n2)}_{k2}).
pub fn xi_single_covariance(n: usize, k: usize, n2: usize, k2: usize, tau: f64, a: &[f64]) -> Result<f64> {
    CovarianceEvaluator::new(tau, a)?.single(n, k, n2, k2)
}

/// Covariance of all ξ^{(n)}_k, indexed in the shared flat order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationCovariance {
    pub levels: usize,
    pub tau: f64,
    pub a: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

impl FluctuationCovariance {
    pub fn get(&self, n: usize, k: usize, n2: usize, k2: usize) -> f64 {
        self.matrix[flat_index(n, k)][flat_index(n2, k2)]
    }

    /// Smallest eigenvalue over the trace; PSD means >= -1e-8.
    pub fn psd_margin(&self) -> f64 {
        let trace: f64 = (0..self.matrix.len()).map(|i| self.matrix[i][i]).sum();
        sym_eigenvalues(&self.matrix)[0] / trace
    }
}

pub fn fluctuation_covariance(levels: usize, tau: f64, a: &[f64]) -> Result<FluctuationCovariance> {
    if a.len() < levels {
        return Err(Error::Params("need a speed per level".into()));
    }
    let ev = CovarianceEvaluator::new(tau, &a[..levels])?;
    let coords: Vec<(usize, usize)> = (1..=levels).flat_map(|n| (1..=n).map(move |k| (n, k))).collect();
    let dim = coords.len();
    let mut matrix = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in 0..=i {
            let (n, k) = coords[i];
            let (n2, k2) = coords[j];
            let v = ev.single(n, k, n2, k2)?;
            matrix[i][j] = v;
            matrix[j][i] = v;
        }
    }
    let out = FluctuationCovariance { levels, tau, a: a[..levels].to_vec(), matrix };
    if out.psd_margin() < -PSD_TOL {
        return Err(Error::Domain(format!("covariance fails the PSD check ({})", out.psd_margin())));
    }
    Ok(out)
}

/// σ, a, b, c of the fluctuation SDE at one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeCoefficients {
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub fn sde_coefficients(profile: &LlnProfile, n: usize, k: usize) -> Result<SdeCoefficients> {
    if k == 0 || k > n || n > profile.levels {
        return Err(Error::Params(format!("coordinate ({n},{k}) out of range")));
    }
    let ki = k as isize;
    let y = profile.y(n, ki);
    let below_left = profile.y(n - 1, ki - 1);
    let below = profile.y(n - 1, ki);
    let right = profile.y(n, ki + 1);
    let d = 1.0 - y / below;
    if d.abs() < 1e-300 || !d.is_finite() {
        return Err(Error::Singular(format!("1 - y/y' vanishes at ({n},{k})")));
    }
    let u1 = 1.0 - below_left / y;
    let u2 = 1.0 - y / right;
    let sig2 = u1 * u2 / d;
    let out = SdeCoefficients {
        sigma: sig2.max(0.0).sqrt(),
        a: below_left / y * u2 / d,
        b: y / right * u1 / d,
        c: y / below * u1 * u2 / (d * d),
    };
    if ![out.sigma, out.a, out.b, out.c].iter().all(|v| v.is_finite()) {
        return Err(Error::BlowUp(format!("non-finite coefficient at ({n},{k})")));
    }
    Ok(out)
}

/// Coefficients for every coordinate at a time, in flat order.
pub fn sde_coefficient_table(levels: usize, tau: f64) -> Result<Vec<SdeCoefficients>> {
    let p = lln_profile(levels, &LlnSpec::Plancherel { tau }, &vec![1.0; levels])?;
    (1..=levels).flat_map(|n| (1..=n).map(move |k| (n, k))).map(|(n, k)| sde_coefficients(&p, n, k)).collect()
}

/// Drift of the linear SDE at state ξ (flat order, out-of-range entries 0).
pub fn sde_drift(levels: usize, coef: &[SdeCoefficients], xi: &[f64], out: &mut [f64]) {
    let get = |n: usize, k: isize| -> f64 {
        if n == 0 || k <= 0 || k as usize > n {
            0.0
        } else {
            xi[flat_index(n, k as usize)]
        }
    };
    for n in 1..=levels {
        for k in 1..=n {
            let i = flat_index(n, k);
            let c = coef[i];
            let x = xi[i];
            let ki = k as isize;
            out[i] = -c.a * (x - get(n - 1, ki - 1)) + c.b * (x - get(n, ki + 1)) - c.c * (x - get(n - 1, ki));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XiStart {
    /// Exact Gaussian law at τ0.
    Gaussian,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeOptions {
    pub tau0: f64,
    pub tau1: f64,
    pub dt: f64,
    pub replicas: usize,
    pub start: XiStart,
    /// Noise switch; off gives the deterministic linear flow.
    pub noise: bool,
    pub sample_times: Vec<f64>,
}

impl Default for SdeOptions {
    fn default() -> Self {
        SdeOptions {
            tau0: 0.05,
            tau1: 1.0,
            dt: 1e-3,
            replicas: 10_000,
            start: XiStart::Gaussian,
            noise: true,
            sample_times: vec![1.0],
        }
    }
}

/// Samples ξ[replica][time][coordinate].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiEnsemble {
    pub levels: usize,
    pub times: Vec<f64>,
    pub samples: Vec<Vec<Vec<f64>>>,
}

impl XiEnsemble {
    /// Sample covariance at time index `t` with entrywise standard errors.
    pub fn covariance(&self, t: usize) -> Result<CovarianceEstimate> {
        let rows: Vec<Vec<f64>> = self.samples.iter().map(|s| s[t].clone()).collect();
        estimate_covariance(&rows)
    }
}

/// Euler–Maruyama ensemble of the fluctuation SDE (a ≡ 1).
pub fn simulate_xi_sde(levels: usize, opts: &SdeOptions, seed: u64) -> Result<XiEnsemble> {
    if !(opts.tau0 > 0.0 && opts.tau1 > opts.tau0 && opts.dt > 0.0) {
        return Err(Error::Params("need 0 < tau0 < tau1 and dt > 0".into()));
    }
    if opts.sample_times.iter().any(|&t| t < opts.tau0 || t > opts.tau1 + 1e-12) {
        return Err(Error::Params("sample times must lie in [tau0, tau1]".into()));
    }
    let steps = ((opts.tau1 - opts.tau0) / opts.dt).round() as usize;
    let dt = (opts.tau1 - opts.tau0) / steps as f64;
    let schedule: Vec<Vec<SdeCoefficients>> = (0..steps)
        .into_par_iter()
        .map(|i| sde_coefficient_table(levels, opts.tau0 + i as f64 * dt))
        .collect::<Result<_>>()?;
    let sample_steps: Vec<usize> = opts.sample_times.iter().map(|&t| ((t - opts.tau0) / dt).round() as usize).collect();
    let factor = match opts.start {
        XiStart::Gaussian => {
            Some(gaussian_factor(&fluctuation_covariance(levels, opts.tau0, &vec![1.0; levels])?.matrix, 1e-10)?)
        }
        XiStart::Zero => None,
    };
    let dim = levels * (levels + 1) / 2;
    let samples: Vec<Vec<Vec<f64>>> = (0..opts.replicas)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Vec<f64>>> {
            let mut rng = SimRng::seed_from_u64(crate::harness::split_seed(seed, rep as u64));
            let mut xi = vec![0.0; dim];
            if let Some(f) = &factor {
                let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                for i in 0..dim {
                    xi[i] = (0..dim).map(|j| f[i][j] * g[j]).sum();
                }
            }
            let mut drift = vec![0.0; dim];
            let mut out = Vec::with_capacity(sample_steps.len());
            let mut next = 0;
            for step in 0..=steps {
                while next < sample_steps.len() && sample_steps[next] == step {
                    out.push(xi.clone());
                    next += 1;
                }
                if step == steps {
                    break;
                }
                let coef = &schedule[step];
                sde_drift(levels, coef, &xi, &mut drift);
                let sq = dt.sqrt();
                let mut energy = 0.0;
                for i in 0..dim {
                    let noise = if opts.noise {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        coef[i].sigma * sq * g
                    } else {
                        0.0
                    };
                    xi[i] += drift[i] * dt + noise;
                    energy += xi[i] * xi[i];
                }
                if !(energy < BLOWUP) {
                    return Err(Error::BlowUp(format!("energy {energy} at step {step}; reduce dt")));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(XiEnsemble { levels, times: opts.sample_times.clone(), samples })
}

/// Sample covariance with the standard error of each entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub count: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
}

pub fn estimate_covariance(rows: &[Vec<f64>]) -> Result<CovarianceEstimate> {
    let count = rows.len();
    if count < 100 {
        return Err(Error::Params(format!("need at least 100 replicas, got {count}")));
    }
    let dim = rows[0].len();
    let nf = count as f64;
    let mean: Vec<f64> = (0..dim).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / nf).collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    let mut se = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in 0..=i {
            let prods: Vec<f64> = rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).collect();
            let m = prods.iter().sum::<f64>() / nf;
            let v = prods.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (nf - 1.0);
            let c = m * nf / (nf - 1.0);
            cov[i][j] = c;
            cov[j][i] = c;
            se[i][j] = (v / nf).sqrt();
            se[j][i] = se[i][j];
        }
    }
    Ok(CovarianceEstimate { count, mean, cov, se })
}

/// Scaled fluctuations ε^{-1/2}(ελ - x) of each array, flat order.
pub fn scaled_fluctuations(finals: &[InterlacingArray], profile: &LlnProfile, eps: f64) -> Vec<Vec<f64>> {
    finals
        .iter()
        .map(|s| s.as_flat().iter().zip(&profile.x).map(|(&l, &x)| (eps * l as f64 - x) / eps.sqrt()).collect())
        .collect()
}

pub fn mc_fluctuation_covariance(
    finals: &[InterlacingArray],
    profile: &LlnProfile,
    eps: f64,
) -> Result<CovarianceEstimate> {
    if finals.iter().any(|s| s.levels() != profile.levels) {
        return Err(Error::Params("arrays and profile differ in level count".into()));
    }
    estimate_covariance(&scaled_fluctuations(finals, profile, eps))
}

/// E|Z|³ for standardized samples, with its standard error.
pub fn standardized_third_absolute_moment(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t: Vec<f64> = xs.iter().map(|x| ((x - m) / sd).abs().powi(3)).collect();
    let tm = t.iter().sum::<f64>() / n;
    let tv = t.iter().map(|v| (v - tm).powi(2)).sum::<f64>() / (n - 1.0);
    (tm, (tv / n).sqrt())
}

/// E|Z|³ for a standard normal.
pub const GAUSSIAN_THIRD_ABS: f64 = 1.595_769_121_605_730_7;
