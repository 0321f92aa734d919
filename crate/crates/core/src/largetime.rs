//! The diffusively rescaled system ζ^{(n)}_k(T) = lim L^{-1/2} ξ^{(n)}_k(LT):
//! covariance from the orthogonal polynomials, the linear SDE with its
//! closed-form propagator, and the two-time covariance.
//!
//! Coordinates are flattened with `qcore::flat_index`.

use crate::contour::{integrate_closed, integrate_halfline, integrate_product, Contour};
use crate::error::{Error, Result};
use crate::fluctuations::{estimate_covariance, CovarianceEstimate};
use crate::linalg::{gaussian_factor, sym_eigenvalues};
use crate::ode::{integrate, OdeOptions};
use crate::qcore::flat_index;
use crate::special::{binom, inv_factorial, ln_binom, ln_factorial};
use crate::SimRng;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

const MULTI_NODES: usize = 32;
const QUAD_NODES: usize = 96;
const INNER_NODES: usize = 64;
/// w circle radius (times 1/T) and z circle radius; the ratio sets the coupling decay 3^{-nodes}.
const W_RADIUS: f64 = 1.0;
const Z_RADIUS: f64 = 3.0;
const BLOWUP: f64 = 1e12;

/// Drift structure of the ζ-system on levels 1..=N.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZetaSystem {
    pub levels: usize,
}

impl ZetaSystem {
    pub fn new(levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Params("need at least one level".into()));
        }
        Ok(ZetaSystem { levels })
    }

    pub fn dim(&self) -> usize {
        self.levels * (self.levels + 1) / 2
    }

    /// (n, k) for every flat index.
    pub fn index_map(&self) -> Vec<(usize, usize)> {
        (1..=self.levels).flat_map(|n| (1..=n).map(move |k| (n, k))).collect()
    }

    /// Â = T·A(T).
    pub fn drift_hat(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut a = vec![vec![0.0; d]; d];
        for (n, k) in self.index_map() {
            let i = flat_index(n, k);
            a[i][i] = 1.0 - n as f64;
            if k >= 2 {
                a[i][flat_index(n - 1, k - 1)] = (k - 1) as f64;
            }
            if k < n {
                a[i][flat_index(n - 1, k)] = (n - k) as f64;
            }
        }
        a
    }

    pub fn drift(&self, t: f64) -> Vec<Vec<f64>> {
        self.drift_hat().into_iter().map(|r| r.into_iter().map(|v| v / t).collect()).collect()
    }

    /// out = A(T)·x using the three diagonals only.
    pub fn apply_drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for n in 1..=self.levels {
            for k in 1..=n {
                let i = flat_index(n, k);
                let mut v = (1.0 - n as f64) * x[i];
                if k >= 2 {
                    v += (k - 1) as f64 * x[flat_index(n - 1, k - 1)];
                }
                if k < n {
                    v += (n - k) as f64 * x[flat_index(n - 1, k)];
                }
                out[i] = v / t;
            }
        }
    }
}

fn check_degree(n: usize, k: usize) -> Result<()> {
    if n == 0 || k >= n {
        return Err(Error::Domain(format!("need 0 <= k <= n-1, got n = {n}, k = {k}")));
    }
    Ok(())
}

/// Coefficients of p^n_k in powers of z.
pub fn laguerre_coefficients(n: usize, k: usize, t: f64) -> Result<Vec<f64>> {
    check_degree(n, k)?;
    let pre = ln_factorial(k as u64) - ln_factorial((n - k - 1) as u64);
    Ok((0..=k)
        .map(|l| {
            let lm = pre + ln_factorial((n - 1 - l) as u64) - ln_factorial((k - l) as u64) - ln_factorial(l as u64);
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            sign * lm.exp() * t.powi(l as i32)
        })
        .collect())
}

/// p^n_k(z) = (k!/(n−k−1)!) Σ_ℓ ((n−1−ℓ)!/((k−ℓ)! ℓ!)) (−Tz)^ℓ.
pub fn laguerre_poly(n: usize, k: usize, t: f64, z: C64) -> Result<C64> {
    let c = laguerre_coefficients(n, k, t)?;
    Ok(c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &v| acc * z + v))
}

/// ⟨p^n_k, p^n_k⟩_n = (−1)^k k! T^{n−1}/(n−1−k)!.
pub fn laguerre_norm(n: usize, k: usize, t: f64) -> Result<f64> {
    check_degree(n, k)?;
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * (ln_factorial(k as u64) - ln_factorial((n - 1 - k) as u64)).exp() * t.powi(n as i32 - 1))
}

/// ⟨f, g⟩_n = (1/2πi)∮ f g e^{Tz} z^{-n} dz on a circle around 0.
pub fn laguerre_inner(n: usize, j: usize, k: usize, t: f64) -> Result<f64> {
    let pj = laguerre_coefficients(n, j, t)?;
    let pk = laguerre_coefficients(n, k, t)?;
    let ev = |c: &[f64], z: C64| c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &v| acc * z + v);
    let radius = (n as f64 / t).max(1e-3);
    let c = Contour::circle(C64::new(0.0, 0.0), radius, 128)?;
    let v = integrate_closed(|z| ev(&pj, z) * ev(&pk, z) * (z * t).exp() / z.powi(n as i32), &c)?;
    Ok(v.re)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZetaMethod {
    /// Single-coordinate formula through the orthogonal polynomials, evaluated by residues.
    Polynomial,
    /// Block formula as an (r1+r2)-fold contour integral, singles by second differences.
    Multicontour,
    /// Contour/half-line representation at T = 1, scaled by T.
    QuadrupleIntegral,
}

fn check_pair(n1: usize, r1: usize, n2: usize, r2: usize, t: f64) -> Result<()> {
    if n1 < n2 {
        return Err(Error::Domain(format!("need n1 >= n2, got {n1} < {n2}")));
    }
    if r1 == 0 || r2 == 0 || r1 > n1 || r2 > n2 {
        return Err(Error::Domain(format!("need 1 <= r_i <= n_i, got ({n1},{r1}),({n2},{r2})")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("T must be positive, got {t}")));
    }
    Ok(())
}

/// Laurent coefficients c_m, m = −n..=n2max, of e^{Tz} (p^n_{r−1}(z))² z^{−n} / ⟨p,p⟩.
fn weighted_laurent(n: usize, r: usize, t: f64, upto: usize) -> Result<Vec<f64>> {
    let p = laguerre_coefficients(n, r - 1, t)?;
    let norm = laguerre_norm(n, r - 1, t)?;
    let mut sq = vec![0.0; 2 * p.len() - 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in p.iter().enumerate() {
            sq[i + j] += a * b;
        }
    }
    // index m + n, m from −n to upto
    Ok((0..=n + upto)
        .map(|e| {
            // coefficient of z^{e} in e^{Tz}·P(z)
            sq.iter()
                .enumerate()
                .filter(|(j, _)| *j <= e)
                .map(|(j, &pj)| pj * t.powi((e - j) as i32) * inv_factorial((e - j) as i64))
                .sum::<f64>()
                / norm
        })
        .collect())
}

fn zeta_polynomial(n1: usize, r1: usize, n2: usize, r2: usize, t: f64) -> Result<f64> {
    // inner z integral leaves the regular part of f1 at w; the w integral is then Res_0.
    let a = weighted_laurent(n1, r1, t, n2)?;
    let b = weighted_laurent(n2, r2, t, 0)?;
    Ok((0..n2).map(|m| a[m + n1] * b[n2 - 1 - m]).sum())
}

fn vandermonde_sq(z: &[C64]) -> C64 {
    let mut v = C64::new(1.0, 0.0);
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            let d = z[j] - z[i];
            v *= d * d;
        }
    }
    v
}

fn weight(z: &[C64], n: usize, t: f64) -> C64 {
    z.iter().fold(vandermonde_sq(z), |acc, &x| acc * (x * t).exp() / x.powi(n as i32))
}

/// Covariance of the sums ζ^{(n)}_n + … + ζ^{(n)}_{n−r+1}, as an (r1+r2)-fold contour integral.
pub fn zeta_block_covariance(n1: usize, r1: usize, n2: usize, r2: usize, t: f64) -> Result<f64> {
    check_pair(n1, r1, n2, r2, t)?;
    if r1 + r2 > 4 {
        return Err(Error::Guard(format!("multicontour limited to r1 + r2 <= 4, got {}", r1 + r2)));
    }
    let o = C64::new(0.0, 0.0);
    let zc = Contour::circle(o, Z_RADIUS / t, MULTI_NODES)?;
    let wc = Contour::circle(o, W_RADIUS / t, MULTI_NODES)?;
    let mut contours = vec![zc.clone(); r1];
    contours.extend(std::iter::repeat(wc.clone()).take(r2));
    let num = integrate_product(
        |x| {
            let (z, w) = x.split_at(r1);
            let mut cr = C64::new(0.0, 0.0);
            for &zk in z {
                for &wl in w {
                    cr += 1.0 / (zk - wl);
                }
            }
            cr * weight(z, n1, t) * weight(w, n2, t)
        },
        &contours,
    )?;
    let d1 = integrate_product(|z| weight(z, n1, t), &vec![zc; r1])?;
    let d2 = integrate_product(|w| weight(w, n2, t), &vec![wc; r2])?;
    Ok((num / (d1 * d2)).re)
}

fn zeta_multicontour(n1: usize, r1: usize, n2: usize, r2: usize, t: f64) -> Result<f64> {
    let b = |a: usize, c: usize| -> Result<f64> {
        if a == 0 || c == 0 {
            Ok(0.0)
        } else {
            zeta_block_covariance(n1, a, n2, c, t)
        }
    };
    Ok(b(r1, r2)? - b(r1 - 1, r2)? - b(r1, r2 - 1)? + b(r1 - 1, r2 - 1)?)
}

/// ∫_0^∞ (z−y)^{r−1} y^{n−r} e^{−y} dy · (1/2πi)∮_{Γ_z} e^v (z−v)^{−r} v^{−(n−r+1)} dv.
fn quadruple_factor(n: usize, r: usize, z: C64) -> Result<C64> {
    let line = integrate_halfline(|y| (z - y).powi(r as i32 - 1) * y.powi((n - r) as i32), 1.0)?;
    let c = Contour::circle(z, 0.5 * z.norm(), INNER_NODES)?;
    let around = integrate_closed(|v| v.exp() / ((z - v).powi(r as i32) * v.powi((n - r + 1) as i32)), &c)?;
    Ok(line * around)
}

fn zeta_quadruple(n1: usize, r1: usize, n2: usize, r2: usize, t: f64) -> Result<f64> {
    let o = C64::new(0.0, 0.0);
    let zr = Contour::circle(o, Z_RADIUS, QUAD_NODES)?.rule();
    let wr = Contour::circle(o, W_RADIUS, QUAD_NODES)?.rule();
    let fz: Vec<C64> = zr.iter().map(|&(z, _)| quadruple_factor(n1, r1, z)).collect::<Result<_>>()?;
    let fw: Vec<C64> = wr.iter().map(|&(w, _)| quadruple_factor(n2, r2, w)).collect::<Result<_>>()?;
    let mut acc = C64::new(0.0, 0.0);
    for (&(z, dz), f1) in zr.iter().zip(&fz) {
        for (&(w, dw), f2) in wr.iter().zip(&fw) {
            acc += dz * dw * f1 * f2 / (z - w);
        }
    }
    Ok(t * acc.re)
}

/// Cov(ζ^{(n1)}_{n1−r1+1}(T), ζ^{(n2)}_{n2−r2+1}(T)) for n1 ≥ n2.
pub fn zeta_covariance(n1: usize, r1: usize, n2: usize, r2: usize, t: f64, method: ZetaMethod) -> Result<f64> {
    check_pair(n1, r1, n2, r2, t)?;
    match method {
        ZetaMethod::Polynomial => zeta_polynomial(n1, r1, n2, r2, t),
        ZetaMethod::Multicontour => zeta_multicontour(n1, r1, n2, r2, t),
        ZetaMethod::QuadrupleIntegral => zeta_quadruple(n1, r1, n2, r2, t),
    }
}

/// Closed form from ζ(T) = ∫_0^T Y^s(T) dW(s):
/// T Σ_{m,j} C(k1−1,j−1)C(n1−k1,m−j)C(k2−1,j−1)C(n2−k2,m−j) B(2m−1, n1+n2−2m+1).
/// Summed in log space so it stays finite for large levels.
pub fn zeta_covariance_closed(n1: usize, k1: usize, n2: usize, k2: usize, t: f64) -> Result<f64> {
    if k1 == 0 || k2 == 0 || k1 > n1 || k2 > n2 {
        return Err(Error::Domain(format!("invalid coordinates ({n1},{k1}), ({n2},{k2})")));
    }
    let (n1, k1, n2, k2) = (n1 as i64, k1 as i64, n2 as i64, k2 as i64);
    let total = ln_factorial((n1 + n2 - 1) as u64);
    let mut terms = Vec::new();
    for m in 1..=n1.min(n2) {
        let beta = ln_factorial((2 * m - 2) as u64) + ln_factorial((n1 + n2 - 2 * m) as u64) - total;
        for j in 1..=m {
            let l =
                ln_binom(k1 - 1, j - 1) + ln_binom(n1 - k1, m - j) + ln_binom(k2 - 1, j - 1) + ln_binom(n2 - k2, m - j);
            if l.is_finite() {
                terms.push(l + beta);
            }
        }
    }
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Ok(0.0);
    }
    Ok(t * top.exp() * terms.iter().map(|l| (l - top).exp()).sum::<f64>())
}

/// Full covariance matrix over the flat index set.
pub fn zeta_covariance_matrix(levels: usize, t: f64, method: ZetaMethod) -> Result<Vec<Vec<f64>>> {
    let sys = ZetaSystem::new(levels)?;
    let map = sys.index_map();
    let d = sys.dim();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (na, ka) = map[i];
            let (nb, kb) = map[j];
            let ((n1, k1), (n2, k2)) = if na >= nb { ((na, ka), (nb, kb)) } else { ((nb, kb), (na, ka)) };
            zeta_covariance(n1, n1 - k1 + 1, n2, n2 - k2 + 1, t, method)
        })
        .collect::<Result<_>>()?;
    let mut m = vec![vec![0.0; d]; d];
    for (&(i, j), v) in pairs.iter().zip(vals) {
        m[i][j] = v;
        m[j][i] = v;
    }
    Ok(m)
}

/// Y^{T0}(T) entry (T0/T)^{n−1}((T−T0)/T0)^{n−n'} C(k−1,k'−1) C(n−k,n'−k').
pub fn propagator_closed(t0: f64, t: f64, (k, n): (usize, usize), (k2, n2): (usize, usize)) -> f64 {
    let b = binom(k as i64 - 1, k2 as i64 - 1) * binom((n - k) as i64, n2 as i64 - k2 as i64);
    if b == 0.0 {
        return 0.0;
    }
    (t0 / t).powi(n as i32 - 1) * ((t - t0) / t0).powi((n - n2) as i32) * b
}

/// ln of the propagator entry; −∞ off the support. Usable at levels where the entry under- or overflows.
pub fn propagator_closed_ln(t0: f64, t: f64, (k, n): (usize, usize), (k2, n2): (usize, usize)) -> f64 {
    if n2 > n || k2 == 0 || k == 0 {
        return f64::NEG_INFINITY;
    }
    let b = ln_binom(k as i64 - 1, k2 as i64 - 1) + ln_binom((n - k) as i64, n2 as i64 - k2 as i64);
    let mut v = (n as f64 - 1.0) * (t0 / t).ln() + b;
    if n > n2 {
        v += (n - n2) as f64 * ((t - t0) / t0).ln();
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Propagator {
    pub levels: usize,
    pub t0: f64,
    pub t: f64,
    pub matrix: Vec<Vec<f64>>,
}

fn check_times(t0: f64, t: f64) -> Result<()> {
    if !(t0 > 0.0 && t >= t0 && t.is_finite()) {
        return Err(Error::Domain(format!("need 0 < T0 <= T, got T0 = {t0}, T = {t}")));
    }
    Ok(())
}

pub fn propagator_matrix(levels: usize, t0: f64, t: f64) -> Result<Propagator> {
    check_times(t0, t)?;
    let sys = ZetaSystem::new(levels)?;
    let map = sys.index_map();
    let matrix = map
        .iter()
        .map(|&(n, k)| map.iter().map(|&(n2, k2)| propagator_closed(t0, t, (k, n), (k2, n2))).collect())
        .collect();
    Ok(Propagator { levels, t0, t, matrix })
}

/// dY/dT = A(T)Y from the identity, Dormand–Prince.
pub fn propagator_numeric(t0: f64, t: f64, levels: usize) -> Result<Propagator> {
    check_times(t0, t)?;
    let sys = ZetaSystem::new(levels)?;
    let d = sys.dim();
    let mut y0 = vec![0.0; d * d];
    for i in 0..d {
        y0[i * d + i] = 1.0;
    }
    let a = sys.drift_hat();
    let y = integrate(
        |s, y, out| {
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] = (0..d).map(|l| a[i][l] * y[l * d + j]).sum::<f64>() / s;
                }
            }
        },
        t0,
        t,
        &y0,
        OdeOptions::default(),
        &[],
        |_, _| Ok(()),
    )?;
    Ok(Propagator { levels, t0, t, matrix: y.chunks(d).map(|r| r.to_vec()).collect() })
}

/// Cross-time covariance Cov(ζ(T), ζ(T0)) = Y^{T0}(T)·Cov(T0).
pub fn two_time_covariance(t0: f64, t: f64, cov_t0: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_times(t0, t)?;
    let d = cov_t0.len();
    let levels = ((((8 * d + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    if levels * (levels + 1) / 2 != d || cov_t0.iter().any(|r| r.len() != d) {
        return Err(Error::Params(format!("covariance of size {d} is not triangular-square")));
    }
    let y = propagator_matrix(levels, t0, t)?.matrix;
    Ok((0..d).map(|i| (0..d).map(|j| (0..d).map(|l| y[i][l] * cov_t0[l][j]).sum()).collect()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSolution {
    pub matrix: Vec<Vec<f64>>,
    /// Smallest eigenvalue seen at the monitor checkpoints.
    pub min_eigenvalue: f64,
    /// Largest |Ξ_ij − Ξ_ji| seen.
    pub asymmetry: f64,
}

/// dΞ/dT = AΞ + ΞAᵀ + I from Ξ(T0) = Cov(T0).
pub fn lyapunov_covariance(t0: f64, t: f64, levels: usize) -> Result<LyapunovSolution> {
    check_times(t0, t)?;
    let sys = ZetaSystem::new(levels)?;
    let d = sys.dim();
    let start = zeta_covariance_matrix(levels, t0, ZetaMethod::Polynomial)?;
    let y0: Vec<f64> = start.iter().flatten().copied().collect();
    let a = sys.drift_hat();
    let mut min_eig = sym_eigenvalues(&start)[0];
    let mut asym: f64 = 0.0;
    let checks: Vec<f64> = (1..10).map(|i| t0 + (t - t0) * i as f64 / 10.0).collect();
    let mut monitor = |_: f64, y: &[f64]| -> Result<()> {
        let m: Vec<Vec<f64>> = y.chunks(d).map(|r| r.to_vec()).collect();
        min_eig = min_eig.min(sym_eigenvalues(&m)[0]);
        for i in 0..d {
            for j in 0..i {
                asym = asym.max((m[i][j] - m[j][i]).abs());
            }
        }
        Ok(())
    };
    let y = integrate(
        |s, x, out| {
            for i in 0..d {
                for j in 0..d {
                    let mut v = 0.0;
                    for l in 0..d {
                        v += a[i][l] * x[l * d + j] + x[i * d + l] * a[j][l];
                    }
                    out[i * d + j] = v / s + if i == j { 1.0 } else { 0.0 };
                }
            }
        },
        t0,
        t,
        &y0,
        OdeOptions::default(),
        &checks,
        &mut monitor,
    )?;
    monitor(t, &y)?;
    Ok(LyapunovSolution { matrix: y.chunks(d).map(|r| r.to_vec()).collect(), min_eigenvalue: min_eig, asymmetry: asym })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaSdeOptions {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub replicas: usize,
    /// Draw ζ(T0) from the exact covariance; otherwise start at 0.
    pub gaussian_start: bool,
    pub noise: bool,
    pub sample_times: Vec<f64>,
}

impl Default for ZetaSdeOptions {
    fn default() -> Self {
        ZetaSdeOptions {
            t0: 1.0,
            t1: 2.0,
            dt: 1e-3,
            replicas: 10_000,
            gaussian_start: true,
            noise: true,
            sample_times: vec![1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaEnsemble {
    pub levels: usize,
    pub times: Vec<f64>,
    /// samples[replica][time][coordinate]
    pub samples: Vec<Vec<Vec<f64>>>,
}

impl ZetaEnsemble {
    pub fn covariance(&self, t: usize) -> Result<CovarianceEstimate> {
        let rows: Vec<Vec<f64>> = self.samples.iter().map(|s| s[t].clone()).collect();
        estimate_covariance(&rows)
    }

    /// Joint estimate of (ζ(times[a]), ζ(times[b])); the off-diagonal block holds Cov(ζ(a), ζ(b)).
    pub fn joint_covariance(&self, a: usize, b: usize) -> Result<CovarianceEstimate> {
        let rows: Vec<Vec<f64>> = self.samples.iter().map(|s| s[a].iter().chain(&s[b]).copied().collect()).collect();
        estimate_covariance(&rows)
    }
}

/// Euler–Maruyama for dζ = A(T)ζ dT + dW on [T0, T1].
pub fn simulate_zeta_sde(levels: usize, opts: &ZetaSdeOptions, seed: u64) -> Result<ZetaEnsemble> {
    if !(opts.t0 > 0.0 && opts.t1 > opts.t0 && opts.dt > 0.0) {
        return Err(Error::Params("need 0 < T0 < T1 and dt > 0".into()));
    }
    if opts.sample_times.iter().any(|&t| t < opts.t0 || t > opts.t1 + 1e-12) {
        return Err(Error::Params("sample times must lie in [T0, T1]".into()));
    }
    let sys = ZetaSystem::new(levels)?;
    let dim = sys.dim();
    let steps = ((opts.t1 - opts.t0) / opts.dt).round().max(1.0) as usize;
    let dt = (opts.t1 - opts.t0) / steps as f64;
    let sample_steps: Vec<usize> = opts.sample_times.iter().map(|&t| ((t - opts.t0) / dt).round() as usize).collect();
    let factor = if opts.gaussian_start {
        Some(gaussian_factor(&zeta_covariance_matrix(levels, opts.t0, ZetaMethod::Polynomial)?, 1e-10)?)
    } else {
        None
    };
    let sq = dt.sqrt();
    let samples: Vec<Vec<Vec<f64>>> = (0..opts.replicas)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Vec<f64>>> {
            let mut rng = SimRng::seed_from_u64(crate::harness::split_seed(seed, rep as u64));
            let mut x = vec![0.0; dim];
            if let Some(f) = &factor {
                let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                for i in 0..dim {
                    x[i] = (0..dim).map(|j| f[i][j] * g[j]).sum();
                }
            }
            let mut drift = vec![0.0; dim];
            let mut out = Vec::with_capacity(sample_steps.len());
            let mut next = 0;
            for step in 0..=steps {
                while next < sample_steps.len() && sample_steps[next] == step {
                    out.push(x.clone());
                    next += 1;
                }
                if step == steps {
                    break;
                }
                sys.apply_drift(opts.t0 + step as f64 * dt, &x, &mut drift);
                let mut energy = 0.0;
                for i in 0..dim {
                    let noise = if opts.noise {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        sq * g
                    } else {
                        0.0
                    };
                    x[i] += drift[i] * dt + noise;
                    energy += x[i] * x[i];
                }
                if !(energy < BLOWUP) {
                    return Err(Error::BlowUp(format!("energy {energy} at step {step}; reduce dt")));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(ZetaEnsemble { levels, times: opts.sample_times.clone(), samples })
}

/// Matrix CSV with the index map as leading comment lines.
pub fn write_matrix_csv(path: &Path, levels: usize, matrix: &[Vec<f64>]) -> Result<()> {
    let sys = ZetaSystem::new(levels)?;
    let map = sys.index_map();
    if matrix.len() != map.len() {
        return Err(Error::Params(format!("matrix has {} rows, index set has {}", matrix.len(), map.len())));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# index,n,k")?;
    for (i, (n, k)) in map.iter().enumerate() {
        writeln!(f, "# {i},{n},{k}")?;
    }
    let mut w = csv::Writer::from_writer(f);
    let mut header = vec!["row".to_string()];
    header.extend((0..map.len()).map(|i| i.to_string()));
    w.write_record(&header)?;
    for (i, row) in matrix.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|v| format!("{v:.16e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    #[test]
    fn laguerre_basics() {
        for n in 1..=5 {
            for &t in &[0.5, 1.0, 2.0] {
                assert_eq!(laguerre_poly(n, 0, t, C64::new(0.3, -1.1)).unwrap(), C64::new(1.0, 0.0));
                let want = t.powi(n as i32 - 1) * inv_factorial(n as i64 - 1);
                assert!((laguerre_norm(n, 0, t).unwrap() - want).abs() < 1e-14 * want);
            }
        }
        assert!(laguerre_poly(3, 3, 1.0, C64::new(1.0, 0.0)).is_err());
        assert!(laguerre_norm(3, 5, 1.0).is_err());
    }

    #[test]
    fn laguerre_orthogonality() {
        assert!(laguerre_inner(4, 1, 2, 1.0).unwrap().abs() < 1e-12);
        for n in 1..=8 {
            for &t in &[0.5, 1.0, 2.0] {
                for j in 0..n {
                    let nj = laguerre_norm(n, j, t).unwrap();
                    for k in 0..=j {
                        let nk = laguerre_norm(n, k, t).unwrap();
                        let g = laguerre_inner(n, j, k, t).unwrap();
                        let want = if j == k { nj } else { 0.0 };
                        let scale = (nj * nk).abs().sqrt();
                        assert!((g - want).abs() < 1e-10 * scale, "n={n} T={t} ({j},{k}): {g} vs {want}");
                    }
                }
            }
        }
    }

    #[test]
    fn brownian_coordinate_variance() {
        for &t in &[0.5, 1.0, 3.0] {
            for m in [ZetaMethod::Polynomial, ZetaMethod::Multicontour] {
                let v = zeta_covariance(1, 1, 1, 1, t, m).unwrap();
                assert!((v - t).abs() < 1e-10, "{m:?} T={t}: {v}");
            }
        }
        assert!((zeta_covariance(1, 1, 1, 1, 1.0, ZetaMethod::QuadrupleIntegral).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn methods_agree() {
        let cases = [(3, 2, 2, 1), (2, 1, 1, 1), (2, 2, 2, 1), (3, 1, 3, 2), (4, 2, 2, 2), (3, 3, 1, 1)];
        for &(n1, r1, n2, r2) in &cases {
            let p = zeta_covariance(n1, r1, n2, r2, 1.0, ZetaMethod::Polynomial).unwrap();
            let m = zeta_covariance(n1, r1, n2, r2, 1.0, ZetaMethod::Multicontour).unwrap();
            let q = zeta_covariance(n1, r1, n2, r2, 1.0, ZetaMethod::QuadrupleIntegral).unwrap();
            let c = zeta_covariance_closed(n1, n1 - r1 + 1, n2, n2 - r2 + 1, 1.0).unwrap();
            assert!((p - m).abs() < 1e-6, "({n1},{r1},{n2},{r2}) poly {p} multi {m}");
            assert!((p - q).abs() < 1e-6, "({n1},{r1},{n2},{r2}) poly {p} quad {q}");
            assert!((p - c).abs() < 1e-10, "({n1},{r1},{n2},{r2}) poly {p} closed {c}");
        }
        assert!(matches!(zeta_covariance(3, 3, 2, 2, 1.0, ZetaMethod::Multicontour), Err(Error::Guard(_))));
        assert!(zeta_covariance(2, 1, 3, 1, 1.0, ZetaMethod::Polynomial).is_err());
    }

    #[test]
    fn closed_sum_values() {
        let cases = [
            ((2, 1, 1, 1), 0.5),
            ((3, 2, 2, 1), 1.0 / 3.0),
            ((4, 2, 3, 3), 0.2),
            ((5, 3, 5, 2), 4.0 / 21.0),
            ((6, 4, 4, 1), 0.139_682_539_682_539_68),
        ];
        for ((n1, k1, n2, k2), want) in cases {
            let c = zeta_covariance_closed(n1, k1, n2, k2, 1.0).unwrap();
            assert!((c - want).abs() < 1e-14, "{c} vs {want}");
            let p = zeta_covariance(n1, n1 - k1 + 1, n2, n2 - k2 + 1, 1.0, ZetaMethod::Polynomial).unwrap();
            assert!((p - want).abs() < 1e-10, "{p} vs {want}");
        }
    }

    #[test]
    fn diffusive_scaling() {
        for m in [ZetaMethod::Polynomial, ZetaMethod::Multicontour] {
            let one = zeta_covariance(3, 1, 2, 1, 1.0, m).unwrap();
            for &t in &[0.3, 2.0, 5.0] {
                let v = zeta_covariance(3, 1, 2, 1, t, m).unwrap();
                assert!((v - t * one).abs() < 1e-8 * t.max(1.0), "{m:?} T={t}");
            }
        }
        let a = zeta_covariance_matrix(4, 1.0, ZetaMethod::Polynomial).unwrap();
        let b = zeta_covariance_matrix(4, 2.5, ZetaMethod::Polynomial).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert!((b[i][j] - 2.5 * a[i][j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn drift_structure() {
        let s = ZetaSystem::new(4).unwrap();
        let a = s.drift_hat();
        let at = s.drift(2.0);
        let x: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut out = vec![0.0; 10];
        s.apply_drift(2.0, &x, &mut out);
        for i in 0..10 {
            let nz = a[i].iter().filter(|v| **v != 0.0).count();
            assert!(nz <= 3);
            for j in 0..10 {
                assert!((at[i][j] * 2.0 - a[i][j]).abs() < 1e-15);
            }
            let direct: f64 = (0..10).map(|j| at[i][j] * x[j]).sum();
            assert!((direct - out[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn propagator_identity_and_martingale() {
        let p = propagator_matrix(5, 1.3, 1.3).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                assert_eq!(p.matrix[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
        for &t in &[1.0, 2.0, 10.0] {
            assert_eq!(propagator_closed(1.0, t, (1, 1), (1, 1)), 1.0);
        }
        assert_eq!(propagator_closed_ln(1.0, 1.0, (2, 3), (1, 2)), f64::NEG_INFINITY);
        let e = propagator_closed(1.0, 2.7, (3, 5), (2, 3));
        assert!((propagator_closed_ln(1.0, 2.7, (3, 5), (2, 3)).exp() - e).abs() < 1e-13 * e);
        let s = propagator_numeric(1.0, 1.0, 3).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(s.matrix[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn propagator_rows_and_numeric() {
        let c = propagator_matrix(6, 1.0, 2.5).unwrap();
        let n = propagator_numeric(1.0, 2.5, 6).unwrap();
        for i in 0..21 {
            let s: f64 = c.matrix[i].iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row {i} sums to {s}");
            for j in 0..21 {
                assert!(c.matrix[i][j] >= 0.0);
                assert!((c.matrix[i][j] - n.matrix[i][j]).abs() < 1e-6, "({i},{j})");
            }
        }
    }

    #[test]
    fn propagator_semigroup() {
        let (t0, t1, t2) = (0.7, 1.6, 3.1);
        for (a, b) in [
            (propagator_matrix(5, t0, t1), propagator_matrix(5, t1, t2)),
            (propagator_numeric(t0, t1, 5), propagator_numeric(t1, t2, 5)),
        ] {
            let (a, b) = (a.unwrap().matrix, b.unwrap().matrix);
            let whole = propagator_matrix(5, t0, t2).unwrap().matrix;
            for i in 0..15 {
                for j in 0..15 {
                    let comp: f64 = (0..15).map(|l| b[i][l] * a[l][j]).sum();
                    assert!((comp - whole[i][j]).abs() < 1e-8, "({i},{j}): {comp} vs {}", whole[i][j]);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn propagator_is_stochastic(levels in 1usize..8, t0 in 0.1f64..3.0, dt in 0.0f64..5.0) {
            let p = propagator_matrix(levels, t0, t0 + dt).unwrap();
            for row in &p.matrix {
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                let s: f64 = row.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn covariance_scales_with_time(n1 in 1usize..7, t in 0.1f64..10.0, seed in 0usize..1000) {
            let n2 = 1 + seed % n1;
            let k1 = 1 + seed % n1;
            let k2 = 1 + (seed / 7) % n2;
            let one = zeta_covariance_closed(n1, k1, n2, k2, 1.0).unwrap();
            let v = zeta_covariance_closed(n1, k1, n2, k2, t).unwrap();
            prop_assert!((v - t * one).abs() < 1e-12 * t);
        }
    }

    #[test]
    fn two_time_brownian_and_identity() {
        let cov = zeta_covariance_matrix(3, 1.5, ZetaMethod::Polynomial).unwrap();
        let same = two_time_covariance(1.5, 1.5, &cov).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert!((same[i][j] - cov[i][j]).abs() < 1e-15);
            }
        }
        let later = two_time_covariance(1.5, 4.0, &cov).unwrap();
        assert!((later[0][0] - 1.5).abs() < 1e-12);
        assert!(two_time_covariance(1.0, 2.0, &[vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn lyapunov_reproduces_formula() {
        let sol = lyapunov_covariance(1.0, 2.0, 4).unwrap();
        let want = zeta_covariance_matrix(4, 2.0, ZetaMethod::Polynomial).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert!((sol.matrix[i][j] - want[i][j]).abs() < 1e-6, "({i},{j})");
            }
        }
        assert!(sol.asymmetry < 1e-12);
        assert!(sol.min_eigenvalue > -1e-10);
    }

    #[test]
    fn zero_noise_zero_start_stays_zero() {
        let opts = ZetaSdeOptions { replicas: 4, gaussian_start: false, noise: false, ..Default::default() };
        let e = simulate_zeta_sde(4, &opts, 3).unwrap();
        assert!(e.samples.iter().flatten().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn matrix_csv_has_index_map() {
        let dir = std::env::temp_dir().join(format!("qwg-zeta-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cov.csv");
        let m = zeta_covariance_matrix(2, 1.0, ZetaMethod::Polynomial).unwrap();
        write_matrix_csv(&path, 2, &m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# index,n,k\n# 0,1,1\n# 1,2,1\n# 2,2,2\nrow,0,1,2\n"));
    }
}
