//! Large-N closed forms: the double-critical point Ω, the limiting bulk
//! covariance (chord double integral, elliptic and Bessel forms), the
//! logarithmic short-distance law, Gaussian asymptotics of the propagator,
//! the covariance near characteristics and its Edwards–Wilkinson form, and
//! the slow manifold of the steepest-descent analysis.

use crate::error::{Error, Result};
use crate::largetime::{propagator_closed_ln, zeta_covariance_closed};
use crate::special::{bessel_i0e, bessel_j0, e1_plus_log, elliptic_k, gamma0, gauss_legendre, EULER_GAMMA};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

const CHORD_NODES: usize = 201;
const CHORD_MAX_NODES: usize = 3201;
const CHORD_TOL: f64 = 1e-10;
/// Bow of the arcs, as a fraction of min ℑΩ, when the chords are closer than that.
const BOW_FRACTION: f64 = 0.1;

/// Ω(c,b) = c(1−2b+2i√(b(1−b))).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaPoint {
    pub c: f64,
    pub b: f64,
    pub value: C64,
}

impl OmegaPoint {
    pub fn new(c: f64, b: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) || !(b > 0.0 && b < 1.0) {
            return Err(Error::Domain(format!("need c > 0 and b in (0,1), got c = {c}, b = {b}")));
        }
        Ok(OmegaPoint { c, b, value: omega(c, b) })
    }
}

pub fn omega(c: f64, b: f64) -> C64 {
    C64::new(c * (1.0 - 2.0 * b), 2.0 * c * (b * (1.0 - b)).sqrt())
}

fn pair(d: f64, a: f64, c: f64, b: f64) -> Result<(C64, C64)> {
    let o1 = OmegaPoint::new(d, a)?.value;
    let o2 = OmegaPoint::new(c, b)?.value;
    if c > d {
        return Err(Error::Domain(format!("need c <= d, got c = {c}, d = {d}")));
    }
    if (o1 - o2).norm() < 1e-14 * o1.norm() {
        return Err(Error::Domain("coincident Ω points".into()));
    }
    Ok((o1, o2))
}

/// √(x−ω)·√(x−ω̄) with principal roots; positive on the vertical chord between ω̄ and ω.
fn chord_root(x: C64, w: C64) -> C64 {
    (x - w).sqrt() * (x - w.conj()).sqrt()
}

/// (16/(2πi)²)∫_{Ω̄₂}^{Ω₂}dW∫_{Ω̄₁}^{Ω₁}dZ 1/((Z−W)√…√…), Z to the right of W.
///
/// Paths are X(θ) = R ± δcos²θ + iI sinθ, θ ∈ [−π/2, π/2]. With δ = 0 this is
/// the sine-arc substitution and the integrand is (4/π²)/(Z−W). Chords closer
/// than 0.1·min ℑΩ are bowed apart, Z to the right and W to the left.
pub fn limit_covariance_integral(d: f64, a: f64, c: f64, b: f64) -> Result<f64> {
    let (o1, o2) = pair(d, a, c, b)?;
    chord_integral(o1, o2)
}

/// The chord double integral for arbitrary upper-half-plane endpoints Ω₁ (Z) and Ω₂ (W).
pub fn chord_integral(o1: C64, o2: C64) -> Result<f64> {
    if !(o1.im > 0.0 && o2.im > 0.0) || (o1 - o2).norm() == 0.0 {
        return Err(Error::Domain("need distinct points in the upper half-plane".into()));
    }
    let (r1, i1, r2, i2) = (o1.re, o1.im, o2.re, o2.im);
    let m = i1.min(i2);
    let big = i1.max(i2);
    let bow = if r1 - r2 >= BOW_FRACTION * m {
        0.0
    } else if r1 >= r2 {
        BOW_FRACTION * m
    } else {
        let room = 1.0 - (m / big).powi(2);
        if room < 1e-3 {
            return Err(Error::Domain("Z path cannot be kept to the right of W".into()));
        }
        ((r2 - r1 + BOW_FRACTION * m) / room).max(BOW_FRACTION * m)
    };
    let z_at = |t: f64| C64::new(r1 + bow * t.cos().powi(2), i1 * t.sin());
    let w_at = |t: f64| C64::new(r2 - bow * t.cos().powi(2), i2 * t.sin());
    let dz = |t: f64| C64::new(-bow * (2.0 * t).sin(), i1 * t.cos());
    let dw = |t: f64| C64::new(bow * (2.0 * t).sin(), i2 * t.cos());
    // separation check on a fine sample
    let probe: Vec<f64> = (0..=400).map(|j| -0.5 * PI + PI * j as f64 / 400.0).collect();
    let sep = probe
        .iter()
        .flat_map(|&s| probe.iter().map(move |&t| (s, t)))
        .map(|(s, t)| (z_at(s) - w_at(t)).norm())
        .fold(f64::INFINITY, f64::min);
    if sep < 0.01 * m {
        return Err(Error::Domain(format!("chords too close (separation {sep:.3e})")));
    }
    let eval = |nodes: usize| -> f64 {
        let g = gauss_legendre(nodes);
        let pts: Vec<(f64, f64)> =
            g.nodes.iter().zip(&g.weights).map(|(&x, &w)| (0.5 * PI * x, 0.5 * PI * w)).collect();
        let zs: Vec<(C64, C64)> = pts
            .iter()
            .map(|&(t, w)| {
                let z = z_at(t);
                let root = if bow == 0.0 { C64::new(i1 * t.cos(), 0.0) } else { chord_root(z, o1) };
                (z, dz(t) * w / root)
            })
            .collect();
        let ws: Vec<(C64, C64)> = pts
            .iter()
            .map(|&(t, w)| {
                let x = w_at(t);
                let root = if bow == 0.0 { C64::new(i2 * t.cos(), 0.0) } else { chord_root(x, o2) };
                (x, dw(t) * w / root)
            })
            .collect();
        let acc: C64 = zs.par_iter().map(|&(z, fz)| ws.iter().map(|&(w, fw)| fz * fw / (z - w)).sum::<C64>()).sum();
        // 16/(2πi)² = −4/π²
        (-4.0 / (PI * PI) * acc).re
    };
    let mut nodes = CHORD_NODES;
    let mut prev = eval(nodes);
    loop {
        let next_nodes = 2 * nodes - 1;
        let cur = eval(next_nodes);
        if (cur - prev).abs() <= CHORD_TOL * cur.abs().max(1.0) {
            return Ok(cur);
        }
        if next_nodes >= CHORD_MAX_NODES {
            return Err(Error::Quadrature(format!("chord integral not converged: {prev} vs {cur}")));
        }
        nodes = next_nodes;
        prev = cur;
    }
}

/// κ = 2√(I₁I₂)/√((R₁−R₂)²+(I₁+I₂)²), the form that equals the chord integral.
pub fn kappa(o1: C64, o2: C64) -> f64 {
    2.0 * (o1.im * o2.im).sqrt() / ((o1.re - o2.re).powi(2) + (o1.im + o2.im).powi(2)).sqrt()
}

/// κ with real parts in the numerator; NaN when R₁R₂ < 0. Kept for comparison only.
pub fn kappa_real_parts(o1: C64, o2: C64) -> f64 {
    2.0 * (o1.re * o2.re).sqrt() / ((o1.re - o2.re).powi(2) + (o1.im + o2.im).powi(2)).sqrt()
}

/// 4κ𝕂(κ)/(π√(ℑΩ₁ℑΩ₂)).
pub fn limit_covariance_elliptic(d: f64, a: f64, c: f64, b: f64) -> Result<f64> {
    let (o1, o2) = pair(d, a, c, b)?;
    let k = kappa(o1, o2);
    if !(k < 1.0) {
        return Err(Error::Domain(format!("κ = {k} >= 1")));
    }
    Ok(4.0 * k * elliptic_k(k)? / (PI * (o1.im * o2.im).sqrt()))
}

/// 4∫_0^∞ e^{−λ(R₁−R₂)} J₀(I₁λ) J₀(I₂λ) dλ, truncated where the exponential drops below 1e-12.
/// Needs R₁ > R₂.
pub fn limit_covariance_bessel(d: f64, a: f64, c: f64, b: f64) -> Result<f64> {
    let (o1, o2) = pair(d, a, c, b)?;
    let gap = o1.re - o2.re;
    if !(gap > 0.0) {
        return Err(Error::Domain("Bessel form needs ℜΩ(d,a) > ℜΩ(c,b)".into()));
    }
    let end = 28.0 / gap;
    let width = (0.5 / o1.im.max(o2.im)).min(end);
    let panels = (end / width).ceil() as usize;
    let g = gauss_legendre(16);
    let h = end / panels as f64;
    let sum: f64 = (0..panels)
        .into_par_iter()
        .map(|p| {
            let mid = (p as f64 + 0.5) * h;
            g.nodes
                .iter()
                .zip(&g.weights)
                .map(|(&x, &w)| {
                    let l = mid + 0.5 * h * x;
                    0.5 * h * w * (-l * gap).exp() * bessel_j0(o1.im * l) * bessel_j0(o2.im * l)
                })
                .sum::<f64>()
        })
        .sum();
    Ok(4.0 * sum)
}

/// Leading short-distance term (−4/π) ln|Ω₁−Ω₂| / √(ℑΩ₁ℑΩ₂).
pub fn log_correlation_prediction(d: f64, a: f64, c: f64, b: f64) -> Result<f64> {
    let (o1, o2) = pair(d, a, c, b)?;
    Ok(-4.0 / PI * (o1 - o2).norm().ln() / (o1.im * o2.im).sqrt())
}

/// Finite-N point: N·Cov(ζ^{(dN)}_{(1−a)dN}(1), ζ^{(cN)}_{(1−b)cN}(1)) with rounded indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteNPoint {
    pub n: usize,
    pub scaled: f64,
    pub limit: f64,
    pub error: f64,
}

pub fn finite_n_scaled_covariance(d: f64, a: f64, c: f64, b: f64, n: usize) -> Result<f64> {
    let nf = n as f64;
    let round = |x: f64| (x.round() as usize).max(1);
    let (n1, k1) = (round(d * nf), round((1.0 - a) * d * nf));
    let (n2, k2) = (round(c * nf), round((1.0 - b) * c * nf));
    Ok(nf * zeta_covariance_closed(n1, k1.min(n1), n2, k2.min(n2), 1.0)?)
}

pub fn finite_n_comparison(d: f64, a: f64, c: f64, b: f64, sizes: &[usize]) -> Result<Vec<FiniteNPoint>> {
    let limit = limit_covariance_elliptic(d, a, c, b)?;
    sizes
        .iter()
        .map(|&n| {
            let scaled = finite_n_scaled_covariance(d, a, c, b, n)?;
            Ok(FiniteNPoint { n, scaled, limit, error: (scaled - limit).abs() })
        })
        .collect()
}

/// Indices ((k,n),(k',n')) of the propagator scaling around the characteristic, rounded.
pub fn propagator_scaling_indices(
    d: f64,
    a: f64,
    t: f64,
    s1: f64,
    s2: f64,
    n: usize,
) -> ((usize, usize), (usize, usize)) {
    let nf = n as f64;
    let k = ((1.0 - a) * d * t * nf).round() as usize;
    let nn = (d * t * nf).round() as usize;
    let k2 = ((1.0 - a) * d * nf + s1 * ((1.0 - a) * d * nf).sqrt()).round() as usize;
    let n2 = (d * nf + s1 * ((1.0 - a) * d * nf).sqrt() + s2 * (a * d * nf).sqrt()).round() as usize;
    ((k, nn), (k2, n2))
}

/// (1/(2π(T−1)/T))·(1/(√(a(1−a))dN))·exp(−(σ₁²+σ₂²)/(2(T−1)/T)).
pub fn propagator_gaussian_asymptotic(d: f64, a: f64, t: f64, s1: f64, s2: f64, n: usize) -> f64 {
    let v = (t - 1.0) / t;
    (-(s1 * s1 + s2 * s2) / (2.0 * v)).exp() / (2.0 * PI * v) / ((a * (1.0 - a)).sqrt() * d * n as f64)
}

/// (σ₁, σ₂) actually realized by the integer target (k', n').
pub fn realized_sigma(d: f64, a: f64, (k2, n2): (usize, usize), n: usize) -> (f64, f64) {
    let nf = n as f64;
    let s1 = (k2 as f64 - (1.0 - a) * d * nf) / ((1.0 - a) * d * nf).sqrt();
    let s2 = (n2 as f64 - d * nf - s1 * ((1.0 - a) * d * nf).sqrt()) / (a * d * nf).sqrt();
    (s1, s2)
}

/// Exact propagator Y^1(T) at the rounded scaling indices.
pub fn propagator_exact_scaled(d: f64, a: f64, t: f64, s1: f64, s2: f64, n: usize) -> f64 {
    let (from, to) = propagator_scaling_indices(d, a, t, s1, s2, n);
    propagator_closed_ln(1.0, t, from, to).exp()
}

/// Exact / asymptotic at the rounded indices, the Gaussian taken at the realized σ.
pub fn propagator_asymptotic_ratio(d: f64, a: f64, t: f64, s1: f64, s2: f64, n: usize) -> f64 {
    let (from, to) = propagator_scaling_indices(d, a, t, s1, s2, n);
    let (r1, r2) = realized_sigma(d, a, to, n);
    (propagator_closed_ln(1.0, t, from, to) - propagator_gaussian_asymptotic(d, a, t, r1, r2, n).ln()).exp()
}

/// C(R) = Γ(0,R²/2) + ln R², with C(0) = ln 2 − γ.
pub fn c_function(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("C(R) needs R >= 0, got {r}")));
    }
    if r == 0.0 {
        return Ok(LN_2 - EULER_GAMMA);
    }
    Ok(e1_plus_log(0.5 * r * r)? + LN_2)
}

/// C(R) from the Bessel-I₀ radial integral 2e^{−R²/2}∫λ ln λ e^{−λ²/2} I₀(λR) dλ.
pub fn c_function_bessel(r: f64) -> f64 {
    let g = gauss_legendre(64);
    let end = r + 12.0;
    let panels = 8;
    let h = end / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        for (&x, &w) in g.nodes.iter().zip(&g.weights) {
            // λ = u², smooths λ ln λ at 0
            let u0 = (p as f64 * h).sqrt();
            let u1 = ((p + 1) as f64 * h).sqrt();
            let u = 0.5 * (u0 + u1) + 0.5 * (u1 - u0) * x;
            let l = u * u;
            let f = if l > 0.0 { l * l.ln() * (-(l - r).powi(2) / 2.0).exp() * bessel_i0e(l * r) } else { 0.0 };
            s += 0.5 * (u1 - u0) * w * f * 2.0 * u;
        }
    }
    2.0 * s
}

/// ∫ p_τ(σ) ln|σ−ξ|² dσ over ℝ² with |ξ| = r, p_τ the centred Gaussian of variance τ per axis.
/// Polar coordinates around ξ; trapezoid in angle, Gauss–Legendre in √ρ.
pub fn heat_kernel_log_average(tau: f64, r: f64) -> Result<f64> {
    if !(tau > 0.0) || !(r >= 0.0) {
        return Err(Error::Domain(format!("need τ > 0 and r >= 0, got τ = {tau}, r = {r}")));
    }
    let sd = tau.sqrt();
    let rho_max = r + 14.0 * sd;
    let angles = 128;
    let g = gauss_legendre(48);
    let panels = 12;
    let umax = rho_max.sqrt();
    let mut s = 0.0;
    for p in 0..panels {
        let (u0, u1) = (umax * p as f64 / panels as f64, umax * (p + 1) as f64 / panels as f64);
        for (&x, &w) in g.nodes.iter().zip(&g.weights) {
            let u = 0.5 * (u0 + u1) + 0.5 * (u1 - u0) * x;
            let rho = u * u;
            if rho == 0.0 {
                continue;
            }
            let mut ang = 0.0;
            for j in 0..angles {
                let th = 2.0 * PI * j as f64 / angles as f64;
                let (sx, sy) = (r + rho * th.cos(), rho * th.sin());
                ang += (-(sx * sx + sy * sy) / (2.0 * tau)).exp();
            }
            ang *= 2.0 * PI / angles as f64;
            s += 0.5 * (u1 - u0) * w * 2.0 * u * rho * (rho * rho).ln() * ang;
        }
    }
    Ok(s / (2.0 * PI * tau))
}

/// C(R) as the 2-D Gaussian average of ln|σ−ξ|².
pub fn c_function_quadrature(r: f64) -> Result<f64> {
    heat_kernel_log_average(1.0, r)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Domain(format!("τ must lie in (0,1], got {tau}")));
    }
    Ok(())
}

/// G_τ(r) = −Γ(0, r²/2τ) − ln r².
pub fn g_tau(tau: f64, r: f64) -> Result<f64> {
    check_tau(tau)?;
    if !(r > 0.0) {
        return Err(Error::Domain(format!("G_τ diverges at r = {r}")));
    }
    let x = r * r / (2.0 * tau);
    if x <= 1.0 {
        // −(E1(x)+ln x) − ln(2τ), free of the cancellation at small r
        return Ok(-e1_plus_log(x)? - (2.0 * tau).ln());
    }
    Ok(-gamma0(x)? - (r * r).ln())
}

/// G_τ(r) through the heat-kernel average −∫p_τ(σ) ln|σ−ξ|² dσ.
pub fn g_tau_quadrature(tau: f64, r: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(-heat_kernel_log_average(tau, r)?)
}

pub type Point2 = [f64; 2];

fn dist(p: Point2, q: Point2) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn distinct(points: &[Point2]) -> Result<()> {
    for i in 0..points.len() {
        for j in 0..i {
            if dist(points[i], points[j]) == 0.0 {
                return Err(Error::Domain("offsets must be pairwise distinct".into()));
            }
        }
    }
    Ok(())
}

fn g_bracket(tau: f64, x: Point2, y: Point2, xt: Point2, yt: Point2) -> Result<f64> {
    Ok(g_tau(tau, dist(x, xt))? - g_tau(tau, dist(x, yt))? - g_tau(tau, dist(y, xt))? + g_tau(tau, dist(y, yt))?)
}

/// Frame for the covariance of differences near a characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicFrame {
    pub d: f64,
    pub a: f64,
    /// Later time T.
    pub t: f64,
    /// Earlier time S.
    pub s: f64,
    pub eta: Point2,
    pub lambda: Point2,
    pub mu: Point2,
    pub nu: Point2,
}

impl CharacteristicFrame {
    pub fn tau(&self) -> f64 {
        (self.t - self.s) / self.t
    }

    /// (k, n) of ζ(T, η; N) for the offset `eta` at time `time`.
    pub fn indices(&self, time: f64, eta: Point2, n: usize) -> (usize, usize) {
        let nf = n as f64;
        let (d, a) = (self.d, self.a);
        let lev = (d * nf + (eta[0] * ((1.0 - a) * d).sqrt() + eta[1] * (a * d).sqrt()) * nf.sqrt()) * time;
        let pos = ((1.0 - a) * d * nf + eta[0] * ((1.0 - a) * d).sqrt() * nf.sqrt()) * time;
        (pos.round() as usize, lev.round() as usize)
    }
}

/// lim Cov(ζ(T,η)−ζ(T,λ), ζ(S,μ)−ζ(S,ν)) = S/(πd√(a(1−a)))·(G_τ(|η−μ|) − G_τ(|η−ν|) − G_τ(|λ−μ|) + G_τ(|λ−ν|)).
pub fn characteristic_covariance(f: &CharacteristicFrame) -> Result<f64> {
    if !(f.d > 0.0 && f.a > 0.0 && f.a < 1.0 && f.t > f.s && f.s > 0.0) {
        return Err(Error::Domain("need d > 0, a in (0,1), T > S > 0".into()));
    }
    distinct(&[f.eta, f.lambda, f.mu, f.nu])?;
    let pre = f.s / (PI * f.d * (f.a * (1.0 - f.a)).sqrt());
    Ok(pre * g_bracket(f.tau(), f.eta, f.lambda, f.mu, f.nu)?)
}

/// Edwards–Wilkinson: Cov(u(t,x)−u(t,y), u(t̃,x̃)−u(t̃,ỹ)) = (4π)⁻¹·G-bracket at t−t̃ ∈ (0,1].
pub fn ew_covariance(t: f64, t_tilde: f64, x: Point2, y: Point2, xt: Point2, yt: Point2) -> Result<f64> {
    if !(t > t_tilde) {
        return Err(Error::Domain(format!("need t > t̃, got {t} <= {t_tilde}")));
    }
    distinct(&[x, y, xt, yt])?;
    Ok(g_bracket(t - t_tilde, x, y, xt, yt)? / (4.0 * PI))
}

/// Equal-time Gaussian free field form −(2π)⁻¹(ln|x−x̃| − ln|x−ỹ| − ln|y−x̃| + ln|y−ỹ|).
pub fn gff_covariance(x: Point2, y: Point2, xt: Point2, yt: Point2) -> Result<f64> {
    distinct(&[x, y, xt, yt])?;
    Ok(-(dist(x, xt).ln() - dist(x, yt).ln() - dist(y, xt).ln() + dist(y, yt).ln()) / (2.0 * PI))
}

/// F(c,b,W,X) = bc ln(X−W) + (1−b)c ln X − X.
pub fn f_bulk(c: f64, b: f64, w: C64, x: C64) -> C64 {
    b * c * (x - w).ln() + (1.0 - b) * c * x.ln() - x
}

/// G(c,b,W,U) = −bc ln U − (1−b)c ln(W+U) + U + W.
pub fn g_bulk(c: f64, b: f64, w: C64, u: C64) -> C64 {
    -b * c * u.ln() - (1.0 - b) * c * (w + u).ln() + u + w
}

/// Δ(W) = √((1−W)²+4bW) on the branch ℜΔ ≥ 0.
pub fn delta(b: f64, w: C64) -> C64 {
    let one = C64::new(1.0, 0.0);
    ((one - w) * (one - w) + 4.0 * b * w).sqrt()
}

/// Critical points (X₊, X₋, U₊, U₋) of F and G at c = 1.
pub fn critical_points(b: f64, w: C64) -> (C64, C64, C64, C64) {
    let dl = delta(b, w);
    let xp = (1.0 + w + dl) / 2.0;
    let xm = (1.0 + w - dl) / 2.0;
    (xp, xm, xp - w, xm - w)
}

/// H(W) = b ln((1−W+Δ)/(1−W−Δ)) + (1−b) ln((1+W+Δ)/(1+W−Δ)) − Δ.
pub fn h_function(b: f64, w: C64) -> C64 {
    let dl = delta(b, w);
    let one = C64::new(1.0, 0.0);
    b * ((one - w + dl) / (one - w - dl)).ln() + (1.0 - b) * ((one + w + dl) / (one + w - dl)).ln() - dl
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowManifoldState {
    pub b: f64,
    pub phi: f64,
    pub r: f64,
    pub w: C64,
    pub delta: C64,
    pub x_plus: C64,
    pub x_minus: C64,
    pub u_plus: C64,
    pub u_minus: C64,
    pub h: C64,
}

/// Point of the slow manifold at angle φ: the r ∈ (0,1] with ℜH(re^{iφ}) = 0, by bisection.
pub fn slow_manifold(b: f64, phi: f64) -> Result<SlowManifoldState> {
    if !(b > 0.0 && b < 1.0) || !(phi > 0.0 && phi < PI) {
        return Err(Error::Domain(format!("need b in (0,1) and φ in (0,π), got b = {b}, φ = {phi}")));
    }
    let re_h = |r: f64| h_function(b, C64::from_polar(r, phi)).re;
    let at_one = re_h(1.0);
    let r = if at_one >= -1e-13 {
        1.0
    } else {
        let mut lo = 1e-12;
        if !(re_h(lo) > 0.0) {
            return Err(Error::Simulation(format!("slow manifold bracket failed at φ = {phi}")));
        }
        let mut hi = 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if re_h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let w = C64::from_polar(r, phi);
    let (x_plus, x_minus, u_plus, u_minus) = critical_points(b, w);
    Ok(SlowManifoldState { b, phi, r, w, delta: delta(b, w), x_plus, x_minus, u_plus, u_minus, h: h_function(b, w) })
}
