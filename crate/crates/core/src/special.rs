//! Real special functions used across the crate.
//!
//! Log-gamma comes from `statrs`; the rest are implemented here because no
//! common crate ships them with the branch conventions needed.

use crate::error::{Error, Result};
use std::f64::consts::PI;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// ln(n!) for non-negative integers.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// Binomial coefficient as f64, zero outside 0 <= k <= n.
pub fn binom(n: i64, k: i64) -> f64 {
    if k < 0 || n < 0 || k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    if n <= 60 {
        let mut acc = 1.0f64;
        for i in 0..k {
            acc = acc * (n - i) as f64 / (i + 1) as f64;
        }
        return acc.round();
    }
    ln_binom(n, k).exp()
}

/// ln C(n,k); -inf outside the support.
pub fn ln_binom(n: i64, k: i64) -> f64 {
    if k < 0 || n < 0 || k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n as u64) - ln_factorial(k as u64) - ln_factorial((n - k) as u64)
}

/// 1/m! with the convention 1/m! = 0 for negative m.
pub fn inv_factorial(m: i64) -> f64 {
    if m < 0 {
        0.0
    } else if m <= 170 {
        let mut acc = 1.0;
        for i in 2..=m {
            acc /= i as f64;
        }
        acc
    } else {
        (-ln_factorial(m as u64)).exp()
    }
}

// B_{2k}/(2k+1)! for k = 1..10
const DILOG_COEFF: [f64; 10] = [
    1.0 / 6.0 / 6.0,
    -1.0 / 30.0 / 120.0,
    1.0 / 42.0 / 5040.0,
    -1.0 / 30.0 / 362_880.0,
    5.0 / 66.0 / 39_916_800.0,
    -691.0 / 2730.0 / 6_227_020_800.0,
    7.0 / 6.0 / 1_307_674_368_000.0,
    -3617.0 / 510.0 / 355_687_428_096_000.0,
    43867.0 / 798.0 / 121_645_100_408_832_000.0,
    -174_611.0 / 330.0 / 51_090_942_171_709_440_000.0,
];

/// Real dilogarithm Li2(x) for x <= 1.
pub fn dilog(x: f64) -> Result<f64> {
    if !(x <= 1.0) {
        return Err(Error::Domain(format!("dilog needs x <= 1, got {x}")));
    }
    let pi2_6 = PI * PI / 6.0;
    if x == 1.0 {
        return Ok(pi2_6);
    }
    if x < -1.0 {
        let l = (-x).ln();
        return Ok(-pi2_6 - 0.5 * l * l - dilog(1.0 / x)?);
    }
    if x > 0.5 {
        return Ok(pi2_6 - x.ln() * (-x).ln_1p() - dilog(1.0 - x)?);
    }
    // Bernoulli series in u = -ln(1-x), |u| <= ln 2
    let u = -(-x).ln_1p();
    let u2 = u * u;
    let mut sum = 0.0;
    let mut p = u * u2;
    for c in DILOG_COEFF {
        sum += c * p;
        p *= u2;
    }
    Ok(u - 0.25 * u2 + sum)
}

/// E1(x) + ln(x) for x > 0. Finite as x -> 0, where it tends to -gamma.
pub fn e1_plus_log(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("e1_plus_log needs x > 0, got {x}")));
    }
    if x <= 1.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..60 {
            term *= -x / k as f64;
            let t = term / k as f64;
            sum += t;
            if t.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        Ok(-EULER_GAMMA - sum)
    } else {
        Ok(gamma0(x)? + x.ln())
    }
}

/// Upper incomplete gamma Γ(0,x) = E1(x), x > 0.
pub fn gamma0(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("gamma0 needs x > 0, got {x}")));
    }
    if x <= 1.0 {
        return Ok(e1_plus_log(x)? - x.ln());
    }
    if x > 745.0 {
        return Ok(0.0);
    }
    // modified Lentz on the continued fraction
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            return Ok(h * (-x).exp());
        }
    }
    Err(Error::Quadrature("gamma0 continued fraction".into()))
}

/// Bessel J0. Trapezoid on the periodic integral representation for |x| <= 25,
/// Hankel asymptotics beyond.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 25.0 {
        let m = (2.0 * (x + 30.0)) as usize;
        let mut s = 0.0;
        for j in 0..m {
            let th = 2.0 * PI * j as f64 / m as f64;
            s += (x * th.sin()).cos();
        }
        return s / m as f64;
    }
    let (p, q) = hankel_pq(x);
    let chi = x - 0.25 * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

fn hankel_pq(x: f64) -> (f64, f64) {
    // a_k = prod_{j<=k} (2j-1)^2 / (k! (8x)^k); P and Q alternate in pairs
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0;
    for k in 1..60usize {
        let odd = (2 * k - 1) as f64;
        let next = a * odd * odd / (k as f64 * 8.0 * x);
        if next > a {
            break;
        }
        a = next;
        let sign = if k.div_ceil(2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 1 {
            q += sign * a;
        } else {
            p += sign * a;
        }
        if a < 1e-17 {
            break;
        }
    }
    (p, q)
}

/// e^{-x} I0(x) for x >= 0.
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    let m = (64.0 + 10.0 * x.sqrt()) as usize;
    let mut s = 0.0;
    for j in 0..m {
        let th = 2.0 * PI * j as f64 / m as f64;
        s += (x * (th.cos() - 1.0)).exp();
    }
    s / m as f64
}

pub fn bessel_i0(x: f64) -> f64 {
    bessel_i0e(x) * x.abs().exp()
}

/// Complete elliptic integral of the first kind, modulus convention:
/// K(k) = ∫_0^1 dx/√((1-x²)(1-k²x²)).
pub fn elliptic_k(k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k.abs()) {
        return Err(Error::Domain(format!("elliptic_k needs |k| < 1, got {k}")));
    }
    let k = k.abs();
    let mut a = 1.0;
    let mut b = ((1.0 - k) * (1.0 + k)).sqrt();
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
    }
    Ok(PI / (2.0 * a))
}

/// Gauss rule nodes and weights.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre on [-1, 1].
pub fn gauss_legendre(n: usize) -> GaussRule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    GaussRule { nodes, weights }
}

/// Gauss-Laguerre for ∫_0^∞ e^{-x} f(x) dx.
pub fn gauss_laguerre(n: usize) -> GaussRule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..n {
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2])
            }
        };
        let mut p2 = 0.0;
        for _ in 0..200 {
            let mut p1 = 1.0;
            p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 - z) * p2 / (j + 1) as f64 - j as f64 * p3 / (j + 1) as f64;
            }
            let pp = nf * (p1 - p2) / z;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs() {
                break;
            }
        }
        nodes[i] = z;
        // w = z / ((n+1)^2 L_{n+1}(z)^2) rewritten through L_{n-1}
        weights[i] = z / (nf * nf * p2 * p2);
    }
    GaussRule { nodes, weights }
}
