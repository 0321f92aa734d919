//! Determinants in f64 and double-double, plus a compensated summation helper.

use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Unevaluated sum hi + lo with |lo| <= ulp(hi)/2.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Exact ratio of two integers rounded to double-double.
    pub fn ratio(num: f64, den: f64) -> Self {
        Dd::new(num) / Dd::new(den)
    }

    pub fn powi(self, n: u32) -> Self {
        let mut acc = Dd::ONE;
        for _ in 0..n {
            acc = acc * self;
        }
        acc
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::new(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

/// Neumaier-style compensated accumulator for complex sums.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    re: Dd,
    im: Dd,
}

impl CompensatedSum {
    pub fn add(&mut self, z: C64) {
        self.re = self.re + Dd::new(z.re);
        self.im = self.im + Dd::new(z.im);
    }
    pub fn value(&self) -> C64 {
        C64::new(self.re.to_f64(), self.im.to_f64())
    }
}

/// Row-major square matrix determinant by partial-pivot LU.
pub fn det(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut d = 1.0;
    for c in 0..n {
        let mut p = c;
        for r in c + 1..n {
            if m[r][c].abs() > m[p][c].abs() {
                p = r;
            }
        }
        if m[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            m.swap(p, c);
            d = -d;
        }
        let piv = m[c][c];
        d *= piv;
        for r in c + 1..n {
            let f = m[r][c] / piv;
            if f != 0.0 {
                for j in c + 1..n {
                    m[r][j] -= f * m[c][j];
                }
            }
        }
    }
    d
}

/// Determinant with sign and log-magnitude, for entries that may overflow.
pub fn log_det(mut m: Vec<Vec<f64>>) -> (f64, f64) {
    let n = m.len();
    let mut sign = 1.0;
    let mut ld = 0.0;
    for c in 0..n {
        let mut p = c;
        for r in c + 1..n {
            if m[r][c].abs() > m[p][c].abs() {
                p = r;
            }
        }
        if m[p][c] == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        if p != c {
            m.swap(p, c);
            sign = -sign;
        }
        let piv = m[c][c];
        if piv < 0.0 {
            sign = -sign;
        }
        ld += piv.abs().ln();
        for r in c + 1..n {
            let f = m[r][c] / piv;
            for j in c + 1..n {
                m[r][j] -= f * m[c][j];
            }
        }
    }
    (sign, ld)
}

pub fn det_dd(mut m: Vec<Vec<Dd>>) -> Dd {
    let n = m.len();
    let mut d = Dd::ONE;
    for c in 0..n {
        let mut p = c;
        for r in c + 1..n {
            if m[r][c].abs().hi > m[p][c].abs().hi {
                p = r;
            }
        }
        if m[p][c].hi == 0.0 {
            return Dd::ZERO;
        }
        if p != c {
            m.swap(p, c);
            d = -d;
        }
        let piv = m[c][c];
        d = d * piv;
        for r in c + 1..n {
            let f = m[r][c] / piv;
            for j in c + 1..n {
                let t = f * m[c][j];
                m[r][j] = m[r][j] - t;
            }
        }
    }
    d
}

/// Determinant computed in f64 and double-double; returns the double-double
/// value and reports the f64 disagreement.
pub fn det_checked(m: &[Vec<f64>]) -> (f64, f64) {
    let plain = det(m.to_vec());
    let dd = det_dd(m.iter().map(|r| r.iter().map(|&x| Dd::new(x)).collect()).collect()).to_f64();
    (dd, (plain - dd).abs())
}

pub fn det_complex(mut m: Vec<Vec<C64>>) -> C64 {
    let n = m.len();
    let mut d = C64::new(1.0, 0.0);
    for c in 0..n {
        let mut p = c;
        for r in c + 1..n {
            if m[r][c].norm() > m[p][c].norm() {
                p = r;
            }
        }
        if m[p][c].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if p != c {
            m.swap(p, c);
            d = -d;
        }
        let piv = m[c][c];
        d *= piv;
        for r in c + 1..n {
            let f = m[r][c] / piv;
            for j in c + 1..n {
                let t = f * m[c][j];
                m[r][j] -= t;
            }
        }
    }
    d
}

/// Solve a dense real system; errors on a singular pivot.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.len();
    for c in 0..n {
        let mut p = c;
        for r in c + 1..n {
            if a[r][c].abs() > a[p][c].abs() {
                p = r;
            }
        }
        if a[p][c] == 0.0 {
            return Err(Error::Singular(format!("pivot {c} vanishes")));
        }
        a.swap(p, c);
        b.swap(p, c);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for j in c..n {
                a[r][j] -= f * a[c][j];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    Ok(x)
}

/// Eigenvalues (ascending) of a symmetric matrix.
pub fn sym_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (m[i][j] + m[j][i]));
    let mut v: Vec<f64> = mat.symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Factor F with F Fᵀ = cov after clipping eigenvalues in [-tol·trace, 0) to 0.
/// Eigenvalues below -tol·trace are an error.
pub fn gaussian_factor(cov: &[Vec<f64>], tol: f64) -> Result<Vec<Vec<f64>>> {
    let n = cov.len();
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (cov[i][j] + cov[j][i]));
    let trace: f64 = (0..n).map(|i| mat[(i, i)].abs()).sum();
    let eig = mat.symmetric_eigen();
    let mut f = vec![vec![0.0; n]; n];
    for (c, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -tol * trace {
            return Err(Error::Domain(format!("covariance has eigenvalue {lam} below -{tol}·trace")));
        }
        let s = lam.max(0.0).sqrt();
        for (r, row) in f.iter_mut().enumerate() {
            row[c] = eig.eigenvectors[(r, c)] * s;
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dd_recovers_cancellation() {
        let a = Dd::new(1.0) + Dd::new(1e-20);
        let b = a - Dd::new(1.0);
        assert!((b.to_f64() - 1e-20).abs() < 1e-35);
        let third = Dd::ratio(1.0, 3.0);
        let back = third * Dd::new(3.0) - Dd::ONE;
        assert!(back.to_f64().abs() < 1e-31);
    }

    #[test]
    fn determinants_agree() {
        let m = vec![vec![2.0, -1.0, 0.5], vec![1.0, 3.0, 2.0], vec![0.0, 4.0, -1.0]];
        // cofactor expansion
        let exact = 2.0 * (-3.0 - 2.0 * 4.0) + (-1.0 - 0.0) + 0.5 * (4.0 - 0.0);
        assert!((det(m.clone()) - exact).abs() < 1e-13);
        let (s, l) = log_det(m.clone());
        assert!((s * l.exp() - exact).abs() < 1e-12);
        let (d, gap) = det_checked(&m);
        assert!((d - exact).abs() < 1e-13 && gap < 1e-12);
        let mc: Vec<Vec<C64>> = m.iter().map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect()).collect();
        assert!((det_complex(mc).re - exact).abs() < 1e-13);
    }

    #[test]
    fn solve_small_system() {
        let a = vec![vec![4.0, 1.0], vec![2.0, 3.0]];
        let x = solve(a, vec![1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-15);
        assert!((2.0 * x[0] + 3.0 * x[1] - 2.0).abs() < 1e-15);
        assert!(solve(vec![vec![0.0]], vec![1.0]).is_err());
    }

    #[test]
    fn gaussian_factor_reproduces_covariance() {
        let c = vec![vec![2.0, 0.5, 0.0], vec![0.5, 1.0, 0.3], vec![0.0, 0.3, 0.5]];
        let f = gaussian_factor(&c, 1e-10).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| f[i][k] * f[j][k]).sum();
                assert!((v - c[i][j]).abs() < 1e-13);
            }
        }
        let ev = sym_eigenvalues(&c);
        assert!(ev[0] > 0.0 && ev[0] <= ev[2]);
        assert!(gaussian_factor(&[vec![1.0, 0.0], vec![0.0, -0.5]], 1e-10).is_err());
        assert!(gaussian_factor(&[vec![1.0, 0.0], vec![0.0, -1e-12]], 1e-10).is_ok());
    }
}
