//! q-deformed special functions, partitions, interlacing arrays and the
//! elementary samplers used by every dynamic.

use crate::error::{ensure_finite, Error, Result};
use crate::special::dilog;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Stand-in for λ = +∞ at indices k <= 0. Large enough that q^{INF - x} is 0.
pub const INF: i64 = i64::MAX / 4;

/// (a;q)_n, with `n = None` meaning the infinite product.
pub fn q_pochhammer(a: f64, q: f64, n: Option<u64>) -> Result<f64> {
    ensure_finite("a", a)?;
    ensure_finite("q", q)?;
    match n {
        Some(n) => {
            let mut acc = 1.0;
            let mut qi = 1.0;
            for _ in 0..n {
                acc *= 1.0 - qi * a;
                qi *= q;
            }
            Ok(acc)
        }
        None => {
            if q.abs() >= 1.0 {
                return Err(Error::Domain(format!("infinite q-Pochhammer needs |q| < 1, got {q}")));
            }
            let mut acc = 1.0;
            let mut qi = 1.0;
            loop {
                let t = qi * a;
                if t.abs() < 1e-16 {
                    break;
                }
                acc *= 1.0 - t;
                qi *= q;
            }
            Ok(acc)
        }
    }
}

/// ln (a;q)_∞ for 0 <= a < 1, summed in log space so tiny products survive.
pub fn ln_q_pochhammer_inf(a: f64, q: f64) -> f64 {
    let mut acc = 0.0;
    let mut qi = 1.0;
    loop {
        let t = qi * a;
        if t < 1e-17 {
            break;
        }
        acc += (-t).ln_1p();
        qi *= q;
    }
    acc
}

/// g_a(b) = ∫_0^b ln(1 - a e^{-s}) ds = Li2(a e^{-b}) - Li2(a).
pub fn g_integral(a: f64, b: f64) -> Result<f64> {
    ensure_finite("a", a)?;
    ensure_finite("b", b)?;
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::Domain(format!("g_integral needs a in [0,1], got {a}")));
    }
    if b < 0.0 {
        return Err(Error::Domain(format!("g_integral needs b >= 0, got {b}")));
    }
    if a == 0.0 || b == 0.0 {
        return Ok(0.0);
    }
    Ok(dilog(a * (-b).exp())? - dilog(a)?)
}

/// Cached ln (q;q)_m for a fixed q, grown on demand.
#[derive(Debug, Clone)]
pub struct QTable {
    eps: f64,
    ln_qq: Vec<f64>,
}

impl QTable {
    pub fn new(q: f64) -> Self {
        QTable { eps: -q.ln(), ln_qq: vec![0.0] }
    }

    pub fn q(&self) -> f64 {
        (-self.eps).exp()
    }

    /// ln(1 - q^m) for m >= 1.
    pub fn ln_one_minus_qpow(&self, m: i64) -> f64 {
        (-(-self.eps * m as f64).exp_m1()).ln()
    }

    pub fn ensure(&mut self, m: u64) {
        let m = m as usize;
        while self.ln_qq.len() <= m {
            let j = self.ln_qq.len() as i64;
            let next = self.ln_qq[j as usize - 1] + self.ln_one_minus_qpow(j);
            self.ln_qq.push(next);
        }
    }

    /// ln (q;q)_m.
    pub fn ln_qq(&mut self, m: u64) -> f64 {
        self.ensure(m);
        self.ln_qq[m as usize]
    }

    /// ln (q;q)_m without growing; caller has called `ensure`.
    #[inline]
    pub fn ln_qq_cached(&self, m: u64) -> f64 {
        self.ln_qq[m as usize]
    }

    /// ln of the Gaussian binomial [c choose s]_q.
    pub fn ln_qbinom(&mut self, c: u64, s: u64) -> f64 {
        if s > c {
            return f64::NEG_INFINITY;
        }
        self.ensure(c);
        self.ln_qq[c as usize] - self.ln_qq[s as usize] - self.ln_qq[(c - s) as usize]
    }
}

/// Powers q^d for integer d with a small lookup table; d >= INF/2 gives 0.
#[derive(Debug, Clone)]
pub struct QPow {
    lnq: f64,
    table: Vec<f64>,
}

impl QPow {
    pub fn new(q: f64) -> Self {
        let lnq = q.ln();
        let table = (0..4096).map(|d| (lnq * d as f64).exp()).collect();
        QPow { lnq, table }
    }

    #[inline]
    pub fn pow(&self, d: i64) -> f64 {
        if d >= INF / 2 {
            0.0
        } else if (0..4096).contains(&d) {
            self.table[d as usize]
        } else {
            (self.lnq * d as f64).exp()
        }
    }
}

/// P(s) = α^s (α;q)_∞ / (q;q)_s.
pub fn q_geometric_pmf(q: f64, alpha: f64, s: u64) -> f64 {
    if alpha == 0.0 {
        return if s == 0 { 1.0 } else { 0.0 };
    }
    let mut lp = ln_q_pochhammer_inf(alpha, q) + s as f64 * alpha.ln();
    let mut qj = 1.0;
    for _ in 0..s {
        qj *= q;
        lp -= (-qj).ln_1p();
    }
    lp.exp()
}

/// Inverse-CDF draw from the q-geometric law. Mass beyond cumulative
/// 1 - 1e-15 is assigned to the last computed atom.
pub fn sample_q_geometric<R: Rng + ?Sized>(q: f64, alpha: f64, rng: &mut R) -> u64 {
    if alpha <= 0.0 {
        return 0;
    }
    let u: f64 = rng.random();
    let la = alpha.ln();
    let mut lp = ln_q_pochhammer_inf(alpha, q);
    let mut cum = 0.0;
    let mut qj = 1.0;
    let mut s = 0u64;
    loop {
        cum += lp.exp();
        if u < cum || cum >= 1.0 - 1e-15 {
            return s;
        }
        qj *= q;
        lp += la - (-qj).ln_1p();
        s += 1;
    }
}

/// q-Hahn weight φ_{q,ξ,η}(s|c) in the regime q∈(0,1), 0 <= η <= ξ < 1.
/// `c = None` is the c = ∞ limit.
pub fn q_hahn_pmf(q: f64, xi: f64, eta: f64, s: u64, c: Option<u64>) -> Result<f64> {
    for (n, v) in [("q", q), ("xi", xi), ("eta", eta)] {
        ensure_finite(n, v)?;
    }
    if !(0.0 < q && q < 1.0) {
        return Err(Error::Params(format!("q-Hahn needs q in (0,1), got {q}")));
    }
    if let Some(c) = c {
        if s > c {
            return Ok(0.0);
        }
    }
    // ξ^s (η/ξ;q)_s = ∏_{i<s} (ξ - q^i η)
    let mut head = 1.0;
    let mut qi = 1.0;
    for _ in 0..s {
        head *= xi - qi * eta;
        qi *= q;
    }
    let w = match c {
        Some(c) => {
            let tail = q_pochhammer(xi, q, Some(c - s))?;
            let den = q_pochhammer(eta, q, Some(c))?;
            let qq = |m| q_pochhammer(q, q, Some(m));
            head * tail / den * qq(c)? / (qq(s)? * qq(c - s)?)
        }
        None => {
            let tail = q_pochhammer(xi, q, None)?;
            let den = q_pochhammer(eta, q, None)?;
            head * tail / (den * q_pochhammer(q, q, Some(s))?)
        }
    };
    if w < -1e-15 || !w.is_finite() {
        return Err(Error::Params(format!("q-Hahn weight {w} outside the admissible regime")));
    }
    Ok(w.max(0.0))
}

pub fn sample_q_hahn<R: Rng + ?Sized>(q: f64, xi: f64, eta: f64, c: u64, rng: &mut R) -> Result<u64> {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for s in 0..=c {
        cum += q_hahn_pmf(q, xi, eta, s, Some(c))?;
        if u < cum || cum >= 1.0 - 1e-15 {
            return Ok(s);
        }
    }
    Ok(c)
}

/// The q^{-1} regime φ_{q^{-1}, q^a, q^b}(s|c) with a, c <= b. `b = None`
/// means b = ∞ (q^b = 0). Weights are evaluated through ln (q;q)_m.
pub fn q_hahn_inverse_pmf(tab: &mut QTable, a: u64, b: Option<u64>, s: u64, c: u64) -> Result<f64> {
    if let Some(b) = b {
        if a > b || c > b {
            return Err(Error::Params(format!("inverse q-Hahn needs a, c <= b (a={a}, b={b}, c={c})")));
        }
    }
    let lo = c.saturating_sub(a);
    let hi = match b {
        Some(b) => c.min(b - a),
        None => c,
    };
    if s < lo || s > hi {
        return Ok(0.0);
    }
    let eps = -tab.q().ln();
    // q^{as - s(c-s)} [c s]_q ∏(1-q^{b-a-i}) ∏(1-q^{a-i}) / ∏(1-q^{b-i})
    let mut l = -eps * (a as f64 * s as f64 - s as f64 * (c - s) as f64) + tab.ln_qbinom(c, s);
    if let Some(b) = b {
        l += tab.ln_qq(b - a) - tab.ln_qq(b - a - s);
        l -= tab.ln_qq(b) - tab.ln_qq(b - c);
    }
    l += tab.ln_qq(a) - tab.ln_qq(a - (c - s));
    Ok(l.exp())
}

pub fn sample_q_hahn_inverse<R: Rng + ?Sized>(
    tab: &mut QTable,
    a: u64,
    b: Option<u64>,
    c: u64,
    rng: &mut R,
) -> Result<u64> {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let lo = c.saturating_sub(a);
    let hi = match b {
        Some(b) => c.min(b.saturating_sub(a)),
        None => c,
    };
    for s in lo..=hi {
        cum += q_hahn_inverse_pmf(tab, a, b, s, c)?;
        if u < cum || cum >= 1.0 - 1e-15 {
            return Ok(s);
        }
    }
    if cum < 1.0 - 1e-9 {
        return Err(Error::Params(format!("inverse q-Hahn mass {cum} does not reach 1")));
    }
    Ok(hi)
}

/// Weakly decreasing sequence of non-negative integers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition(Vec<i64>);

impl Partition {
    pub fn new(parts: Vec<i64>) -> Result<Self> {
        if parts.iter().any(|&p| p < 0) || parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Params(format!("{parts:?} is not a partition")));
        }
        Ok(Partition(parts))
    }

    pub fn zeros(n: usize) -> Self {
        Partition(vec![0; n])
    }

    /// 1-based part, zero past the stored length.
    pub fn part(&self, i: usize) -> i64 {
        if i == 0 {
            INF
        } else {
            self.0.get(i - 1).copied().unwrap_or(0)
        }
    }

    pub fn parts(&self) -> &[i64] {
        &self.0
    }

    pub fn size(&self) -> i64 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// λ ⪰ μ: λ_i >= μ_i >= λ_{i+1} for all i.
    pub fn interlaces_over(&self, mu: &Partition) -> bool {
        let n = self.len().max(mu.len()) + 1;
        (1..=n).all(|i| self.part(i) >= mu.part(i) && mu.part(i) >= self.part(i + 1))
    }
}

/// (φ_{λ/μ}, ψ_{λ/μ}) as finite products of (q;q)_m.
pub fn phi_psi_weights(lam: &Partition, mu: &Partition, q: f64) -> Result<(f64, f64)> {
    if !lam.interlaces_over(mu) {
        return Err(Error::Params(format!("{:?} does not interlace over {:?}", lam.parts(), mu.parts())));
    }
    let qq = |m: i64| q_pochhammer(q, q, Some(m as u64));
    let n = lam.len().max(mu.len());
    let mut phi = 1.0;
    let mut psi = 1.0;
    for i in 1..=n {
        let (l, l1, m, m1) = (lam.part(i), lam.part(i + 1), mu.part(i), mu.part(i + 1));
        phi *= qq(m - m1)? / (qq(l - m)? * qq(m - l1)?);
        psi *= qq(l - l1)? / (qq(l - m)? * qq(m - l1)?);
    }
    Ok((phi, psi))
}

/// Triangular array λ^{(n)}_k, 1 <= k <= n <= N, stored level by level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterlacingArray {
    levels: usize,
    data: Vec<i64>,
}

/// Flat position of (n, k): n(n-1)/2 + (k-1). Shared by every module.
#[inline]
pub fn flat_index(n: usize, k: usize) -> usize {
    n * (n - 1) / 2 + (k - 1)
}

impl InterlacingArray {
    pub fn packed(levels: usize) -> Self {
        InterlacingArray { levels, data: vec![0; levels * (levels + 1) / 2] }
    }

    /// Build from rows, row n having n entries.
    pub fn from_levels(rows: &[Vec<i64>]) -> Result<Self> {
        let levels = rows.len();
        let mut data = Vec::with_capacity(levels * (levels + 1) / 2);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != i + 1 {
                return Err(Error::Params(format!("level {} has {} entries", i + 1, r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(InterlacingArray { levels, data })
    }

    pub fn from_flat(levels: usize, data: Vec<i64>) -> Result<Self> {
        if data.len() != levels * (levels + 1) / 2 {
            return Err(Error::Params("flat data length does not match level count".into()));
        }
        Ok(InterlacingArray { levels, data })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn as_flat(&self) -> &[i64] {
        &self.data
    }

    pub fn level(&self, n: usize) -> &[i64] {
        let s = flat_index(n, 1);
        &self.data[s..s + n]
    }

    /// Stored entry, 1 <= k <= n <= N.
    #[inline]
    pub fn get(&self, n: usize, k: usize) -> i64 {
        self.data[flat_index(n, k)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, k: usize, v: i64) {
        self.data[flat_index(n, k)] = v;
    }

    /// Convention-aware accessor: +∞ (as [`INF`]) for k <= 0, 0 for k > n
    /// and for level 0.
    #[inline]
    pub fn lam(&self, n: usize, k: isize) -> i64 {
        if k <= 0 {
            INF
        } else if n == 0 || k as usize > n {
            0
        } else {
            self.get(n, k as usize)
        }
    }

    pub fn level_partition(&self, n: usize) -> Partition {
        Partition(self.level(n).to_vec())
    }
}

/// True iff λ^{(n)}_{k+1} <= λ^{(n-1)}_k <= λ^{(n)}_k everywhere and all entries are >= 0.
pub fn validate_interlacing(arr: &InterlacingArray) -> bool {
    if arr.data.iter().any(|&v| v < 0) {
        return false;
    }
    first_violation(arr).is_none()
}

/// First (n, k) at which interlacing fails.
pub fn first_violation(arr: &InterlacingArray) -> Option<(usize, usize)> {
    for n in 2..=arr.levels {
        for k in 1..n {
            let below = arr.get(n - 1, k);
            if !(arr.get(n, k + 1) <= below && below <= arr.get(n, k)) {
                return Some((n, k));
            }
        }
    }
    None
}

/// y-level convention: y = 0 for k <= 0, y = 1 for k > n. λ-level +∞ maps to
/// y = e^{-∞} = 0 and λ = 0 maps to y = 1, so the two tables agree under y = e^{-x}.
pub fn y_convention(n: usize, k: isize) -> Option<f64> {
    if k <= 0 {
        Some(0.0)
    } else if k as usize > n {
        Some(1.0)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Specialization {
    Plancherel { gamma: f64 },
    Alpha { alpha: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub eps: f64,
    pub q: f64,
    pub a: Vec<f64>,
    pub spec: Specialization,
}

impl ModelParams {
    pub fn new(eps: f64, a: Vec<f64>, spec: Specialization) -> Result<Self> {
        ensure_finite("eps", eps)?;
        if eps <= 0.0 {
            return Err(Error::Params(format!("eps must be positive, got {eps}")));
        }
        if a.is_empty() || a.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Params("speeds a must be positive and finite".into()));
        }
        match &spec {
            Specialization::Plancherel { gamma } => {
                if !(*gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::Params(format!("gamma must be positive, got {gamma}")));
                }
            }
            Specialization::Alpha { alpha } => {
                let amax = a.iter().cloned().fold(0.0, f64::max);
                for &al in alpha {
                    if !(al > 0.0) || amax * al >= 1.0 {
                        return Err(Error::Params(format!("alpha {al} inadmissible: need a_i alpha < 1")));
                    }
                }
            }
        }
        Ok(ModelParams { eps, q: (-eps).exp(), a, spec })
    }

    pub fn from_q(q: f64, a: Vec<f64>, spec: Specialization) -> Result<Self> {
        if !(0.0 < q && q < 1.0) {
            return Err(Error::Params(format!("q must lie in (0,1), got {q}")));
        }
        let mut p = Self::new(-q.ln(), a, spec)?;
        p.q = q;
        Ok(p)
    }

    pub fn levels(&self) -> usize {
        self.a.len()
    }

    /// Π(qz)/Π(z) for the specialization.
    pub fn pi_ratio(&self, z: num_complex::Complex64) -> num_complex::Complex64 {
        match &self.spec {
            Specialization::Plancherel { gamma } => (z * (gamma * (self.q - 1.0))).exp(),
            Specialization::Alpha { alpha } => alpha.iter().map(|&al| 1.0 - z * al).product(),
        }
    }

    /// Π(z/q)/Π(z) for the specialization.
    pub fn pi_inverse_ratio(&self, z: num_complex::Complex64) -> num_complex::Complex64 {
        match &self.spec {
            Specialization::Plancherel { gamma } => (z * (gamma * (1.0 / self.q - 1.0))).exp(),
            Specialization::Alpha { alpha } => alpha.iter().map(|&al| 1.0 / (1.0 - z * (al / self.q))).product(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pochhammer_examples() {
        assert_eq!(q_pochhammer(0.7, 0.5, Some(0)).unwrap(), 1.0);
        assert!((q_pochhammer(0.5, 0.5, Some(2)).unwrap() - 0.375).abs() < 1e-16);
        assert_eq!(q_pochhammer(0.0, 0.9, None).unwrap(), 1.0);
        assert!(q_pochhammer(f64::NAN, 0.5, Some(2)).is_err());
        assert!(q_pochhammer(0.5, 1.0, None).is_err());
    }

    #[test]
    fn g_integral_against_simpson() {
        assert_eq!(g_integral(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(g_integral(0.4, 0.0).unwrap(), 0.0);
        assert!(g_integral(1.2, 1.0).is_err());
        let n = 20000;
        let h = 1.0 / n as f64;
        let f = |s: f64| (1.0 - 0.5 * (-s).exp()).ln();
        let mut acc = f(0.0) + f(1.0);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        let oracle = acc * h / 3.0;
        assert!((g_integral(0.5, 1.0).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn g_integral_is_scaling_limit() {
        let (a, b) = (0.6, 1.3);
        let g = g_integral(a, b).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4] {
            let m = (b / eps).floor() as u64;
            let v = eps * (0..m).map(|i| (1.0 - a * (-eps * i as f64).exp()).ln()).sum::<f64>();
            let err = (v - g).abs();
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn q_geometric_limits_and_sum() {
        // q -> 0 gives the geometric law
        for s in 0..5 {
            let p = q_geometric_pmf(1e-12, 0.3, s);
            assert!((p - 0.3f64.powi(s as i32) * 0.7).abs() < 1e-11);
        }
        let tot: f64 = (0..200).map(|s| q_geometric_pmf(0.5, 0.7, s)).sum();
        assert!((tot - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..100).all(|_| sample_q_geometric(0.5, 0.0, &mut rng) == 0));
    }

    #[test]
    fn q_geometric_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let (q, alpha) = (0.6, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 1_000_000;
        let mut counts = vec![0u64; 64];
        for _ in 0..draws {
            let s = sample_q_geometric(q, alpha, &mut rng) as usize;
            counts[s.min(63)] += 1;
        }
        // pool the tail so every bin expects >= 5
        let mut chi = 0.0;
        let mut dof = 0;
        let mut tail_exp = 1.0;
        let mut tail_obs = draws as f64;
        for s in 0..64 {
            let e = q_geometric_pmf(q, alpha, s as u64) * draws as f64;
            if e < 50.0 {
                break;
            }
            chi += (counts[s] as f64 - e).powi(2) / e;
            tail_exp -= e / draws as f64;
            tail_obs -= counts[s] as f64;
            dof += 1;
        }
        let te = tail_exp * draws as f64;
        chi += (tail_obs - te).powi(2) / te;
        let p = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(chi);
        assert!(p > 0.001, "chi2={chi} dof={dof} p={p}");
    }

    #[test]
    fn q_hahn_examples() {
        assert_eq!(q_hahn_pmf(0.5, 0.3, 0.3, 0, Some(4)).unwrap(), 1.0);
        assert_eq!(q_hahn_pmf(0.5, 0.3, 0.3, 2, Some(4)).unwrap(), 0.0);
        let tot: f64 = (0..=3).map(|s| q_hahn_pmf(0.5, 0.4, 0.2, s, Some(3)).unwrap()).sum();
        assert!((tot - 1.0).abs() < 1e-12);
        assert_eq!(q_hahn_pmf(0.5, 0.4, 0.2, 5, Some(3)).unwrap(), 0.0);
        let tot_inf: f64 = (0..200).map(|s| q_hahn_pmf(0.5, 0.4, 0.2, s, None).unwrap()).sum();
        assert!((tot_inf - 1.0).abs() < 1e-12);
        assert!(q_hahn_pmf(0.5, 0.2, 0.9, 1, Some(3)).is_err());
    }

    /// Direct product form of the inverse regime weight.
    fn inverse_pmf_direct(q: f64, a: i64, b: Option<i64>, s: i64, c: i64) -> f64 {
        let qi = 1.0 / q;
        let xi = q.powi(a as i32);
        let eta = b.map(|b| q.powi(b as i32)).unwrap_or(0.0);
        let poch = |x: f64, n: i64| (0..n).map(|i| 1.0 - x * qi.powi(i as i32)).product::<f64>();
        xi.powi(s as i32) * poch(eta / xi, s) * poch(xi, c - s) / poch(eta, c) * poch(qi, c)
            / (poch(qi, s) * poch(qi, c - s))
    }

    #[test]
    fn q_hahn_inverse_matches_direct_products() {
        let q = 0.6;
        let mut tab = QTable::new(q);
        for &(a, b, c) in &[(2u64, Some(5u64), 3u64), (0, Some(3), 2), (3, None, 4), (1, Some(1), 1), (4, Some(6), 6)] {
            let mut tot = 0.0;
            for s in 0..=c {
                let v = q_hahn_inverse_pmf(&mut tab, a, b, s, c).unwrap();
                let d = inverse_pmf_direct(q, a as i64, b.map(|b| b as i64), s as i64, c as i64);
                assert!((v - d).abs() < 1e-12, "a={a} b={b:?} c={c} s={s}: {v} vs {d}");
                tot += v;
            }
            assert!((tot - 1.0).abs() < 1e-12);
        }
        assert!(q_hahn_inverse_pmf(&mut tab, 4, Some(3), 0, 1).is_err());
    }

    #[test]
    fn phi_psi_packed_and_direct() {
        let z = Partition::zeros(3);
        let (phi, psi) = phi_psi_weights(&z, &Partition::zeros(2), 0.4).unwrap();
        assert!((phi - 1.0).abs() < 1e-15 && (psi - 1.0).abs() < 1e-15);
        let lam = Partition::new(vec![4, 2, 1]).unwrap();
        let mu = Partition::new(vec![3, 1]).unwrap();
        let q: f64 = 0.3;
        let inf = |x: f64| q_pochhammer(x, q, None).unwrap();
        let mut phi_d = 1.0;
        let mut psi_d = 1.0;
        for i in 1..=3 {
            let (l, l1, m, m1) = (lam.part(i), lam.part(i + 1), mu.part(i), mu.part(i + 1));
            let p = |e: i64| q.powi(e as i32);
            phi_d *= inf(p(l - m + 1)) * inf(p(m - l1 + 1)) / (inf(q) * inf(p(m - m1 + 1)));
            psi_d *= inf(p(l - m + 1)) * inf(p(m - l1 + 1)) / (inf(q) * inf(p(l - l1 + 1)));
        }
        let (phi, psi) = phi_psi_weights(&lam, &mu, q).unwrap();
        assert!((phi - phi_d).abs() < 1e-13 && (psi - psi_d).abs() < 1e-13);
        let bad = Partition::new(vec![1, 1]).unwrap();
        assert!(phi_psi_weights(&bad, &Partition::new(vec![3]).unwrap(), q).is_err());
    }

    #[test]
    fn interlacing_checks() {
        let p = InterlacingArray::packed(4);
        assert!(validate_interlacing(&p));
        let bad = InterlacingArray::from_levels(&[vec![2], vec![1, 0]]).unwrap();
        assert!(!validate_interlacing(&bad));
        assert_eq!(p.lam(2, 0), INF);
        assert_eq!(p.lam(2, 3), 0);
        assert_eq!(y_convention(3, 0), Some(0.0));
        assert_eq!(y_convention(3, 4), Some(1.0));
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.1, vec![1.0], Specialization::Plancherel { gamma: 1.0 }).is_ok());
        assert!(ModelParams::new(0.1, vec![2.0], Specialization::Alpha { alpha: vec![0.5] }).is_err());
        let p = ModelParams::from_q(0.5, vec![1.0], Specialization::Plancherel { gamma: 1.0 }).unwrap();
        assert_eq!(p.q, 0.5);
        assert!(((-p.eps).exp() - 0.5).abs() < 1e-16);
    }

    proptest! {
        #[test]
        fn pochhammer_splits(a in -2.0f64..0.99, q in 0.05f64..0.95, m in 0u64..12, n in 0u64..12) {
            let lhs = q_pochhammer(a, q, Some(m + n)).unwrap();
            let rhs = q_pochhammer(a, q, Some(m)).unwrap() * q_pochhammer(a * q.powi(m as i32), q, Some(n)).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn q_hahn_sums_to_one(q in 0.1f64..0.9, xi in 0.0f64..0.95, frac in 0.0f64..1.0, c in 0u64..10) {
            let eta = xi * frac;
            let tot: f64 = (0..=c).map(|s| q_hahn_pmf(q, xi, eta, s, Some(c)).unwrap()).sum();
            prop_assert!((tot - 1.0).abs() < 1e-12);
        }

        #[test]
        fn inverse_q_hahn_sums_to_one(q in 0.1f64..0.95, b in 0u64..12, fa in 0.0f64..1.0, fc in 0.0f64..1.0) {
            let a = (fa * b as f64).floor() as u64;
            let c = (fc * b as f64).floor() as u64;
            let mut tab = QTable::new(q);
            let tot: f64 = (0..=c).map(|s| q_hahn_inverse_pmf(&mut tab, a, Some(b), s, c).unwrap()).sum();
            prop_assert!((tot - 1.0).abs() < 1e-12);
        }

        #[test]
        fn q_geometric_sums_to_one(q in 0.05f64..0.95, alpha in 0.01f64..0.9) {
            let tot: f64 = (0..4000).map(|s| q_geometric_pmf(q, alpha, s)).sum();
            prop_assert!((tot - 1.0).abs() < 1e-12);
        }
    }
}
