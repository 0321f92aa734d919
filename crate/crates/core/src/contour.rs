//! Quadrature over closed circles, open chords and half-lines, and nested
//! circle families for the moment formulas.

use crate::error::{Error, Result};
use crate::linalg::CompensatedSum;
use crate::special::{gauss_laguerre, gauss_legendre, GaussRule};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

pub const DEFAULT_CIRCLE_NODES: usize = 128;
pub const DEFAULT_ARC_NODES: usize = 201;
const DOUBLING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    Circle {
        center: C64,
        radius: f64,
    },
    Segment {
        from: C64,
        to: C64,
    },
    /// W = center + i·half_height·sin θ, θ ∈ [-π/2, π/2].
    SineArc {
        center: f64,
        half_height: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub shape: Shape,
    pub nodes: usize,
}

impl Contour {
    pub fn circle(center: C64, radius: f64, nodes: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Contour(format!("circle radius must be positive, got {radius}")));
        }
        Self::checked(Shape::Circle { center, radius }, nodes)
    }

    pub fn segment(from: C64, to: C64, nodes: usize) -> Result<Self> {
        if from == to {
            return Err(Error::Contour("degenerate segment".into()));
        }
        Self::checked(Shape::Segment { from, to }, nodes)
    }

    pub fn sine_arc(center: f64, half_height: f64, nodes: usize) -> Result<Self> {
        if !(half_height > 0.0) {
            return Err(Error::Contour(format!("sine-arc half-height must be positive, got {half_height}")));
        }
        Self::checked(Shape::SineArc { center, half_height }, nodes)
    }

    fn checked(shape: Shape, nodes: usize) -> Result<Self> {
        if nodes < 8 {
            return Err(Error::Contour(format!("at least 8 nodes required, got {nodes}")));
        }
        Ok(Contour { shape, nodes })
    }

    pub fn with_nodes(&self, nodes: usize) -> Self {
        Contour { shape: self.shape.clone(), nodes }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.shape, Shape::Circle { .. })
    }

    /// Nodes and weights. For a circle Σ w f(z) approximates (1/2πi)∮ f dz,
    /// for open curves it approximates ∫ f dz.
    pub fn rule(&self) -> Vec<(C64, C64)> {
        match self.shape {
            Shape::Circle { center, radius } => {
                let m = self.nodes as f64;
                (0..self.nodes)
                    .map(|j| {
                        let d = C64::from_polar(radius, 2.0 * PI * j as f64 / m);
                        (center + d, d / m)
                    })
                    .collect()
            }
            Shape::Segment { from, to } => {
                let g = cached_legendre(self.nodes);
                let half = (to - from) * 0.5;
                let mid = (to + from) * 0.5;
                g.nodes.iter().zip(&g.weights).map(|(&x, &w)| (mid + half * x, half * w)).collect()
            }
            Shape::SineArc { center, half_height } => {
                let g = cached_legendre(self.nodes);
                g.nodes
                    .iter()
                    .zip(&g.weights)
                    .map(|(&x, &w)| {
                        let th = FRAC_PI_2 * x;
                        let z = C64::new(center, half_height * th.sin());
                        (z, C64::new(0.0, half_height * th.cos() * w * FRAC_PI_2))
                    })
                    .collect()
            }
        }
    }

    /// Strict interior test for circles; open curves enclose nothing.
    pub fn encloses(&self, z: C64) -> bool {
        match self.shape {
            Shape::Circle { center, radius } => (z - center).norm() < radius,
            _ => false,
        }
    }

    /// Points sampled along the curve, used by the certificate checker.
    pub fn sample(&self, count: usize) -> Vec<C64> {
        match self.shape {
            Shape::Circle { center, radius } => {
                (0..count).map(|j| center + C64::from_polar(radius, 2.0 * PI * j as f64 / count as f64)).collect()
            }
            _ => self.rule().into_iter().map(|(z, _)| z).collect(),
        }
    }
}

fn cached_legendre(n: usize) -> GaussRule {
    static CACHE: OnceLock<std::sync::Mutex<Vec<(usize, GaussRule)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut g = cache.lock().expect("legendre cache poisoned");
    if let Some((_, r)) = g.iter().find(|(m, _)| *m == n) {
        return r.clone();
    }
    let r = gauss_legendre(n);
    g.push((n, r.clone()));
    r
}

fn laguerre(n: usize) -> &'static GaussRule {
    static L64: OnceLock<GaussRule> = OnceLock::new();
    static L128: OnceLock<GaussRule> = OnceLock::new();
    match n {
        64 => L64.get_or_init(|| gauss_laguerre(64)),
        128 => L128.get_or_init(|| gauss_laguerre(128)),
        _ => Box::leak(Box::new(gauss_laguerre(n))),
    }
}

/// Outcome of a closed-contour integration with its convergence record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedQuadrature {
    pub value: C64,
    /// |I(n) - I(2n)| between the last two refinements.
    pub gap: f64,
    pub escalated: bool,
}

fn check_finite(z: C64, at: C64) -> Result<C64> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(z)
    } else {
        Err(Error::Quadrature(format!("non-finite integrand at z = {at}")))
    }
}

/// (1/2πi)∮ f dz on a circle by the trapezoid rule, with node-doubling check and
/// a compensated-sum retry at four times the nodes when the check fails.
pub fn integrate_closed_checked<F: Fn(C64) -> C64>(f: F, c: &Contour) -> Result<ClosedQuadrature> {
    if !c.is_closed() {
        return Err(Error::Contour("integrate_closed needs a circle".into()));
    }
    let fine = c.with_nodes(2 * c.nodes).rule();
    let mut coarse = C64::new(0.0, 0.0);
    let mut all = C64::new(0.0, 0.0);
    for (j, (z, w)) in fine.iter().enumerate() {
        let v = check_finite(f(*z), *z)? * w;
        all += v;
        if j % 2 == 0 {
            coarse += v;
        }
    }
    coarse *= 2.0;
    let gap = (all - coarse).norm();
    if gap <= DOUBLING_TOL * all.norm().max(1.0) {
        return Ok(ClosedQuadrature { value: all, gap, escalated: false });
    }
    let mut acc = CompensatedSum::default();
    for (z, w) in c.with_nodes(4 * c.nodes).rule() {
        acc.add(check_finite(f(z), z)? * w);
    }
    let value = acc.value();
    Ok(ClosedQuadrature { value, gap: (value - all).norm(), escalated: true })
}

pub fn integrate_closed<F: Fn(C64) -> C64>(f: F, c: &Contour) -> Result<C64> {
    integrate_closed_checked(f, c).map(|q| q.value)
}

/// ∫ f dz along an open curve (segment or sine-arc).
pub fn integrate_path<F: Fn(C64) -> C64>(f: F, c: &Contour) -> Result<C64> {
    let mut acc = CompensatedSum::default();
    for (z, w) in c.rule() {
        acc.add(check_finite(f(z), z)? * w);
    }
    Ok(acc.value())
}

pub const MAX_PRODUCT_DIM: usize = 4;

/// Tensor-product trapezoid for (1/2πi)^k ∮…∮ f(z_1..z_k) over circles, one per variable.
pub fn integrate_product<F: Fn(&[C64]) -> C64>(f: F, contours: &[Contour]) -> Result<C64> {
    let k = contours.len();
    if k > MAX_PRODUCT_DIM {
        return Err(Error::Guard(format!("product quadrature limited to {MAX_PRODUCT_DIM} variables, got {k}")));
    }
    if contours.iter().any(|c| !c.is_closed()) {
        return Err(Error::Contour("product quadrature needs circles".into()));
    }
    if k == 0 {
        return Ok(f(&[]));
    }
    let rules: Vec<Vec<(C64, C64)>> = contours.iter().map(|c| c.rule()).collect();
    let mut idx = vec![0usize; k];
    let mut z = vec![C64::new(0.0, 0.0); k];
    let mut acc = CompensatedSum::default();
    loop {
        let mut w = C64::new(1.0, 0.0);
        for d in 0..k {
            let (zz, ww) = rules[d][idx[d]];
            z[d] = zz;
            w *= ww;
        }
        let v = f(&z);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Quadrature(format!("non-finite integrand at {z:?}")));
        }
        acc.add(v * w);
        let mut d = k;
        loop {
            if d == 0 {
                return Ok(acc.value());
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < rules[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// ∫_0^∞ f(x) e^{-rate·x} dx by Gauss–Laguerre after x = u/rate; order 64 is
/// checked against order 128.
pub fn integrate_halfline<F: Fn(f64) -> C64>(f: F, rate: f64) -> Result<C64> {
    integrate_halfline_order(f, rate, 64)
}

pub fn integrate_halfline_order<F: Fn(f64) -> C64>(f: F, rate: f64, order: usize) -> Result<C64> {
    if !(rate > 0.0) {
        return Err(Error::Domain(format!("decay rate must be positive, got {rate}")));
    }
    let eval = |n: usize| -> Result<C64> {
        let g = laguerre(n);
        let mut acc = CompensatedSum::default();
        for (&u, &w) in g.nodes.iter().zip(&g.weights) {
            let v = f(u / rate);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::Quadrature(format!("non-finite integrand at x = {}", u / rate)));
            }
            acc.add(v * w);
        }
        Ok(acc.value() / rate)
    };
    let a = eval(order)?;
    let b = eval(2 * order)?;
    if (a - b).norm() > 1e-8 * b.norm().max(1.0) {
        return Err(Error::Quadrature(format!(
            "half-line quadrature diverges: order {order} gives {a}, order {} gives {b}",
            2 * order
        )));
    }
    Ok(b)
}

/// One claim of a nesting certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "claim", rename_all = "kebab-case")]
pub enum Claim {
    /// Contour `outer` encloses `scale` times contour `inner`.
    ContainsScaled {
        outer: usize,
        inner: usize,
        scale: f64,
    },
    /// Contour `inner` stays clear of `scale` times contour `outer` (no crossing, not enclosed).
    AvoidsScaled {
        contour: usize,
        other: usize,
        scale: f64,
    },
    Contains {
        contour: usize,
        point: f64,
    },
    Excludes {
        contour: usize,
        point: f64,
    },
}

/// Ordered circles (outermost first) with the claims that justify using them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourFamily {
    pub contours: Vec<Contour>,
    pub claims: Vec<Claim>,
}

impl ContourFamily {
    /// Verify every claim by sampling points on the curves.
    pub fn check_certificate(&self) -> Result<()> {
        let samples = 512;
        for claim in &self.claims {
            let ok = match *claim {
                Claim::ContainsScaled { outer, inner, scale } => {
                    let o = &self.contours[outer];
                    self.contours[inner].sample(samples).iter().all(|&z| o.encloses(z * scale))
                }
                Claim::AvoidsScaled { contour, other, scale } => {
                    let c = &self.contours[contour];
                    let pts = self.contours[other].sample(samples);
                    let none_inside = pts.iter().all(|&z| !c.encloses(z * scale));
                    let scaled_center = match self.contours[other].shape {
                        Shape::Circle { center, .. } => center * scale,
                        _ => C64::new(0.0, 0.0),
                    };
                    none_inside && !c.encloses(scaled_center)
                }
                Claim::Contains { contour, point } => self.contours[contour].encloses(C64::new(point, 0.0)),
                Claim::Excludes { contour, point } => !self.contours[contour].encloses(C64::new(point, 0.0)),
            };
            if !ok {
                return Err(Error::Contour(format!("certificate claim fails: {claim:?}")));
            }
        }
        Ok(())
    }

    pub fn radii(&self) -> Vec<f64> {
        self.contours
            .iter()
            .map(|c| match c.shape {
                Shape::Circle { radius, .. } => radius,
                _ => f64::NAN,
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn cluster(a: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || a.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Contour("pole cluster must be non-empty and positive".into()));
    }
    let lo = a.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = a.iter().cloned().fold(0.0, f64::max);
    Ok(((lo + hi) / 2.0, (hi - lo) / 2.0))
}

/// Nested circles around the a-cluster center s with ρ_i = (1-q)s + qρ_{i+1} + margin,
/// innermost radius `inner_radius`; margin 0.05.
pub fn build_nested_circles(q: f64, a: &[f64], levels: usize, inner_radius: f64) -> Result<ContourFamily> {
    build_nested_circles_with(q, a, levels, inner_radius, 0.05, DEFAULT_CIRCLE_NODES)
}

pub fn build_nested_circles_with(
    q: f64,
    a: &[f64],
    levels: usize,
    inner_radius: f64,
    margin: f64,
    nodes: usize,
) -> Result<ContourFamily> {
    if !(0.0 < q && q < 1.0) {
        return Err(Error::Contour(format!("q must lie in (0,1), got {q}")));
    }
    if levels == 0 {
        return Err(Error::Contour("at least one level required".into()));
    }
    let (s, spread) = cluster(a)?;
    if inner_radius <= spread {
        return Err(Error::Contour(format!(
            "inner radius {inner_radius} does not cover the poles (half-spread {spread})"
        )));
    }
    let mut radii = vec![inner_radius; levels];
    for i in (0..levels - 1).rev() {
        radii[i] = (1.0 - q) * s + q * radii[i + 1] + margin;
    }
    if radii[0] >= s {
        return Err(Error::Contour(format!(
            "outermost radius {} reaches 0 (cluster center {s}); nesting and exclusion of 0 are incompatible",
            radii[0]
        )));
    }
    let center = C64::new(s, 0.0);
    let contours = radii.iter().map(|&r| Contour::circle(center, r, nodes)).collect::<Result<Vec<_>>>()?;
    let mut claims = Vec::new();
    for i in 0..levels {
        for j in i + 1..levels {
            claims.push(Claim::ContainsScaled { outer: i, inner: j, scale: q });
        }
        for &p in a {
            claims.push(Claim::Contains { contour: i, point: p });
        }
        claims.push(Claim::Excludes { contour: i, point: 0.0 });
    }
    let fam = ContourFamily { contours, claims };
    fam.check_certificate()?;
    Ok(fam)
}

/// Nested family with the margin chosen so that the slack to 0 equals the
/// nesting slack; this maximizes the trapezoid convergence rate.
pub fn balanced_nested_circles(q: f64, a: &[f64], levels: usize, nodes: usize) -> Result<ContourFamily> {
    let (s, spread) = cluster(a)?;
    if levels == 1 {
        let r = 0.5 * (s + spread);
        let fam = ContourFamily {
            contours: vec![Contour::circle(C64::new(s, 0.0), r, nodes)?],
            claims: a
                .iter()
                .map(|&p| Claim::Contains { contour: 0, point: p })
                .chain(std::iter::once(Claim::Excludes { contour: 0, point: 0.0 }))
                .collect(),
        };
        fam.check_certificate()?;
        return Ok(fam);
    }
    let inner = spread + 0.1 * (s - spread);
    let mut base = inner;
    let mut weight = 0.0;
    for _ in 0..levels - 1 {
        base = (1.0 - q) * s + q * base;
        weight = q * weight + 1.0;
    }
    let margin = (s - base) / (1.0 + weight);
    if margin <= 0.0 {
        return Err(Error::Contour(format!("no admissible nesting for q={q} with {levels} levels")));
    }
    build_nested_circles_with(q, a, levels, inner, margin, nodes)
}

/// A single circle around the cluster such that q^{-1} times it lies outside
/// it (the inverse-moment condition): radius below s(1-q)/(1+q).
pub fn inverse_moment_circle(q: f64, a: &[f64], nodes: usize, levels: usize) -> Result<ContourFamily> {
    let (s, spread) = cluster(a)?;
    let limit = s * (1.0 - q) / (1.0 + q);
    if spread >= limit {
        return Err(Error::Contour(format!("poles spread {spread} exceeds the non-self-nesting bound {limit}")));
    }
    let r = 0.5 * (spread + limit);
    let c = Contour::circle(C64::new(s, 0.0), r, nodes)?;
    let mut claims: Vec<Claim> = a.iter().map(|&p| Claim::Contains { contour: 0, point: p }).collect();
    claims.push(Claim::Excludes { contour: 0, point: 0.0 });
    if levels > 1 {
        claims.push(Claim::AvoidsScaled { contour: 0, other: 0, scale: 1.0 / q });
    }
    let fam = ContourFamily { contours: vec![c; levels.max(1)], claims };
    fam.check_certificate()?;
    Ok(fam)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Contour {
        Contour::circle(C64::new(0.0, 0.0), 1.0, 128).unwrap()
    }

    #[test]
    fn residues() {
        let v = integrate_closed(|z| 1.0 / z, &unit()).unwrap();
        assert!((v - 1.0).norm() < 1e-14);
        let v = integrate_closed(|z| (2.0 * z).exp() / (z * z * z), &unit()).unwrap();
        assert!((v - 2.0).norm() < 1e-12);
        let v = integrate_closed(|z| z.exp() * z.cos(), &unit()).unwrap();
        assert!(v.norm() < 1e-12);
    }

    #[test]
    fn doubling_converges() {
        let f = |z: C64| (z * 0.7).exp() / (z - 0.3);
        let a = integrate_closed(f, &unit().with_nodes(64)).unwrap();
        let b = integrate_closed(f, &unit().with_nodes(128)).unwrap();
        assert!((a - b).norm() < 1e-10);
        assert!((b - (0.21f64).exp()).norm() < 1e-12);
    }

    #[test]
    fn product_is_separable() {
        let c1 = unit();
        let c2 = Contour::circle(C64::new(1.0, 0.0), 0.5, 64).unwrap();
        let f1 = |z: C64| z.exp() / (z * z);
        let f2 = |z: C64| 1.0 / (z - 1.2);
        let p = integrate_product(|z| f1(z[0]) * f2(z[1]), &[c1.clone(), c2.clone()]).unwrap();
        let s = integrate_closed(f1, &c1).unwrap() * integrate_closed(f2, &c2).unwrap();
        assert!((p - s).norm() < 1e-12);
        assert!(integrate_product(|_| C64::new(1.0, 0.0), &vec![c2; 5]).is_err());
    }

    #[test]
    fn poisson_moment_residue() {
        // single residue at z = 1: -1/(z-1) · e^{γ(q-1)z}, sign (-1)^1 and 1/z
        let (q, g) = (0.5, 2.0);
        let c = Contour::circle(C64::new(1.0, 0.0), 0.5, 128).unwrap();
        let v = integrate_closed(|z| -(-1.0 / (z - 1.0)) / z * (z * (g * (q - 1.0))).exp(), &c).unwrap();
        assert!((v.re - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn halfline_moments() {
        let v = integrate_halfline(|_| C64::new(1.0, 0.0), 1.0).unwrap();
        assert!((v.re - 1.0).abs() < 1e-12);
        let v = integrate_halfline(|x| C64::new(x.powi(4), 0.0), 1.0).unwrap();
        assert!((v.re - 24.0).abs() < 1e-10);
        let v = integrate_halfline(|y| C64::new((2.0 - y) * y, 0.0), 1.0).unwrap();
        assert!(v.re.abs() < 1e-12);
        let v = integrate_halfline(|x| C64::new(x, 0.0), 2.0).unwrap();
        assert!((v.re - 0.25).abs() < 1e-12);
        assert!(integrate_halfline(|x| C64::new(x.exp(), 0.0), 1.0).is_err());
    }

    #[test]
    fn nested_circles_example() {
        let fam = build_nested_circles(0.5, &[1.0, 1.0], 2, 0.1).unwrap();
        let r = fam.radii();
        assert!((r[0] - 0.6).abs() < 1e-12 && (r[1] - 0.1).abs() < 1e-12);
        fam.check_certificate().unwrap();
        let one = build_nested_circles(0.5, &[1.0], 1, 0.3).unwrap();
        assert_eq!(one.contours.len(), 1);
        assert!(build_nested_circles(0.5, &[1.0, 1.0], 6, 0.4).is_err());
        let json = fam.to_json().unwrap();
        let back: ContourFamily = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fam);
    }

    #[test]
    fn nesting_near_q_one() {
        for q in [0.9, 0.99, 0.999] {
            let fam = build_nested_circles(q, &[1.0], 3, 0.1).unwrap();
            assert!(fam.radii()[0] < 1.0);
        }
    }

    #[test]
    fn certificate_rejects_false_claims() {
        let mut fam = build_nested_circles(0.5, &[1.0], 2, 0.1).unwrap();
        fam.claims.push(Claim::ContainsScaled { outer: 1, inner: 0, scale: 0.5 });
        assert!(fam.check_certificate().is_err());
    }

    #[test]
    fn sine_arc_kills_endpoint_singularity() {
        // ∫ dW/√((W-Ω)(W-Ω̄)) over the chord from Ω̄ to Ω equals iπ.
        let om = C64::new(0.3, 0.8);
        let c = Contour::sine_arc(om.re, om.im, 201).unwrap();
        let v = integrate_path(|w| 1.0 / ((w - om) * (w - om.conj())).sqrt(), &c).unwrap();
        assert!((v - C64::new(0.0, PI)).norm() < 1e-10, "{v}");
    }

    #[test]
    fn deformation_invariance() {
        let f = |z: C64| (-z).exp() / (z * z * (1.0 - z).powi(3));
        let a = integrate_closed(f, &Contour::circle(C64::new(1.0, 0.0), 0.3, 128).unwrap()).unwrap();
        let b = integrate_closed(f, &Contour::circle(C64::new(1.1, 0.0), 0.6, 128).unwrap()).unwrap();
        assert!((a - b).norm() < 1e-8);
    }
}
