//! Rational maps of the sphere in homogeneous coordinates.
//!
//! A map of degree `d` is stored as two coefficient lists padded to length
//! `d + 1`; the homogeneous lift is `F(z, w) = (A(z, w), B(z, w))` with
//! `A(z, w) = sum a_k z^k w^(d-k)`. Evaluating through the lift makes poles
//! and the point at infinity ordinary points.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::roots::{solve_polynomial, Poly, PolyRootResult, Root};
use crate::sphere::{chordal_distance, Chart, SpherePoint};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Default cap on the degree of explicitly composed iterates.
pub const ITERATE_DEGREE_CAP: usize = 1 << 14;

/// Minimum chordal separation between numerator and denominator roots.
pub const COMMON_ROOT_TOL: f64 = 1e-8;

/// Value and first partials of a homogeneous polynomial.
#[derive(Clone, Copy, Debug)]
pub struct HomogeneousJet {
    pub value: Complex64,
    pub dz: Complex64,
    pub dw: Complex64,
}

/// Evaluates `sum c_k z^k w^(d-k)` and its partials at an arbitrary pair.
pub fn eval_homogeneous(coeffs: &[Complex64], z: Complex64, w: Complex64) -> HomogeneousJet {
    let d = coeffs.len() - 1;
    let df = d as f64;
    if z.norm_sqr() <= w.norm_sqr() {
        let t = z / w;
        let (mut p, mut dp) = (ZERO, ZERO);
        for &c in coeffs.iter().rev() {
            dp = dp * t + p;
            p = p * t + c;
        }
        let wd1 = powi(w, d as i32 - 1);
        HomogeneousJet { value: wd1 * w * p, dz: wd1 * dp, dw: wd1 * (p * df - t * dp) }
    } else {
        let s = w / z;
        let (mut q, mut dq) = (ZERO, ZERO);
        for &c in coeffs.iter() {
            dq = dq * s + q;
            q = q * s + c;
        }
        let zd1 = powi(z, d as i32 - 1);
        HomogeneousJet { value: zd1 * z * q, dz: zd1 * (q * df - s * dq), dw: zd1 * dq }
    }
}

fn powi(z: Complex64, n: i32) -> Complex64 {
    if n <= 0 {
        return ONE;
    }
    z.powu(n as u32)
}

/// A rational map of degree at least two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalMap {
    name: String,
    /// Padded to `degree + 1` entries.
    num: Vec<Complex64>,
    den: Vec<Complex64>,
    degree: usize,
}

fn trim(mut v: Vec<Complex64>) -> Vec<Complex64> {
    while v.len() > 1 && v.last().is_some_and(|c| c.norm_sqr() == 0.0) {
        v.pop();
    }
    v
}

impl RationalMap {
    /// Validates and builds a map from ascending numerator/denominator coefficients.
    pub fn new(name: impl Into<String>, numerator: Vec<Complex64>, denominator: Vec<Complex64>) -> Result<Self> {
        let name = name.into();
        Self::build(name, numerator, denominator, true)
    }

    fn build(name: String, numerator: Vec<Complex64>, denominator: Vec<Complex64>, check_roots: bool) -> Result<Self> {
        let finite = |v: &[Complex64]| v.iter().all(|c| c.re.is_finite() && c.im.is_finite());
        if !finite(&numerator) || !finite(&denominator) {
            return Err(LabError::DegenerateMap(format!("{name}: non-finite coefficient")));
        }
        let num = trim(numerator);
        let den = trim(denominator);
        if num.is_empty() || den.is_empty() || den.iter().all(|c| c.norm_sqr() == 0.0) {
            return Err(LabError::DegenerateMap(format!("{name}: zero denominator")));
        }
        if num.iter().all(|c| c.norm_sqr() == 0.0) {
            return Err(LabError::DegenerateMap(format!("{name}: constant map")));
        }
        let degree = (num.len() - 1).max(den.len() - 1);
        if check_roots && num.len() > 1 && den.len() > 1 {
            let rn = solve_polynomial(&num)?;
            let rd = solve_polynomial(&den)?;
            for a in &rn.roots {
                for b in &rd.roots {
                    if chordal_distance(a.point, b.point) <= COMMON_ROOT_TOL {
                        return Err(LabError::DegenerateMap(format!(
                            "{name}: numerator and denominator share the root {}",
                            a.point
                        )));
                    }
                }
            }
        }
        if degree < 2 {
            return Err(LabError::DegenerateMap(format!("{name}: degree {degree} < 2, need degree at least two")));
        }
        let mut num = num;
        let mut den = den;
        num.resize(degree + 1, ZERO);
        den.resize(degree + 1, ZERO);
        Ok(RationalMap { name, num, den, degree })
    }

    /// `z^d + c`.
    pub fn unicritical(name: impl Into<String>, d: usize, c: Complex64) -> Result<Self> {
        let mut num = vec![ZERO; d + 1];
        num[0] = c;
        num[d] = ONE;
        Self::new(name, num, vec![ONE])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn numerator(&self) -> &[Complex64] {
        &self.num
    }

    pub fn denominator(&self) -> &[Complex64] {
        &self.den
    }

    /// True when the denominator is a nonzero constant.
    pub fn is_polynomial(&self) -> bool {
        self.den[1..].iter().all(|c| c.norm_sqr() == 0.0)
    }

    /// Image of the homogeneous pair `(z, w)` with all partials.
    pub fn lift(&self, z: Complex64, w: Complex64) -> (HomogeneousJet, HomogeneousJet) {
        (eval_homogeneous(&self.num, z, w), eval_homogeneous(&self.den, z, w))
    }

    pub fn eval(&self, p: SpherePoint) -> SpherePoint {
        let (z, w) = p.homogeneous();
        let (a, b) = self.lift(z, w);
        SpherePoint::from_homogeneous(a.value, b.value)
    }

    /// Value and spherical derivative `|f'(z)| (1 + |z|^2) / (1 + |f(z)|^2)`.
    pub fn eval_with_derivative(&self, p: SpherePoint) -> (SpherePoint, f64) {
        let (z, w) = p.homogeneous();
        let (a, b) = self.lift(z, w);
        let jac = a.dz * b.dw - a.dw * b.dz;
        let num = jac.norm() * (z.norm_sqr() + w.norm_sqr());
        let den = self.degree as f64 * (a.value.norm_sqr() + b.value.norm_sqr());
        (SpherePoint::from_homogeneous(a.value, b.value), num / den)
    }

    pub fn spherical_derivative(&self, p: SpherePoint) -> f64 {
        self.eval_with_derivative(p).1
    }

    /// Complex derivative of `f` read in the given input and output charts.
    pub fn chart_derivative(&self, p: SpherePoint, input: Chart, output: Chart) -> Complex64 {
        let u = input.to_chart(p).unwrap_or(ZERO);
        let (z, w) = match input {
            Chart::Identity => (u, ONE),
            Chart::Inverse => (ONE, u),
        };
        let (a, b) = self.lift(z, w);
        let (au, bu) = match input {
            Chart::Identity => (a.dz, b.dz),
            Chart::Inverse => (a.dw, b.dw),
        };
        match output {
            Chart::Identity => (au * b.value - a.value * bu) / (b.value * b.value),
            Chart::Inverse => (bu * a.value - b.value * au) / (a.value * a.value),
        }
    }

    /// Forward orbit `p, f(p), ..., f^n(p)`.
    pub fn orbit(&self, p: SpherePoint, n: usize) -> Vec<SpherePoint> {
        let mut out = Vec::with_capacity(n + 1);
        let mut x = p;
        out.push(x);
        for _ in 0..n {
            x = self.eval(x);
            out.push(x);
        }
        out
    }

    /// `f^n(p)` and the spherical derivative of `f^n` at `p`.
    pub fn iterate_with_derivative(&self, p: SpherePoint, n: usize) -> (SpherePoint, f64) {
        let mut x = p;
        let mut deriv = 1.0;
        for _ in 0..n {
            let (y, d) = self.eval_with_derivative(x);
            deriv *= d;
            x = y;
        }
        (x, deriv)
    }

    pub fn iterate_point(&self, p: SpherePoint, n: usize) -> SpherePoint {
        (0..n).fold(p, |x, _| self.eval(x))
    }

    /// Dehomogenised Wronskian `A'B - AB'` (ascending coefficients).
    fn wronskian(&self) -> Poly {
        let a = Poly::new(self.num.clone());
        let b = Poly::new(self.den.clone());
        let da = a.derivative();
        let db = b.derivative();
        let lhs = poly_mul(da.coeffs(), b.coeffs());
        let rhs = poly_mul(a.coeffs(), db.coeffs());
        let n = lhs.len().max(rhs.len());
        let mut out = vec![ZERO; n];
        for (i, c) in lhs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in rhs.iter().enumerate() {
            out[i] -= c;
        }
        Poly::new(trim_relative(out, 1e-14))
    }

    /// Critical points with local degrees, without Julia-set flags.
    pub fn critical_points_raw(&self) -> Result<Vec<(SpherePoint, usize)>> {
        let w = self.wronskian();
        let total = 2 * self.degree - 2;
        let mut out = Vec::new();
        if w.degree() >= 1 {
            let roots = solve_polynomial(w.coeffs())?;
            if !roots.certified {
                return Err(LabError::NoConvergence(format!("{}: critical points", self.name)));
            }
            for r in roots.roots {
                out.push((r.point, r.multiplicity + 1));
            }
        }
        let at_inf = total.saturating_sub(w.degree());
        if at_inf > 0 {
            out.push((SpherePoint::Infinity, at_inf + 1));
        }
        Ok(out)
    }

    /// All solutions of `f(z) = y`, with multiplicity.
    pub fn preimages(&self, y: SpherePoint) -> Result<PolyRootResult> {
        let coeffs: Vec<Complex64> = match y {
            SpherePoint::Infinity => self.den.clone(),
            SpherePoint::Finite(v) => self.num.iter().zip(&self.den).map(|(a, b)| a - v * b).collect(),
        };
        let coeffs = trim_relative(coeffs, 1e-15);
        let finite_degree = coeffs.len() - 1;
        let at_inf = self.degree - finite_degree;
        let mut result = if finite_degree >= 1 {
            solve_polynomial(&coeffs)?
        } else {
            PolyRootResult { roots: Vec::new(), certified: true, iterations: 0 }
        };
        if at_inf > 0 {
            result.roots.push(Root { point: SpherePoint::Infinity, multiplicity: at_inf, residual: 0.0 });
        }
        Ok(result)
    }

    /// Preimages of `y` repeated by multiplicity, in a deterministic order.
    /// Quadratic maps use the closed form; other degrees go through [`Self::preimages`].
    pub fn preimage_list(&self, y: SpherePoint) -> Result<Vec<SpherePoint>> {
        if self.degree == 2 {
            let (s, t) = y.homogeneous();
            let c: Vec<Complex64> = self.num.iter().zip(&self.den).map(|(a, b)| t * a - s * b).collect();
            let scale = c.iter().map(|x| x.norm()).fold(0.0, f64::max);
            if c[2].norm() > 1e-12 * scale {
                return Ok(quadratic_roots(c[0], c[1], c[2]).map(SpherePoint::from_complex).to_vec());
            }
        }
        let res = self.preimages(y)?;
        if !res.certified {
            return Err(LabError::NoConvergence(format!("{}: preimages of {y}", self.name)));
        }
        Ok(res.expanded())
    }

    /// `self ∘ g`, normalised so the larger leading coefficient has modulus one.
    pub fn compose(&self, g: &RationalMap) -> Result<RationalMap> {
        let d = self.degree;
        let e = g.degree;
        let mut pa = vec![vec![ONE]];
        let mut pb = vec![vec![ONE]];
        for k in 1..=d {
            pa.push(poly_mul(&pa[k - 1], &g.num));
            pb.push(poly_mul(&pb[k - 1], &g.den));
        }
        let mut num = vec![ZERO; d * e + 1];
        let mut den = vec![ZERO; d * e + 1];
        for k in 0..=d {
            let term = poly_mul(&pa[k], &pb[d - k]);
            for (i, t) in term.iter().enumerate() {
                num[i] += self.num[k] * t;
                den[i] += self.den[k] * t;
            }
        }
        let lead = num[d * e].norm().max(den[d * e].norm());
        if !(lead > 0.0 && lead.is_finite()) {
            return Err(LabError::Unbounded(format!("{}: coefficient overflow in composition", self.name)));
        }
        for c in num.iter_mut().chain(den.iter_mut()) {
            *c /= lead;
        }
        if num.iter().chain(den.iter()).any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(LabError::Unbounded(format!("{}: coefficient overflow in composition", self.name)));
        }
        // Homogeneous composition keeps degree d*e exactly; no common factors appear.
        Ok(RationalMap { name: format!("{}∘{}", self.name, g.name), num, den, degree: d * e })
    }

    /// Explicit coefficients of `f^n`.
    pub fn iterate(&self, n: usize) -> Result<RationalMap> {
        self.iterate_capped(n, ITERATE_DEGREE_CAP)
    }

    pub fn iterate_capped(&self, n: usize, cap: usize) -> Result<RationalMap> {
        if n == 0 {
            return Err(LabError::InvalidInput("iterate needs n >= 1".into()));
        }
        let degree = checked_pow(self.degree, n).unwrap_or(usize::MAX);
        if degree > cap {
            return Err(LabError::DegreeCap { degree, cap });
        }
        let mut acc = self.clone();
        for _ in 1..n {
            acc = self.compose(&acc)?;
        }
        Ok(acc.with_name(format!("{}^{}", self.name, n)))
    }

    /// Escape radius `R` with `|f(z)| >= 2|z|` for `|z| >= R` (polynomials only).
    pub fn escape_radius(&self) -> Option<f64> {
        if !self.is_polynomial() {
            return None;
        }
        let b0 = self.den[0];
        let lead = (self.num[self.degree] / b0).norm();
        let rest: f64 = self.num[..self.degree].iter().map(|c| (c / b0).norm()).sum();
        Some(((rest + 2.0) / lead).max(1.0))
    }
}

pub(crate) fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

pub(crate) fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x.norm_sqr() == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Drops leading coefficients below `rel` times the largest magnitude.
/// Roots of `c2 z^2 + c1 z + c0`, avoiding cancellation.
fn quadratic_roots(c0: Complex64, c1: Complex64, c2: Complex64) -> [Complex64; 2] {
    let disc = (c1 * c1 - 4.0 * c2 * c0).sqrt();
    let q = if (c1.conj() * disc).re >= 0.0 { -0.5 * (c1 + disc) } else { -0.5 * (c1 - disc) };
    if q.norm_sqr() == 0.0 {
        return [ZERO, ZERO];
    }
    [q / c2, c0 / q]
}

fn trim_relative(mut v: Vec<Complex64>, rel: f64) -> Vec<Complex64> {
    let scale = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    while v.len() > 1 && v.last().is_some_and(|c| c.norm() <= rel * scale) {
        v.pop();
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::chordal_distance;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn inv_minus_z() -> RationalMap {
        RationalMap::new("1/z - z", vec![c(1.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap()
    }

    #[test]
    fn evaluation_examples() {
        let sq = RationalMap::unicritical("z^2", 2, c(0.0, 0.0)).unwrap();
        assert_eq!(sq.eval(SpherePoint::Infinity), SpherePoint::Infinity);
        assert_eq!(inv_minus_z().eval(SpherePoint::ZERO), SpherePoint::Infinity);
        let f = RationalMap::unicritical("z^2+i", 2, c(0.0, 1.0)).unwrap();
        assert_eq!(f.eval(SpherePoint::ZERO), SpherePoint::new(0.0, 1.0));
        // 1/z - z fixes infinity
        assert_eq!(inv_minus_z().eval(SpherePoint::Infinity), SpherePoint::Infinity);
    }

    #[test]
    fn quadratic_preimages_map_back() {
        let f = inv_minus_z();
        let g = RationalMap::unicritical("z^2-2", 2, c(-2.0, 0.0)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let y = SpherePoint::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            for h in [&f, &g] {
                let pre = h.preimage_list(y).unwrap();
                assert_eq!(pre.len(), 2);
                for x in pre {
                    assert!(chordal_distance(h.eval(x), y) < 1e-10);
                }
            }
        }
        assert_eq!(f.preimage_list(SpherePoint::Infinity).unwrap().len(), 2);
        assert_eq!(g.preimage_list(SpherePoint::Infinity).unwrap(), vec![SpherePoint::Infinity; 2]);
        assert_eq!(g.preimage_list(SpherePoint::new(-2.0, 0.0)).unwrap(), vec![SpherePoint::ZERO; 2]);
    }

    #[test]
    fn spherical_derivative_examples() {
        let sq = RationalMap::unicritical("z^2", 2, c(0.0, 0.0)).unwrap();
        for k in 0..12 {
            let p = SpherePoint::Finite(Complex64::from_polar(1.0, k as f64 * 0.5));
            assert!((sq.spherical_derivative(p) - 2.0).abs() < 1e-14);
        }
        assert_eq!(sq.spherical_derivative(SpherePoint::ZERO), 0.0);
        assert_eq!(sq.spherical_derivative(SpherePoint::Infinity), 0.0);
        let para = RationalMap::unicritical("z^2+1/4", 2, c(0.25, 0.0)).unwrap();
        assert!((para.spherical_derivative(SpherePoint::new(0.5, 0.0)) - 1.0).abs() < 1e-15);
        // 1/z - z at infinity: g(w) = w/(w^2 - 1), |g'(0)| = 1
        assert!((inv_minus_z().spherical_derivative(SpherePoint::Infinity) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spherical_derivative_matches_finite_differences() {
        let f = inv_minus_z();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let z = c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let h = 1e-6;
            let fz = f.eval(SpherePoint::Finite(z));
            let fzh = f.eval(SpherePoint::Finite(z + h));
            let numeric = chordal_distance(fz, fzh) / chordal_distance(SpherePoint::Finite(z), SpherePoint::Finite(z + h));
            let exact = f.spherical_derivative(SpherePoint::Finite(z));
            assert!((numeric - exact).abs() < 1e-4 * exact.max(1.0), "{z}: {numeric} vs {exact}");
        }
    }

    #[test]
    fn critical_point_examples() {
        let sq = RationalMap::unicritical("z^2", 2, c(0.0, 0.0)).unwrap();
        let crit = sq.critical_points_raw().unwrap();
        assert_eq!(crit.len(), 2);
        assert!(crit.contains(&(SpherePoint::ZERO, 2)));
        assert!(crit.contains(&(SpherePoint::Infinity, 2)));

        let crit = inv_minus_z().critical_points_raw().unwrap();
        assert_eq!(crit.len(), 2);
        for target in [c(0.0, 1.0), c(0.0, -1.0)] {
            assert!(crit.iter().any(|(p, l)| *l == 2 && (p.finite().unwrap() - target).norm() < 1e-14));
        }
    }

    #[test]
    fn riemann_hurwitz_count() {
        let maps = [
            RationalMap::unicritical("z^3+c", 3, c(0.2, 0.1)).unwrap(),
            inv_minus_z(),
            RationalMap::new("rat", vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)], vec![c(0.5, 0.0), c(1.0, 1.0)]).unwrap(),
        ];
        for f in maps {
            let total: usize = f.critical_points_raw().unwrap().iter().map(|(_, l)| l - 1).sum();
            assert_eq!(total, 2 * f.degree() - 2, "{}", f.name());
        }
    }

    #[test]
    fn preimage_examples() {
        let sq = RationalMap::unicritical("z^2", 2, c(0.0, 0.0)).unwrap();
        let r = sq.preimages(SpherePoint::new(1.0, 0.0)).unwrap();
        let pts = r.expanded();
        assert_eq!(pts.len(), 2);
        assert!(pts.iter().any(|p| chordal_distance(*p, SpherePoint::new(1.0, 0.0)) < 1e-15));
        assert!(pts.iter().any(|p| chordal_distance(*p, SpherePoint::new(-1.0, 0.0)) < 1e-15));

        let r = sq.preimages(SpherePoint::ZERO).unwrap();
        assert_eq!(r.roots.len(), 1);
        assert_eq!(r.roots[0].multiplicity, 2);
        assert_eq!(r.roots[0].point, SpherePoint::ZERO);

        let f = RationalMap::unicritical("z^2-2", 2, c(-2.0, 0.0)).unwrap();
        let pts = f.preimages(SpherePoint::new(2.0, 0.0)).unwrap().expanded();
        assert!(pts.iter().any(|p| chordal_distance(*p, SpherePoint::new(2.0, 0.0)) < 1e-15));
        assert!(pts.iter().any(|p| chordal_distance(*p, SpherePoint::new(-2.0, 0.0)) < 1e-15));

        let at_inf = sq.preimages(SpherePoint::Infinity).unwrap();
        assert_eq!(at_inf.roots.len(), 1);
        assert_eq!(at_inf.roots[0].point, SpherePoint::Infinity);
        assert_eq!(at_inf.roots[0].multiplicity, 2);
    }

    #[test]
    fn iterate_examples() {
        let sq = RationalMap::unicritical("z^2", 2, c(0.0, 0.0)).unwrap();
        let f3 = sq.iterate(3).unwrap();
        assert_eq!(f3.degree(), 8);
        assert_eq!(f3.numerator()[8], c(1.0, 0.0));
        assert!(f3.numerator()[..8].iter().all(|x| x.norm() == 0.0));

        let para = RationalMap::unicritical("z^2+1/4", 2, c(0.25, 0.0)).unwrap();
        let f2 = para.iterate(2).unwrap();
        let expect = [c(5.0 / 16.0, 0.0), c(0.0, 0.0), c(0.5, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        for (a, b) in f2.numerator().iter().zip(expect) {
            assert!((a - b).norm() < 1e-15);
        }

        let g = inv_minus_z();
        let g2 = g.iterate(2).unwrap();
        assert_eq!(g2.degree(), 4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let p = SpherePoint::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            assert!(chordal_distance(g2.eval(p), g.eval(g.eval(p))) < 1e-12);
        }
        assert!(matches!(sq.iterate(15), Err(LabError::DegreeCap { .. })));
    }

    #[test]
    fn construction_rejects_bad_maps() {
        let deg1 = RationalMap::new("deg1", vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0)]);
        assert!(matches!(deg1, Err(LabError::DegenerateMap(_))));
        // (z^2 - 1)/(z - 1) shares the root 1
        let common = RationalMap::new("common", vec![c(-1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], vec![c(-1.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(common, Err(LabError::DegenerateMap(m)) if m.contains("share")));
    }

    #[test]
    fn escape_radius_is_escaping() {
        for cst in [c(0.0, 0.0), c(-2.0, 0.0), c(0.25, 0.0), c(0.0, 1.0)] {
            let f = RationalMap::unicritical("q", 2, cst).unwrap();
            let r = f.escape_radius().unwrap();
            for k in 0..16 {
                let z = Complex64::from_polar(r * 1.0001, k as f64 * 0.4);
                let fz = f.eval(SpherePoint::Finite(z)).finite().unwrap();
                assert!(fz.norm() >= 2.0 * z.norm() * 0.999);
            }
        }
    }
}
