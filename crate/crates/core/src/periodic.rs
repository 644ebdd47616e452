//! Periodic orbits, multipliers and Lyapunov exponents.
//!
//! Period-`n` points are the roots of the homogeneous fixed-point form
//! `H(z, w) = w A_n(z, w) - z B_n(z, w)` of degree `deg^n + 1`. Explicit
//! coefficients of `f^n` overflow long before the periods of interest, so
//! `H` is evaluated pointwise by iterating the lift with rescaling. The
//! sphere is first rotated so that a non-periodic point sits at infinity;
//! every root is then finite and the root count is exact.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::map::{checked_pow, RationalMap};
use crate::roots::{aberth, NewtonStep, RootEquation, SolverOptions};
use crate::sphere::{chordal_distance, Chart, SpherePoint};

/// Largest `deg^n` handed to the root solver by default.
pub const ROOT_DEGREE_CAP: usize = 1 << 14;

/// Half-width of the band around modulus one classified as neutral.
pub const NEUTRAL_BAND: f64 = 1e-6;

/// Chordal tolerance for "f^k fixes this point".
pub const PERIOD_TOL: f64 = 1e-8;

/// Roots this close to infinity are taken to be infinity.
const SNAP_TO_INFINITY: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrbitClass {
    Repelling,
    Attracting,
    Neutral,
}

impl OrbitClass {
    pub fn from_modulus(m: f64) -> Self {
        if m > 1.0 + NEUTRAL_BAND {
            OrbitClass::Repelling
        } else if m < 1.0 - NEUTRAL_BAND {
            OrbitClass::Attracting
        } else {
            OrbitClass::Neutral
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            OrbitClass::Repelling => "repelling",
            OrbitClass::Attracting => "attracting",
            OrbitClass::Neutral => "neutral",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub period: usize,
    pub points: Vec<SpherePoint>,
    /// Derivative of `f^n` at `points[0]`, read in a chart around that point.
    pub multiplier: Complex64,
    /// `(1/n) ln |multiplier|`; `-inf` for superattracting cycles.
    pub chi: f64,
    pub classification: OrbitClass,
    /// Root multiplicity of each orbit point in the period-`n` equation.
    pub multiplicity: usize,
}

impl PeriodicOrbit {
    pub fn multiplier_modulus(&self) -> f64 {
        self.multiplier.norm()
    }

    /// `(1/n) sum ln f#(p_j)` over the cycle; equals `chi` by the chain rule.
    pub fn chi_from_spherical(&self, f: &RationalMap) -> f64 {
        let s: f64 = self.points.iter().map(|&p| f.spherical_derivative(p).ln()).sum();
        s / self.period as f64
    }

    /// Multiplier recomputed starting from `points[j]`.
    pub fn multiplier_at(&self, f: &RationalMap, j: usize) -> Complex64 {
        cycle_multiplier(f, &rotate(&self.points, j))
    }

    pub fn representative(&self) -> SpherePoint {
        self.points[0]
    }
}

fn rotate(points: &[SpherePoint], j: usize) -> Vec<SpherePoint> {
    let n = points.len();
    (0..n).map(|k| points[(j + k) % n]).collect()
}

/// Product of chart derivatives around a cycle; the chart changes telescope.
pub fn cycle_multiplier(f: &RationalMap, points: &[SpherePoint]) -> Complex64 {
    let n = points.len();
    let mut m = ONE;
    for j in 0..n {
        let p = points[j];
        let q = points[(j + 1) % n];
        m *= f.chart_derivative(p, Chart::centered_on(p), Chart::centered_on(q));
    }
    m
}

/// The fixed-point form of `f^n` in rotated coordinates.
struct FixedPointEquation<'a> {
    f: &'a RationalMap,
    n: usize,
    degree: usize,
    /// Rotation taking the chosen non-periodic point to infinity, and its inverse.
    rot: [[Complex64; 2]; 2],
    inv: [[Complex64; 2]; 2],
    guesses: Option<Vec<Complex64>>,
}

impl<'a> FixedPointEquation<'a> {
    fn new(f: &'a RationalMap, n: usize, at_infinity: SpherePoint) -> Self {
        // c is the antipode of the point sent to infinity; it goes to 0.
        let c = match at_infinity {
            SpherePoint::Infinity => ZERO,
            SpherePoint::Finite(q) => -crate::sphere::cinv(q.conj()),
        };
        let s = 1.0 / (1.0 + c.norm_sqr()).sqrt();
        let rot = [[ONE * s, -c * s], [c.conj() * s, ONE * s]];
        let inv = [[ONE * s, c * s], [-c.conj() * s, ONE * s]];
        let degree = checked_pow(f.degree(), n).expect("degree checked by caller") + 1;
        let mut eq = FixedPointEquation { f, n, degree, rot, inv, guesses: None };
        eq.guesses = eq.preimage_guesses();
        eq
    }

    /// Leaves of the depth-`n` preimage tree of a point near the Julia set,
    /// plus the image of infinity. Periodic points of period `n` are
    /// distributed like these leaves.
    fn preimage_guesses(&self) -> Option<Vec<Complex64>> {
        let mut y = SpherePoint::new(0.123, 0.456);
        for _ in 0..40 {
            y = self.f.preimages(y).ok()?.expanded().into_iter().find(|p| !p.is_infinity())?;
        }
        let mut level = vec![y];
        for _ in 0..self.n {
            let mut next = Vec::with_capacity(level.len() * self.f.degree());
            for &p in &level {
                next.extend(self.f.preimages(p).ok()?.expanded());
            }
            level = next;
        }
        let mut out: Vec<Complex64> = level.into_iter().filter_map(|p| self.from_sphere(p)).collect();
        out.push(self.from_sphere(SpherePoint::new(-0.789, 0.0123))?);
        Some(out)
    }

    fn from_sphere(&self, p: SpherePoint) -> Option<Complex64> {
        let (z, w) = p.homogeneous();
        let (a, b) = Self::apply(&self.rot, (z, w));
        SpherePoint::from_homogeneous(a, b).finite()
    }

    fn apply(m: &[[Complex64; 2]; 2], v: (Complex64, Complex64)) -> (Complex64, Complex64) {
        (m[0][0] * v.0 + m[0][1] * v.1, m[1][0] * v.0 + m[1][1] * v.1)
    }

    /// `H` and its derivative in direction `dir` at `(z, w)`, up to a common
    /// positive factor.
    fn eval_form(&self, z: Complex64, w: Complex64, dir: (Complex64, Complex64)) -> (Complex64, Complex64) {
        let mut v = Self::apply(&self.inv, (z, w));
        let mut dv = Self::apply(&self.inv, dir);
        for _ in 0..self.n {
            let (a, b) = self.f.lift(v.0, v.1);
            let nv = (a.value, b.value);
            let ndv = (a.dz * dv.0 + a.dw * dv.1, b.dz * dv.0 + b.dw * dv.1);
            let s = nv.0.norm().max(nv.1.norm());
            let scale = if s > 0.0 && s.is_finite() { (-s.log2().round()).exp2() } else { 1.0 };
            v = (nv.0 * scale, nv.1 * scale);
            dv = (ndv.0 * scale, ndv.1 * scale);
        }
        let (a, b) = Self::apply(&self.rot, v);
        let (da, db) = Self::apply(&self.rot, dv);
        let h = w * a - z * b;
        let dh = dir.1 * a + w * da - dir.0 * b - z * db;
        (h, dh)
    }

    fn to_sphere(&self, u: Complex64) -> SpherePoint {
        let (z, w) = Self::apply(&self.inv, (u, ONE));
        let p = SpherePoint::from_homogeneous(z, w);
        if chordal_distance(p, SpherePoint::Infinity) <= SNAP_TO_INFINITY {
            return SpherePoint::Infinity;
        }
        p
    }
}

impl RootEquation for FixedPointEquation<'_> {
    fn degree(&self) -> usize {
        self.degree
    }

    fn newton(&self, u: Complex64) -> NewtonStep {
        let ratio = if u.norm() <= 1.0 {
            let (h, dh) = self.eval_form(u, ONE, (ONE, ZERO));
            h / dh
        } else {
            // H(u, 1) = u^D H(1, s) and Euler's identity recovers H_z.
            let s = crate::sphere::cinv(u);
            let (h, dhw) = self.eval_form(ONE, s, (ZERO, ONE));
            let dhz = h * self.degree as f64 - s * dhw;
            u * h / dhz
        };
        let residual = if ratio.re.is_finite() && ratio.im.is_finite() {
            ratio.norm() / u.norm().max(1.0)
        } else {
            f64::INFINITY
        };
        NewtonStep { ratio, residual }
    }

    fn initial_radius(&self) -> f64 {
        1.0
    }

    fn initial_guesses(&self) -> Option<Vec<Complex64>> {
        self.guesses.clone()
    }
}

/// Candidate points to rotate to infinity; the one staying farthest from
/// its own forward orbit is used.
fn choose_point_at_infinity(f: &RationalMap, n: usize) -> SpherePoint {
    let candidates = [
        SpherePoint::new(0.37, 0.71),
        SpherePoint::new(-1.13, 0.29),
        SpherePoint::new(0.53, -1.61),
        SpherePoint::new(2.9, 1.7),
        SpherePoint::new(-0.21, -0.43),
        SpherePoint::new(7.3, -4.1),
    ];
    let score = |q: SpherePoint| {
        let mut x = q;
        let mut worst = f64::INFINITY;
        for _ in 0..n {
            x = f.eval(x);
            worst = worst.min(chordal_distance(x, q));
        }
        worst
    };
    let mut best = candidates[0];
    let mut best_score = f64::NEG_INFINITY;
    for q in candidates {
        let s = score(q);
        if s > best_score {
            best = q;
            best_score = s;
        }
    }
    best
}

/// All period-`n` points (including divisor periods) with multiplicities.
pub fn fixed_points_of_iterate(f: &RationalMap, n: usize, cap: usize) -> Result<Vec<(SpherePoint, usize)>> {
    if n == 0 {
        return Err(LabError::InvalidInput("period must be at least 1".into()));
    }
    let degree = checked_pow(f.degree(), n).unwrap_or(usize::MAX);
    if degree > cap {
        return Err(LabError::DegreeCap { degree, cap });
    }
    let q = choose_point_at_infinity(f, n);
    let eq = FixedPointEquation::new(f, n, q);
    let opts = SolverOptions { max_iterations: 1000, ..SolverOptions::default() };
    let res = aberth(&eq, &opts);
    if !res.certified {
        let worst = res.roots.iter().map(|r| r.residual).fold(0.0, f64::max);
        return Err(LabError::NoConvergence(format!(
            "{}: period-{n} points, worst Newton correction {worst:e}",
            f.name()
        )));
    }
    Ok(res
        .roots
        .iter()
        .map(|r| (eq.to_sphere(r.point.finite().unwrap_or(ZERO)), r.multiplicity))
        .collect())
}

fn divisors_below(n: usize) -> Vec<usize> {
    (1..n).filter(|d| n % d == 0).collect()
}

fn has_exact_period(f: &RationalMap, p: SpherePoint, n: usize) -> bool {
    divisors_below(n).into_iter().all(|d| chordal_distance(f.iterate_point(p, d), p) >= PERIOD_TOL)
}

/// All orbits of exact period `n`, with the default solver cap.
pub fn periodic_points(f: &RationalMap, n: usize) -> Result<Vec<PeriodicOrbit>> {
    periodic_points_capped(f, n, ROOT_DEGREE_CAP)
}

pub fn periodic_points_capped(f: &RationalMap, n: usize, cap: usize) -> Result<Vec<PeriodicOrbit>> {
    Ok(orbits_and_count(f, n, cap)?.0)
}

fn orbits_and_count(f: &RationalMap, n: usize, cap: usize) -> Result<(Vec<PeriodicOrbit>, usize)> {
    let roots = fixed_points_of_iterate(f, n, cap)?;
    let count = roots.iter().map(|r| r.1).sum();
    let mut assigned = vec![false; roots.len()];
    let mut orbits = Vec::new();
    for i in 0..roots.len() {
        if assigned[i] {
            continue;
        }
        let (p, mult) = roots[i];
        if !has_exact_period(f, p, n) {
            assigned[i] = true;
            continue;
        }
        let mut points = Vec::with_capacity(n);
        let mut x = p;
        for _ in 0..n {
            // prefer the solved root over the forward image, which accumulates error
            let slot = roots
                .iter()
                .enumerate()
                .filter(|(k, _)| !assigned[*k])
                .map(|(k, r)| (k, chordal_distance(r.0, x)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match slot {
                Some((k, d)) if d < 1e-7 => {
                    assigned[k] = true;
                    points.push(roots[k].0);
                }
                _ => points.push(x),
            }
            x = f.eval(*points.last().unwrap());
        }
        let multiplier = cycle_multiplier(f, &points);
        let modulus = multiplier.norm();
        orbits.push(PeriodicOrbit {
            period: n,
            points,
            multiplier,
            chi: modulus.ln() / n as f64,
            classification: OrbitClass::from_modulus(modulus),
            multiplicity: mult,
        });
    }
    orbits.sort_by(|a, b| a.chi.total_cmp(&b.chi));
    Ok((orbits, count))
}

/// Orbits of every period up to a cap.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicSpectrum {
    pub map: String,
    pub degree: usize,
    pub period_cap: usize,
    pub orbits: BTreeMap<usize, Vec<PeriodicOrbit>>,
    /// Roots of each period-`n` equation, with multiplicity.
    pub root_counts: BTreeMap<usize, usize>,
}

impl PeriodicSpectrum {
    pub fn compute(f: &RationalMap, period_cap: usize) -> Result<Self> {
        Self::compute_capped(f, period_cap, ROOT_DEGREE_CAP)
    }

    pub fn compute_capped(f: &RationalMap, period_cap: usize, cap: usize) -> Result<Self> {
        if period_cap == 0 {
            return Err(LabError::InvalidInput("period cap must be at least 1".into()));
        }
        let mut orbits = BTreeMap::new();
        let mut root_counts = BTreeMap::new();
        for n in 1..=period_cap {
            let (o, count) = orbits_and_count(f, n, cap)?;
            orbits.insert(n, o);
            root_counts.insert(n, count);
        }
        Ok(PeriodicSpectrum { map: f.name().to_string(), degree: f.degree(), period_cap, orbits, root_counts })
    }

    pub fn all(&self) -> impl Iterator<Item = &PeriodicOrbit> {
        self.orbits.values().flatten()
    }

    pub fn repelling(&self) -> impl Iterator<Item = &PeriodicOrbit> {
        self.all().filter(|o| o.classification == OrbitClass::Repelling)
    }

    pub fn neutral(&self) -> impl Iterator<Item = &PeriodicOrbit> {
        self.all().filter(|o| o.classification == OrbitClass::Neutral)
    }

    /// Number of period-`n` points counted with multiplicity, divisor periods included.
    pub fn point_count(&self, n: usize) -> usize {
        self.root_counts.get(&n).copied().unwrap_or(0)
    }

    pub fn chi_per(&self) -> ChiPerEstimate {
        let mut per_period_min = BTreeMap::new();
        for (&n, orbits) in &self.orbits {
            let m = orbits
                .iter()
                .filter(|o| o.classification == OrbitClass::Repelling)
                .map(|o| o.chi)
                .fold(f64::INFINITY, f64::min);
            if m.is_finite() {
                per_period_min.insert(n, m);
            }
        }
        let chi_per_hat = per_period_min.values().copied().fold(f64::INFINITY, f64::min);
        ChiPerEstimate {
            per_period_min,
            chi_per_hat,
            period_cap: self.period_cap,
            neutral_found: self.neutral().next().is_some(),
        }
    }

    /// Whether every repelling orbit satisfies `|multiplier| >= lambda^n`,
    /// with the orbit of smallest exponent.
    pub fn uhp_check(&self, lambda: f64) -> Result<(bool, PeriodicOrbit)> {
        if !(lambda > 1.0) {
            return Err(LabError::InvalidInput(format!("lambda must exceed 1, got {lambda}")));
        }
        let worst = self
            .repelling()
            .min_by(|a, b| a.chi.total_cmp(&b.chi))
            .cloned()
            .ok_or_else(|| LabError::InvalidInput(format!("{}: no repelling orbit up to the cap", self.map)))?;
        let holds = self.repelling().all(|o| o.chi >= lambda.ln());
        Ok((holds, worst))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| LabError::io(path.display().to_string(), e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| LabError::io(path.display().to_string(), e);
        writeln!(w, "period,orbit_id,chi,abs_multiplier,classification,representative_re,representative_im").map_err(io)?;
        for (&n, orbits) in &self.orbits {
            for (id, o) in orbits.iter().enumerate() {
                let (re, im) = match o.representative() {
                    SpherePoint::Finite(z) => (format!("{:.17e}", z.re), format!("{:.17e}", z.im)),
                    SpherePoint::Infinity => ("inf".to_string(), "inf".to_string()),
                };
                writeln!(
                    w,
                    "{n},{id},{:.17e},{:.17e},{},{re},{im}",
                    o.chi,
                    o.multiplier_modulus(),
                    o.classification.as_str()
                )
                .map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChiPerEstimate {
    pub per_period_min: BTreeMap<usize, f64>,
    /// Minimum over the computed periods: an upper bound for the true
    /// infimum, which may be smaller at higher periods.
    pub chi_per_hat: f64,
    pub period_cap: usize,
    pub neutral_found: bool,
}

pub fn chi_per(f: &RationalMap, period_cap: usize) -> Result<ChiPerEstimate> {
    Ok(PeriodicSpectrum::compute(f, period_cap)?.chi_per())
}

pub fn uhp_check(f: &RationalMap, period_cap: usize, lambda: f64) -> Result<(bool, PeriodicOrbit)> {
    PeriodicSpectrum::compute(f, period_cap)?.uhp_check(lambda)
}

/// Smallest chi_per_hat accepted as positive.
pub const CHI_FLOOR: f64 = 1e-9;

/// `ln deg / chi_per_hat`, the exponent the lower mass bound can reach.
pub fn optimal_alpha_from(degree: usize, est: &ChiPerEstimate) -> Result<f64> {
    if !(est.chi_per_hat > CHI_FLOOR) {
        return Err(LabError::Unbounded(format!(
            "optimal alpha unbounded (non-TCE signature): chi_per_hat = {}",
            est.chi_per_hat
        )));
    }
    Ok((degree as f64).ln() / est.chi_per_hat)
}

pub fn optimal_alpha(f: &RationalMap, period_cap: usize) -> Result<f64> {
    optimal_alpha_from(f.degree(), &chi_per(f, period_cap)?)
}
