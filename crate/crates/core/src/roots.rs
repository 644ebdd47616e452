//! Simultaneous polynomial root refinement (Aberth–Ehrlich).
//!
//! The solver only needs the Newton ratio `p(z)/p'(z)` at each approximation,
//! so the same refinement loop serves explicit coefficient polynomials and
//! implicitly defined ones such as `f^n(z) - z` evaluated by iteration.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::sphere::{cdiv, cinv, SpherePoint};

/// One Newton evaluation of an equation at a point.
#[derive(Clone, Copy, Debug)]
pub struct NewtonStep {
    /// `p(z) / p'(z)`.
    pub ratio: Complex64,
    /// Scale-free residual (backward error for coefficient polynomials).
    pub residual: f64,
}

/// An equation with a known finite number of roots in the plane.
pub trait RootEquation: Sync {
    fn degree(&self) -> usize;
    fn newton(&self, z: Complex64) -> NewtonStep;
    /// Radius of the circle of initial guesses.
    fn initial_radius(&self) -> f64;
    fn initial_center(&self) -> Complex64 {
        Complex64::new(0.0, 0.0)
    }
    /// Problem-specific starting points; used when there are exactly
    /// `degree()` of them, all distinct and finite.
    fn initial_guesses(&self) -> Option<Vec<Complex64>> {
        None
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Root {
    pub point: SpherePoint,
    pub multiplicity: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyRootResult {
    pub roots: Vec<Root>,
    pub certified: bool,
    pub iterations: usize,
}

impl PolyRootResult {
    pub fn count_with_multiplicity(&self) -> usize {
        self.roots.iter().map(|r| r.multiplicity).sum()
    }

    /// Roots repeated according to multiplicity.
    pub fn expanded(&self) -> Vec<SpherePoint> {
        self.roots
            .iter()
            .flat_map(|r| std::iter::repeat(r.point).take(r.multiplicity))
            .collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Backward-error threshold used for certification.
    pub certify_tol: f64,
    /// Relative distance under which approximations are merged into one root.
    pub cluster_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iterations: 500, certify_tol: 1e-9, cluster_tol: 1e-12 }
    }
}

/// Dense polynomial with ascending coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    coeffs: Vec<Complex64>,
}

impl Poly {
    /// Trailing zero coefficients are trimmed.
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.norm_sqr() == 0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Complex64::new(0.0, 0.0));
        }
        Poly { coeffs }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() == 1 {
            return Poly::new(vec![Complex64::new(0.0, 0.0)]);
        }
        Poly::new(self.coeffs.iter().enumerate().skip(1).map(|(k, &c)| c * k as f64).collect())
    }

    /// Cauchy's bound: the positive root of `|a_n| x^n = sum_{k<n} |a_k| x^k`.
    pub fn cauchy_bound(&self) -> f64 {
        let n = self.degree();
        if n == 0 {
            return 0.0;
        }
        let lead = self.coeffs[n].norm();
        let rest: Vec<f64> = self.coeffs[..n].iter().map(|c| c.norm() / lead).collect();
        if rest.iter().all(|&a| a == 0.0) {
            return 0.0;
        }
        let g = |x: f64| {
            // x^n - sum a_k x^k, scaled by x^-n
            let mut s = 1.0;
            for (k, a) in rest.iter().enumerate().filter(|(_, a)| **a > 0.0) {
                s -= a * x.powi(k as i32 - n as i32);
            }
            s
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while g(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if mid <= 0.0 || g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

impl RootEquation for Poly {
    fn degree(&self) -> usize {
        Poly::degree(self)
    }

    fn newton(&self, z: Complex64) -> NewtonStep {
        let n = self.degree();
        let zero = Complex64::new(0.0, 0.0);
        if z.norm() <= 1.0 {
            let (mut p, mut dp, mut scale) = (zero, zero, 0.0);
            let az = z.norm();
            for &c in self.coeffs.iter().rev() {
                dp = dp * z + p;
                p = p * z + c;
                scale = scale * az + c.norm();
            }
            NewtonStep { ratio: p / dp, residual: p.norm() / scale.max(f64::MIN_POSITIVE) }
        } else {
            // p(z) = z^n q(1/z) with q the reversed polynomial
            let w = crate::sphere::cinv(z);
            let aw = w.norm();
            let (mut q, mut dq, mut scale) = (zero, zero, 0.0);
            for &c in self.coeffs.iter() {
                dq = dq * w + q;
                q = q * w + c;
                scale = scale * aw + c.norm();
            }
            let den = q * n as f64 - w * dq;
            NewtonStep { ratio: z * q / den, residual: q.norm() / scale.max(f64::MIN_POSITIVE) }
        }
    }

    fn initial_radius(&self) -> f64 {
        self.cauchy_bound().max(1e-3)
    }
}

fn solve_linear(p: &Poly) -> PolyRootResult {
    let c = p.coeffs();
    let z = -c[0] / c[1];
    PolyRootResult {
        roots: vec![Root { point: SpherePoint::from_complex(z), multiplicity: 1, residual: 0.0 }],
        certified: true,
        iterations: 0,
    }
}

fn solve_quadratic(p: &Poly, opts: &SolverOptions) -> PolyRootResult {
    let c = p.coeffs();
    let (a, b, c0) = (c[2], c[1], c[0]);
    let disc = (b * b - a * c0 * 4.0).sqrt();
    // pick the sign that avoids cancellation
    let s = if (b.conj() * disc).re >= 0.0 { disc } else { -disc };
    let q = -(b + s) * 0.5;
    let zero = Complex64::new(0.0, 0.0);
    let (z1, z2) = if q == zero {
        (zero, zero)
    } else {
        (q / a, c0 / q)
    };
    let res1 = p.newton(z1).residual;
    let res2 = p.newton(z2).residual;
    let scale = z1.norm().max(z2.norm()).max(1.0);
    let roots = if (z1 - z2).norm() <= opts.cluster_tol * scale {
        vec![Root { point: SpherePoint::from_complex((z1 + z2) * 0.5), multiplicity: 2, residual: res1.max(res2) }]
    } else {
        vec![
            Root { point: SpherePoint::from_complex(z1), multiplicity: 1, residual: res1 },
            Root { point: SpherePoint::from_complex(z2), multiplicity: 1, residual: res2 },
        ]
    };
    let certified = res1 <= opts.certify_tol && res2 <= opts.certify_tol;
    PolyRootResult { roots, certified, iterations: 0 }
}

/// All roots of a coefficient polynomial (ascending order).
pub fn solve_polynomial(coeffs: &[Complex64]) -> Result<PolyRootResult> {
    solve_polynomial_with(coeffs, &SolverOptions::default())
}

pub fn solve_polynomial_with(coeffs: &[Complex64], opts: &SolverOptions) -> Result<PolyRootResult> {
    let p = Poly::new(coeffs.to_vec());
    if p.degree() == 0 {
        return Err(LabError::InvalidInput("polynomial of degree 0 has no roots to solve".into()));
    }
    if p.coeffs().iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(LabError::InvalidInput("non-finite coefficient".into()));
    }
    Ok(match p.degree() {
        1 => solve_linear(&p),
        2 => solve_quadratic(&p, opts),
        _ => aberth(&p, opts),
    })
}

/// Aberth–Ehrlich refinement of all roots of `eq`, with clustering of
/// multiple roots and Newton polishing of the simple ones. Deterministic.
pub fn aberth<E: RootEquation + ?Sized>(eq: &E, opts: &SolverOptions) -> PolyRootResult {
    let n = eq.degree();
    if n == 0 {
        return PolyRootResult { roots: Vec::new(), certified: true, iterations: 0 };
    }
    let radius = eq.initial_radius();
    let center = eq.initial_center();
    let tau = std::f64::consts::TAU;
    let custom = eq.initial_guesses().filter(|g| {
        g.len() == n && g.iter().all(|z| z.re.is_finite() && z.im.is_finite()) && {
            let mut v = g.clone();
            v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            v.windows(2).all(|w| w[0] != w[1])
        }
    });
    let mut z: Vec<Complex64> = custom.unwrap_or_else(|| (0..n)
        .map(|k| {
            // golden-ratio jitter breaks the rotational symmetry of z^n - c
            let jitter = (k as f64 * 0.618_033_988_749_895).fract();
            let angle = tau * (k as f64 + 0.3 * jitter) / n as f64 + 0.4;
            center + Complex64::from_polar(radius * (1.0 + 0.05 * jitter), angle)
        })
        .collect());
    let mut done = vec![false; n];
    let mut residual = vec![f64::INFINITY; n];
    let mut last_step = vec![f64::INFINITY; n];
    let mut iterations = 0;
    let floor = 4.0 * f64::EPSILON * n as f64;
    let eps = f64::EPSILON;

    while iterations < opts.max_iterations && done.iter().any(|d| !d) {
        iterations += 1;
        let snapshot = z.clone();
        let updates: Vec<Option<(Complex64, f64, bool, f64)>> = {
            use rayon::prelude::*;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    if done[i] {
                        return None;
                    }
                    let zi = snapshot[i];
                    let step = eq.newton(zi);
                    if step.residual <= floor {
                        return Some((zi, step.residual, true, 0.0));
                    }
                    let mut ratio = step.ratio;
                    if !(ratio.re.is_finite() && ratio.im.is_finite()) {
                        // p' vanished: nudge off the critical point
                        ratio = Complex64::new(1e-8 * (1.0 + zi.norm()), 1e-8);
                    }
                    let mut s = Complex64::new(0.0, 0.0);
                    for (j, &zj) in snapshot.iter().enumerate() {
                        if j != i {
                            let d = zi - zj;
                            if d.norm_sqr() > 0.0 {
                                s += cinv(d);
                            }
                        }
                    }
                    let den = Complex64::new(1.0, 0.0) - ratio * s;
                    let w = if den.norm_sqr() > 0.0 { ratio / den } else { ratio };
                    let next = zi - w;
                    let size = w.norm();
                    // stop once the corrections no longer shrink at rounding level
                    let converged = size <= 2.0 * eps * next.norm().max(1.0)
                        || (size > 0.9 * last_step[i] && step.residual <= 1e-12);
                    Some((next, step.residual, converged, size))
                })
                .collect()
        };
        for (i, u) in updates.into_iter().enumerate() {
            if let Some((next, res, conv, size)) = u {
                if next.re.is_finite() && next.im.is_finite() {
                    z[i] = next;
                }
                residual[i] = res;
                last_step[i] = size;
                done[i] = conv;
            }
        }
    }

    finish(eq, z, opts, iterations)
}

const LOOSE_CLUSTER_TOL: f64 = 1e-3;

/// Whether Newton started slightly off `a` in the direction of `b` snaps
/// back to `a`, as it does for a simple root. Approximations of one
/// multiple root drift apart at the rounding scale and fail this.
fn resolved_apart<E: RootEquation + ?Sized>(eq: &E, a: Complex64, b: Complex64, nearest: f64) -> bool {
    let d = (b - a).norm();
    let delta = (b - a) * (0.01 * nearest.min(d) / d);
    let t = a + delta;
    let step = eq.newton(t).ratio;
    if !(step.re.is_finite() && step.im.is_finite()) {
        return false;
    }
    (t - step - a).norm() <= 0.5 * delta.norm()
}

fn finish<E: RootEquation + ?Sized>(eq: &E, z: Vec<Complex64>, opts: &SolverOptions, iterations: usize) -> PolyRootResult {
    let n = z.len();
    // cluster approximations of multiple roots
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut i = i;
        while parent[i] != r {
            let next = parent[i];
            parent[i] = r;
            i = next;
        }
        r
    }
    let nearest: Vec<f64> = {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .map(|i| {
                z.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, w)| (w - z[i]).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| z[a].re.total_cmp(&z[b].re));
    for (oi, &i) in order.iter().enumerate() {
        let window = LOOSE_CLUSTER_TOL.max(opts.cluster_tol) * z[i].norm().max(1.0);
        for &j in &order[oi + 1..] {
            if z[j].re - z[i].re > window * 2.0 {
                break;
            }
            let scale = z[i].norm().max(z[j].norm()).max(1.0);
            let d = (z[i] - z[j]).norm();
            let close = d <= opts.cluster_tol * scale
                || (d <= LOOSE_CLUSTER_TOL * scale
                    && (!resolved_apart(eq, z[i], z[j], nearest[i]) || !resolved_apart(eq, z[j], z[i], nearest[j])));
            if close {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut roots = Vec::with_capacity(groups.len());
    let mut certified = true;
    for (_, members) in groups {
        let k = members.len();
        let mut value = members.iter().map(|&i| z[i]).sum::<Complex64>() / k as f64;
        let mut res = eq.newton(value).residual;
        if k == 1 {
            for _ in 0..4 {
                let step = eq.newton(value);
                if !(step.ratio.re.is_finite() && step.ratio.im.is_finite()) {
                    break;
                }
                let cand = value - step.ratio;
                let cand_res = eq.newton(cand).residual;
                if cand_res <= step.residual {
                    value = cand;
                    res = cand_res;
                }
                if step.ratio.norm() <= eps_rel(value) {
                    break;
                }
            }
        }
        if k > 1 {
            // the Newton correction is rounding noise at a multiple root
            if let Some((c, uncertainty)) = cluster_center(eq, value, k, &z, &members) {
                value = c;
                res = uncertainty;
            }
        }
        if !(res <= opts.certify_tol) {
            certified = false;
        }
        roots.push(Root { point: SpherePoint::from_complex(value), multiplicity: k, residual: res });
    }
    PolyRootResult { roots, certified, iterations }
}

/// Mean of the roots inside a small circle around a cluster, from the
/// argument-principle integrals of z p'/p and p'/p, with an error bound.
fn cluster_center<E: RootEquation + ?Sized>(
    eq: &E,
    guess: Complex64,
    k: usize,
    z: &[Complex64],
    members: &[usize],
) -> Option<(Complex64, f64)> {
    let spread = members.iter().map(|&i| (z[i] - guess).norm()).fold(0.0, f64::max);
    let nearest = z
        .iter()
        .enumerate()
        .filter(|(i, _)| !members.contains(i))
        .map(|(_, w)| (w - guess).norm())
        .fold(f64::INFINITY, f64::min);
    let scale = guess.norm().max(1.0);
    let rho = (1e-4 * scale).max(100.0 * spread).min(0.25 * nearest);
    if !(rho > 10.0 * spread) || !rho.is_finite() {
        return None;
    }
    const M: usize = 64;
    let mut count = Complex64::new(0.0, 0.0);
    let mut moment = Complex64::new(0.0, 0.0);
    for j in 0..M {
        let u = Complex64::from_polar(1.0, std::f64::consts::TAU * j as f64 / M as f64);
        let p = guess + u * rho;
        let ratio = eq.newton(p).ratio;
        if !(ratio.re.is_finite() && ratio.im.is_finite()) || ratio.norm() == 0.0 {
            return None;
        }
        // dz = i rho u dtheta, so (1/2 pi i) * integral = mean over nodes of rho u / ratio
        let g = cdiv(u * rho, ratio);
        count += g;
        moment += g * (p - guess);
    }
    count /= M as f64;
    moment /= M as f64;
    if (count.re - k as f64).abs() > 0.01 || count.im.abs() > 0.01 {
        return None;
    }
    let center = guess + moment / k as f64;
    // a miscount of the enclosed roots moves the mean by at most rho times it
    let uncertainty = (count - k as f64).norm() * rho / center.norm().max(1.0);
    Some((center, uncertainty))
}

fn eps_rel(z: Complex64) -> f64 {
    f64::EPSILON * z.norm().max(1.0)
}
