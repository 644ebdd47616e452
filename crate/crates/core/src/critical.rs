//! Critical points and the heuristic test for membership in the Julia set.
//!
//! A critical point is declared outside `J(f)` when its orbit escapes (for
//! polynomials), lands on or converges to a non-repelling cycle; otherwise
//! it is declared in `J(f)`. Per-map annotations override the test.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::map::RationalMap;
use crate::periodic::{cycle_multiplier, periodic_points, OrbitClass};
use crate::sphere::{chordal_distance, SpherePoint};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct JuliaFlagOptions {
    pub horizon: usize,
    /// Chordal distance at which `f^k(x) = f^(k-p)(x)` is taken as a cycle.
    pub cycle_tol: f64,
    /// Longest cycle searched for along the orbit.
    pub max_cycle: usize,
    /// Landing on a neutral cycle within this many steps counts as preperiodic.
    pub landing_steps: usize,
    /// Radius around non-repelling cycles taken as their basin near the end of the orbit.
    pub capture_radius: f64,
}

impl Default for JuliaFlagOptions {
    fn default() -> Self {
        JuliaFlagOptions { horizon: 10_000, cycle_tol: 1e-9, max_cycle: 8, landing_steps: 100, capture_radius: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CriticalFate {
    Escapes { step: usize },
    LandsOnCycle { step: usize, period: usize, class: OrbitClass },
    ConvergesToCycle { period: usize, class: OrbitClass, distance: f64 },
    Undetermined,
    Annotated,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub point: SpherePoint,
    /// Multiplicity plus one.
    pub local_degree: usize,
    pub in_julia: bool,
    pub fate: CriticalFate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalSet {
    pub points: Vec<CriticalPoint>,
}

fn sort_key(p: &SpherePoint) -> (u8, f64, f64) {
    match p {
        SpherePoint::Finite(z) => (0, z.re, z.im),
        SpherePoint::Infinity => (1, 0.0, 0.0),
    }
}

impl CriticalSet {
    pub fn compute(f: &RationalMap, opts: &JuliaFlagOptions) -> Result<Self> {
        let mut raw = f.critical_points_raw()?;
        raw.sort_by(|a, b| {
            let (ka, kb) = (sort_key(&a.0), sort_key(&b.0));
            ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.total_cmp(&kb.2))
        });
        let attractors = non_repelling_cycles(f)?;
        let points = raw
            .into_iter()
            .map(|(point, local_degree)| {
                let fate = classify_orbit(f, point, opts, &attractors);
                let in_julia = matches!(
                    fate,
                    CriticalFate::Undetermined
                        | CriticalFate::LandsOnCycle { class: OrbitClass::Repelling, .. }
                ) || matches!(fate, CriticalFate::LandsOnCycle { step, class: OrbitClass::Neutral, .. } if step <= opts.landing_steps);
                CriticalPoint { point, local_degree, in_julia, fate }
            })
            .collect();
        Ok(CriticalSet { points })
    }

    /// Replaces the heuristic flags: exactly the listed indices are in `J(f)`.
    pub fn with_annotations(mut self, in_julia: &[usize]) -> Result<Self> {
        if let Some(&bad) = in_julia.iter().find(|&&i| i >= self.points.len()) {
            return Err(LabError::InvalidInput(format!(
                "critical point index {bad} out of range ({} critical points)",
                self.points.len()
            )));
        }
        for (i, c) in self.points.iter_mut().enumerate() {
            c.in_julia = in_julia.contains(&i);
            c.fate = CriticalFate::Annotated;
        }
        Ok(self)
    }

    pub fn count_with_multiplicity(&self) -> usize {
        self.points.iter().map(|c| c.local_degree - 1).sum()
    }

    pub fn in_julia(&self) -> impl Iterator<Item = &CriticalPoint> {
        self.points.iter().filter(|c| c.in_julia)
    }

    /// Largest local degree at a critical point in `J(f)`; 1 when there is none.
    pub fn ell_max(&self) -> usize {
        self.in_julia().map(|c| c.local_degree).max().unwrap_or(1)
    }

    /// Whether some critical point in `J(f)` is mapped onto one within `steps` iterates.
    pub fn has_critical_connections(&self, f: &RationalMap, steps: usize, tol: f64) -> bool {
        let targets: Vec<SpherePoint> = self.in_julia().map(|c| c.point).collect();
        targets.iter().any(|&c| {
            let mut x = c;
            (0..steps).any(|_| {
                x = f.eval(x);
                targets.iter().any(|&t| chordal_distance(x, t) < tol)
            })
        })
    }

    /// `max_n ell_max(f^n)`: equal to `ell_max` without critical connections,
    /// otherwise the general bound `2^(2 deg - 2)`.
    pub fn ell_max_hat(&self, f: &RationalMap) -> usize {
        if self.has_critical_connections(f, 64, 1e-9) {
            1usize << (2 * f.degree() - 2).min(usize::BITS as usize - 1)
        } else {
            self.ell_max()
        }
    }
}

pub fn critical_points(f: &RationalMap) -> Result<CriticalSet> {
    CriticalSet::compute(f, &JuliaFlagOptions::default())
}

/// Points of the neutral cycles of period at most 4 (degree permitting).
pub fn neutral_cycles(f: &RationalMap) -> Result<Vec<Vec<SpherePoint>>> {
    Ok(non_repelling_cycles(f)?.into_iter().filter(|c| c.class == OrbitClass::Neutral).map(|c| c.points).collect())
}

/// Dynamically distinguished points of `J(f)`: critical points flagged in
/// `J(f)` with their first iterates, and neutral cycle points.
pub fn landmarks(f: &RationalMap, set: &CriticalSet) -> Result<Vec<SpherePoint>> {
    let mut out: Vec<SpherePoint> = Vec::new();
    let push = |p: SpherePoint, out: &mut Vec<SpherePoint>| {
        if !out.iter().any(|&q| chordal_distance(p, q) < 1e-9) {
            out.push(p);
        }
    };
    for c in set.in_julia() {
        for p in f.orbit(c.point, 3) {
            push(p, &mut out);
        }
    }
    for cyc in neutral_cycles(f)? {
        for p in cyc {
            push(p, &mut out);
        }
    }
    Ok(out)
}

struct Cycle {
    points: Vec<SpherePoint>,
    class: OrbitClass,
}

fn non_repelling_cycles(f: &RationalMap) -> Result<Vec<Cycle>> {
    let mut out = Vec::new();
    let mut n = 1;
    // short periods only: enough for every basin the corpus exhibits
    while n <= 4 && crate::map::checked_pow(f.degree(), n).is_some_and(|d| d <= 256) {
        for o in periodic_points(f, n)? {
            if o.classification != OrbitClass::Repelling {
                out.push(Cycle { points: o.points, class: o.classification });
            }
        }
        n += 1;
    }
    Ok(out)
}

fn classify_orbit(f: &RationalMap, c: SpherePoint, opts: &JuliaFlagOptions, attractors: &[Cycle]) -> CriticalFate {
    let escape = f.escape_radius();
    let mut orbit = Vec::with_capacity(opts.max_cycle + 1);
    let mut x = c;
    orbit.push(x);
    for step in 1..=opts.horizon {
        x = f.eval(x);
        if let (Some(r), SpherePoint::Finite(z)) = (escape, x) {
            if z.norm() > r {
                return CriticalFate::Escapes { step };
            }
        }
        for p in 1..=opts.max_cycle.min(orbit.len()) {
            let earlier = orbit[orbit.len() - p];
            if chordal_distance(x, earlier) < opts.cycle_tol {
                let cycle: Vec<SpherePoint> = orbit[orbit.len() - p..].to_vec();
                let class = OrbitClass::from_modulus(cycle_multiplier(f, &cycle).norm());
                return CriticalFate::LandsOnCycle { step, period: p, class };
            }
        }
        if orbit.len() > opts.max_cycle {
            orbit.remove(0);
        }
        orbit.push(x);
    }
    // slow convergence (parabolic basins) never meets the cycle tolerance
    let mut best: Option<(usize, OrbitClass, f64)> = None;
    for cyc in attractors {
        let d = cyc.points.iter().map(|&p| chordal_distance(x, p)).fold(f64::INFINITY, f64::min);
        if d < opts.capture_radius && best.as_ref().is_none_or(|b| d < b.2) {
            best = Some((cyc.points.len(), cyc.class, d));
        }
    }
    match best {
        Some((period, class, distance)) => {
            // still approaching after a further stretch of the orbit
            let later = f.iterate_point(x, 100 * period);
            let d_later = attractors
                .iter()
                .filter(|c| c.points.len() == period)
                .flat_map(|c| c.points.iter())
                .map(|&p| chordal_distance(later, p))
                .fold(f64::INFINITY, f64::min);
            if d_later <= distance {
                CriticalFate::ConvergesToCycle { period, class, distance }
            } else {
                CriticalFate::Undetermined
            }
        }
        None => CriticalFate::Undetermined,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn quad(re: f64, im: f64) -> RationalMap {
        RationalMap::unicritical("q", 2, Complex64::new(re, im)).unwrap()
    }

    fn flags(f: &RationalMap) -> Vec<(SpherePoint, bool)> {
        critical_points(f).unwrap().points.iter().map(|c| (c.point, c.in_julia)).collect()
    }

    #[test]
    fn corpus_flags() {
        assert_eq!(flags(&quad(0.0, 0.0)), vec![(SpherePoint::ZERO, false), (SpherePoint::Infinity, false)]);
        assert_eq!(flags(&quad(-2.0, 0.0))[0], (SpherePoint::ZERO, true));
        assert_eq!(flags(&quad(0.0, 1.0))[0], (SpherePoint::ZERO, true));
        assert_eq!(flags(&quad(-1.0, 0.0))[0], (SpherePoint::ZERO, false));
        assert_eq!(flags(&quad(0.25, 0.0))[0], (SpherePoint::ZERO, false));
        let r = RationalMap::new(
            "r",
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0)],
            vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        )
        .unwrap();
        let set = critical_points(&r).unwrap();
        assert_eq!(set.points.len(), 2);
        assert!(set.points.iter().all(|c| !c.in_julia));
    }

    #[test]
    fn riemann_hurwitz_and_ell_max() {
        let f = quad(0.0, 1.0);
        let set = critical_points(&f).unwrap();
        assert_eq!(set.count_with_multiplicity(), 2);
        assert_eq!(set.ell_max(), 2);
        assert!(!set.has_critical_connections(&f, 64, 1e-9));
        assert_eq!(set.ell_max_hat(&f), 2);
        let g = quad(0.0, 0.0);
        assert_eq!(critical_points(&g).unwrap().ell_max(), 1);
    }

    #[test]
    fn annotations_override() {
        let f = quad(0.25, 0.0);
        let set = critical_points(&f).unwrap().with_annotations(&[0]).unwrap();
        assert!(set.points[0].in_julia);
        assert!(!set.points[1].in_julia);
        assert!(critical_points(&f).unwrap().with_annotations(&[5]).is_err());
    }
}
