//! Chordal geometry on the Riemann sphere.
//!
//! Every distance, radius and diameter in this crate is measured with the
//! chordal metric
//!
//! ```text
//! d(p, q) = 2|p - q| / (sqrt(1 + |p|^2) sqrt(1 + |q|^2)),   d(p, inf) = 2 / sqrt(1 + |p|^2)
//! ```
//!
//! which puts the sphere's diameter at 2. The point at infinity is a tagged
//! variant and never a large float.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{LabError, Result};

/// A point of the Riemann sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpherePoint {
    Finite(Complex64),
    Infinity,
}

impl SpherePoint {
    pub const ZERO: SpherePoint = SpherePoint::Finite(Complex64::new(0.0, 0.0));

    pub fn new(re: f64, im: f64) -> Self {
        SpherePoint::Finite(Complex64::new(re, im))
    }

    /// Builds a point from a complex value, mapping non-finite values to infinity.
    pub fn from_complex(z: Complex64) -> Self {
        if z.re.is_finite() && z.im.is_finite() {
            SpherePoint::Finite(z)
        } else {
            SpherePoint::Infinity
        }
    }

    pub fn is_infinity(&self) -> bool {
        matches!(self, SpherePoint::Infinity)
    }

    pub fn finite(&self) -> Option<Complex64> {
        match *self {
            SpherePoint::Finite(z) => Some(z),
            SpherePoint::Infinity => None,
        }
    }

    /// `1/z` on the sphere, with `1/0 = inf` and `1/inf = 0`.
    pub fn reciprocal(&self) -> SpherePoint {
        match *self {
            SpherePoint::Infinity => SpherePoint::ZERO,
            SpherePoint::Finite(z) if z.re == 0.0 && z.im == 0.0 => SpherePoint::Infinity,
            SpherePoint::Finite(z) => SpherePoint::from_complex(cinv(z)),
        }
    }

    /// Homogeneous coordinates `[z : w]` normalised so that the larger entry is 1.
    pub fn homogeneous(&self) -> (Complex64, Complex64) {
        let one = Complex64::new(1.0, 0.0);
        match *self {
            SpherePoint::Infinity => (one, Complex64::new(0.0, 0.0)),
            SpherePoint::Finite(z) if z.norm_sqr() <= 1.0 => (z, one),
            SpherePoint::Finite(z) => (one, cinv(z)),
        }
    }

    /// Inverse of [`SpherePoint::homogeneous`] for an arbitrary nonzero pair.
    pub fn from_homogeneous(a: Complex64, b: Complex64) -> SpherePoint {
        if b.re == 0.0 && b.im == 0.0 {
            return SpherePoint::Infinity;
        }
        SpherePoint::from_complex(cdiv(a, b))
    }
}

impl From<Complex64> for SpherePoint {
    fn from(z: Complex64) -> Self {
        SpherePoint::from_complex(z)
    }
}

impl fmt::Display for SpherePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpherePoint::Infinity => write!(f, "inf"),
            SpherePoint::Finite(z) if z.im >= 0.0 => write!(f, "{}+{}i", z.re, z.im),
            SpherePoint::Finite(z) => write!(f, "{}{}i", z.re, z.im),
        }
    }
}

/// Complex quotient without intermediate overflow (Smith's algorithm).
pub fn cdiv(a: Complex64, b: Complex64) -> Complex64 {
    if b.re.abs() >= b.im.abs() {
        let r = b.im / b.re;
        let den = b.re + b.im * r;
        Complex64::new((a.re + a.im * r) / den, (a.im - a.re * r) / den)
    } else {
        let r = b.re / b.im;
        let den = b.re * r + b.im;
        Complex64::new((a.re * r + a.im) / den, (a.im * r - a.re) / den)
    }
}

/// `1/z` without intermediate overflow.
pub fn cinv(z: Complex64) -> Complex64 {
    cdiv(Complex64::new(1.0, 0.0), z)
}

/// `sqrt(1 + t^2)` without overflow for large `t`.
#[inline]
fn conformal_norm(t: f64) -> f64 {
    1f64.hypot(t)
}

/// Chordal distance between two points of the sphere, in `[0, 2]`.
pub fn chordal_distance(p: SpherePoint, q: SpherePoint) -> f64 {
    match (p, q) {
        (SpherePoint::Infinity, SpherePoint::Infinity) => 0.0,
        (SpherePoint::Infinity, SpherePoint::Finite(z)) | (SpherePoint::Finite(z), SpherePoint::Infinity) => {
            2.0 / conformal_norm(z.norm())
        }
        (SpherePoint::Finite(a), SpherePoint::Finite(b)) => {
            let (na, nb) = (a.norm(), b.norm());
            // d(a, b) = d(1/a, 1/b); use the reciprocal pair when both are large.
            let d = if na > 1.0 && nb > 1.0 {
                let (ia, ib) = (cinv(a), cinv(b));
                2.0 * (ia - ib).norm() / (conformal_norm(ia.norm()) * conformal_norm(ib.norm()))
            } else {
                2.0 * (a - b).norm() / (conformal_norm(na) * conformal_norm(nb))
            };
            d.min(2.0)
        }
    }
}

/// The antipodal point `-1/conj(z)`.
pub fn antipode(p: SpherePoint) -> SpherePoint {
    match p {
        SpherePoint::Infinity => SpherePoint::ZERO,
        SpherePoint::Finite(z) if z.re == 0.0 && z.im == 0.0 => SpherePoint::Infinity,
        SpherePoint::Finite(z) => SpherePoint::from_complex(-cinv(z.conj())),
    }
}

/// Maximal pairwise chordal distance of a finite sample.
pub fn set_diameter(points: &[SpherePoint]) -> Result<f64> {
    if points.is_empty() {
        return Err(LabError::InvalidInput("set_diameter of an empty list".into()));
    }
    let mut best = 0.0f64;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            best = best.max(chordal_distance(*p, *q));
        }
    }
    Ok(best)
}

/// Local scale of the chordal metric at `z`: chordal length of a Euclidean
/// displacement `|dz|` is `|dz| * conformal_factor(z)`.
pub fn conformal_factor(z: Complex64) -> f64 {
    let n = z.norm();
    if n > 1e150 {
        return 2.0 / (n * n);
    }
    2.0 / (1.0 + n * n)
}

/// Open chordal ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereBall {
    pub center: SpherePoint,
    pub radius: f64,
}

impl SphereBall {
    pub fn new(center: SpherePoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius <= 2.0) {
            return Err(LabError::InvalidInput(format!("ball radius {radius} outside (0, 2]")));
        }
        Ok(SphereBall { center, radius })
    }

    pub fn contains(&self, p: SpherePoint) -> bool {
        ball_contains(self, p)
    }
}

pub fn ball_contains(b: &SphereBall, p: SpherePoint) -> bool {
    chordal_distance(b.center, p) < b.radius
}

/// Sphere rotation taking `c` to 0. Isometric for the chordal metric.
pub fn rotation_to_origin(c: SpherePoint) -> impl Fn(SpherePoint) -> SpherePoint {
    move |p| match c {
        SpherePoint::Infinity => p.reciprocal(),
        SpherePoint::Finite(c) => match p {
            SpherePoint::Infinity => {
                if c.norm_sqr() == 0.0 {
                    SpherePoint::Infinity
                } else {
                    SpherePoint::from_complex(cinv(c.conj()))
                }
            }
            SpherePoint::Finite(z) => {
                let den = Complex64::new(1.0, 0.0) + c.conj() * z;
                SpherePoint::from_homogeneous(z - c, den)
            }
        },
    }
}

/// Inverse of [`rotation_to_origin`].
pub fn rotation_from_origin(c: SpherePoint) -> impl Fn(SpherePoint) -> SpherePoint {
    move |p| match c {
        SpherePoint::Infinity => p.reciprocal(),
        SpherePoint::Finite(c) => match p {
            SpherePoint::Infinity => {
                if c.norm_sqr() == 0.0 {
                    SpherePoint::Infinity
                } else {
                    SpherePoint::from_complex(-cinv(c.conj()))
                }
            }
            SpherePoint::Finite(w) => {
                let den = Complex64::new(1.0, 0.0) - c.conj() * w;
                SpherePoint::from_homogeneous(w + c, den)
            }
        },
    }
}

/// The point at chordal distance `s` (< 2) from `c` in direction `theta`.
pub fn point_at_distance(c: SpherePoint, s: f64, theta: f64) -> SpherePoint {
    let s = s.clamp(0.0, 2.0 - 1e-15);
    let t = s / (4.0 - s * s).sqrt();
    let w = SpherePoint::Finite(Complex64::from_polar(t, theta));
    rotation_from_origin(c)(w)
}

/// Coordinate chart used for planar subdivisions: identity near the
/// origin, `z -> 1/z` near infinity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    Identity,
    Inverse,
}

impl Chart {
    /// The chart in which `p` has modulus at most 1.
    pub fn centered_on(p: SpherePoint) -> Chart {
        match p {
            SpherePoint::Finite(z) if z.norm_sqr() <= 1.0 => Chart::Identity,
            _ => Chart::Inverse,
        }
    }

    pub fn to_chart(&self, p: SpherePoint) -> Option<Complex64> {
        match self {
            Chart::Identity => p.finite(),
            Chart::Inverse => p.reciprocal().finite(),
        }
    }

    pub fn to_sphere(&self, u: Complex64) -> SpherePoint {
        match self {
            Chart::Identity => SpherePoint::Finite(u),
            Chart::Inverse => SpherePoint::Finite(u).reciprocal(),
        }
    }
}
