//! Scale statistics of an empirical measure: ball-mass curves, doubling
//! ratios, mass exponents and inverse doubling.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::measure::EmpiricalMeasure;
use crate::rng::stream_rng;
use crate::sphere::{SphereBall, SpherePoint};

/// Atoms required in the smaller ball of a doubling ratio.
pub const DOUBLING_RESOLUTION: usize = 200;
/// Atoms required for a mass to enter an exponent fit.
pub const EXPONENT_RESOLUTION: usize = 50;
pub const DOUBLING_CEILING: f64 = 1e3;

/// `n` radii, geometrically spaced from `r_min` to `r_max` inclusive.
pub fn geometric_radii(r_min: f64, r_max: f64, n: usize) -> Result<Vec<f64>> {
    check_range(r_min, r_max)?;
    if n == 0 {
        return Err(LabError::InvalidInput("need at least one radius".into()));
    }
    if n == 1 {
        return Ok(vec![r_min]);
    }
    let q = (r_max / r_min).ln() / (n - 1) as f64;
    Ok((0..n).map(|k| if k + 1 == n { r_max } else { r_min * (q * k as f64).exp() }).collect())
}

/// Radii from `r_min` up to `r_max` with ratio `sqrt 2`.
pub fn sqrt2_radii(r_min: f64, r_max: f64) -> Result<Vec<f64>> {
    check_range(r_min, r_max)?;
    let n = ((r_max / r_min).ln() / std::f64::consts::LN_2 * 2.0).floor() as usize + 1;
    geometric_radii(r_min, r_max, n.max(2))
}

fn check_range(r_min: f64, r_max: f64) -> Result<()> {
    if !(r_min > 0.0 && r_min < r_max && r_max <= 2.0) {
        return Err(LabError::InvalidInput(format!("radius range [{r_min}, {r_max}] must satisfy 0 < r_min < r_max <= 2")));
    }
    Ok(())
}

fn ball(center: SpherePoint, r: f64) -> SphereBall {
    SphereBall { center, radius: r.min(2.0) }
}

/// Centers drawn from the atoms of `mu` with a stream of its seed.
pub fn atom_centers(mu: &EmpiricalMeasure, count: usize, stream: u64) -> Vec<SpherePoint> {
    if mu.is_empty() {
        return Vec::new();
    }
    let mut rng = stream_rng(mu.provenance.seed, stream);
    (0..count).map(|_| mu.atoms()[rng.gen_range(0..mu.len())]).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallMassCurve {
    pub center: SpherePoint,
    pub radii: Vec<f64>,
    pub masses: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub atom_counts: Vec<usize>,
}

pub fn ball_mass_curve(mu: &EmpiricalMeasure, center: SpherePoint, radii: &[f64]) -> BallMassCurve {
    let mut masses = Vec::with_capacity(radii.len());
    let mut standard_errors = Vec::with_capacity(radii.len());
    let mut atom_counts = Vec::with_capacity(radii.len());
    for &r in radii {
        let b = ball(center, r);
        let (m, se) = mu.ball_mass(&b);
        masses.push(m);
        standard_errors.push(se);
        atom_counts.push(mu.ball_count(&b).atoms);
    }
    BallMassCurve { center, radii: radii.to_vec(), masses, standard_errors, atom_counts }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoublingVerdict {
    DoublingConsistent,
    DoublingViolated,
    Inconclusive,
}

impl DoublingVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            DoublingVerdict::DoublingConsistent => "doubling-consistent",
            DoublingVerdict::DoublingViolated => "doubling-violated",
            DoublingVerdict::Inconclusive => "inconclusive",
        }
    }
}

/// Doubling ratios along one center as the radius shrinks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioCurve {
    pub center: SpherePoint,
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Atoms in the smaller ball.
    pub counts: Vec<usize>,
    /// Least-squares slope of `ln ratio` against `ln r`.
    pub slope: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoublingOptions {
    pub ceiling: f64,
    pub resolution: usize,
    /// Smaller-ball count needed for a point of a growth curve.
    pub witness_floor: usize,
    /// Consecutive increases of the ratio, as the radius shrinks, that make a growth witness.
    pub growth_steps: usize,
    /// Ratio a growth run must reach; `sqrt(ceiling)` by default.
    pub growth_threshold: f64,
    /// Centers added to the sampled ones.
    pub extra_centers: Vec<SpherePoint>,
}

impl Default for DoublingOptions {
    fn default() -> Self {
        DoublingOptions {
            ceiling: DOUBLING_CEILING,
            resolution: DOUBLING_RESOLUTION,
            witness_floor: 20,
            growth_steps: 1,
            growth_threshold: DOUBLING_CEILING.sqrt(),
            extra_centers: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoublingEstimate {
    /// Sup of resolved ratios; 1 when nothing is resolved.
    pub c_star_hat: f64,
    /// Smallest radius at which every center is resolved.
    pub r_star: Option<f64>,
    pub witness: Option<(SpherePoint, f64)>,
    pub verdict: DoublingVerdict,
    pub resolved_samples: usize,
    pub total_samples: usize,
    pub growth_witnesses: Vec<RatioCurve>,
}

pub fn doubling_scan(mu: &EmpiricalMeasure, centers: usize, radii_per_center: usize, r_min: f64, r_max: f64) -> Result<DoublingEstimate> {
    doubling_scan_with(mu, centers, radii_per_center, r_min, r_max, &DoublingOptions::default())
}

pub fn doubling_scan_with(
    mu: &EmpiricalMeasure,
    centers: usize,
    radii_per_center: usize,
    r_min: f64,
    r_max: f64,
    opts: &DoublingOptions,
) -> Result<DoublingEstimate> {
    if centers == 0 {
        return Err(LabError::InvalidInput("need at least one center".into()));
    }
    let radii = geometric_radii(r_min, r_max, radii_per_center)?;
    let mut pts = atom_centers(mu, centers, 0xD0B1);
    pts.extend_from_slice(&opts.extra_centers);
    let curves: Vec<RatioCurve> = pts.par_iter().map(|&c| ratio_curve(mu, c, &radii)).collect();

    let mut c_star = 1.0f64;
    let mut witness = None;
    let mut resolved = 0;
    let mut violated = false;
    let mut r_star = None;
    for (k, &r) in radii.iter().enumerate() {
        if r_star.is_none() && curves.iter().all(|c| c.counts[k] >= opts.resolution) {
            r_star = Some(r);
        }
    }
    for c in &curves {
        for k in 0..radii.len() {
            if c.counts[k] < opts.resolution {
                continue;
            }
            resolved += 1;
            if c.ratios[k] > c_star {
                c_star = c.ratios[k];
                witness = Some((c.center, radii[k]));
            }
            violated |= c.ratios[k] > opts.ceiling;
        }
    }
    let growth: Vec<RatioCurve> = curves.iter().filter_map(|c| growth_witness(c, opts)).collect();
    let total = curves.len() * radii.len();
    let verdict = if violated {
        DoublingVerdict::DoublingViolated
    } else if !growth.is_empty() || 2 * resolved < total {
        DoublingVerdict::Inconclusive
    } else {
        DoublingVerdict::DoublingConsistent
    };
    Ok(DoublingEstimate {
        c_star_hat: c_star,
        r_star,
        witness,
        verdict,
        resolved_samples: resolved,
        total_samples: total,
        growth_witnesses: growth,
    })
}

fn ratio_curve(mu: &EmpiricalMeasure, center: SpherePoint, radii: &[f64]) -> RatioCurve {
    let mut ratios = Vec::with_capacity(radii.len());
    let mut counts = Vec::with_capacity(radii.len());
    let reach = radii.iter().fold(0.0f64, |a, &r| a.max(2.0 * r)).min(2.0);
    let prof = mu.radial_profile(center, reach);
    for &r in radii {
        let small = prof.ball(r.min(2.0));
        let big = prof.ball((2.0 * r).min(2.0));
        counts.push(small.atoms);
        ratios.push(if small.mass > 0.0 { big.mass / small.mass } else { f64::INFINITY });
    }
    RatioCurve { center, radii: radii.to_vec(), ratios, counts, slope: f64::NAN }
}

/// Longest run of consecutive radii, taken from large to small, along which
/// the ratio strictly increases; a witness when the run has `growth_steps`
/// increases and ends above `growth_threshold`.
fn growth_witness(c: &RatioCurve, opts: &DoublingOptions) -> Option<RatioCurve> {
    let ok = |k: usize| c.counts[k] >= opts.witness_floor && c.ratios[k].is_finite();
    let n = c.radii.len();
    let mut best: Option<(usize, usize)> = None;
    // radii ascend, so walk downward from the largest
    let mut k = n;
    while k > 0 {
        k -= 1;
        if !ok(k) {
            continue;
        }
        let top = k;
        while k > 0 && ok(k - 1) && c.ratios[k - 1] > c.ratios[k] {
            k -= 1;
        }
        let steps = top - k;
        if steps >= opts.growth_steps
            && c.ratios[k] >= opts.growth_threshold
            && best.is_none_or(|(lo, hi)| steps > hi - lo)
        {
            best = Some((k, top));
        }
    }
    let (lo, hi) = best?;
    let xs: Vec<f64> = (lo..=hi).map(|k| c.radii[k].ln()).collect();
    let ys: Vec<f64> = (lo..=hi).map(|k| c.ratios[k].ln()).collect();
    Some(RatioCurve {
        center: c.center,
        radii: c.radii[lo..=hi].to_vec(),
        ratios: c.ratios[lo..=hi].to_vec(),
        counts: c.counts[lo..=hi].to_vec(),
        slope: least_squares(&xs, &ys).map_or(f64::NAN, |p| p.0),
    })
}

/// Slope and intercept of the least-squares line; `None` for fewer than two
/// points or a degenerate abscissa.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CenterExponent {
    pub center: SpherePoint,
    pub slope: f64,
    /// `exp(intercept)`: the fitted `C` in `mass ~ C r^slope`.
    pub prefactor: f64,
    pub resolved_radii: usize,
}

/// Slope of `ln mass` against `ln r` over radii with at least 50 atoms;
/// `None` with fewer than three such radii.
pub fn center_exponent(mu: &EmpiricalMeasure, center: SpherePoint, radii: &[f64]) -> Option<CenterExponent> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let prof = mu.radial_profile(center, radii.iter().fold(0.0, |a: f64, &r| a.max(r)));
    for &r in radii {
        let c = prof.ball(r);
        if c.atoms >= EXPONENT_RESOLUTION {
            xs.push(r.ln());
            ys.push(c.mass.ln());
        }
    }
    if xs.len() < 3 {
        return None;
    }
    let (slope, intercept) = least_squares(&xs, &ys)?;
    Some(CenterExponent { center, slope, prefactor: intercept.exp(), resolved_radii: xs.len() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExponentFit {
    /// Maximal per-center slope.
    pub alpha_hat: f64,
    /// Largest `C` with `mass >= C r^alpha_hat` at every resolved sample.
    pub c_hat: f64,
    pub worst_center: SpherePoint,
    pub per_center: Vec<CenterExponent>,
}

fn fits(mu: &EmpiricalMeasure, centers: &[SpherePoint], r_min: f64, r_max: f64) -> Result<(Vec<f64>, Vec<CenterExponent>)> {
    let radii = sqrt2_radii(r_min, r_max)?;
    let per: Vec<CenterExponent> = centers.par_iter().filter_map(|&c| center_exponent(mu, c, &radii)).collect();
    if per.is_empty() {
        return Err(LabError::InvalidInput(format!(
            "no center has three radii with at least {EXPONENT_RESOLUTION} atoms in [{r_min}, {r_max}]"
        )));
    }
    Ok((radii, per))
}

pub fn lower_exponent_fit(mu: &EmpiricalMeasure, centers: usize, r_min: f64, r_max: f64) -> Result<ExponentFit> {
    lower_exponent_fit_at(mu, &atom_centers(mu, centers, 0xE1F0), r_min, r_max)
}

pub fn lower_exponent_fit_at(mu: &EmpiricalMeasure, centers: &[SpherePoint], r_min: f64, r_max: f64) -> Result<ExponentFit> {
    let (radii, per) = fits(mu, centers, r_min, r_max)?;
    let worst = per.iter().max_by(|a, b| a.slope.total_cmp(&b.slope)).unwrap();
    let alpha = worst.slope;
    let mut c_hat = f64::INFINITY;
    for e in &per {
        let prof = mu.radial_profile(e.center, radii[radii.len() - 1]);
        for &r in &radii {
            let c = prof.ball(r);
            if c.atoms >= EXPONENT_RESOLUTION {
                c_hat = c_hat.min(c.mass / r.powf(alpha));
            }
        }
    }
    Ok(ExponentFit { alpha_hat: alpha, c_hat, worst_center: worst.center, per_center: per })
}

/// Minimal per-center slope.
pub fn upper_exponent_check(mu: &EmpiricalMeasure, centers: usize, r_min: f64, r_max: f64) -> Result<f64> {
    let (_, per) = fits(mu, &atom_centers(mu, centers, 0xE1F1), r_min, r_max)?;
    Ok(per.iter().map(|e| e.slope).fold(f64::INFINITY, f64::min))
}

pub const ETA_GRID: [f64; 12] = [1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0, 8.0];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InverseDoublingReport {
    pub eta: f64,
    /// Min of `mass(B(x, eta r)) / mass(B(x, r))`.
    pub min_inflation: f64,
    /// Min of `mass(B(x, eta r) \ B(x, r)) / mass(B(x, r))`.
    pub min_annulus_ratio: f64,
    /// Smallest grid value with inflation at least 2 at every resolved sample.
    pub smallest_eta_doubling_mass: Option<f64>,
    pub resolved_samples: usize,
}

pub fn inverse_doubling_stats(mu: &EmpiricalMeasure, eta: f64, centers: usize, r_min: f64, r_max: f64) -> Result<InverseDoublingReport> {
    inverse_doubling_stats_at(mu, eta, &atom_centers(mu, centers, 0x1D0B), r_min, r_max)
}

pub fn inverse_doubling_stats_at(
    mu: &EmpiricalMeasure,
    eta: f64,
    centers: &[SpherePoint],
    r_min: f64,
    r_max: f64,
) -> Result<InverseDoublingReport> {
    if !(eta >= 1.0) {
        return Err(LabError::InvalidInput(format!("eta {eta} must be at least 1")));
    }
    let radii = sqrt2_radii(r_min, r_max)?;
    // (inner mass, mass at eta, masses at the grid values) per resolved sample
    let samples: Vec<(f64, f64, Vec<f64>)> = centers
        .par_iter()
        .flat_map_iter(|&c| {
            let top = radii[radii.len() - 1] * eta.max(ETA_GRID[ETA_GRID.len() - 1]);
            let prof = mu.radial_profile(c, top.min(2.0));
            radii
                .iter()
                .filter_map(|&r| {
                    let inner = prof.ball(r);
                    if inner.atoms < EXPONENT_RESOLUTION {
                        return None;
                    }
                    let at_eta = prof.ball((eta * r).min(2.0)).mass;
                    let grid = ETA_GRID.iter().map(|&e| prof.ball((e * r).min(2.0)).mass).collect();
                    Some((inner.mass, at_eta, grid))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut min_inflation = f64::INFINITY;
    let mut min_annulus = f64::INFINITY;
    for (inner, outer, _) in &samples {
        min_inflation = min_inflation.min(outer / inner);
        min_annulus = min_annulus.min((outer - inner) / inner);
    }
    let smallest = ETA_GRID
        .iter()
        .enumerate()
        .find(|(k, _)| !samples.is_empty() && samples.iter().all(|(inner, _, g)| g[*k] >= 2.0 * inner))
        .map(|(_, &e)| e);
    Ok(InverseDoublingReport {
        eta,
        min_inflation,
        min_annulus_ratio: min_annulus,
        smallest_eta_doubling_mass: smallest,
        resolved_samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::RationalMap;
    use crate::measure::sample_measure;
    use num_complex::Complex64;

    #[test]
    fn radii_grids() {
        let g = geometric_radii(1e-3, 1e-1, 5).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!((g[0], g[4]), (1e-3, 1e-1));
        assert!((g[2] - 1e-2).abs() < 1e-15);
        let s = sqrt2_radii(0.01, 0.04).unwrap();
        assert_eq!(s.len(), 5);
        assert!(geometric_radii(0.1, 0.01, 3).is_err());
    }

    #[test]
    fn least_squares_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let (s, i) = least_squares(&xs, &ys).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && (i + 1.0).abs() < 1e-12);
    }

    #[test]
    fn eta_one_gives_inflation_one() {
        let f = RationalMap::unicritical("z^2", 2, Complex64::new(0.0, 0.0)).unwrap();
        let mu = sample_measure(&f, 50, 1100, 100, 3).unwrap();
        let rep = inverse_doubling_stats(&mu, 1.0, 10, 0.02, 0.2).unwrap();
        assert_eq!(rep.min_inflation, 1.0);
        assert_eq!(rep.min_annulus_ratio, 0.0);
        let curve = ball_mass_curve(&mu, SpherePoint::new(1.0, 0.0), &sqrt2_radii(1e-3, 1.0).unwrap());
        assert!(curve.masses.windows(2).all(|w| w[0] <= w[1]));
    }
}
