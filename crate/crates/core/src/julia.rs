//! Julia set approximation, porosity, uniform perfectness and carrot paths
//! in the basin of infinity.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::seq::index::sample;
use rayon::prelude::*;
use rstar::primitives::GeomWithData;
use rstar::RTree;
use serde::{Deserialize, Serialize};

use crate::critical::neutral_cycles;
use crate::error::{LabError, Result};
use crate::map::RationalMap;
use crate::measure::{embed, sample_measure};
use crate::pullback::{approach_cycle, cycle_backward_orbit};
use crate::rng::stream_rng;
use crate::sphere::{chordal_distance, SpherePoint};

pub const DEFAULT_GRID_RESOLUTION: f64 = 1.0 / 400.0;
pub const DEFAULT_POINT_BUDGET: usize = 200_000;
/// Orbits are followed until they leave this modulus.
pub const GREEN_ESCAPE: f64 = 1e30;
pub const GREEN_HORIZON: usize = 50_000;
/// Escape horizon for classifying grid cells.
pub const GRID_HORIZON: usize = 256;
pub const MAX_CELLS: usize = 25_000_000;
/// Radii below this many cell widths are rejected.
pub const TRUST_CELLS: f64 = 4.0;
/// `xi_hat` below this anywhere in the trust range reads as porosity-failing.
pub const POROUS_FLOOR: f64 = 0.05;
pub const ETA_GRID: [f64; 12] = [1.1, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0];

const FRAME_LIMIT: f64 = 4.0;
const CHAINS: usize = 100;
const BURN_IN: usize = 100;
const MAX_ASCENT_STEPS: usize = 20_000;
const ARC_POINTS: usize = 64;

type IndexedPoint = GeomWithData<[f64; 3], u32>;

/// Polynomial with normalised coefficients, lowest degree first.
#[derive(Clone, Debug)]
struct Poly {
    coeffs: Vec<Complex64>,
    degree: usize,
    lead_log: f64,
}

impl Poly {
    fn of(f: &RationalMap) -> Result<Poly> {
        if !f.is_polynomial() {
            return Err(LabError::InvalidInput(format!("{} is not a polynomial", f.name())));
        }
        let b0 = f.denominator()[0];
        let coeffs: Vec<Complex64> = f.numerator()[..=f.degree()].iter().map(|c| c / b0).collect();
        let lead_log = coeffs[f.degree()].norm().ln();
        Ok(Poly { coeffs, degree: f.degree(), lead_log })
    }

    fn eval(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    fn green(&self, z: Complex64, horizon: usize) -> GreenValue {
        let d = self.degree as f64;
        let mut w = z;
        // gradient of the truncated potential, scaled by deg^-n as we go
        let mut grad = Complex64::new(0.0, 0.0);
        let mut have_grad = false;
        for n in 0..horizon {
            if w.norm() > GREEN_ESCAPE {
                let value = ((w.norm().ln() + self.lead_log / (d - 1.0)).ln() - n as f64 * d.ln()).exp();
                return GreenValue { value, gradient: grad.conj(), escaped: true, steps: n };
            }
            let (p, dp) = self.eval(w);
            if p.norm_sqr() == 0.0 {
                break;
            }
            let factor = dp / (d * p);
            grad = if have_grad { grad * w * factor } else { factor };
            have_grad = true;
            w = p;
        }
        GreenValue { value: 0.0, gradient: Complex64::new(0.0, 0.0), escaped: false, steps: horizon }
    }
}

/// Potential of the basin of infinity at a point, with its gradient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenValue {
    pub value: f64,
    pub gradient: Complex64,
    pub escaped: bool,
    pub steps: usize,
}

impl GreenValue {
    /// Koebe lower bound on the Euclidean distance to the Julia set.
    pub fn distance_lower(&self) -> f64 {
        let g = self.value;
        let n = self.gradient.norm();
        if !self.escaped || n == 0.0 {
            return 0.0;
        }
        if g > 300.0 {
            return 0.25 / n;
        }
        g.sinh() / (2.0 * g.exp() * n)
    }

    pub fn distance_upper(&self) -> f64 {
        let n = self.gradient.norm();
        if !self.escaped || n == 0.0 {
            return f64::INFINITY;
        }
        2.0 * self.value.sinh() / n
    }
}

pub fn green_value(f: &RationalMap, z: SpherePoint) -> Result<GreenValue> {
    let p = Poly::of(f)?;
    Ok(match z {
        SpherePoint::Infinity => {
            GreenValue { value: f64::INFINITY, gradient: Complex64::new(0.0, 0.0), escaped: true, steps: 0 }
        }
        SpherePoint::Finite(z) => p.green(z, GREEN_HORIZON),
    })
}

/// `G(z) = lim deg^-n ln|f^n(z)|`; zero when the orbit stays bounded within the horizon.
pub fn green_function(f: &RationalMap, z: SpherePoint) -> Result<f64> {
    Ok(green_value(f, z)?.value)
}

/// Which grid layer to export.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridLayer {
    Occupancy,
    Filled,
    Distance,
}

#[derive(Clone, Debug)]
pub struct JuliaApproximation {
    pub map: String,
    pub resolution: f64,
    pub polynomial: bool,
    /// Backward-iteration points first, then centres of boundary cells found by escape time.
    pub points: Vec<SpherePoint>,
    pub sampled: usize,
    pub origin: Complex64,
    pub nx: usize,
    pub ny: usize,
    pub julia_radius: f64,
    pub heuristic_cells: usize,
    occupied: Vec<bool>,
    filled: Vec<bool>,
    to_julia: Vec<f64>,
    to_filled: Vec<f64>,
    index: RTree<IndexedPoint>,
    outside: RTree<IndexedPoint>,
}

pub fn julia_approximation(f: &RationalMap, resolution: f64, point_budget: usize, seed: u64) -> Result<JuliaApproximation> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(LabError::InvalidInput(format!("resolution {resolution} must be positive")));
    }
    if point_budget == 0 {
        return Err(LabError::InvalidInput("point budget must be positive".into()));
    }
    let chains = CHAINS.min(point_budget);
    let per_chain = point_budget.div_ceil(chains);
    let mu = sample_measure(f, chains, BURN_IN + per_chain, BURN_IN, seed)?;
    let mut points: Vec<SpherePoint> = mu.atoms().to_vec();
    let sampled = points.len();

    let framed: Vec<Complex64> =
        points.iter().filter_map(|p| p.finite()).filter(|z| z.re.abs() <= FRAME_LIMIT && z.im.abs() <= FRAME_LIMIT).collect();
    if framed.is_empty() {
        return Err(LabError::NoConvergence(format!("{}: no sampled point inside the frame", f.name())));
    }
    let (mut lo, mut hi) = (framed[0], framed[0]);
    for z in &framed {
        lo = Complex64::new(lo.re.min(z.re), lo.im.min(z.im));
        hi = Complex64::new(hi.re.max(z.re), hi.im.max(z.im));
    }
    let centre = (lo + hi) * 0.5;
    let half = 0.5 * (hi.re - lo.re).max(hi.im - lo.im) * 1.05 + 4.0 * resolution;
    let n = (2.0 * half / resolution).ceil() as usize;
    if n.saturating_mul(n) > MAX_CELLS {
        return Err(LabError::InvalidInput(format!(
            "grid of {n}x{n} cells exceeds the budget of {MAX_CELLS}; use a coarser resolution"
        )));
    }
    let origin = centre - Complex64::new(half, half);
    let mut occupied = vec![false; n * n];
    let cell_of = |z: Complex64| -> Option<usize> {
        let i = ((z.re - origin.re) / resolution).floor();
        let j = ((z.im - origin.im) / resolution).floor();
        (i >= 0.0 && j >= 0.0 && (i as usize) < n && (j as usize) < n).then(|| j as usize * n + i as usize)
    };
    for z in &framed {
        if let Some(c) = cell_of(*z) {
            occupied[c] = true;
        }
    }

    let polynomial = f.is_polynomial();
    let mut heuristic_cells = 0;
    if polynomial {
        let poly = Poly::of(f)?;
        let centre_of = |c: usize| origin + Complex64::new(((c % n) as f64 + 0.5) * resolution, ((c / n) as f64 + 0.5) * resolution);
        let green: Vec<GreenValue> = (0..n * n).into_par_iter().map(|c| poly.green(centre_of(c), GRID_HORIZON)).collect();
        let marks: Vec<bool> = (0..n * n)
            .into_par_iter()
            .map(|c| {
                let g = &green[c];
                if g.escaped {
                    return g.distance_upper() <= 0.5 * resolution;
                }
                let (i, j) = ((c % n) as isize, (c / n) as isize);
                for dj in -1..=1 {
                    for di in -1..=1 {
                        let (a, b) = (i + di, j + dj);
                        if a >= 0 && b >= 0 && (a as usize) < n && (b as usize) < n && green[b as usize * n + a as usize].escaped {
                            return true;
                        }
                    }
                }
                false
            })
            .collect();
        for (c, m) in marks.into_iter().enumerate() {
            if m && !occupied[c] {
                occupied[c] = true;
                heuristic_cells += 1;
                points.push(SpherePoint::Finite(centre_of(c)));
            }
        }
    }

    let filled = flood_filled(&occupied, n);
    let to_julia = distance_transform(&occupied, n, n);
    let to_filled = distance_transform(&filled, n, n);
    let julia_radius = points
        .iter()
        .filter_map(|p| p.finite())
        .filter(|z| z.re.abs() <= FRAME_LIMIT && z.im.abs() <= FRAME_LIMIT)
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for (k, p) in points.iter().enumerate() {
        let item = GeomWithData::new(embed(*p), k as u32);
        match p.finite() {
            Some(z) if cell_of(z).is_some() => inside.push(item),
            _ => outside.push(item),
        }
    }
    inside.extend(outside.iter().cloned());
    Ok(JuliaApproximation {
        map: f.name().to_string(),
        resolution,
        polynomial,
        points,
        sampled,
        origin,
        nx: n,
        ny: n,
        julia_radius,
        heuristic_cells,
        occupied,
        filled,
        to_julia,
        to_filled,
        index: RTree::bulk_load(inside),
        outside: RTree::bulk_load(outside),
    })
}

/// Cells not reachable from the frame through empty cells, together with the occupied ones.
fn flood_filled(occupied: &[bool], n: usize) -> Vec<bool> {
    let mut outside = vec![false; n * n];
    let mut stack = Vec::new();
    for k in 0..n {
        for c in [k, (n - 1) * n + k, k * n, k * n + n - 1] {
            if !occupied[c] && !outside[c] {
                outside[c] = true;
                stack.push(c);
            }
        }
    }
    while let Some(c) = stack.pop() {
        let (i, j) = (c % n, c / n);
        let mut visit = |d: usize| {
            if !occupied[d] && !outside[d] {
                outside[d] = true;
                stack.push(d);
            }
        };
        if i > 0 {
            visit(c - 1);
        }
        if i + 1 < n {
            visit(c + 1);
        }
        if j > 0 {
            visit(c - n);
        }
        if j + 1 < n {
            visit(c + n);
        }
    }
    outside.into_iter().map(|o| !o).collect()
}

/// Squared distance (in cells) from every cell centre to the nearest marked cell centre.
fn distance_transform(marked: &[bool], nx: usize, ny: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = marked.iter().map(|&m| if m { 0.0 } else { f64::INFINITY }).collect();
    let rows: Vec<Vec<f64>> = grid.par_chunks(nx).map(edt_1d).collect();
    for (j, row) in rows.into_iter().enumerate() {
        grid[j * nx..(j + 1) * nx].copy_from_slice(&row);
    }
    let cols: Vec<Vec<f64>> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let col: Vec<f64> = (0..ny).map(|j| grid[j * nx + i]).collect();
            edt_1d(&col)
        })
        .collect();
    for (i, col) in cols.into_iter().enumerate() {
        for (j, v) in col.into_iter().enumerate() {
            grid[j * nx + i] = v;
        }
    }
    grid
}

/// Lower envelope of parabolas (Felzenszwalb-Huttenlocher).
fn edt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let sites: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if sites.is_empty() {
        return vec![f64::INFINITY; n];
    }
    let mut v: Vec<usize> = Vec::with_capacity(sites.len());
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    let meet = |p: usize, q: usize| {
        let (pf, qf) = (p as f64, q as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf))
    };
    v.push(sites[0]);
    z.push(f64::NEG_INFINITY);
    for &q in &sites[1..] {
        let mut s = meet(*v.last().unwrap(), q);
        while s <= *z.last().unwrap() {
            v.pop();
            z.pop();
            s = meet(*v.last().unwrap(), q);
        }
        v.push(q);
        z.push(s);
    }
    z.push(f64::INFINITY);
    let mut out = vec![0.0; n];
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
    out
}

impl JuliaApproximation {
    pub fn cell_of(&self, z: Complex64) -> Option<(usize, usize)> {
        let i = ((z.re - self.origin.re) / self.resolution).floor();
        let j = ((z.im - self.origin.im) / self.resolution).floor();
        (i >= 0.0 && j >= 0.0 && (i as usize) < self.nx && (j as usize) < self.ny).then_some((i as usize, j as usize))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Complex64 {
        self.origin + Complex64::new((i as f64 + 0.5) * self.resolution, (j as f64 + 0.5) * self.resolution)
    }

    pub fn is_occupied(&self, i: usize, j: usize) -> bool {
        self.occupied[j * self.nx + i]
    }

    pub fn is_filled(&self, i: usize, j: usize) -> bool {
        self.filled[j * self.nx + i]
    }

    pub fn occupied_cells(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    /// Backward-iteration part of the cloud.
    pub fn sampled_points(&self) -> &[SpherePoint] {
        &self.points[..self.sampled]
    }

    /// Chordal lower bound for points at Euclidean distance at least `gap` from `u`
    /// and of modulus at most the Julia radius.
    fn chordal_gap(&self, u: Complex64, gap: f64) -> f64 {
        if gap <= 0.0 {
            return 0.0;
        }
        if gap.is_infinite() {
            return 2.0;
        }
        let m = u.norm();
        let r = self.julia_radius.min(m + gap);
        (2.0 * gap / ((1.0 + m * m) * (1.0 + r * r)).sqrt()).min(2.0)
    }

    fn grid_gap(&self, field: &[f64], i: usize, j: usize) -> f64 {
        let d = field[j * self.nx + i];
        if !d.is_finite() {
            return f64::INFINITY;
        }
        (d.sqrt() - std::f64::consts::FRAC_1_SQRT_2) * self.resolution
    }

    fn outside_distance(&self, p: SpherePoint) -> f64 {
        self.outside.nearest_neighbor(embed(p)).map(|q| chordal_distance(p, self.points[q.data as usize])).unwrap_or(f64::INFINITY)
    }

    /// Lower bound on the chordal distance from the centre of cell `(i, j)` to the cloud.
    pub fn distance_field(&self, i: usize, j: usize) -> f64 {
        let u = self.cell_center(i, j);
        let grid = self.chordal_gap(u, self.grid_gap(&self.to_julia, i, j)).min(2.0);
        grid.min(self.outside_distance(SpherePoint::Finite(u))).max(0.0)
    }

    /// Lower bound on the chordal distance from the centre of cell `(i, j)` to the filled set.
    pub fn filled_distance(&self, i: usize, j: usize) -> f64 {
        let u = self.cell_center(i, j);
        self.chordal_gap(u, self.grid_gap(&self.to_filled, i, j)).clamp(0.0, 2.0)
    }

    /// Lower bound on the distance from `z` to the cloud; zero outside the frame.
    pub fn distance_lower(&self, z: Complex64) -> f64 {
        match self.cell_of(z) {
            None => 0.0,
            Some((i, j)) => {
                let gap = self.grid_gap(&self.to_julia, i, j) - std::f64::consts::FRAC_1_SQRT_2 * self.resolution;
                self.chordal_gap(z, gap).min(self.outside_distance(SpherePoint::Finite(z))).max(0.0)
            }
        }
    }

    /// Exact chordal distance to the nearest cloud point.
    pub fn nearest_distance(&self, p: SpherePoint) -> f64 {
        let a = self.index.nearest_neighbor(embed(p)).map(|q| chordal_distance(p, self.points[q.data as usize]));
        a.unwrap_or(f64::INFINITY)
    }

    /// Cloud points at chordal distance in `[lo, hi)` from `p`: the smallest such distance.
    fn nearest_beyond(&self, p: SpherePoint, lo: f64, hi: f64) -> Option<f64> {
        let e = embed(p);
        self.index
            .locate_within_distance(e, hi * hi)
            .map(|q| chordal_distance(p, self.points[q.data as usize]))
            .filter(|&d| d >= lo && d < hi)
            .min_by(f64::total_cmp)
    }

    pub fn write_cloud_csv(&self, path: &Path) -> Result<()> {
        let ctx = || path.display().to_string();
        let mut w = csv::Writer::from_path(path).map_err(|e| LabError::io(ctx(), e.into()))?;
        w.write_record(["re", "im", "source"]).map_err(|e| LabError::io(ctx(), e.into()))?;
        for (k, p) in self.points.iter().enumerate() {
            let source = if k < self.sampled { "backward" } else { "escape" };
            let (re, im) = match p.finite() {
                Some(z) => (format!("{:e}", z.re), format!("{:e}", z.im)),
                None => ("inf".into(), "inf".into()),
            };
            w.write_record([re.as_str(), im.as_str(), source]).map_err(|e| LabError::io(ctx(), e.into()))?;
        }
        w.flush().map_err(|e| LabError::io(ctx(), e))
    }

    /// Binary portable grey map, top row first.
    pub fn write_pgm(&self, path: &Path, layer: GridLayer) -> Result<()> {
        let file = File::create(path).map_err(|e| LabError::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let peak = match layer {
            GridLayer::Distance => (0..self.nx * self.ny).map(|c| self.distance_field(c % self.nx, c / self.nx)).fold(0.0, f64::max),
            _ => 1.0,
        };
        let mut bytes = format!("P5\n{} {}\n255\n", self.nx, self.ny).into_bytes();
        for j in (0..self.ny).rev() {
            for i in 0..self.nx {
                let v = match layer {
                    GridLayer::Occupancy => {
                        if self.is_occupied(i, j) {
                            0
                        } else {
                            255
                        }
                    }
                    GridLayer::Filled => {
                        if self.is_filled(i, j) {
                            0
                        } else {
                            255
                        }
                    }
                    GridLayer::Distance => (255.0 * self.distance_field(i, j) / peak.max(1e-300)).round() as u8,
                };
                bytes.push(v);
            }
        }
        w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| LabError::io(path.display().to_string(), e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PorosityVerdict {
    PorousConsistent,
    PorosityFailing,
}

impl PorosityVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            PorosityVerdict::PorousConsistent => "porous-consistent",
            PorosityVerdict::PorosityFailing => "porosity-failing",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PorosityEstimate {
    pub radii: Vec<f64>,
    pub xi_hat: Vec<f64>,
    pub witness_worst: (SpherePoint, f64),
    pub witness_xi: f64,
    pub verdict: PorosityVerdict,
    pub centers: usize,
    pub trust_floor: f64,
}

pub fn porosity_curve(j: &JuliaApproximation, centers: usize, radii: &[f64], seed: u64) -> Result<PorosityEstimate> {
    hole_curve(j, centers, radii, seed, false)
}

/// Porosity with holes required to miss the filled Julia set.
pub fn boundary_porosity_curve(f: &RationalMap, j: &JuliaApproximation, centers: usize, radii: &[f64], seed: u64) -> Result<PorosityEstimate> {
    if !f.is_polynomial() {
        return Err(LabError::InvalidInput(format!("{} is not a polynomial", f.name())));
    }
    if f.name() != j.map {
        return Err(LabError::MapMismatch(f.name().to_string(), j.map.clone()));
    }
    hole_curve(j, centers, radii, seed, true)
}

fn check_radii(j: &JuliaApproximation, radii: &[f64]) -> Result<f64> {
    let floor = TRUST_CELLS * j.resolution;
    if radii.is_empty() {
        return Err(LabError::InvalidInput("empty radius grid".into()));
    }
    for &r in radii {
        if !(r >= floor && r < 2.0) {
            return Err(LabError::InvalidInput(format!("radius {r} below the resolution floor {floor} or above 2")));
        }
    }
    Ok(floor)
}

/// Sampled cloud points whose largest ball still fits in the frame.
fn porosity_centers(j: &JuliaApproximation, count: usize, r_max: f64, seed: u64) -> Vec<Complex64> {
    let fits = |z: &Complex64| {
        let reach = 1.5 * r_max * (1.0 + z.norm_sqr()) / 2.0 + 2.0 * j.resolution;
        let lo = j.origin;
        let hi = j.origin + Complex64::new(j.nx as f64, j.ny as f64) * j.resolution;
        z.re - reach > lo.re && z.im - reach > lo.im && z.re + reach < hi.re && z.im + reach < hi.im
    };
    let pool: Vec<Complex64> = j.sampled_points().iter().filter_map(|p| p.finite()).filter(fits).collect();
    if pool.len() <= count {
        return pool;
    }
    let mut rng = stream_rng(seed, 0x9070);
    let mut idx = sample(&mut rng, pool.len(), count).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|k| pool[k]).collect()
}

/// Largest hole radius in `B(x, r)` over cell centres, divided by `r`.
fn hole_ratio(j: &JuliaApproximation, x: Complex64, r: f64, exterior: bool) -> f64 {
    let reach = 1.5 * r * (1.0 + x.norm_sqr()) / 2.0 + j.resolution;
    let (Some((i0, j0)), Some((i1, j1))) = (j.cell_of(x - Complex64::new(reach, reach)), j.cell_of(x + Complex64::new(reach, reach)))
    else {
        return 0.0;
    };
    let xs = SpherePoint::Finite(x);
    let mut best: f64 = 0.0;
    for b in j0..=j1 {
        for a in i0..=i1 {
            let d = chordal_distance(xs, SpherePoint::Finite(j.cell_center(a, b)));
            if d >= r {
                continue;
            }
            let room = if exterior {
                if j.is_filled(a, b) {
                    continue;
                }
                j.filled_distance(a, b)
            } else {
                j.distance_field(a, b)
            };
            best = best.max(room.min(r - d));
        }
    }
    (best / r).clamp(0.0, 1.0 - 1e-12)
}

fn hole_curve(j: &JuliaApproximation, centers: usize, radii: &[f64], seed: u64, exterior: bool) -> Result<PorosityEstimate> {
    let trust_floor = check_radii(j, radii)?;
    let r_max = radii.iter().cloned().fold(0.0, f64::max);
    let xs = porosity_centers(j, centers, r_max, seed);
    if xs.is_empty() {
        return Err(LabError::InvalidInput("no Julia point admits the requested radii inside the frame".into()));
    }
    let table: Vec<Vec<f64>> = xs.par_iter().map(|&x| radii.iter().map(|&r| hole_ratio(j, x, r, exterior)).collect()).collect();
    let mut xi_hat = vec![f64::INFINITY; radii.len()];
    let mut worst = (SpherePoint::Finite(xs[0]), radii[0]);
    let mut witness_xi = f64::INFINITY;
    for (x, row) in xs.iter().zip(&table) {
        for (k, &v) in row.iter().enumerate() {
            xi_hat[k] = xi_hat[k].min(v);
            if v < witness_xi {
                witness_xi = v;
                worst = (SpherePoint::Finite(*x), radii[k]);
            }
        }
    }
    let verdict = if witness_xi >= POROUS_FLOOR { PorosityVerdict::PorousConsistent } else { PorosityVerdict::PorosityFailing };
    Ok(PorosityEstimate { radii: radii.to_vec(), xi_hat, witness_worst: worst, witness_xi, verdict, centers: xs.len(), trust_floor })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformPerfectness {
    pub eta_hat: f64,
    pub witness: (SpherePoint, f64),
    pub radii: Vec<f64>,
    pub centers: usize,
}

/// Smallest grid `eta` such that every tested annulus `B(x, eta r) \ B(x, r)` meets the cloud.
pub fn uniform_perfectness(j: &JuliaApproximation, centers: usize, radii: &[f64]) -> Result<UniformPerfectness> {
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0 && r < 2.0)) {
        return Err(LabError::InvalidInput("radii must lie in (0, 2)".into()));
    }
    let pool = j.sampled_points();
    let step = (pool.len() / centers.max(1)).max(1);
    let xs: Vec<SpherePoint> = pool.iter().step_by(step).take(centers.max(1)).cloned().collect();
    let top = ETA_GRID[ETA_GRID.len() - 1];
    let needs: Vec<(f64, SpherePoint, f64)> = xs
        .par_iter()
        .flat_map_iter(|&x| {
            radii.iter().map(move |&r| {
                let need = match j.nearest_beyond(x, r, (top * r).min(2.0)) {
                    Some(d) => ETA_GRID.iter().cloned().find(|&eta| d < eta * r).unwrap_or(f64::INFINITY),
                    None => f64::INFINITY,
                };
                (need, x, r)
            })
        })
        .collect();
    let worst = needs.iter().cloned().fold((0.0, xs[0], radii[0]), |a, b| if b.0 > a.0 { b } else { a });
    Ok(UniformPerfectness { eta_hat: worst.0.max(ETA_GRID[0]), witness: (worst.1, worst.2), radii: radii.to_vec(), centers: xs.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarrotProbe {
    pub reference: SpherePoint,
    pub targets: Vec<SpherePoint>,
    /// Polylines from the reference point to each target.
    pub paths: Vec<Vec<SpherePoint>>,
    pub constants: Vec<f64>,
    pub c_hat: f64,
    pub worst_target: Option<SpherePoint>,
    pub discarded: usize,
    pub disconnected: bool,
}

impl CarrotProbe {
    pub fn write_paths_csv(&self, path: &Path) -> Result<()> {
        let ctx = || path.display().to_string();
        let mut w = csv::Writer::from_path(path).map_err(|e| LabError::io(ctx(), e.into()))?;
        w.write_record(["target", "index", "re", "im"]).map_err(|e| LabError::io(ctx(), e.into()))?;
        for (t, poly) in self.paths.iter().enumerate() {
            for (k, p) in poly.iter().enumerate() {
                let z = p.finite().unwrap_or(Complex64::new(f64::INFINITY, f64::INFINITY));
                w.write_record([t.to_string(), k.to_string(), format!("{:e}", z.re), format!("{:e}", z.im)])
                    .map_err(|e| LabError::io(ctx(), e.into()))?;
            }
        }
        w.flush().map_err(|e| LabError::io(ctx(), e))
    }
}

/// Carrot probe towards `targets` cloud points drawn at random.
pub fn carrot_probe(f: &RationalMap, j: &JuliaApproximation, targets: usize, seed: u64) -> Result<CarrotProbe> {
    let pool: Vec<SpherePoint> = j.sampled_points().iter().filter(|p| p.finite().is_some()).cloned().collect();
    if pool.is_empty() || targets == 0 {
        return Err(LabError::InvalidInput("no carrot targets".into()));
    }
    let mut rng = stream_rng(seed, 0xCA77);
    let idx = sample(&mut rng, pool.len(), targets.min(pool.len())).into_vec();
    let chosen: Vec<SpherePoint> = idx.into_iter().map(|k| pool[k]).collect();
    carrot_probe_at(f, j, &chosen)
}

pub fn carrot_probe_at(f: &RationalMap, j: &JuliaApproximation, targets: &[SpherePoint]) -> Result<CarrotProbe> {
    let poly = Poly::of(f)?;
    if f.name() != j.map {
        return Err(LabError::MapMismatch(f.name().to_string(), j.map.clone()));
    }
    let disconnected = f
        .critical_points_raw()?
        .iter()
        .filter_map(|(c, _)| c.finite())
        .any(|c| poly.green(c, GREEN_HORIZON).escaped);
    let top = 50.0 * j.julia_radius.max(1.0);
    let z0 = reference_point(&poly, top);
    let results: Vec<Option<(Vec<Complex64>, f64)>> = targets
        .par_iter()
        .map(|t| {
            let z = t.finite()?;
            let start = escape_start(&poly, z, j.resolution)?;
            let up = ascend(&poly, start, top)?;
            let mut path = vec![z0];
            path.extend(arc(z0, *up.last().unwrap()));
            path.extend(up.iter().rev());
            let c = path_constant(&poly, j, &path, z);
            // the last steps sit inside the target's own cells
            while path.len() > 1 && (path[path.len() - 1] - z).norm() < 4.0 * j.resolution && j.distance_lower(path[path.len() - 1]) <= 0.0 {
                path.pop();
            }
            path.push(z);
            Some((path, c))
        })
        .collect();
    let mut probe = CarrotProbe {
        reference: SpherePoint::Finite(z0),
        targets: Vec::new(),
        paths: Vec::new(),
        constants: Vec::new(),
        c_hat: f64::INFINITY,
        worst_target: None,
        discarded: 0,
        disconnected,
    };
    for (t, r) in targets.iter().zip(results) {
        match r {
            None => probe.discarded += 1,
            Some((path, c)) => {
                if c < probe.c_hat {
                    probe.c_hat = c;
                    probe.worst_target = Some(*t);
                }
                probe.targets.push(*t);
                probe.paths.push(path.into_iter().map(SpherePoint::Finite).collect());
                probe.constants.push(c);
            }
        }
    }
    if probe.targets.is_empty() {
        return Err(LabError::NoConvergence(format!("{}: every carrot target was discarded", f.name())));
    }
    Ok(probe)
}

/// Point of largest potential on the circle of modulus `top`.
fn reference_point(poly: &Poly, top: f64) -> Complex64 {
    (0..360)
        .map(|k| Complex64::from_polar(top, std::f64::consts::TAU * k as f64 / 360.0))
        .map(|z| (poly.green(z, GRID_HORIZON).value, z))
        .fold((f64::NEG_INFINITY, Complex64::new(0.0, 0.0)), |a, b| if b.0 > a.0 { b } else { a })
        .1
}

/// An escaping point very close to `z`.
fn escape_start(poly: &Poly, z: Complex64, h: f64) -> Option<Complex64> {
    let mut eps = h / 64.0;
    while eps <= h {
        let best = (0..16)
            .map(|k| z + Complex64::from_polar(eps, std::f64::consts::TAU * k as f64 / 16.0))
            .map(|w| (poly.green(w, GREEN_HORIZON), w))
            .filter(|(g, _)| g.escaped)
            .max_by(|a, b| a.0.value.total_cmp(&b.0.value));
        if let Some((_, w)) = best {
            return Some(w);
        }
        eps *= 2.0;
    }
    None
}

/// Field line of the potential from `w` up to modulus `top`.
fn ascend(poly: &Poly, mut w: Complex64, top: f64) -> Option<Vec<Complex64>> {
    let mut out = vec![w];
    for _ in 0..MAX_ASCENT_STEPS {
        if w.norm() >= top {
            return Some(out);
        }
        let g = poly.green(w, GREEN_HORIZON);
        let n = g.gradient.norm();
        if !g.escaped || n == 0.0 {
            return None;
        }
        let step = (0.25 * g.distance_lower()).max(1e-12);
        w += g.gradient / n * step;
        out.push(w);
    }
    None
}

fn arc(a: Complex64, b: Complex64) -> Vec<Complex64> {
    let (ra, ta) = a.to_polar();
    let (rb, tb) = b.to_polar();
    let mut dt = tb - ta;
    while dt > std::f64::consts::PI {
        dt -= std::f64::consts::TAU;
    }
    while dt < -std::f64::consts::PI {
        dt += std::f64::consts::TAU;
    }
    (1..ARC_POINTS).map(|k| k as f64 / ARC_POINTS as f64).map(|s| Complex64::from_polar(ra + s * (rb - ra), ta + s * dt)).collect()
}

/// Distance from `w` to the cloud, clamped between the Koebe bounds for the distance to J.
fn julia_gap(poly: &Poly, j: &JuliaApproximation, w: Complex64) -> f64 {
    let g = poly.green(w, GREEN_HORIZON);
    let lower = j.chordal_gap(w, g.distance_lower());
    let up = g.distance_upper();
    let shrink = (w.norm() - up).max(0.0);
    let upper = (2.0 * up / (1.0 + shrink * shrink)).min(2.0);
    j.nearest_distance(SpherePoint::Finite(w)).clamp(lower, upper.max(lower))
}

/// Minimum of `dist(w, J) / dist(w, z)` along the path, away from the target's own cell.
fn path_constant(poly: &Poly, j: &JuliaApproximation, path: &[Complex64], z: Complex64) -> f64 {
    let zs = SpherePoint::Finite(z);
    let near = 2.0 * j.resolution;
    path.iter()
        .filter(|w| (**w - z).norm() >= near)
        .map(|&w| (julia_gap(poly, j, w) / chordal_distance(SpherePoint::Finite(w), zs)).min(1.0))
        .fold(1.0, f64::min)
}

/// Julia points approaching a neutral cycle along the inverse branch fixing it,
/// one per distance in `distances` (decreasing).
pub fn targets_near_neutral(f: &RationalMap, j: &JuliaApproximation, distances: &[f64]) -> Result<Vec<SpherePoint>> {
    let cycles = neutral_cycles(f)?;
    let Some(cycle) = cycles.first() else {
        return Ok(Vec::new());
    };
    let Some(&start) = j.sampled_points().first() else {
        return Ok(Vec::new());
    };
    let reach = distances.first().cloned().unwrap_or(0.1) * 1.5;
    let Some((x, at)) = approach_cycle(f, start, cycle, reach)? else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    let mut want = distances.iter().peekable();
    let mut point = x;
    let mut phase = at;
    for _ in 0..200_000 {
        let Some(&&d) = want.peek() else { break };
        if chordal_distance(point, cycle[phase]) < d {
            out.push(point);
            want.next();
            continue;
        }
        let orbit = cycle_backward_orbit(f, point, cycle, phase, 1)?;
        point = orbit[1];
        phase = (phase + cycle.len() - 1) % cycle.len();
    }
    Ok(out)
}
