//! Pull-back components of balls, their degrees, and the scans built on them.
//!
//! A component of `f^{-k}(B(y, r))` is computed on a square grid in the chart
//! around a point it contains. Each cell is classified inside, outside or
//! boundary by comparing `d(f^k(u), y) - r` at the cell center against the
//! local Lipschitz constant, and the component is the flood fill from the
//! seed cell through cells that are not outside.

use std::collections::VecDeque;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical::{landmarks, neutral_cycles, CriticalSet};
use crate::error::{LabError, Result};
use crate::map::RationalMap;
use crate::measure::{sample_measure, EmpiricalMeasure};
use crate::rng::{mix64, stream_rng};
use crate::scaling::least_squares;
use crate::sphere::{chordal_distance, point_at_distance, Chart, SphereBall, SpherePoint};

pub const DEFAULT_RADIUS_CAP: f64 = 0.1;
pub const DEFAULT_RESOLUTION: f64 = 1.0 / 64.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PullbackOptions {
    /// Cell width relative to the frame width.
    pub resolution: f64,
    /// Grid doublings allowed when a decision falls in a boundary cell.
    pub max_refinements: usize,
    /// Multiplier on the center-derivative Lipschitz estimate.
    pub safety: f64,
    /// Target redraws for the preimage count.
    pub redraws: usize,
    pub radius_cap: f64,
}

impl Default for PullbackOptions {
    fn default() -> Self {
        PullbackOptions { resolution: DEFAULT_RESOLUTION, max_refinements: 2, safety: 2.0, redraws: 5, radius_cap: DEFAULT_RADIUS_CAP }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Outside,
    Inside,
    Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Membership {
    In,
    Out,
    Ambiguous,
}

/// Grid cover of one pull-back component.
#[derive(Clone, Debug)]
pub struct CellCover {
    pub chart: Chart,
    /// Lower-left corner of the frame in chart coordinates.
    pub origin: Complex64,
    pub cell: f64,
    pub n: usize,
    states: Vec<CellState>,
    member: Vec<bool>,
    pub simply_connected: bool,
    /// The component reached the frame at the largest frame tried.
    pub unbounded: bool,
}

impl CellCover {
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    fn cell_of(&self, p: SpherePoint) -> Option<usize> {
        let u = self.chart.to_chart(p)?;
        let fx = (u.re - self.origin.re) / self.cell;
        let fy = (u.im - self.origin.im) / self.cell;
        if !(fx >= 0.0 && fy >= 0.0 && fx < self.n as f64 && fy < self.n as f64) {
            return None;
        }
        Some(self.idx(fx as usize, fy as usize))
    }

    pub fn membership(&self, p: SpherePoint) -> Membership {
        match self.cell_of(p) {
            Some(k) if self.member[k] => match self.states[k] {
                CellState::Inside => Membership::In,
                _ => Membership::Ambiguous,
            },
            _ => Membership::Out,
        }
    }

    pub fn member_cells(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    pub fn boundary_cells(&self) -> usize {
        self.member.iter().zip(&self.states).filter(|(&m, &s)| m && s == CellState::Boundary).count()
    }

    /// Chart bounding box `(min, max)` of the member cells.
    pub fn bounding_box(&self) -> (Complex64, Complex64) {
        let (mut lo, mut hi) = ((usize::MAX, usize::MAX), (0, 0));
        for j in 0..self.n {
            for i in 0..self.n {
                if self.member[self.idx(i, j)] {
                    lo = (lo.0.min(i), lo.1.min(j));
                    hi = (hi.0.max(i), hi.1.max(j));
                }
            }
        }
        let c = |i: usize, j: usize| self.origin + Complex64::new(i as f64 * self.cell, j as f64 * self.cell);
        (c(lo.0, lo.1), c(hi.0 + 1, hi.1 + 1))
    }

    /// Upper bound for the chordal diameter of the covered set: the chart
    /// diagonal of the bounding box times the largest conformal factor on it.
    pub fn diameter_bound(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        let diag = (hi - lo).norm();
        let dx = if lo.re > 0.0 { lo.re } else if hi.re < 0.0 { -hi.re } else { 0.0 };
        let dy = if lo.im > 0.0 { lo.im } else if hi.im < 0.0 { -hi.im } else { 0.0 };
        let cf = 2.0 / (1.0 + dx * dx + dy * dy);
        (diag * cf).min(2.0)
    }

    /// Member cells with their chart boxes, for plotting.
    pub fn dump(&self) -> CoverDump {
        let mut cells = Vec::new();
        for j in 0..self.n {
            for i in 0..self.n {
                let k = self.idx(i, j);
                if self.member[k] {
                    let x0 = self.origin.re + i as f64 * self.cell;
                    let y0 = self.origin.im + j as f64 * self.cell;
                    cells.push(CellDump { x0, y0, x1: x0 + self.cell, y1: y0 + self.cell, state: self.states[k] });
                }
            }
        }
        CoverDump { chart: self.chart, cells, simply_connected: self.simply_connected, unbounded: self.unbounded }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellDump {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub state: CellState,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverDump {
    pub chart: Chart,
    pub cells: Vec<CellDump>,
    pub simply_connected: bool,
    pub unbounded: bool,
}

fn conformal(u: Complex64) -> f64 {
    2.0 / (1.0 + u.norm_sqr())
}

/// Cover of the component of `f^{-k}(target)` containing `seed`, where
/// `f^k(seed)` lies in the target.
pub fn component_cover(f: &RationalMap, target: &SphereBall, k: usize, seed: SpherePoint, n: usize, safety: f64) -> CellCover {
    let chart = Chart::centered_on(seed);
    let u0 = chart.to_chart(seed).unwrap_or_default();
    let est = radial_extent(f, target, k, chart, u0);
    let mut center = u0;
    let mut half = (2.0 * est).clamp(1e-300, 4.0);
    let mut grew = false;
    let mut cover = classify(f, target, k, chart, center, half, n, safety, u0);
    for _ in 0..64 {
        if cover.unbounded_frame {
            if half >= 8.0 {
                cover.cover.unbounded = true;
                break;
            }
            half *= 2.0;
            grew = true;
        } else {
            let (lo, hi) = cover.cover.bounding_box();
            let extent = (hi.re - lo.re).max(hi.im - lo.im);
            // refit a frame much larger than the component, unless that just overshot
            if grew || extent >= 0.8 * half || half <= 1e-290 {
                break;
            }
            center = (lo + hi) * 0.5;
            half = 0.75 * extent;
        }
        cover = classify(f, target, k, chart, center, half, n, safety, u0);
    }
    cover.cover
}

/// Largest chart distance from `u0`, over a few rays, at which `f^k` first leaves the target.
fn radial_extent(f: &RationalMap, target: &SphereBall, k: usize, chart: Chart, u0: Complex64) -> f64 {
    let inside = |u: Complex64| chordal_distance(f.iterate_point(chart.to_sphere(u), k), target.center) < target.radius;
    let mut est: f64 = 0.0;
    for q in 0..8 {
        let dir = Complex64::from_polar(1.0, q as f64 * std::f64::consts::FRAC_PI_4);
        let mut s = 1e-14;
        while s < 4.0 && inside(u0 + dir * s) {
            s *= 2.0;
        }
        est = est.max(s);
    }
    est.min(4.0)
}

struct Classified {
    cover: CellCover,
    unbounded_frame: bool,
}

#[allow(clippy::too_many_arguments)]
fn classify(
    f: &RationalMap,
    target: &SphereBall,
    k: usize,
    chart: Chart,
    center: Complex64,
    half: f64,
    n: usize,
    safety: f64,
    seed_u: Complex64,
) -> Classified {
    let cell = 2.0 * half / n as f64;
    let origin = center - Complex64::new(half, half);
    let reach = cell * std::f64::consts::FRAC_1_SQRT_2;
    let states: Vec<CellState> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % n, idx / n);
            let u = origin + Complex64::new((i as f64 + 0.5) * cell, (j as f64 + 0.5) * cell);
            let z = chart.to_sphere(u);
            let (w, d) = f.iterate_with_derivative(z, k);
            let g = chordal_distance(w, target.center) - target.radius;
            let lip = safety * d * conformal(u) * reach;
            if g + lip < 0.0 {
                CellState::Inside
            } else if g - lip > 0.0 {
                CellState::Outside
            } else {
                CellState::Boundary
            }
        })
        .collect();
    let mut member = vec![false; n * n];
    let si = (((seed_u.re - origin.re) / cell) as usize).min(n - 1);
    let sj = (((seed_u.im - origin.im) / cell) as usize).min(n - 1);
    let mut queue = VecDeque::new();
    let start = sj * n + si;
    member[start] = true;
    queue.push_back((si, sj));
    let mut touches = false;
    while let Some((i, j)) = queue.pop_front() {
        if i == 0 || j == 0 || i + 1 == n || j + 1 == n {
            touches = true;
        }
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                if a < 0 || b < 0 || a >= n as i64 || b >= n as i64 {
                    continue;
                }
                let t = b as usize * n + a as usize;
                if !member[t] && states[t] != CellState::Outside {
                    member[t] = true;
                    queue.push_back((a as usize, b as usize));
                }
            }
        }
    }
    let simply_connected = !has_hole(&member, n);
    Classified {
        cover: CellCover { chart, origin, cell, n, states, member, simply_connected, unbounded: false },
        unbounded_frame: touches,
    }
}

/// Whether some non-member cell is cut off from the frame (4-connectivity).
fn has_hole(member: &[bool], n: usize) -> bool {
    let mut seen = vec![false; n * n];
    let mut queue = VecDeque::new();
    for t in 0..n {
        for &(i, j) in &[(t, 0), (t, n - 1), (0, t), (n - 1, t)] {
            let k = j * n + i;
            if !member[k] && !seen[k] {
                seen[k] = true;
                queue.push_back((i, j));
            }
        }
    }
    while let Some((i, j)) = queue.pop_front() {
        let nb = [(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)];
        for (a, b) in nb {
            if a < n && b < n {
                let k = b * n + a;
                if !member[k] && !seen[k] {
                    seen[k] = true;
                    queue.push_back((a, b));
                }
            }
        }
    }
    (0..n * n).any(|k| !member[k] && !seen[k])
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChainFlag {
    /// Critical point and preimage counts disagree.
    DegreeUncertain,
    NotSimplyConnected { level: usize },
    AmbiguousCritical { level: usize },
    Unbounded { level: usize },
    AmbiguousPreimages,
    TooManyPreimages,
    RadiusAboveCap,
}

#[derive(Clone, Debug)]
pub struct PullbackLevel {
    pub cover: CellCover,
    pub level_degree: usize,
    pub critical_hits: Vec<(SpherePoint, usize)>,
    pub diameter_bound: f64,
}

/// `W_m = B(f^m(x), r)` pulled back to `W_0` one step at a time; `levels[j]` is `W_j`.
#[derive(Clone, Debug)]
pub struct PullbackChain {
    pub base: SpherePoint,
    pub radius: f64,
    pub length: usize,
    pub levels: Vec<PullbackLevel>,
    /// Product of the level degrees.
    pub total_degree: usize,
    /// Preimages of a generic target point inside `W_0`.
    pub preimage_degree: Option<usize>,
    pub flags: Vec<ChainFlag>,
}

impl PullbackChain {
    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }

    pub fn degree_uncertain(&self) -> bool {
        self.flags.contains(&ChainFlag::DegreeUncertain)
    }

    pub fn dump(&self) -> ChainDump {
        ChainDump {
            base: self.base,
            radius: self.radius,
            length: self.length,
            total_degree: self.total_degree,
            preimage_degree: self.preimage_degree,
            flags: self.flags.clone(),
            levels: self
                .levels
                .iter()
                .enumerate()
                .map(|(j, l)| LevelDump {
                    level: j,
                    degree: l.level_degree,
                    critical_hits: l.critical_hits.iter().map(|h| h.0).collect(),
                    diameter_bound: l.diameter_bound,
                    cover: l.cover.dump(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelDump {
    pub level: usize,
    pub degree: usize,
    pub critical_hits: Vec<SpherePoint>,
    pub diameter_bound: f64,
    pub cover: CoverDump,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainDump {
    pub base: SpherePoint,
    pub radius: f64,
    pub length: usize,
    pub total_degree: usize,
    pub preimage_degree: Option<usize>,
    pub flags: Vec<ChainFlag>,
    pub levels: Vec<LevelDump>,
}

const PREIMAGE_LIMIT: usize = 1 << 16;

fn point_bits(p: SpherePoint) -> u64 {
    match p {
        SpherePoint::Finite(z) => mix64(z.re.to_bits() ^ mix64(z.im.to_bits())),
        SpherePoint::Infinity => u64::MAX,
    }
}

pub fn pullback_chain(f: &RationalMap, x: SpherePoint, r: f64, m: usize, resolution: f64) -> Result<PullbackChain> {
    let opts = PullbackOptions { resolution, ..PullbackOptions::default() };
    pullback_chain_with(f, x, r, m, &opts)
}

pub fn pullback_chain_with(f: &RationalMap, x: SpherePoint, r: f64, m: usize, opts: &PullbackOptions) -> Result<PullbackChain> {
    if !(r > 0.0 && r < 2.0) {
        return Err(LabError::InvalidInput(format!("pull-back radius {r} outside (0, 2)")));
    }
    if m == 0 {
        return Err(LabError::InvalidInput("pull-back length must be at least 1".into()));
    }
    if !(opts.resolution > 0.0 && opts.resolution <= 0.5) {
        return Err(LabError::InvalidInput(format!("resolution {} outside (0, 1/2]", opts.resolution)));
    }
    let crit = f.critical_points_raw()?;
    let orbit = f.orbit(x, m);
    let target = SphereBall { center: orbit[m], radius: r };
    let mut flags = Vec::new();
    if r > opts.radius_cap {
        flags.push(ChainFlag::RadiusAboveCap);
    }
    let base_n = (1.0 / opts.resolution).ceil() as usize;
    let mut levels = Vec::with_capacity(m);
    for j in (0..m).rev() {
        let mut n = base_n;
        let mut refinements = 0;
        let level = loop {
            let cover = component_cover(f, &target, m - j, orbit[j], n, opts.safety);
            let mut ambiguous = false;
            let mut hits = Vec::new();
            for &(c, ell) in &crit {
                match cover.membership(c) {
                    Membership::In => hits.push((c, ell)),
                    Membership::Ambiguous => ambiguous = true,
                    Membership::Out => {}
                }
            }
            if ambiguous && refinements < opts.max_refinements {
                n *= 2;
                refinements += 1;
                continue;
            }
            if ambiguous {
                flags.push(ChainFlag::AmbiguousCritical { level: j });
            }
            if !cover.simply_connected {
                flags.push(ChainFlag::NotSimplyConnected { level: j });
            }
            if cover.unbounded {
                flags.push(ChainFlag::Unbounded { level: j });
            }
            let level_degree = 1 + hits.iter().map(|h| h.1 - 1).sum::<usize>();
            let diameter_bound = cover.diameter_bound();
            break PullbackLevel { cover, level_degree, critical_hits: hits, diameter_bound };
        };
        levels.push(level);
    }
    levels.reverse();
    let total_degree = levels.iter().fold(1usize, |a, l| a.saturating_mul(l.level_degree));

    let mut rng = stream_rng(point_bits(x) ^ mix64(r.to_bits()), m as u64);
    let mut preimage_degree = None;
    for _ in 0..=opts.redraws {
        let y = point_at_distance(target.center, 0.5 * r, rng.gen_range(0.0..std::f64::consts::TAU));
        match count_preimages(f, &levels, y)? {
            PreimageCount::Count(c) => {
                preimage_degree = Some(c);
                break;
            }
            PreimageCount::TooMany => {
                flags.push(ChainFlag::TooManyPreimages);
                break;
            }
            PreimageCount::Ambiguous => {}
        }
    }
    match preimage_degree {
        Some(c) if c != total_degree => flags.push(ChainFlag::DegreeUncertain),
        None => {
            if !flags.contains(&ChainFlag::TooManyPreimages) {
                flags.push(ChainFlag::AmbiguousPreimages);
            }
            flags.push(ChainFlag::DegreeUncertain);
        }
        _ => {}
    }
    Ok(PullbackChain { base: x, radius: r, length: m, levels, total_degree, preimage_degree, flags })
}

enum PreimageCount {
    Count(usize),
    Ambiguous,
    TooMany,
}

fn count_preimages(f: &RationalMap, levels: &[PullbackLevel], y: SpherePoint) -> Result<PreimageCount> {
    let mut current = vec![y];
    for level in levels.iter().rev() {
        let mut next = Vec::new();
        for &q in &current {
            for z in f.preimage_list(q)? {
                match level.cover.membership(z) {
                    Membership::In => next.push(z),
                    Membership::Ambiguous => return Ok(PreimageCount::Ambiguous),
                    Membership::Out => {}
                }
            }
        }
        if next.len() > PREIMAGE_LIMIT {
            return Ok(PreimageCount::TooMany);
        }
        current = next;
    }
    Ok(PreimageCount::Count(current.len()))
}

pub fn semilocal_degree(f: &RationalMap, x: SpherePoint, r: f64, m: usize) -> Result<usize> {
    Ok(pullback_chain(f, x, r, m, DEFAULT_RESOLUTION)?.total_degree)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegreeVerdict {
    /// Semi-hyperbolic-consistent.
    Bounded,
    /// Non-semi-hyperbolic signature.
    Growing,
    Inconclusive,
}

impl DegreeVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            DegreeVerdict::Bounded => "bounded",
            DegreeVerdict::Growing => "growing",
            DegreeVerdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegreeScan {
    pub radius: f64,
    /// Entry `m - 1` is the largest degree of `f^m` over the sample.
    pub max_degree_per_m: Vec<usize>,
    /// Critical-point degrees of chains whose two degree counts disagree.
    pub flagged_max_degree_per_m: Vec<usize>,
    pub verdict: DegreeVerdict,
    pub chains: usize,
    pub flagged: usize,
    /// A point attaining the largest degree, with its `m`.
    pub witness: Option<(SpherePoint, usize)>,
    /// A neutral cycle exists; its pull-backs reach critical points only far
    /// beyond the scanned `m`, so a stable maximum is not reported as bounded.
    pub neutral_cycle: bool,
}

/// Scan points: atoms of a short sampling run plus the landmarks of `f`.
pub fn scan_points(f: &RationalMap, sample_points: usize, seed: u64) -> Result<Vec<SpherePoint>> {
    scan_points_with(f, &CriticalSet::compute(f, &Default::default())?, sample_points, seed)
}

/// As [`scan_points`], with landmarks taken from a given critical set.
pub fn scan_points_with(f: &RationalMap, set: &CriticalSet, sample_points: usize, seed: u64) -> Result<Vec<SpherePoint>> {
    let mut pts = if sample_points > 0 { sample_measure(f, sample_points, 101, 100, seed)?.atoms().to_vec() } else { Vec::new() };
    pts.extend(landmarks(f, set)?);
    Ok(pts)
}

pub fn semihyperbolicity_scan(f: &RationalMap, r: f64, m_max: usize, sample_points: usize, seed: u64) -> Result<DegreeScan> {
    let pts = scan_points(f, sample_points, seed)?;
    semihyperbolicity_scan_at(f, r, m_max, &pts, &PullbackOptions::default())
}

/// Flagged fraction above which a scan is inconclusive.
const FLAGGED_LIMIT: f64 = 0.2;

pub fn semihyperbolicity_scan_at(f: &RationalMap, r: f64, m_max: usize, points: &[SpherePoint], opts: &PullbackOptions) -> Result<DegreeScan> {
    if m_max == 0 {
        return Err(LabError::InvalidInput("m_max must be at least 1".into()));
    }
    let jobs: Vec<(SpherePoint, usize)> = points.iter().flat_map(|&p| (1..=m_max).map(move |m| (p, m))).collect();
    let results: Vec<Result<PullbackChain>> = jobs.par_iter().map(|&(p, m)| pullback_chain_with(f, p, r, m, opts)).collect();
    let mut max_deg = vec![0usize; m_max];
    let mut flagged_max = vec![0usize; m_max];
    let mut flagged = 0;
    let mut witness = None;
    let mut best = 0;
    for (res, &(p, m)) in results.into_iter().zip(&jobs) {
        let c = res?;
        if c.degree_uncertain() {
            flagged += 1;
            if !c.flags.iter().any(|fl| matches!(fl, ChainFlag::AmbiguousCritical { .. })) {
                flagged_max[m - 1] = flagged_max[m - 1].max(c.total_degree);
            }
            continue;
        }
        max_deg[m - 1] = max_deg[m - 1].max(c.total_degree);
        if c.total_degree > best {
            best = c.total_degree;
            witness = Some((p, m));
        }
    }
    let chains = jobs.len();
    let tail = m_max - m_max / 3;
    let head_max = max_deg[..tail].iter().copied().max().unwrap_or(0);
    let tail_max = max_deg[tail..].iter().copied().max().unwrap_or(0);
    let unconfirmed = flagged_max[tail..].iter().copied().max().unwrap_or(0) > head_max.max(tail_max);
    let neutral_cycle = !neutral_cycles(f)?.is_empty();
    let verdict = if tail_max > head_max {
        DegreeVerdict::Growing
    } else if flagged as f64 > FLAGGED_LIMIT * chains as f64 || unconfirmed || neutral_cycle {
        DegreeVerdict::Inconclusive
    } else {
        DegreeVerdict::Bounded
    };
    Ok(DegreeScan { radius: r, max_degree_per_m: max_deg, flagged_max_degree_per_m: flagged_max, verdict, chains, flagged, witness, neutral_cycle })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GoodTimeRecord {
    pub x: SpherePoint,
    pub degree_bound: usize,
    pub horizon: usize,
    pub good_times: Vec<usize>,
    /// `(n, #(good times <= n) / n)` for `n = 1..=horizon`.
    pub density_curve: Vec<(usize, f64)>,
    /// Minimum of the density curve over the last half of the horizon.
    pub density: f64,
    /// Chains counted as not good because they were flagged.
    pub flagged: usize,
}

pub fn tce_density(f: &RationalMap, x: SpherePoint, r: f64, degree_bound: usize, horizon: usize) -> Result<GoodTimeRecord> {
    if horizon < 10 {
        return Err(LabError::InvalidInput(format!("horizon {horizon} must be at least 10")));
    }
    let outcomes: Vec<Result<(bool, bool)>> = (1..=horizon)
        .into_par_iter()
        .map(|m| {
            let c = pullback_chain(f, x, r, m, DEFAULT_RESOLUTION)?;
            let bad = c.degree_uncertain();
            Ok((!bad && c.total_degree <= degree_bound, bad))
        })
        .collect();
    let mut good_times = Vec::new();
    let mut flagged = 0;
    let mut density_curve = Vec::with_capacity(horizon);
    for (k, o) in outcomes.into_iter().enumerate() {
        let (good, bad) = o?;
        if good {
            good_times.push(k + 1);
        }
        flagged += bad as usize;
        density_curve.push((k + 1, good_times.len() as f64 / (k + 1) as f64));
    }
    let density = density_curve[horizon / 2..].iter().map(|p| p.1).fold(1.0, f64::min);
    Ok(GoodTimeRecord { x, degree_bound, horizon, good_times, density_curve, density, flagged })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShrinkProfile {
    /// Entry `m - 1` bounds the largest diameter of a component of `f^{-m}(B(x, r))`.
    pub per_m_max_diameter: Vec<f64>,
    pub lambda_hat: f64,
    pub excluded: usize,
    /// Center and `m` of the largest diameter at the final `m`.
    pub witness: Option<SpherePoint>,
}

/// Backward orbit of `x` of length `m`, choosing preimages with `rng`.
fn random_backward_orbit(f: &RationalMap, x: SpherePoint, m: usize, rng: &mut impl Rng) -> Result<Vec<SpherePoint>> {
    let mut out = vec![x];
    for _ in 0..m {
        let pre = f.preimage_list(*out.last().unwrap())?;
        out.push(pre[rng.gen_range(0..pre.len())]);
    }
    Ok(out)
}

/// Backward orbit that follows a cycle: each step takes the preimage
/// closest to the cycle point preceding the current one.
pub(crate) fn cycle_backward_orbit(f: &RationalMap, x: SpherePoint, cycle: &[SpherePoint], phase: usize, m: usize) -> Result<Vec<SpherePoint>> {
    let k = cycle.len();
    let mut out = vec![x];
    let mut at = phase;
    for _ in 0..m {
        at = (at + k - 1) % k;
        let pre = f.preimage_list(*out.last().unwrap())?;
        let best = pre
            .into_iter()
            .min_by(|a, b| chordal_distance(*a, cycle[at]).total_cmp(&chordal_distance(*b, cycle[at])))
            .unwrap();
        out.push(best);
    }
    Ok(out)
}

/// Pulls `start` back along the cycle until it is within `reach` of it;
/// returns the point and the cycle phase it is next to.
pub(crate) fn approach_cycle(f: &RationalMap, start: SpherePoint, cycle: &[SpherePoint], reach: f64) -> Result<Option<(SpherePoint, usize)>> {
    let mut x = start;
    let k = cycle.len();
    let mut at = (0..k).min_by(|&a, &b| chordal_distance(x, cycle[a]).total_cmp(&chordal_distance(x, cycle[b]))).unwrap();
    for _ in 0..100_000 {
        if chordal_distance(x, cycle[at]) < reach {
            return Ok(Some((x, at)));
        }
        let orb = cycle_backward_orbit(f, x, cycle, at, 1)?;
        x = orb[1];
        at = (at + k - 1) % k;
    }
    Ok(None)
}

pub fn expshrink_decay(f: &RationalMap, sample_points: usize, r: f64, m_max: usize, seed: u64) -> Result<ShrinkProfile> {
    if m_max < 2 {
        return Err(LabError::InvalidInput("m_max must be at least 2".into()));
    }
    let mu = sample_measure(f, sample_points.max(1), 101, 100, seed)?;
    let mut rng = stream_rng(seed, 0xE5);
    let mut orbits = Vec::new();
    for &x in mu.atoms().iter().take(sample_points) {
        orbits.push(random_backward_orbit(f, x, m_max, &mut rng)?);
    }
    // backward orbits converging to neutral cycles, started a few radii away
    for cycle in neutral_cycles(f)? {
        if let Some(&start) = mu.atoms().first() {
            if let Some((x, at)) = approach_cycle(f, start, &cycle, 4.0 * r)? {
                orbits.push(cycle_backward_orbit(f, x, &cycle, at, m_max)?);
            }
        }
    }
    shrink_along(f, &orbits, r, m_max)
}

fn shrink_along(f: &RationalMap, orbits: &[Vec<SpherePoint>], r: f64, m_max: usize) -> Result<ShrinkProfile> {
    let n = (1.0 / DEFAULT_RESOLUTION) as usize;
    let jobs: Vec<(usize, usize)> = (0..orbits.len()).flat_map(|o| (1..=m_max).map(move |m| (o, m))).collect();
    let diam: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(o, m)| {
            let target = SphereBall { center: orbits[o][0], radius: r };
            let cover = component_cover(f, &target, m, orbits[o][m], n, 2.0);
            (cover.simply_connected && !cover.unbounded).then(|| cover.diameter_bound())
        })
        .collect();
    let mut per_m = vec![0.0f64; m_max];
    let mut excluded = 0;
    let mut witness = None;
    for (&(o, m), d) in jobs.iter().zip(diam) {
        match d {
            Some(d) => {
                if d > per_m[m - 1] {
                    per_m[m - 1] = d;
                    if m == m_max {
                        witness = Some(orbits[o][0]);
                    }
                }
            }
            None => excluded += 1,
        }
    }
    let lo = m_max / 2;
    let xs: Vec<f64> = (lo..=m_max).filter(|&m| per_m[m - 1] > 0.0).map(|m| m as f64).collect();
    let ys: Vec<f64> = (lo..=m_max).filter(|&m| per_m[m - 1] > 0.0).map(|m| per_m[m - 1].ln()).collect();
    let lambda_hat = least_squares(&xs, &ys).map_or(f64::NAN, |(s, _)| (-s).exp());
    Ok(ShrinkProfile { per_m_max_diameter: per_m, lambda_hat, excluded, witness })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComponentMass {
    pub seed: SpherePoint,
    pub degree: usize,
    pub atoms: usize,
    pub mass: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JacobianTrial {
    pub center: SpherePoint,
    pub radius: f64,
    pub m: usize,
    pub ball_mass: f64,
    pub components: Vec<ComponentMass>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JacobianReport {
    pub trials: Vec<JacobianTrial>,
    pub max_deviation: f64,
    pub skipped: usize,
}

/// Atoms a component must hold for its trial to count.
pub const JACOBIAN_RESOLUTION: usize = 1000;
pub const JACOBIAN_RADIUS: f64 = 0.1;

/// Compares `mass(W) deg^m / (D mass(V))` with 1 over every pull-back
/// component `W` of random balls `V` centered at atoms, `m` in 1..=3.
pub fn jacobian_consistency(f: &RationalMap, mu: &EmpiricalMeasure, trials: usize, seed: u64) -> Result<JacobianReport> {
    if trials == 0 {
        return Err(LabError::InvalidInput("need at least one trial".into()));
    }
    if mu.is_empty() {
        return Err(LabError::InvalidInput("empty measure".into()));
    }
    let mut rng = stream_rng(seed, 0x1AC0);
    let mut out = Vec::new();
    let mut skipped = 0;
    let mut attempts = 0;
    while out.len() < trials && attempts < 4 * trials {
        attempts += 1;
        let center = mu.atoms()[rng.gen_range(0..mu.len())];
        let m = rng.gen_range(1..=3usize);
        match jacobian_trial(f, mu, center, JACOBIAN_RADIUS, m)? {
            Some(t) => out.push(t),
            None => skipped += 1,
        }
    }
    let max_deviation = out.iter().flat_map(|t| t.components.iter().map(|c| c.deviation)).fold(0.0, f64::max);
    Ok(JacobianReport { trials: out, max_deviation, skipped })
}

/// One trial; `None` when a component is unresolved or ambiguous.
pub fn jacobian_trial(f: &RationalMap, mu: &EmpiricalMeasure, center: SpherePoint, r: f64, m: usize) -> Result<Option<JacobianTrial>> {
    let v = SphereBall { center, radius: r };
    let vmass = mu.ball_count(&v);
    if vmass.atoms < JACOBIAN_RESOLUTION {
        return Ok(None);
    }
    let mut leaves = vec![center];
    for _ in 0..m {
        let mut next = Vec::new();
        for &q in &leaves {
            next.extend(f.preimage_list(q)?);
        }
        leaves = next;
    }
    let n = (1.0 / DEFAULT_RESOLUTION) as usize;
    let mut assigned = vec![false; leaves.len()];
    let mut comps = Vec::new();
    let scale = (f.degree() as f64).powi(m as i32);
    for s in 0..leaves.len() {
        if assigned[s] {
            continue;
        }
        let cover = component_cover(f, &v, m, leaves[s], n, 2.0);
        if !cover.simply_connected || cover.unbounded {
            return Ok(None);
        }
        let mut degree = 0;
        for (t, &z) in leaves.iter().enumerate() {
            match cover.membership(z) {
                Membership::In => {
                    degree += 1;
                    assigned[t] = true;
                }
                Membership::Ambiguous => return Ok(None),
                Membership::Out => {}
            }
        }
        if degree == 0 {
            return Ok(None);
        }
        let reach = SphereBall { center: leaves[s], radius: (cover.diameter_bound() * 1.01).min(2.0) };
        let mut count = 0;
        let mut weight = Vec::new();
        for i in mu.atoms_in(&reach) {
            let a = mu.atoms()[i];
            let inside = match cover.membership(a) {
                Membership::In => true,
                Membership::Ambiguous => v.contains(f.iterate_point(a, m)),
                Membership::Out => false,
            };
            if inside {
                count += 1;
                weight.push(mu.weights()[i]);
            }
        }
        if count < JACOBIAN_RESOLUTION {
            return Ok(None);
        }
        weight.sort_by(f64::total_cmp);
        let mass: f64 = weight.iter().sum();
        let deviation = (mass * scale / (degree as f64 * vmass.mass) - 1.0).abs();
        comps.push(ComponentMass { seed: leaves[s], degree, atoms: count, mass, deviation });
    }
    Ok(Some(JacobianTrial { center, radius: r, m, ball_mass: vmass.mass, components: comps }))
}
