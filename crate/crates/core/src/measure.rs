//! Empirical approximation of the measure of maximal entropy by backward iteration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rstar::primitives::GeomWithData;
use rstar::RTree;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::map::RationalMap;
use crate::rng::{mix64, split_seed, stream_rng};
use crate::sphere::{chordal_distance, SphereBall, SpherePoint};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_BURN_IN: usize = 100;
pub const BOOTSTRAP_REPLICATES: usize = 200;
/// Fewer independent chains than this are split into contiguous blocks for the bootstrap.
const MIN_BOOTSTRAP_UNITS: usize = 50;
const BLOCKS_PER_SHORT_RUN: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub map: String,
    pub seed: u64,
    pub chains: usize,
    pub burn_in: usize,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainFailure {
    pub chain: usize,
    pub step: usize,
    pub message: String,
}

type IndexedAtom = GeomWithData<[f64; 3], u32>;

/// Weighted atoms approximating the measure of maximal entropy.
#[derive(Clone, Debug)]
pub struct EmpiricalMeasure {
    pub provenance: Provenance,
    /// Provenance of every sampling run merged in, in merge order.
    pub sources: Vec<Provenance>,
    atoms: Vec<SpherePoint>,
    weights: Vec<f64>,
    /// Start offsets of independently sampled runs (chains), plus the end.
    chain_offsets: Vec<usize>,
    pub failures: Vec<ChainFailure>,
    uniform: bool,
    index: OnceLock<RTree<IndexedAtom>>,
    units: OnceLock<(Vec<usize>, Vec<f64>)>,
}

/// Point of the unit sphere in `R^3`; Euclidean distance there is the chordal distance.
pub(crate) fn embed(p: SpherePoint) -> [f64; 3] {
    match p {
        SpherePoint::Infinity => [0.0, 0.0, 1.0],
        SpherePoint::Finite(z) => {
            let n = z.norm_sqr();
            if n > 1e150 {
                let w = crate::sphere::cinv(z);
                let m = w.norm_sqr();
                return [2.0 * w.re / (1.0 + m), -2.0 * w.im / (1.0 + m), (1.0 - m) / (1.0 + m)];
            }
            [2.0 * z.re / (1.0 + n), 2.0 * z.im / (1.0 + n), (n - 1.0) / (n + 1.0)]
        }
    }
}

fn ball_hash(b: &SphereBall) -> u64 {
    let (re, im) = match b.center {
        SpherePoint::Finite(z) => (z.re.to_bits(), z.im.to_bits()),
        SpherePoint::Infinity => (u64::MAX, u64::MAX),
    };
    mix64(re ^ mix64(im ^ mix64(b.radius.to_bits())))
}

/// Concentric ball counts around one center, up to a fixed reach.
#[derive(Clone, Debug)]
pub struct RadialProfile {
    distances: Vec<f64>,
    cumulative: Vec<f64>,
    reach: f64,
    total_atoms: usize,
    uniform: bool,
}

impl RadialProfile {
    /// Count and mass of the open ball of radius `r <= reach`.
    pub fn ball(&self, r: f64) -> BallCount {
        debug_assert!(r <= self.reach * (1.0 + 1e-12));
        let n = self.distances.partition_point(|&d| d < r);
        let mass = if n == 0 {
            0.0
        } else if self.uniform {
            n as f64 / self.total_atoms as f64
        } else {
            self.cumulative[n - 1]
        };
        BallCount { atoms: n, mass }
    }
}

/// Atoms of a ball and their weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallCount {
    pub atoms: usize,
    pub mass: f64,
}

impl EmpiricalMeasure {
    fn from_parts(
        provenance: Provenance,
        sources: Vec<Provenance>,
        atoms: Vec<SpherePoint>,
        weights: Vec<f64>,
        chain_offsets: Vec<usize>,
        failures: Vec<ChainFailure>,
    ) -> Self {
        let uniform = weights.windows(2).all(|w| w[0] == w[1]);
        EmpiricalMeasure {
            provenance,
            sources,
            atoms,
            weights,
            chain_offsets,
            failures,
            uniform,
            index: OnceLock::new(),
            units: OnceLock::new(),
        }
    }

    pub fn empty(map: impl Into<String>) -> Self {
        let provenance = Provenance { map: map.into(), seed: 0, chains: 0, burn_in: 0, depth: 0 };
        Self::from_parts(provenance, Vec::new(), Vec::new(), Vec::new(), vec![0], Vec::new())
    }

    pub fn map_name(&self) -> &str {
        &self.provenance.map
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[SpherePoint] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        sorted_sum(self.weights.clone())
    }

    fn index(&self) -> &RTree<IndexedAtom> {
        self.index.get_or_init(|| {
            let pts = self.atoms.iter().enumerate().map(|(i, &a)| IndexedAtom::new(embed(a), i as u32)).collect();
            RTree::bulk_load(pts)
        })
    }

    /// Indices of the atoms inside an open chordal ball.
    pub fn atoms_in(&self, b: &SphereBall) -> Vec<usize> {
        if b.radius >= 2.0 {
            return (0..self.atoms.len()).filter(|&i| b.contains(self.atoms[i])).collect();
        }
        let q = embed(b.center);
        let slack = b.radius * (1.0 + 1e-9) + 1e-15;
        let mut hits: Vec<usize> = self
            .index()
            .locate_within_distance(q, slack * slack)
            .map(|g| g.data as usize)
            .filter(|&i| b.contains(self.atoms[i]))
            .collect();
        hits.sort_unstable();
        hits
    }

    fn mass_of(&self, idx: &[usize]) -> f64 {
        if self.atoms.is_empty() {
            return 0.0;
        }
        if self.uniform {
            return idx.len() as f64 / self.atoms.len() as f64;
        }
        sorted_sum(idx.iter().map(|&i| self.weights[i]).collect())
    }

    /// Sorted distances from `center` of the atoms within `radius`, for
    /// answering many concentric ball queries with one index lookup.
    pub fn radial_profile(&self, center: SpherePoint, radius: f64) -> RadialProfile {
        let idx = self.atoms_in(&SphereBall { center, radius: radius.min(2.0) });
        let mut pairs: Vec<(f64, f64)> = idx.iter().map(|&i| (chordal_distance(center, self.atoms[i]), self.weights[i])).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut acc = 0.0;
        let cumulative = pairs.iter().map(|p| {
            acc += p.1;
            acc
        });
        let cumulative = cumulative.collect();
        RadialProfile {
            distances: pairs.iter().map(|p| p.0).collect(),
            cumulative,
            reach: radius,
            total_atoms: self.atoms.len(),
            uniform: self.uniform,
        }
    }

    pub fn ball_count(&self, b: &SphereBall) -> BallCount {
        let idx = self.atoms_in(b);
        BallCount { atoms: idx.len(), mass: self.mass_of(&idx) }
    }

    /// Resampling units for the bootstrap: whole chains when there are many,
    /// otherwise contiguous blocks within chains.
    fn bootstrap_units(&self) -> &(Vec<usize>, Vec<f64>) {
        self.units.get_or_init(|| {
            let units = self.unit_offsets();
            let totals = units.windows(2).map(|w| self.weights[w[0]..w[1]].iter().sum()).collect();
            (units, totals)
        })
    }

    fn unit_offsets(&self) -> Vec<usize> {
        let chains = self.chain_offsets.len().saturating_sub(1);
        if chains >= MIN_BOOTSTRAP_UNITS {
            return self.chain_offsets.clone();
        }
        let per_chain = BLOCKS_PER_SHORT_RUN.div_ceil(chains.max(1));
        let mut units = vec![0];
        for w in self.chain_offsets.windows(2) {
            let len = w[1] - w[0];
            let k = per_chain.min(len.max(1));
            for j in 1..=k {
                let end = w[0] + len * j / k;
                if end > *units.last().unwrap() {
                    units.push(end);
                }
            }
        }
        units
    }

    /// Estimate and bootstrap standard error of the mass of `b`.
    pub fn ball_mass(&self, b: &SphereBall) -> (f64, f64) {
        let idx = self.atoms_in(b);
        let estimate = self.mass_of(&idx);
        let (units, totals) = self.bootstrap_units();
        let n_units = units.len() - 1;
        if n_units < 2 {
            return (estimate, 0.0);
        }
        let unit_of = |i: usize| units.partition_point(|&o| o <= i) - 1;
        let mut inside = vec![0.0; n_units];
        for &i in &idx {
            inside[unit_of(i)] += self.weights[i];
        }
        let mut rng = stream_rng(split_seed(self.provenance.seed, 0xB007), ball_hash(b));
        let reps: Vec<f64> = (0..BOOTSTRAP_REPLICATES)
            .map(|_| {
                let (mut num, mut den) = (0.0, 0.0);
                for _ in 0..n_units {
                    let u = rng.gen_range(0..n_units);
                    num += inside[u];
                    den += totals[u];
                }
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            })
            .collect();
        let mean = reps.iter().sum::<f64>() / reps.len() as f64;
        let var = reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64;
        (estimate, var.sqrt())
    }

    /// Weighted union; each side keeps weight proportional to its atom count.
    pub fn merge(&self, other: &EmpiricalMeasure) -> Result<EmpiricalMeasure> {
        if self.map_name() != other.map_name() {
            return Err(LabError::MapMismatch(self.map_name().to_string(), other.map_name().to_string()));
        }
        if other.is_empty() {
            return Ok(self.clone());
        }
        if self.is_empty() {
            return Ok(other.clone());
        }
        let (n1, n2) = (self.len() as f64, other.len() as f64);
        let (s1, s2) = (n1 / (n1 + n2) / self.total_weight(), n2 / (n1 + n2) / other.total_weight());
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        let mut weights: Vec<f64> = self.weights.iter().map(|w| w * s1).collect();
        weights.extend(other.weights.iter().map(|w| w * s2));
        if self.uniform && other.uniform {
            let w = 1.0 / atoms.len() as f64;
            weights.iter_mut().for_each(|x| *x = w);
        }
        let mut offsets = self.chain_offsets.clone();
        offsets.extend(other.chain_offsets[1..].iter().map(|o| o + self.len()));
        let mut sources = self.source_list();
        sources.extend(other.source_list());
        let provenance = Provenance {
            map: self.provenance.map.clone(),
            seed: self.provenance.seed ^ other.provenance.seed,
            chains: self.provenance.chains + other.provenance.chains,
            burn_in: self.provenance.burn_in.min(other.provenance.burn_in),
            depth: self.provenance.depth.max(other.provenance.depth),
        };
        let mut failures = self.failures.clone();
        failures.extend(other.failures.iter().cloned());
        Ok(Self::from_parts(provenance, sources, atoms, weights, offsets, failures))
    }

    fn source_list(&self) -> Vec<Provenance> {
        if self.sources.is_empty() {
            vec![self.provenance.clone()]
        } else {
            self.sources.clone()
        }
    }

    /// Writes `re,im,weight` rows and a JSON sidecar next to `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| LabError::io(path.display().to_string(), e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(["re", "im", "weight"]).map_err(|e| csv_error(path, e))?;
        for (a, wt) in self.atoms.iter().zip(&self.weights) {
            let (re, im) = match a {
                SpherePoint::Finite(z) => (z.re.to_string(), z.im.to_string()),
                SpherePoint::Infinity => ("inf".to_string(), "inf".to_string()),
            };
            w.write_record([re, im, wt.to_string()]).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| LabError::io(path.display().to_string(), e))?;
        let side = sidecar_path(path);
        let meta = Sidecar {
            schema_version: SCHEMA_VERSION,
            provenance: self.provenance.clone(),
            sources: self.sources.clone(),
            chain_offsets: self.chain_offsets.clone(),
            failures: self.failures.clone(),
            atoms: self.atoms.len(),
        };
        let mut f = BufWriter::new(File::create(&side).map_err(|e| LabError::io(side.display().to_string(), e))?);
        serde_json::to_writer_pretty(&mut f, &meta).map_err(|e| LabError::json(side.display().to_string(), e))?;
        writeln!(f).map_err(|e| LabError::io(side.display().to_string(), e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EmpiricalMeasure> {
        let side = sidecar_path(path);
        let meta: Sidecar = serde_json::from_reader(File::open(&side).map_err(|e| LabError::io(side.display().to_string(), e))?)
            .map_err(|e| LabError::json(side.display().to_string(), e))?;
        if meta.schema_version != SCHEMA_VERSION {
            return Err(LabError::Parse(format!(
                "{}: schema version {} (expected {SCHEMA_VERSION})",
                side.display(),
                meta.schema_version
            )));
        }
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut atoms = Vec::with_capacity(meta.atoms);
        let mut weights = Vec::with_capacity(meta.atoms);
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let field = |k: usize| -> Result<&str> {
                rec.get(k).ok_or_else(|| LabError::Parse(format!("{}: row {} is short", path.display(), line + 2)))
            };
            let num = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|_| LabError::Parse(format!("{}: bad number {s:?}", path.display())))
            };
            let (re, im) = (field(0)?, field(1)?);
            atoms.push(if re == "inf" { SpherePoint::Infinity } else { SpherePoint::Finite(Complex64::new(num(re)?, num(im)?)) });
            let w = num(field(2)?)?;
            if !(w > 0.0) {
                return Err(LabError::Parse(format!("{}: non-positive weight on row {}", path.display(), line + 2)));
            }
            weights.push(w);
        }
        if atoms.len() != meta.atoms || meta.chain_offsets.last() != Some(&atoms.len()) {
            return Err(LabError::Parse(format!("{}: atom count does not match the sidecar", path.display())));
        }
        Ok(Self::from_parts(meta.provenance, meta.sources, atoms, weights, meta.chain_offsets, meta.failures))
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    schema_version: u32,
    provenance: Provenance,
    sources: Vec<Provenance>,
    chain_offsets: Vec<usize>,
    failures: Vec<ChainFailure>,
    atoms: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn csv_error(path: &Path, e: csv::Error) -> LabError {
    LabError::Parse(format!("{}: {e}", path.display()))
}

/// Order-independent sum of positive terms.
fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Samples `chains * (depth - burn_in)` atoms by random backward orbits.
///
/// Each step picks one of the `deg f` preimages uniformly, counted with
/// multiplicity. Chain `i` draws from its own stream of `seed`.
pub fn sample_measure(f: &RationalMap, chains: usize, depth: usize, burn_in: usize, seed: u64) -> Result<EmpiricalMeasure> {
    if chains == 0 {
        return Err(LabError::InvalidInput("need at least one chain".into()));
    }
    if depth <= burn_in {
        return Err(LabError::InvalidInput(format!("depth {depth} must exceed burn-in {burn_in}")));
    }
    let runs: Vec<std::result::Result<Vec<SpherePoint>, ChainFailure>> =
        (0..chains).into_par_iter().map(|i| run_chain(f, i, depth, burn_in, seed)).collect();
    let mut atoms = Vec::with_capacity(chains * (depth - burn_in));
    let mut offsets = vec![0];
    let mut failures = Vec::new();
    for run in runs {
        match run {
            Ok(pts) => {
                atoms.extend(pts);
                offsets.push(atoms.len());
            }
            Err(e) => failures.push(e),
        }
    }
    if atoms.is_empty() {
        let why = failures.first().map(|e| e.message.clone()).unwrap_or_default();
        return Err(LabError::NoConvergence(format!("{}: every chain failed ({why})", f.name())));
    }
    let w = 1.0 / atoms.len() as f64;
    let weights = vec![w; atoms.len()];
    let provenance = Provenance { map: f.name().to_string(), seed, chains, burn_in, depth };
    Ok(EmpiricalMeasure::from_parts(provenance, Vec::new(), atoms, weights, offsets, failures))
}

fn run_chain(f: &RationalMap, chain: usize, depth: usize, burn_in: usize, seed: u64) -> std::result::Result<Vec<SpherePoint>, ChainFailure> {
    let mut rng = stream_rng(seed, chain as u64);
    let r = rng.gen_range(0.5..1.5f64);
    let t = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut x = SpherePoint::Finite(Complex64::from_polar(r, t));
    let mut out = Vec::with_capacity(depth - burn_in);
    for step in 1..=depth {
        let pre = f.preimage_list(x).map_err(|e| ChainFailure { chain, step, message: e.to_string() })?;
        if pre.is_empty() {
            return Err(ChainFailure { chain, step, message: "no preimages".into() });
        }
        x = pre[rng.gen_range(0..pre.len())];
        if step > burn_in {
            out.push(x);
        }
    }
    Ok(out)
}

pub fn ball_mass(mu: &EmpiricalMeasure, b: &SphereBall) -> (f64, f64) {
    mu.ball_mass(b)
}

pub fn merge(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<EmpiricalMeasure> {
    a.merge(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq() -> RationalMap {
        RationalMap::unicritical("z^2", 2, Complex64::new(0.0, 0.0)).unwrap()
    }

    #[test]
    fn atoms_on_circle_and_normalised() {
        let mu = sample_measure(&sq(), 20, 150, 50, 1).unwrap();
        assert_eq!(mu.len(), 2000);
        assert!((mu.total_weight() - 1.0).abs() < 1e-12);
        let worst = mu.atoms().iter().map(|a| (a.finite().unwrap().norm() - 1.0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn index_agrees_with_linear_scan() {
        let f = RationalMap::unicritical("z^2+i", 2, Complex64::new(0.0, 1.0)).unwrap();
        let mu = sample_measure(&f, 8, 600, 100, 4).unwrap();
        for (k, &c) in mu.atoms().iter().step_by(97).enumerate() {
            let b = SphereBall::new(c, 0.01 * (1 + k % 30) as f64).unwrap();
            let direct = mu.atoms().iter().filter(|&&a| b.contains(a)).count();
            assert_eq!(mu.ball_count(&b).atoms, direct);
        }
        let c = mu.atoms()[5];
        let prof = mu.radial_profile(c, 0.4);
        for k in 1..=40 {
            let r = 0.01 * k as f64;
            assert_eq!(prof.ball(r), mu.ball_count(&SphereBall::new(c, r).unwrap()));
        }
        let whole = SphereBall::new(SpherePoint::ZERO, 2.0).unwrap();
        assert_eq!(mu.ball_mass(&whole).0, 1.0);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = sample_measure(&sq(), 4, 200, 100, 7).unwrap();
        let b = sample_measure(&sq(), 4, 200, 100, 7).unwrap();
        let c = sample_measure(&sq(), 4, 200, 100, 8).unwrap();
        assert_eq!(a.atoms(), b.atoms());
        assert_ne!(a.atoms(), c.atoms());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(sample_measure(&sq(), 0, 10, 5, 0).is_err());
        assert!(sample_measure(&sq(), 1, 5, 5, 0).is_err());
    }

    #[test]
    fn save_and_reload_round_trip() {
        let mu = sample_measure(&sq(), 3, 300, 100, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("atoms.csv");
        mu.save(&path).unwrap();
        let back = EmpiricalMeasure::load(&path).unwrap();
        assert_eq!(back.atoms(), mu.atoms());
        assert_eq!(back.weights(), mu.weights());
        let b = SphereBall::new(SpherePoint::new(1.0, 0.0), 0.3).unwrap();
        assert_eq!(back.ball_mass(&b), mu.ball_mass(&b));
    }

    #[test]
    fn merge_rules() {
        let a = sample_measure(&sq(), 2, 200, 100, 1).unwrap();
        let b = sample_measure(&sq(), 3, 200, 100, 2).unwrap();
        let ab = a.merge(&b).unwrap();
        let ba = b.merge(&a).unwrap();
        assert!((ab.total_weight() - 1.0).abs() < 1e-12);
        for k in 0..20 {
            let ball = SphereBall::new(SpherePoint::Finite(Complex64::from_polar(1.0, k as f64)), 0.2).unwrap();
            assert_eq!(ab.ball_count(&ball), ba.ball_count(&ball));
        }
        let same = a.merge(&EmpiricalMeasure::empty("z^2")).unwrap();
        assert_eq!(same.atoms(), a.atoms());
        assert!(matches!(a.merge(&EmpiricalMeasure::empty("other")), Err(LabError::MapMismatch(..))));
    }
}
