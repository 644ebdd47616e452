//! Subcommand orchestration: runs module operations for one map and
//! persists their results as versioned JSON dumps and CSV tables.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{LabConfig, OutputFormat};
use crate::critical::{landmarks, CriticalSet, JuliaFlagOptions};
use crate::error::{LabError, Result};
use crate::julia::{
    boundary_porosity_curve, carrot_probe, carrot_probe_at, julia_approximation, porosity_curve, targets_near_neutral, uniform_perfectness,
    CarrotProbe, JuliaApproximation,
};
use crate::measure::{sample_measure, EmpiricalMeasure, SCHEMA_VERSION};
use crate::periodic::{optimal_alpha_from, PeriodicSpectrum};
use crate::pullback::{expshrink_decay, scan_points_with, semihyperbolicity_scan_at, tce_density, PullbackOptions};
use crate::registry::{find, load_registry, shipped_corpus, RegisteredMap};
use crate::report::{build_report, ClassificationReport, Dumps};
use crate::scaling::{doubling_scan_with, lower_exponent_fit_at, atom_centers, upper_exponent_check, DoublingOptions, EXPONENT_RESOLUTION};
use crate::sphere::SpherePoint;

pub const SUBCOMMANDS: [&str; 11] =
    ["sample", "doubling", "exponent", "chiper", "semilocal", "tce", "expshrink", "porosity", "carrot", "classify", "corpus"];

/// Distances of the carrot targets approaching a neutral cycle.
pub fn neutral_target_distances() -> Vec<f64> {
    (0..10).map(|k| 0.2 * 0.6f64.powi(k)).collect()
}

/// Directory name for a map: `+` `-` `/` become `p` `m` `d`.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| match c {
            '+' => 'p',
            '-' => 'm',
            '/' => 'd',
            c if c.is_ascii_alphanumeric() => c,
            _ => '_',
        })
        .collect()
}

pub fn registry_of(cfg: &LabConfig) -> Result<Vec<RegisteredMap>> {
    match &cfg.registry {
        Some(p) => load_registry(p),
        None => Ok(shipped_corpus()),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> LabError + '_ {
    move |e| LabError::io(path.display().to_string(), e)
}

fn point_fields(p: &SpherePoint) -> [String; 2] {
    match p {
        SpherePoint::Finite(z) => [z.re.to_string(), z.im.to_string()],
        SpherePoint::Infinity => ["inf".into(), "inf".into()],
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| LabError::json(path.display().to_string(), e))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| LabError::Parse(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Per-map state shared between subcommands of one run.
pub struct Session<'a> {
    pub cfg: &'a LabConfig,
    pub entry: &'a RegisteredMap,
    pub dir: PathBuf,
    mu: Option<EmpiricalMeasure>,
    critical: Option<CriticalSet>,
    spectrum: Option<PeriodicSpectrum>,
    julia: Option<JuliaApproximation>,
}

impl<'a> Session<'a> {
    pub fn new(cfg: &'a LabConfig, entry: &'a RegisteredMap) -> Result<Self> {
        let dir = cfg.out.join(slug(entry.name()));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Session { cfg, entry, dir, mu: None, critical: None, spectrum: None, julia: None })
    }

    fn name(&self) -> &str {
        self.entry.name()
    }

    fn dump(&self, kind: &str, params: Value, result: &impl Serialize) -> Result<()> {
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "kind": kind,
            "map": self.name(),
            "params": params,
            "result": result,
        });
        write_json(&self.dir.join(format!("{kind}.json")), &doc)
    }

    fn csv_wanted(&self) -> bool {
        self.cfg.format == OutputFormat::Csv
    }

    fn measure(&mut self) -> Result<&EmpiricalMeasure> {
        if self.mu.is_none() {
            let c = self.cfg;
            self.mu = Some(sample_measure(&self.entry.map, c.chains, c.depth, c.burn_in, c.seed)?);
        }
        Ok(self.mu.as_ref().unwrap())
    }

    fn critical(&mut self) -> Result<&CriticalSet> {
        if self.critical.is_none() {
            let set = CriticalSet::compute(&self.entry.map, &JuliaFlagOptions::default())?;
            let set = match &self.entry.annotations.critical_in_julia {
                Some(idx) => set.with_annotations(idx)?,
                None => set,
            };
            self.critical = Some(set);
        }
        Ok(self.critical.as_ref().unwrap())
    }

    fn landmarks(&mut self) -> Result<Vec<SpherePoint>> {
        let f = self.entry.map.clone();
        landmarks(&f, self.critical()?)
    }

    fn spectrum(&mut self) -> Result<&PeriodicSpectrum> {
        if self.spectrum.is_none() {
            self.spectrum = Some(PeriodicSpectrum::compute(&self.entry.map, self.cfg.period_cap)?);
        }
        Ok(self.spectrum.as_ref().unwrap())
    }

    fn julia(&mut self) -> Result<&JuliaApproximation> {
        if self.julia.is_none() {
            let c = self.cfg;
            self.julia = Some(julia_approximation(&self.entry.map, c.resolution, c.point_budget, c.seed)?);
        }
        Ok(self.julia.as_ref().unwrap())
    }

    pub fn write_map_info(&mut self) -> Result<()> {
        let marks = self.landmarks()?;
        let f = &self.entry.map;
        let info = json!({
            "name": f.name(),
            "degree": f.degree(),
            "polynomial": f.is_polynomial(),
            "numerator": f.numerator(),
            "denominator": f.denominator(),
            "expected_class": self.entry.annotations.expected_class,
            "critical_points": self.critical.as_ref().unwrap(),
            "landmarks": marks,
        });
        self.dump("map", json!({}), &info)
    }

    pub fn run(&mut self, sub: &str) -> Result<String> {
        match sub {
            "sample" => self.sample(),
            "doubling" => self.doubling(),
            "exponent" => self.exponent(),
            "chiper" => self.chiper(),
            "semilocal" => self.semilocal(),
            "tce" => self.tce(),
            "expshrink" => self.expshrink(),
            "porosity" => self.porosity(),
            "carrot" => self.carrot(),
            "classify" => self.classify().map(|r| r.summary()),
            other => Err(LabError::InvalidInput(format!("unknown subcommand `{other}`"))),
        }
    }

    pub fn sample(&mut self) -> Result<String> {
        let path = self.dir.join("measure.csv");
        let mu = self.measure()?;
        mu.save(&path)?;
        Ok(format!("sample {}: {} atoms, {} failed chains -> {}", mu.map_name(), mu.len(), mu.failures.len(), path.display()))
    }

    pub fn doubling(&mut self) -> Result<String> {
        let c = self.cfg;
        let opts = DoublingOptions { extra_centers: self.landmarks()?, ..Default::default() };
        let mu = self.measure()?;
        let atoms = mu.len();
        let est = doubling_scan_with(mu, c.centers, c.radii_per_center, c.r_min, c.r_max, &opts)?;
        let params = json!({"r_min": c.r_min, "r_max": c.r_max, "centers": c.centers, "radii_per_center": c.radii_per_center,
            "atoms": atoms, "seed": c.seed, "extra_centers": opts.extra_centers});
        self.dump("doubling", params, &est)?;
        if self.csv_wanted() {
            let rows = est.growth_witnesses.iter().flat_map(|w| {
                let [re, im] = point_fields(&w.center);
                (0..w.radii.len()).map(move |k| vec![re.clone(), im.clone(), w.radii[k].to_string(), w.ratios[k].to_string(), w.counts[k].to_string()])
            });
            write_csv(&self.dir.join("doubling.csv"), &["center_re", "center_im", "radius", "ratio", "count"], rows)?;
        }
        Ok(format!(
            "doubling {}: {} C*_hat {:.3}, {} growth witnesses, {}/{} samples resolved",
            self.name(),
            est.verdict.as_str(),
            est.c_star_hat,
            est.growth_witnesses.len(),
            est.resolved_samples,
            est.total_samples
        ))
    }

    pub fn exponent(&mut self) -> Result<String> {
        let c = self.cfg;
        let r_max = c.r_max.min(c.fit_r_max);
        let marks = self.landmarks()?;
        let degree = self.entry.map.degree();
        let optimal = optimal_alpha_from(degree, &self.spectrum()?.chi_per()).ok();
        let mu = self.measure()?;
        let atoms = mu.len();
        let mut centers = atom_centers(mu, c.centers, 0xE1F0);
        centers.extend(marks.iter().cloned());
        let unresolved: Vec<SpherePoint> =
            marks.iter().cloned().filter(|&l| mu.radial_profile(l, r_max).ball(r_max).atoms < EXPONENT_RESOLUTION).collect();
        let fit = lower_exponent_fit_at(mu, &centers, c.r_min, r_max)?;
        let upper = upper_exponent_check(mu, c.centers, c.r_min, r_max).ok();
        let result = json!({"fit": fit, "optimal_alpha": optimal, "upper_alpha": upper, "unresolved_landmarks": unresolved});
        self.dump("exponent", json!({"r_min": c.r_min, "r_max": r_max, "centers": c.centers, "atoms": atoms, "seed": c.seed}), &result)?;
        if self.csv_wanted() {
            let rows = fit.per_center.iter().map(|e| {
                let [re, im] = point_fields(&e.center);
                vec![re, im, e.slope.to_string(), e.prefactor.to_string(), e.resolved_radii.to_string()]
            });
            write_csv(&self.dir.join("exponent.csv"), &["center_re", "center_im", "slope", "prefactor", "resolved_radii"], rows)?;
        }
        Ok(format!(
            "exponent {}: alpha_hat {:.4} (C {:.3e}), optimal {}, {} unresolved landmarks",
            self.name(),
            fit.alpha_hat,
            fit.c_hat,
            optimal.map_or("unbounded".into(), |a| format!("{a:.4}")),
            unresolved.len()
        ))
    }

    pub fn chiper(&mut self) -> Result<String> {
        let c = self.cfg;
        let degree = self.entry.map.degree();
        let csv = self.csv_wanted().then(|| self.dir.join("chiper.csv"));
        let spec = self.spectrum()?;
        let est = spec.chi_per();
        let uhp = spec.uhp_check(c.lambda).ok();
        let optimal = optimal_alpha_from(degree, &est).ok();
        let neutral: Vec<_> = spec.neutral().cloned().collect();
        let result = json!({
            "estimate": est,
            "uhp_holds": uhp.as_ref().map(|u| u.0),
            "weakest_orbit": uhp.as_ref().map(|u| &u.1),
            "optimal_alpha": optimal,
            "neutral_orbits": neutral,
            "root_counts": spec.root_counts,
        });
        if let Some(path) = csv {
            spec.write_csv(&path)?;
        }
        self.dump("chiper", json!({"period_cap": c.period_cap, "lambda": c.lambda}), &result)?;
        Ok(format!(
            "chiper {}: chi_per_hat {:.6}, neutral cycle {}, UHP at lambda {} {}",
            self.name(),
            est.chi_per_hat,
            if est.neutral_found { "found" } else { "none" },
            c.lambda,
            match uhp {
                Some((true, _)) => "holds",
                Some((false, _)) => "fails",
                None => "unknown",
            }
        ))
    }

    pub fn semilocal(&mut self) -> Result<String> {
        let c = self.cfg;
        let f = self.entry.map.clone();
        let pts = scan_points_with(&f, self.critical()?, c.scan_points, c.seed)?;
        let scan = semihyperbolicity_scan_at(&f, c.semilocal_radius, c.m_max, &pts, &PullbackOptions::default())?;
        self.dump("semilocal", json!({"r": c.semilocal_radius, "m_max": c.m_max, "points": pts.len(), "seed": c.seed}), &scan)?;
        if self.csv_wanted() {
            let rows = (0..c.m_max).map(|k| {
                vec![(k + 1).to_string(), scan.max_degree_per_m[k].to_string(), scan.flagged_max_degree_per_m[k].to_string()]
            });
            write_csv(&self.dir.join("semilocal.csv"), &["m", "max_degree", "flagged_max_degree"], rows)?;
        }
        Ok(format!(
            "semilocal {}: {} max degree {} over {} chains ({} flagged)",
            self.name(),
            scan.verdict.as_str(),
            scan.max_degree_per_m.iter().max().unwrap_or(&0),
            scan.chains,
            scan.flagged
        ))
    }

    pub fn tce(&mut self) -> Result<String> {
        let c = self.cfg;
        let f = self.entry.map.clone();
        let bound = self.critical()?.ell_max_hat(&f);
        let x = match self.landmarks()?.first() {
            Some(&l) => l,
            None => sample_measure(&f, 1, 101, 100, c.seed)?.atoms()[0],
        };
        let rec = tce_density(&f, x, c.semilocal_radius, bound, c.horizon)?;
        self.dump("tce", json!({"r": c.semilocal_radius, "horizon": c.horizon, "seed": c.seed}), &rec)?;
        if self.csv_wanted() {
            let rows = rec.density_curve.iter().map(|&(n, d)| vec![n.to_string(), d.to_string()]);
            write_csv(&self.dir.join("tce.csv"), &["n", "density"], rows)?;
        }
        Ok(format!("tce {}: density {:.3} at {} with D = {}", self.name(), rec.density, x, bound))
    }

    pub fn expshrink(&mut self) -> Result<String> {
        let c = self.cfg;
        let prof = expshrink_decay(&self.entry.map, c.scan_points, c.shrink_radius, c.shrink_m_max, c.seed)?;
        self.dump("expshrink", json!({"r": c.shrink_radius, "m_max": c.shrink_m_max, "points": c.scan_points, "seed": c.seed}), &prof)?;
        if self.csv_wanted() {
            let rows = prof.per_m_max_diameter.iter().enumerate().map(|(k, d)| vec![(k + 1).to_string(), d.to_string()]);
            write_csv(&self.dir.join("expshrink.csv"), &["m", "max_diameter"], rows)?;
        }
        Ok(format!("expshrink {}: lambda_hat {:.4} ({} excluded)", self.name(), prof.lambda_hat, prof.excluded))
    }

    pub fn porosity(&mut self) -> Result<String> {
        let c = self.cfg;
        let f = self.entry.map.clone();
        let j = self.julia()?;
        let por = porosity_curve(j, c.porosity_centers, &c.porosity_radii, c.seed)?;
        let bnd = if f.is_polynomial() { Some(boundary_porosity_curve(&f, j, c.porosity_centers, &c.porosity_radii, c.seed)?) } else { None };
        let up = uniform_perfectness(j, c.porosity_centers, &c.porosity_radii)?;
        let params = json!({"resolution": c.resolution, "point_budget": c.point_budget, "centers": c.porosity_centers,
            "radii": c.porosity_radii, "seed": c.seed, "cloud_points": j.points.len(), "grid": [j.nx, j.ny]});
        let result = json!({"porosity": por, "boundary_porosity": bnd, "uniform_perfectness": up});
        if self.csv_wanted() {
            let rows = (0..por.radii.len()).map(|k| {
                vec![
                    por.radii[k].to_string(),
                    por.xi_hat[k].to_string(),
                    bnd.as_ref().map_or(String::new(), |b| b.xi_hat[k].to_string()),
                ]
            });
            write_csv(&self.dir.join("porosity.csv"), &["radius", "xi_hat", "boundary_xi_hat"], rows)?;
        }
        self.dump("porosity", params, &result)?;
        Ok(format!(
            "porosity {}: {} xi_hat min {:.3}{}, eta_hat {}",
            self.name(),
            por.verdict.as_str(),
            por.witness_xi,
            bnd.as_ref().map_or(String::new(), |b| format!(", boundary {} {:.3}", b.verdict.as_str(), b.witness_xi)),
            up.eta_hat
        ))
    }

    pub fn carrot(&mut self) -> Result<String> {
        let c = self.cfg;
        let f = self.entry.map.clone();
        if !f.is_polynomial() {
            return Err(LabError::InvalidInput(format!("carrot probe needs a polynomial; `{}` is not", f.name())));
        }
        let j = self.julia()?;
        let probe = carrot_probe(&f, j, c.carrot_targets, c.seed)?;
        let near = targets_near_neutral(&f, j, &neutral_target_distances())?;
        let neutral = if near.is_empty() { None } else { Some(carrot_probe_at(&f, j, &near)?) };
        let strip = |p: &CarrotProbe| CarrotProbe { paths: Vec::new(), ..p.clone() };
        let result = json!({"probe": strip(&probe), "neutral": neutral.as_ref().map(strip)});
        probe.write_paths_csv(&self.dir.join("carrot_paths.csv"))?;
        if self.csv_wanted() {
            let mut rows = Vec::new();
            for (set, p) in [("random", Some(&probe)), ("neutral", neutral.as_ref())] {
                for (t, k) in p.into_iter().flat_map(|p| p.targets.iter().zip(&p.constants)) {
                    let [re, im] = point_fields(t);
                    rows.push(vec![set.to_string(), re, im, k.to_string()]);
                }
            }
            write_csv(&self.dir.join("carrot.csv"), &["targets", "target_re", "target_im", "constant"], rows)?;
        }
        self.dump("carrot", json!({"resolution": c.resolution, "targets": c.carrot_targets, "seed": c.seed}), &result)?;
        let decay = neutral.as_ref().map(|n| n.constants[0] / n.c_hat);
        Ok(format!(
            "carrot {}: C_hat {:.4}{}",
            self.name(),
            probe.c_hat,
            decay.map_or(String::new(), |d| format!(", constant falls {d:.1}x towards the neutral cycle"))
        ))
    }

    /// Runs every module, then builds the report from the written dumps.
    pub fn classify(&mut self) -> Result<ClassificationReport> {
        self.write_map_info()?;
        self.doubling()?;
        self.exponent()?;
        self.chiper()?;
        self.mu = None;
        self.semilocal()?;
        self.tce()?;
        self.expshrink()?;
        self.porosity()?;
        if self.entry.map.is_polynomial() {
            self.carrot()?;
        } else {
            let stale = self.dir.join("carrot.json");
            if stale.exists() {
                fs::remove_file(&stale).map_err(io_err(&stale))?;
            }
        }
        self.julia = None;
        report_from_dumps(&self.cfg.out, self.name(), self.cfg.format)
    }
}

/// Rebuilds and writes `report.json` from the dumps under `out`.
pub fn report_from_dumps(out: &Path, map: &str, format: OutputFormat) -> Result<ClassificationReport> {
    let dir = slug(map);
    let report = build_report(&Dumps::load(out, &dir)?)?;
    write_json(&out.join(&dir).join("report.json"), &report)?;
    if format == OutputFormat::Csv {
        let rows = report.checks.iter().map(|c| {
            vec![c.name.clone(), c.relation.clone(), kebab(&c.left_signal), kebab(&c.right_signal), kebab(&c.status)]
        });
        write_csv(&out.join(&dir).join("checks.csv"), &["check", "relation", "left", "right", "status"], rows)?;
    }
    Ok(report)
}

fn kebab(v: &impl Serialize) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// Classifies every registry map; returns the reports in registry order.
pub fn run_corpus(cfg: &LabConfig, from_dumps: bool, log: &mut impl Write) -> Result<Vec<ClassificationReport>> {
    let maps = registry_of(cfg)?;
    let mut reports = Vec::with_capacity(maps.len());
    for entry in &maps {
        let report = if from_dumps {
            report_from_dumps(&cfg.out, entry.name(), cfg.format)?
        } else {
            Session::new(cfg, entry)?.classify()?
        };
        let _ = write!(log, "{}", report.summary());
        reports.push(report);
    }
    let summary: Vec<Value> = reports
        .iter()
        .map(|r| {
            json!({"map": r.map, "expected_class": r.expected_class, "contradictions": r.contradictions,
                "report": format!("{}/report.json", slug(&r.map))})
        })
        .collect();
    write_json(&cfg.out.join("corpus.json"), &json!({"schema_version": SCHEMA_VERSION, "maps": summary}))?;
    Ok(reports)
}

/// Runs one subcommand; returns the printed summary and the number of contradictions.
pub fn run_subcommand(name: &str, cfg: &LabConfig, from_dumps: bool) -> Result<(String, usize)> {
    cfg.validate()?;
    if !SUBCOMMANDS.contains(&name) {
        return Err(LabError::InvalidInput(format!("unknown subcommand `{name}`")));
    }
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    if name == "corpus" {
        let mut log = Vec::new();
        let reports = run_corpus(cfg, from_dumps, &mut log)?;
        let total: usize = reports.iter().map(|r| r.contradictions).sum();
        let mut text = String::from_utf8_lossy(&log).into_owned();
        text.push_str(&format!("corpus: {} maps, {total} contradictions\n", reports.len()));
        return Ok((text, total));
    }
    let maps = registry_of(cfg)?;
    let entry = find(&maps, &cfg.map)?;
    if name == "classify" {
        let report =
            if from_dumps { report_from_dumps(&cfg.out, entry.name(), cfg.format)? } else { Session::new(cfg, entry)?.classify()? };
        return Ok((report.summary(), report.contradictions));
    }
    let mut s = Session::new(cfg, entry)?;
    s.write_map_info()?;
    Ok((s.run(name)?, 0))
}
