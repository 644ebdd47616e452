//! Laboratory configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            _ => Err(LabError::Config { field: "format".into(), message: format!("expected json or csv, got `{s}`") }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub map: String,
    /// Registry file; the shipped corpus when absent.
    pub registry: Option<PathBuf>,
    pub seed: u64,
    pub chains: usize,
    pub depth: usize,
    pub burn_in: usize,
    /// Doubling window.
    pub r_min: f64,
    pub r_max: f64,
    /// Exponent fits use `[r_min, min(r_max, fit_r_max)]`.
    pub fit_r_max: f64,
    pub centers: usize,
    pub radii_per_center: usize,
    pub period_cap: usize,
    pub lambda: f64,
    pub semilocal_radius: f64,
    pub m_max: usize,
    pub scan_points: usize,
    pub horizon: usize,
    pub shrink_radius: f64,
    pub shrink_m_max: usize,
    /// Cell width of the Julia grid.
    pub resolution: f64,
    pub point_budget: usize,
    pub porosity_centers: usize,
    pub porosity_radii: Vec<f64>,
    pub carrot_targets: usize,
    pub out: PathBuf,
    pub format: OutputFormat,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            map: "z2".into(),
            registry: None,
            seed: 42,
            chains: 1000,
            depth: 1100,
            burn_in: 100,
            r_min: 1e-3,
            r_max: 0.7,
            fit_r_max: 0.1,
            centers: 200,
            radii_per_center: 15,
            period_cap: 10,
            lambda: 1.5,
            semilocal_radius: 0.1,
            m_max: 24,
            scan_points: 20,
            horizon: 30,
            shrink_radius: 0.05,
            shrink_m_max: 20,
            resolution: 1.0 / 400.0,
            point_budget: 200_000,
            porosity_centers: 100,
            porosity_radii: vec![0.01, 0.02, 0.04, 0.07, 0.1],
            carrot_targets: 20,
            out: PathBuf::from("lab-out"),
            format: OutputFormat::Json,
        }
    }
}

fn bad(field: &str, message: impl Into<String>) -> LabError {
    LabError::Config { field: field.into(), message: message.into() }
}

fn in_range<T: PartialOrd + std::fmt::Display + Copy>(field: &str, v: T, lo: T, hi: T) -> Result<()> {
    if v >= lo && v <= hi {
        Ok(())
    } else {
        Err(bad(field, format!("{v} outside [{lo}, {hi}]")))
    }
}

impl LabConfig {
    pub fn validate(&self) -> Result<()> {
        if self.map.is_empty() {
            return Err(bad("map", "empty map name"));
        }
        in_range("chains", self.chains, 1, 100_000)?;
        in_range("burn_in", self.burn_in, 0, 1_000_000)?;
        if self.depth <= self.burn_in || self.depth > 10_000_000 {
            return Err(bad("depth", format!("{} must exceed burn_in {} and be at most 1e7", self.depth, self.burn_in)));
        }
        if !(self.r_min > 0.0) || self.r_min.is_nan() {
            return Err(bad("r_min", format!("{} must be positive", self.r_min)));
        }
        if !(self.r_max > self.r_min && self.r_max <= 1.0) {
            return Err(bad("r_max", format!("{} must lie in (r_min, 1]", self.r_max)));
        }
        if !(self.fit_r_max > self.r_min && self.fit_r_max <= 1.0) {
            return Err(bad("fit_r_max", format!("{} must lie in (r_min, 1]", self.fit_r_max)));
        }
        in_range("centers", self.centers, 1, 100_000)?;
        in_range("radii_per_center", self.radii_per_center, 2, 1000)?;
        in_range("period_cap", self.period_cap, 1, 14)?;
        if !(self.lambda > 1.0 && self.lambda.is_finite()) {
            return Err(bad("lambda", format!("{} must exceed 1", self.lambda)));
        }
        in_range("semilocal_radius", self.semilocal_radius, 1e-4, 1.0)?;
        in_range("m_max", self.m_max, 1, 200)?;
        in_range("scan_points", self.scan_points, 0, 10_000)?;
        in_range("horizon", self.horizon, 10, 1000)?;
        in_range("shrink_radius", self.shrink_radius, 1e-4, 1.0)?;
        in_range("shrink_m_max", self.shrink_m_max, 2, 200)?;
        in_range("resolution", self.resolution, 1e-4, 0.1)?;
        in_range("point_budget", self.point_budget, 100, 50_000_000)?;
        in_range("porosity_centers", self.porosity_centers, 1, 100_000)?;
        if self.porosity_radii.is_empty() {
            return Err(bad("porosity_radii", "empty grid"));
        }
        for &r in &self.porosity_radii {
            if !(r >= 4.0 * self.resolution && r < 2.0) {
                return Err(bad("porosity_radii", format!("radius {r} below 4 x resolution {} or above 2", self.resolution)));
            }
        }
        in_range("carrot_targets", self.carrot_targets, 1, 10_000)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path.display().to_string(), e))?;
        let cfg: LabConfig = serde_json::from_str(&text).map_err(|e| LabError::json(path.display().to_string(), e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
