#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use maxent_lab::config::LabConfig;

/// A configuration small enough to run every subcommand in seconds.
pub fn quick_config(out: &Path) -> LabConfig {
    LabConfig {
        chains: 100,
        depth: 300,
        burn_in: 100,
        centers: 30,
        radii_per_center: 10,
        period_cap: 6,
        m_max: 6,
        scan_points: 3,
        horizon: 12,
        shrink_m_max: 6,
        resolution: 0.01,
        point_budget: 10_000,
        porosity_centers: 20,
        porosity_radii: vec![0.04, 0.07, 0.1],
        carrot_targets: 4,
        out: out.to_path_buf(),
        ..LabConfig::default()
    }
}

/// Every file under `dir`, keyed by relative path.
pub fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub const SMALL_REGISTRY: &str = r#"[
  {"name": "z2", "numerator": [[0, 0], [0, 0], [1, 0]], "denominator": [[1, 0]],
   "annotations": {"expected_class": "hyperbolic"}},
  {"name": "1/z-z", "numerator": [[1, 0], [0, 0], [-1, 0]], "denominator": [[0, 0], [1, 0]]}
]"#;
