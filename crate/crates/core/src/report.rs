//! Classification report: verdicts read back from module dumps, and the
//! cross-check matrix between the characterizations.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LabError, Result};
use crate::measure::SCHEMA_VERSION;
use crate::periodic::CHI_FLOOR;
use crate::registry::ExpectedClass;
use crate::scaling::{DOUBLING_RESOLUTION, EXPONENT_RESOLUTION};

/// ExpShrink rates at or above this count as exponential shrinking.
pub const SHRINK_POSITIVE: f64 = 1.2;
/// ExpShrink rates at or below this count as subexponential.
pub const SHRINK_NEGATIVE: f64 = 1.1;
/// Carrot constants at or above this count as a John witness.
pub const CARROT_FLOOR: f64 = 0.1;
/// Fall of the carrot constant towards a neutral cycle taken as non-John.
pub const CARROT_DECAY: f64 = 5.0;
/// Good-time density bands.
pub const TCE_POSITIVE: f64 = 0.5;
pub const TCE_NEGATIVE: f64 = 0.1;

pub const DUMP_KINDS: [&str; 9] = ["map", "doubling", "exponent", "chiper", "semilocal", "tce", "expshrink", "porosity", "carrot"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Signal {
    Positive,
    Negative,
    Undetermined,
}

impl Signal {
    fn decisive(self) -> bool {
        self != Signal::Undetermined
    }

    fn from_bool(b: bool) -> Self {
        if b {
            Signal::Positive
        } else {
            Signal::Negative
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub verdict: String,
    pub signal: Signal,
    pub value: Option<f64>,
    pub metrics: BTreeMap<String, Value>,
    /// Dump files relative to the output directory.
    pub evidence: Vec<String>,
    pub trust: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Findings {
    pub doubling: Finding,
    pub lower_bound: Finding,
    pub uhp: Finding,
    pub semilocal: Finding,
    pub tce_density: Finding,
    pub expshrink: Finding,
    pub porosity: Finding,
    pub boundary_porosity: Option<Finding>,
    pub uniform_perfectness: Finding,
    pub carrot: Option<Finding>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Property {
    pub signal: Signal,
    pub reasons: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Consistent,
    Contradiction,
    Undetermined,
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub name: String,
    /// `iff` or `implies`.
    pub relation: String,
    pub left: String,
    pub right: String,
    pub left_signal: Signal,
    pub right_signal: Signal,
    pub status: CheckStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub schema_version: u32,
    pub map: String,
    pub expected_class: ExpectedClass,
    pub polynomial: bool,
    pub findings: Findings,
    pub properties: BTreeMap<String, Property>,
    pub checks: Vec<CrossCheck>,
    /// Decisive evidence against the registry annotation.
    pub annotation_mismatches: Vec<String>,
    /// Contradicted checks plus annotation mismatches.
    pub contradictions: usize,
}

/// Module dumps of one map, keyed by kind.
#[derive(Clone, Debug, Default)]
pub struct Dumps {
    pub dir: String,
    pub docs: BTreeMap<String, Value>,
}

impl Dumps {
    /// Reads `<out>/<dir>/<kind>.json` for every kind present.
    pub fn load(out: &Path, dir: &str) -> Result<Self> {
        let mut docs = BTreeMap::new();
        for kind in DUMP_KINDS {
            let path = out.join(dir).join(format!("{kind}.json"));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| LabError::io(path.display().to_string(), e))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| LabError::json(path.display().to_string(), e))?;
            if v.get("schema_version").and_then(Value::as_u64) != Some(SCHEMA_VERSION as u64) {
                return Err(LabError::Parse(format!("{}: missing or unknown schema_version", path.display())));
            }
            docs.insert(kind.to_string(), v);
        }
        Ok(Dumps { dir: dir.to_string(), docs })
    }

    fn get(&self, kind: &str) -> Result<&Value> {
        self.docs.get(kind).ok_or_else(|| LabError::Parse(format!("{}: missing {kind}.json dump", self.dir)))
    }

    fn path(&self, kind: &str) -> String {
        format!("{}/{kind}.json", self.dir)
    }
}

fn num(v: &Value, ptr: &str) -> Option<f64> {
    v.pointer(ptr).and_then(Value::as_f64)
}

fn int(v: &Value, ptr: &str) -> Option<u64> {
    v.pointer(ptr).and_then(Value::as_u64)
}

fn text<'a>(v: &'a Value, ptr: &str) -> Option<&'a str> {
    v.pointer(ptr).and_then(Value::as_str)
}

fn flag(v: &Value, ptr: &str) -> Option<bool> {
    v.pointer(ptr).and_then(Value::as_bool)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |x| format!("{x:.4}"))
}

fn metrics<const N: usize>(pairs: [(&str, Value); N]) -> BTreeMap<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn doubling_finding(d: &Dumps) -> Result<Finding> {
    let v = d.get("doubling")?;
    let verdict = text(v, "/result/verdict").unwrap_or("inconclusive").to_string();
    let witnesses = v.pointer("/result/growth_witnesses").and_then(Value::as_array).map_or(0, Vec::len);
    let signal = match verdict.as_str() {
        "doubling-consistent" => Signal::Positive,
        "doubling-violated" => Signal::Negative,
        _ if witnesses > 0 => Signal::Negative,
        _ => Signal::Undetermined,
    };
    Ok(Finding {
        verdict,
        signal,
        value: num(v, "/result/c_star_hat"),
        metrics: metrics([
            ("growth_witnesses", witnesses.into()),
            ("r_star", v.pointer("/result/r_star").cloned().unwrap_or(Value::Null)),
        ]),
        evidence: vec![d.path("doubling")],
        trust: format!(
            "radii in [{}, {}], {} per center; ratios used where the smaller ball holds >= {DOUBLING_RESOLUTION} atoms; {} atoms; {}/{} samples resolved",
            fmt_opt(num(v, "/params/r_min")),
            fmt_opt(num(v, "/params/r_max")),
            int(v, "/params/radii_per_center").unwrap_or(0),
            int(v, "/params/atoms").unwrap_or(0),
            int(v, "/result/resolved_samples").unwrap_or(0),
            int(v, "/result/total_samples").unwrap_or(0),
        ),
    })
}

fn lower_bound_finding(d: &Dumps) -> Result<Finding> {
    let v = d.get("exponent")?;
    let alpha = num(v, "/result/fit/alpha_hat");
    let optimal = num(v, "/result/optimal_alpha");
    let unresolved = v.pointer("/result/unresolved_landmarks").and_then(Value::as_array).map_or(0, Vec::len);
    let (verdict, signal) = if unresolved > 0 {
        ("lower-bound-fails", Signal::Negative)
    } else if alpha.is_some() {
        ("lower-bound-holds", Signal::Positive)
    } else {
        ("inconclusive", Signal::Undetermined)
    };
    Ok(Finding {
        verdict: verdict.into(),
        signal,
        value: alpha,
        metrics: metrics([
            ("optimal_alpha", optimal.map_or(Value::Null, Value::from)),
            ("c_hat", num(v, "/result/fit/c_hat").map_or(Value::Null, Value::from)),
            ("upper_alpha", num(v, "/result/upper_alpha").map_or(Value::Null, Value::from)),
            ("unresolved_landmarks", unresolved.into()),
        ]),
        evidence: vec![d.path("exponent"), d.path("chiper")],
        trust: format!(
            "radii in [{}, {}] with >= {EXPONENT_RESOLUTION} atoms; {} atoms; landmarks resolved at r = {}",
            fmt_opt(num(v, "/params/r_min")),
            fmt_opt(num(v, "/params/r_max")),
            int(v, "/params/atoms").unwrap_or(0),
            fmt_opt(num(v, "/params/r_max")),
        ),
    })
}

fn uhp_finding(d: &Dumps) -> Result<Finding> {
    let v = d.get("chiper")?;
    let chi = num(v, "/result/estimate/chi_per_hat");
    let neutral = flag(v, "/result/estimate/neutral_found").unwrap_or(false);
    let holds = flag(v, "/result/uhp_holds").unwrap_or(false);
    let per: Vec<f64> = v
        .pointer("/result/estimate/per_period_min")
        .and_then(Value::as_object)
        .map(|m| m.values().filter_map(Value::as_f64).collect())
        .unwrap_or_default();
    let decaying = per.len() >= 3 && per.windows(2).all(|w| w[1] <= w[0] + 1e-12) && per[per.len() - 1] < per[0];
    let (verdict, signal) = if neutral {
        ("neutral-cycle", Signal::Negative)
    } else if chi.is_some_and(|c| c > CHI_FLOOR) {
        ("uhp-consistent", Signal::Positive)
    } else {
        ("uhp-fails", Signal::Negative)
    };
    Ok(Finding {
        verdict: verdict.into(),
        signal,
        value: chi,
        metrics: metrics([
            ("neutral_found", neutral.into()),
            ("uhp_holds_at_lambda", holds.into()),
            ("lambda", num(v, "/params/lambda").map_or(Value::Null, Value::from)),
            ("chi_per_decaying", decaying.into()),
        ]),
        evidence: vec![d.path("chiper")],
        trust: format!(
            "periods 1..={}; chi_per_hat is an upper bound for the infimum over all periods",
            int(v, "/params/period_cap").unwrap_or(0)
        ),
    })
}

fn semilocal_finding(d: &Dumps) -> Result<Finding> {
    let v = d.get("semilocal")?;
    let verdict = text(v, "/result/verdict").unwrap_or("inconclusive").to_string();
    let degrees: Vec<u64> =
        v.pointer("/result/max_degree_per_m").and_then(Value::as_array).map(|a| a.iter().filter_map(Value::as_u64).collect()).unwrap_or_default();
    let signal = match verdict.as_str() {
        "bounded" => Signal::Positive,
        "growing" => Signal::Negative,
        _ => Signal::Undetermined,
    };
    Ok(Finding {
        verdict,
        signal,
        value: degrees.iter().copied().max().map(|m| m as f64),
        metrics: metrics([
            ("max_degree_per_m", degrees.into()),
            ("flagged", int(v, "/result/flagged").unwrap_or(0).into()),
            ("neutral_cycle", flag(v, "/result/neutral_cycle").unwrap_or(false).into()),
        ]),
        evidence: vec![d.path("semilocal")],
        trust: format!(
            "r = {}; m <= {}; {} scan points including landmarks",
            fmt_opt(num(v, "/params/r")),
            int(v, "/params/m_max").unwrap_or(0),
            int(v, "/params/points").unwrap_or(0),
        ),
    })
}

fn tce_finding(d: &Dumps) -> Result<Finding> {
    let v = d.get("tce")?;
    let density = num(v, "/result/density");
    let signal = match density {
        Some(x) if x >= TCE_POSITIVE => Signal::Positive,
        Some(x) if x < TCE_NEGATIVE => Signal::Negative,
        _ => Signal::Undetermined,
    };
    Ok(Finding {
        verdict: format!("density {}", fmt_opt(density)),
        signal,
        value: density,
        metrics: metrics([("degree_bound", int(v, "/result/degree_bound").unwrap_or(0).into())]),
        evidence: vec![d.path("tce")],
        trust: format!(
            "one point; r = {}; horizon {}; density is the minimum over the last half of the horizon",
            fmt_opt(num(v, "/params/r")),
            int(v, "/params/horizon").unwrap_or(0)
        ),
    })
}

fn expshrink_finding(d: &Dumps) -> Result<Finding> {
    let v = d.get("expshrink")?;
    let lambda = num(v, "/result/lambda_hat");
    let (verdict, signal) = match lambda {
        Some(l) if l >= SHRINK_POSITIVE => ("exponential", Signal::Positive),
        Some(l) if l <= SHRINK_NEGATIVE => ("subexponential", Signal::Negative),
        _ => ("inconclusive", Signal::Undetermined),
    };
    Ok(Finding {
        verdict: verdict.into(),
        signal,
        value: lambda,
        metrics: metrics([("excluded", int(v, "/result/excluded").unwrap_or(0).into())]),
        evidence: vec![d.path("expshrink")],
        trust: format!(
            "r = {}; fit over m in [{}, {}]; rates in ({SHRINK_NEGATIVE}, {SHRINK_POSITIVE}) undetermined",
            fmt_opt(num(v, "/params/r")),
            int(v, "/params/m_max").unwrap_or(0) / 2,
            int(v, "/params/m_max").unwrap_or(0),
        ),
    })
}

fn porosity_from(v: &Value, ptr: &str, path: String) -> Option<Finding> {
    let p = v.pointer(ptr).filter(|p| !p.is_null())?;
    let verdict = text(p, "/verdict").unwrap_or("porosity-failing").to_string();
    let xi = p.pointer("/xi_hat").and_then(Value::as_array).map(|a| a.iter().filter_map(Value::as_f64).fold(f64::INFINITY, f64::min));
    Some(Finding {
        signal: Signal::from_bool(verdict == "porous-consistent"),
        verdict,
        value: xi.filter(|x| x.is_finite()),
        metrics: metrics([("xi_hat", p.pointer("/xi_hat").cloned().unwrap_or(Value::Null))]),
        evidence: vec![path],
        trust: format!(
            "radii {}; holes resolved above {}; {} centers",
            p.pointer("/radii").map_or("[]".into(), Value::to_string),
            fmt_opt(num(p, "/trust_floor")),
            int(p, "/centers").unwrap_or(0)
        ),
    })
}

fn carrot_finding(d: &Dumps) -> Option<Finding> {
    let v = d.docs.get("carrot")?;
    let c_hat = num(v, "/result/probe/c_hat");
    let neutral: Vec<f64> = v
        .pointer("/result/neutral/constants")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_f64).collect())
        .unwrap_or_default();
    let decay = (neutral.len() >= 2).then(|| neutral[0] / neutral.iter().copied().fold(f64::INFINITY, f64::min));
    let (verdict, signal) = if decay.is_some_and(|r| r >= CARROT_DECAY) {
        ("carrot-decaying", Signal::Negative)
    } else if c_hat.is_some_and(|c| c >= CARROT_FLOOR) {
        ("carrot-bounded", Signal::Positive)
    } else {
        ("inconclusive", Signal::Undetermined)
    };
    Some(Finding {
        verdict: verdict.into(),
        signal,
        value: c_hat,
        metrics: metrics([
            ("neutral_constants", neutral.into()),
            ("neutral_decay", decay.map_or(Value::Null, Value::from)),
            ("disconnected", flag(v, "/result/probe/disconnected").unwrap_or(false).into()),
        ]),
        evidence: vec![d.path("carrot"), format!("{}/carrot_paths.csv", d.dir)],
        trust: format!(
            "grid h = {}; {} targets; path points within 2h of the target excluded",
            fmt_opt(num(v, "/params/resolution")),
            int(v, "/params/targets").unwrap_or(0)
        ),
    })
}

fn check(name: &str, relation: &str, left: (&str, Signal), right: (&str, Signal)) -> CrossCheck {
    let (l, r) = (left.1, right.1);
    let status = match relation {
        "iff" if l.decisive() && r.decisive() => {
            if l == r {
                CheckStatus::Consistent
            } else {
                CheckStatus::Contradiction
            }
        }
        "iff" => CheckStatus::Undetermined,
        _ => match (l, r) {
            (Signal::Positive, Signal::Negative) => CheckStatus::Contradiction,
            (Signal::Negative, _) | (_, Signal::Positive) => CheckStatus::Consistent,
            _ => CheckStatus::Undetermined,
        },
    };
    CrossCheck {
        name: name.into(),
        relation: relation.into(),
        left: left.0.into(),
        right: right.0.into(),
        left_signal: l,
        right_signal: r,
        status,
    }
}

/// Builds the report from the dumps of one map.
pub fn build_report(d: &Dumps) -> Result<ClassificationReport> {
    let m = d.get("map")?;
    let map = text(m, "/result/name").unwrap_or_default().to_string();
    let expected_class = text(m, "/result/expected_class").and_then(ExpectedClass::parse).unwrap_or_default();
    let polynomial = flag(m, "/result/polynomial").unwrap_or(false);
    let porosity_doc = d.get("porosity")?;
    let findings = Findings {
        doubling: doubling_finding(d)?,
        lower_bound: lower_bound_finding(d)?,
        uhp: uhp_finding(d)?,
        semilocal: semilocal_finding(d)?,
        tce_density: tce_finding(d)?,
        expshrink: expshrink_finding(d)?,
        porosity: porosity_from(porosity_doc, "/result/porosity", d.path("porosity"))
            .ok_or_else(|| LabError::Parse(format!("{}: porosity dump has no porosity curve", d.dir)))?,
        boundary_porosity: porosity_from(porosity_doc, "/result/boundary_porosity", d.path("porosity")),
        uniform_perfectness: {
            let eta = num(porosity_doc, "/result/uniform_perfectness/eta_hat");
            Finding {
                verdict: format!("eta {}", fmt_opt(eta)),
                signal: Signal::from_bool(eta.is_some()),
                value: eta,
                metrics: BTreeMap::new(),
                evidence: vec![d.path("porosity")],
                trust: "largest annulus ratio found empty around sampled points, over the porosity radii".into(),
            }
        },
        carrot: carrot_finding(d),
    };

    let neutral = findings.uhp.metrics.get("neutral_found").and_then(Value::as_bool).unwrap_or(false);
    let mut properties = BTreeMap::new();
    let semi = if neutral {
        Property { signal: Signal::Negative, reasons: vec!["neutral cycle found".into()] }
    } else {
        match findings.semilocal.signal {
            Signal::Negative => Property { signal: Signal::Negative, reasons: vec!["semi-local degrees grow".into()] },
            Signal::Positive => Property { signal: Signal::Positive, reasons: vec!["semi-local degrees bounded; no neutral cycle".into()] },
            Signal::Undetermined => Property { signal: Signal::Undetermined, reasons: vec!["degree scan inconclusive".into()] },
        }
    };
    let tce = Property { signal: findings.uhp.signal, reasons: vec![format!("periodic spectrum: {}", findings.uhp.verdict)] };
    properties.insert("semi_hyperbolic".to_string(), semi.clone());
    properties.insert("tce".to_string(), tce.clone());
    properties.insert("doubling".to_string(), Property { signal: findings.doubling.signal, reasons: vec![findings.doubling.verdict.clone()] });
    properties.insert("lower_bound".to_string(), Property { signal: findings.lower_bound.signal, reasons: vec![findings.lower_bound.verdict.clone()] });
    properties.insert("exp_shrink".to_string(), Property { signal: findings.expshrink.signal, reasons: vec![findings.expshrink.verdict.clone()] });
    properties.insert("porous".to_string(), Property { signal: findings.porosity.signal, reasons: vec![findings.porosity.verdict.clone()] });
    if let Some(c) = &findings.carrot {
        properties.insert("basin_john".to_string(), Property { signal: c.signal, reasons: vec![c.verdict.clone()] });
    }

    let mut checks = vec![
        check("semi-hyperbolic iff doubling", "iff", ("semi_hyperbolic", semi.signal), ("doubling", findings.doubling.signal)),
        check("TCE iff lower mass bound", "iff", ("tce", tce.signal), ("lower_bound", findings.lower_bound.signal)),
        check("TCE iff ExpShrink", "iff", ("tce", tce.signal), ("exp_shrink", findings.expshrink.signal)),
        check("semi-hyperbolic implies TCE", "implies", ("semi_hyperbolic", semi.signal), ("tce", tce.signal)),
        check("doubling implies lower mass bound", "implies", ("doubling", findings.doubling.signal), ("lower_bound", findings.lower_bound.signal)),
        check("semi-hyperbolic implies porous", "implies", ("semi_hyperbolic", semi.signal), ("porous", findings.porosity.signal)),
    ];
    let mut john = check(
        "semi-hyperbolic iff basin of infinity John",
        "iff",
        ("semi_hyperbolic", semi.signal),
        ("basin_john", findings.carrot.as_ref().map_or(Signal::Undetermined, |c| c.signal)),
    );
    if findings.carrot.is_none() {
        john.status = CheckStatus::NotApplicable;
    }
    checks.push(john);

    let mut annotation_mismatches = Vec::new();
    for (name, expected, got) in [
        ("semi_hyperbolic", expected_class.semi_hyperbolic(), semi.signal),
        ("tce", expected_class.tce(), tce.signal),
    ] {
        if let Some(e) = expected {
            if got.decisive() && got != Signal::from_bool(e) {
                annotation_mismatches.push(format!("{name}: expected {e} for class {}", expected_class.as_str()));
            }
        }
    }
    let contradictions = checks.iter().filter(|c| c.status == CheckStatus::Contradiction).count() + annotation_mismatches.len();
    Ok(ClassificationReport {
        schema_version: SCHEMA_VERSION,
        map,
        expected_class,
        polynomial,
        findings,
        properties,
        checks,
        annotation_mismatches,
        contradictions,
    })
}

impl ClassificationReport {
    /// One-screen text summary.
    pub fn summary(&self) -> String {
        let f = &self.findings;
        let mut s = format!("map {} (expected {})\n", self.map, self.expected_class.as_str());
        let line = |s: &mut String, label: &str, x: &Finding| {
            s.push_str(&format!("  {label:<20} {:<22} value {}\n", x.verdict, fmt_opt(x.value)));
        };
        line(&mut s, "doubling", &f.doubling);
        line(&mut s, "lower bound (alpha)", &f.lower_bound);
        line(&mut s, "chi_per / UHP", &f.uhp);
        line(&mut s, "semi-local degree", &f.semilocal);
        line(&mut s, "TCE density", &f.tce_density);
        line(&mut s, "ExpShrink lambda", &f.expshrink);
        line(&mut s, "porosity xi", &f.porosity);
        line(&mut s, "uniform perfectness", &f.uniform_perfectness);
        if let Some(c) = &f.carrot {
            line(&mut s, "carrot C", c);
        }
        for c in &self.checks {
            let mark = match c.status {
                CheckStatus::Contradiction => "CONTRADICTION",
                CheckStatus::Consistent => "consistent",
                CheckStatus::Undetermined => "undetermined",
                CheckStatus::NotApplicable => "n/a",
            };
            s.push_str(&format!("  check {:<44} {mark}\n", c.name));
        }
        for m in &self.annotation_mismatches {
            s.push_str(&format!("  ANNOTATION MISMATCH {m}\n"));
        }
        s.push_str(&format!("  contradictions: {}\n", self.contradictions));
        s
    }
}
