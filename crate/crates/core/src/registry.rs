//! JSON map registry and the shipped corpus.

use std::collections::BTreeSet;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LabError, Result};
use crate::map::RationalMap;

pub const SHIPPED_CORPUS: &str = include_str!("../corpus/corpus.json");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectedClass {
    Hyperbolic,
    SemiHyperbolic,
    Parabolic,
    #[default]
    Other,
}

impl ExpectedClass {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "hyperbolic" => ExpectedClass::Hyperbolic,
            "semi-hyperbolic" => ExpectedClass::SemiHyperbolic,
            "parabolic" => ExpectedClass::Parabolic,
            "other" => ExpectedClass::Other,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ExpectedClass::Hyperbolic => "hyperbolic",
            ExpectedClass::SemiHyperbolic => "semi-hyperbolic",
            ExpectedClass::Parabolic => "parabolic",
            ExpectedClass::Other => "other",
        }
    }

    /// Expected answer to "is the map semi-hyperbolic", when the class decides it.
    pub fn semi_hyperbolic(&self) -> Option<bool> {
        match self {
            ExpectedClass::Hyperbolic | ExpectedClass::SemiHyperbolic => Some(true),
            ExpectedClass::Parabolic => Some(false),
            ExpectedClass::Other => None,
        }
    }

    /// A parabolic cycle rules out TCE; semi-hyperbolic maps are TCE.
    pub fn tce(&self) -> Option<bool> {
        self.semi_hyperbolic()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotations {
    pub expected_class: ExpectedClass,
    /// Indices into the sorted critical points; overrides the heuristic flags.
    pub critical_in_julia: Option<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct RegisteredMap {
    pub map: RationalMap,
    pub annotations: Annotations,
}

impl RegisteredMap {
    pub fn name(&self) -> &str {
        self.map.name()
    }
}

pub fn shipped_corpus() -> Vec<RegisteredMap> {
    parse_registry(SHIPPED_CORPUS).expect("shipped corpus is valid")
}

pub fn load_registry(path: &Path) -> Result<Vec<RegisteredMap>> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path.display().to_string(), e))?;
    parse_registry(&text)
}

pub fn parse_registry(text: &str) -> Result<Vec<RegisteredMap>> {
    let doc: Value = serde_json::from_str(text).map_err(|e| LabError::json("registry", e))?;
    let entries = doc.as_array().ok_or_else(|| LabError::Registry { entry: "<root>".into(), message: "expected a list of maps".into() })?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(entries.len());
    for (k, e) in entries.iter().enumerate() {
        let reg = parse_entry(k, e)?;
        if !seen.insert(reg.name().to_string()) {
            return Err(LabError::Registry { entry: reg.name().to_string(), message: "field name: duplicate map name".into() });
        }
        out.push(reg);
    }
    Ok(out)
}

fn parse_entry(k: usize, e: &Value) -> Result<RegisteredMap> {
    let label = |name: &str| format!("#{k} ({name})");
    let name = e
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| LabError::Registry { entry: format!("#{k}"), message: "field name: missing or not a string".into() })?;
    let fail = |message: String| LabError::Registry { entry: label(name), message };
    let coeffs = |field: &str| -> Result<Vec<Complex64>> {
        let list = e.get(field).and_then(Value::as_array).ok_or_else(|| fail(format!("field {field}: missing or not a list")))?;
        list.iter()
            .map(|pair| match pair.as_array().map(|p| p.iter().map(Value::as_f64).collect::<Vec<_>>()) {
                Some(p) if p.len() == 2 && p.iter().all(Option::is_some) => Ok(Complex64::new(p[0].unwrap(), p[1].unwrap())),
                _ => Err(fail(format!("field {field}: coefficients must be [re, im] pairs"))),
            })
            .collect()
    };
    let numerator = coeffs("numerator")?;
    let denominator = coeffs("denominator")?;
    let map = RationalMap::new(name, numerator, denominator).map_err(|err| match err {
        LabError::DegenerateMap(m) => fail(format!("degenerate map: {m}")),
        other => fail(format!("field numerator/denominator: {other}")),
    })?;
    let mut annotations = Annotations::default();
    if let Some(a) = e.get("annotations") {
        if let Some(c) = a.get("expected_class") {
            let s = c.as_str().ok_or_else(|| fail("field annotations.expected_class: not a string".into()))?;
            annotations.expected_class =
                ExpectedClass::parse(s).ok_or_else(|| fail(format!("field annotations.expected_class: unknown class `{s}`")))?;
        }
        if let Some(list) = a.get("critical_in_julia") {
            let list = list.as_array().ok_or_else(|| fail("field annotations.critical_in_julia: not a list".into()))?;
            let mut idx = Vec::with_capacity(list.len());
            for v in list {
                let i = v.as_u64().ok_or_else(|| fail("field annotations.critical_in_julia: indices must be non-negative integers".into()))?;
                if i as usize >= 2 * map.degree() - 2 {
                    return Err(fail(format!("field annotations.critical_in_julia: index {i} exceeds the number of critical points")));
                }
                idx.push(i as usize);
            }
            annotations.critical_in_julia = Some(idx);
        }
    }
    Ok(RegisteredMap { map, annotations })
}

/// Looks a map up by name.
pub fn find<'a>(maps: &'a [RegisteredMap], name: &str) -> Result<&'a RegisteredMap> {
    maps.iter().find(|m| m.name() == name).ok_or_else(|| LabError::Config {
        field: "map".into(),
        message: format!("unknown map `{name}`; known: {}", maps.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_corpus_loads() {
        let maps = shipped_corpus();
        assert_eq!(maps.len(), 6);
        assert_eq!(find(&maps, "z2+1/4").unwrap().annotations.expected_class, ExpectedClass::Parabolic);
        assert!(!find(&maps, "1/z-z").unwrap().map.is_polynomial());
    }

    #[test]
    fn rejects_bad_entries() {
        let common = r#"[{"name": "bad", "numerator": [[-1,0],[0,0],[1,0]], "denominator": [[-1,0],[1,0]]}]"#;
        let e = parse_registry(common).unwrap_err().to_string();
        assert!(e.contains("degenerate map") && e.contains("bad"), "{e}");
        let linear = r#"[{"name": "lin", "numerator": [[0,0],[2,0]], "denominator": [[1,0]]}]"#;
        let e = parse_registry(linear).unwrap_err().to_string();
        assert!(e.contains("degree at least two"), "{e}");
        let missing = r#"[{"name": "m", "numerator": [[0,0],[0,0],[1,0]]}]"#;
        let e = parse_registry(missing).unwrap_err().to_string();
        assert!(e.contains("field denominator") && e.contains("(m)"), "{e}");
        let class = r#"[{"name": "c", "numerator": [[0,0],[0,0],[1,0]], "denominator": [[1,0]], "annotations": {"expected_class": "chaotic"}}]"#;
        assert!(parse_registry(class).unwrap_err().to_string().contains("expected_class"));
    }
}
