//! `anthro.json`: one object keyed by the anthro.csv column names.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use hrtf_spca::dataset::{AnthroParams, PinnaParams, ANTHRO_HEADER};
use hrtf_spca::Error;

pub fn parse(text: &str, path: &Path) -> hrtf_spca::Result<AnthroParams> {
    let map: BTreeMap<String, serde_json::Value> = serde_json::from_str(text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let mut values = BTreeMap::new();
    for (k, v) in &map {
        if !ANTHRO_HEADER.contains(&k.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "unknown anthropometric field '{k}' (expected {})",
                ANTHRO_HEADER[1..].join(", ")
            )));
        }
        if k == "subject_id" || v.is_null() {
            continue;
        }
        let x = v
            .as_f64()
            .ok_or_else(|| Error::InvalidArgument(format!("field '{k}' must be a number")))?;
        values.insert(k.as_str(), x);
    }
    let get = |k: &str| values.get(k).copied();
    let pinna = |s: &str| PinnaParams {
        d1: get(&format!("d1_{s}")),
        d3: get(&format!("d3_{s}")),
        d4: get(&format!("d4_{s}")),
        d5: get(&format!("d5_{s}")),
        d6: get(&format!("d6_{s}")),
    };
    let a = AnthroParams {
        x1: get("x1"),
        x2: get("x2"),
        x3: get("x3"),
        x12: get("x12"),
        left: pinna("L"),
        right: pinna("R"),
    };
    a.validate()?;
    Ok(a)
}

pub fn read(path: &Path) -> anyhow::Result<AnthroParams> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse(&text, path)?)
}

/// The JSON object for a parameter set, with the same field names.
pub fn to_json(a: &AnthroParams) -> serde_json::Value {
    let mut m = serde_json::Map::new();
    let mut put = |k: &str, v: Option<f64>| {
        if let Some(v) = v {
            m.insert(k.to_string(), v.into());
        }
    };
    put("x1", a.x1);
    put("x2", a.x2);
    put("x3", a.x3);
    put("x12", a.x12);
    for (s, p) in [("L", &a.left), ("R", &a.right)] {
        put(&format!("d1_{s}"), p.d1);
        put(&format!("d3_{s}"), p.d3);
        put(&format!("d4_{s}"), p.d4);
        put(&format!("d5_{s}"), p.d5);
        put(&format!("d6_{s}"), p.d6);
    }
    serde_json::Value::Object(m)
}
