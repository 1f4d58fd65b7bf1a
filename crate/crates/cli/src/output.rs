//! CSV and JSON emitters.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{RawConfig, Scenario};
use crate::scenario::Report;

pub const SCHEMA_VERSION: u32 = 1;

/// SHA-256 over the scenario and the canonical config text.
pub fn fingerprint(scenario: Scenario, raw: &RawConfig) -> String {
    let mut h = Sha256::new();
    h.update(scenario.name().as_bytes());
    h.update(b"\n");
    h.update(raw.canonical().as_bytes());
    h.finalize()
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// 17 significant digits, round-trip safe.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn json_num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn to_csv(report: &Report, fp: &str) -> String {
    let mut out = String::new();
    out.push_str(report.sweep_variable);
    for c in &report.columns {
        out.push(',');
        out.push_str(c);
    }
    out.push_str(",fingerprint\n");
    for (x, metrics) in &report.rows {
        out.push_str(&fmt_num(*x));
        for v in metrics {
            out.push(',');
            out.push_str(&fmt_num(*v));
        }
        out.push(',');
        out.push_str(fp);
        out.push('\n');
    }
    out
}

pub fn to_json(report: &Report, scenario: Scenario, raw: &RawConfig, fp: &str) -> String {
    let config: Map<String, Value> = raw
        .resolved()
        .into_iter()
        .map(|(k, v)| (k, Value::String(v)))
        .collect();
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|(x, metrics)| {
            let m: Map<String, Value> = report
                .columns
                .iter()
                .zip(metrics)
                .map(|(c, v)| ((*c).to_string(), json_num(*v)))
                .collect();
            json!({ "sweep_value": json_num(*x), "metrics": m, "fingerprint": fp })
        })
        .collect();
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "scenario": scenario.name(),
        "sweep_variable": report.sweep_variable,
        "fingerprint": fp,
        "config": config,
        "summary": report.summary,
        "rows": rows,
    });
    if let Some(t) = &report.timing {
        let t: BTreeMap<&String, Value> = t.iter().map(|(k, v)| (k, json_num(*v))).collect();
        doc["timing"] = json!(t);
    }
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}
