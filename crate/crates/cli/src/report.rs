//! Structured run reports.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `"<="` or `">="`.
    pub comparison: &'static str,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub inputs: Value,
    pub checksums: BTreeMap<String, String>,
    pub thresholds: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub results: Value,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

impl Report {
    pub fn new(command: &str, inputs: Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            inputs,
            checksums: BTreeMap::new(),
            thresholds: BTreeMap::new(),
            checks: Vec::new(),
            results: Value::Null,
            pass: true,
            timings_ms: Some(BTreeMap::new()),
        }
    }

    pub fn at_most(&mut self, name: &str, value: f64, threshold: f64) {
        self.push(name, value, threshold, "<=", value <= threshold);
    }

    pub fn at_least(&mut self, name: &str, value: f64, threshold: f64) {
        self.push(name, value, threshold, ">=", value >= threshold);
    }

    fn push(&mut self, name: &str, value: f64, threshold: f64, comparison: &'static str, pass: bool) {
        // NaN fails both comparisons; `+ 0.0` folds negative zero.
        let value = value + 0.0;
        self.thresholds.insert(name.into(), threshold);
        self.pass &= pass;
        self.checks.push(Check { name: name.into(), value, threshold, comparison, pass });
    }

    pub fn time(&mut self, name: &str, start: std::time::Instant) {
        if let Some(t) = &mut self.timings_ms {
            t.insert(name.into(), start.elapsed().as_secs_f64() * 1e3);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
