//! Command reports and their `json` / `md` renderings.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Md,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "md" => Ok(Format::Md),
            other => Err(Error::Usage(format!("unknown format `{other}` (expected json or md)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub inputs: Value,
    pub results: Value,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl Report {
    pub fn new(command: &str, inputs: Value) -> Self {
        Self { command: command.into(), inputs, results: Value::Object(Map::new()), status: Status::Ok, message: None }
    }

    /// Adds `key` to the results; values that fail to serialize become `null`.
    pub fn set(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        if let Value::Object(map) = &mut self.results {
            map.insert(key.into(), v);
        }
        self
    }

    pub fn fail(&mut self, message: impl Into<String>) -> &mut Self {
        self.status = Status::Failed;
        self.message = Some(message.into());
        self
    }

    pub fn ok(&self) -> bool {
        self.status == Status::Ok
    }
}

pub fn round_significant(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Rounds every float in `v` to [`SIGNIFICANT_DIGITS`].
pub fn canonicalize(v: &Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_significant(n.as_f64().expect("f64"));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.iter().map(canonicalize).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, x)| (k.clone(), canonicalize(x))).collect()),
        other => other.clone(),
    }
}

pub fn emit_report(report: &Report, format: Format) -> String {
    let value = canonicalize(&serde_json::to_value(report).expect("reports serialize"));
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&value).expect("values serialize");
            s.push('\n');
            s
        }
        Format::Md => markdown(&value),
    }
}

fn compact(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "—".into(),
        other => other.to_string(),
    }
}

fn table(out: &mut String, map: &Map<String, Value>) {
    out.push_str("| key | value |\n|---|---|\n");
    for (k, v) in map {
        let _ = writeln!(out, "| {k} | {} |", compact(v).replace('|', "\\|"));
    }
}

fn markdown(value: &Value) -> String {
    let mut out = String::new();
    let get = |k: &str| value.get(k).cloned().unwrap_or(Value::Null);
    let _ = writeln!(out, "# {}\n", compact(&get("command")));
    let _ = writeln!(out, "status: **{}**", compact(&get("status")));
    if let Some(msg) = value.get("message") {
        let _ = writeln!(out, "\n> {}", compact(msg));
    }
    if let Value::Object(inputs) = get("inputs") {
        out.push_str("\n## inputs\n\n");
        table(&mut out, &inputs);
    }
    if let Value::Object(results) = get("results") {
        let (flat, nested): (Map<String, Value>, Map<String, Value>) =
            results.into_iter().partition(|(_, v)| !v.is_object());
        if !flat.is_empty() {
            out.push_str("\n## results\n\n");
            table(&mut out, &flat);
        }
        for (k, v) in nested {
            let _ = writeln!(out, "\n## {k}\n");
            table(&mut out, v.as_object().expect("object"));
        }
    }
    out
}
