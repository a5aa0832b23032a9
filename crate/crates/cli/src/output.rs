use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

/// A command failure, reported on standard error as
/// `{"code", "message", "context"}`.
#[derive(Debug)]
pub struct Failure {
    pub code: String,
    pub message: String,
    pub context: Value,
}

impl Failure {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
            context: json!({}),
        }
    }

    pub fn with_context(mut self, key: &str, value: impl Serialize) -> Self {
        if let Value::Object(map) = &mut self.context {
            map.insert(key.to_string(), json!(value));
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&json!({
            "code": self.code,
            "message": self.message,
            "context": self.context,
        }))
        .expect("serializable failure")
    }
}

impl From<aoi_preempt::Error> for Failure {
    fn from(e: aoi_preempt::Error) -> Self {
        Failure::new(e.code(), e.to_string())
    }
}

pub fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("serializable report");
    s.push('\n');
    s
}

/// Writes `document` to `out` and prints `summary`, or prints `document`
/// when there is no output file.
pub fn emit(out: Option<&Path>, document: &str, summary: &str) -> Result<(), Failure> {
    match out {
        Some(path) => {
            fs::write(path, document).map_err(|e| {
                Failure::new("Io", format!("cannot write {}: {e}", path.display()))
                    .with_context("path", path.display().to_string())
            })?;
            println!("{summary}");
        }
        None => print!("{document}"),
    }
    Ok(())
}

/// Left-aligned plain-text table.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    out += &line(
        widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str)
            .collect(),
    );
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

pub fn fmt(x: f64) -> String {
    format!("{x:.6}")
}
