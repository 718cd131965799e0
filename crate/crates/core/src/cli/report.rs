//! Experiment reports and their CSV / JSON renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{echo_map, Echo, Experiment, Format};

/// `<package version>+g<commit>` when built from a git checkout.
pub fn artifact_version() -> String {
    match option_env!("NGCA_LAB_GIT_COMMIT") {
        Some(c) if !c.is_empty() => format!("{}+g{c}", env!("CARGO_PKG_VERSION")),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    /// Versioned schema name, e.g. `sphere_w/v1`.
    pub schema: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &str, columns: &[&str]) -> Self {
        Table { schema: schema.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Column header and rows.
    pub fn body_csv(&self) -> String {
        let mut out = format!("{}\n", self.columns.join(","));
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("# schema={}\n{}", self.schema, self.body_csv())
    }
}

/// Shortest round-trip text for a float, in exponent form outside `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// [`num`], or `NA` for a missing value.
pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), num)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Verdict { name: name.into(), pass, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub version: String,
    /// Resolved configuration, enough to replay the run.
    pub config: Echo,
    pub wall_time_s: f64,
    pub table: Table,
    /// Full structured result; deterministic in the config.
    pub payload: Value,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// The deterministic part of the report in the given format.
    pub fn payload_text(&self, format: Format) -> String {
        match format {
            Format::Csv => self.table.to_csv(),
            Format::Json => serde_json::to_string_pretty(&json!({ "table": self.table, "result": self.payload }))
                .expect("payload serializes"),
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut out = String::new();
                writeln!(out, "# schema={}", self.table.schema).unwrap();
                writeln!(out, "# version={}", self.version).unwrap();
                let cfg: Vec<String> = self.config.iter().map(|(k, v)| format!("{k}={v}")).collect();
                writeln!(out, "# config {}", cfg.join(" ")).unwrap();
                out.push_str(&self.table.body_csv());
                for v in &self.verdicts {
                    writeln!(out, "# verdict {} {} {}", v.name, if v.pass { "PASS" } else { "FAIL" }, v.detail).unwrap();
                }
                writeln!(out, "# wall_time_s={:.3}", self.wall_time_s).unwrap();
                out
            }
            Format::Json => {
                let doc = json!({
                    "experiment": self.experiment,
                    "version": self.version,
                    "config": echo_map(&self.config),
                    "wall_time_s": self.wall_time_s,
                    "payload": { "table": self.table, "result": self.payload },
                    "verdicts": self.verdicts,
                    "pass": self.passed(),
                });
                let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
                s.push('\n');
                s
            }
        }
    }

    /// One line for standard output.
    pub fn summary_line(&self) -> String {
        let passed = self.verdicts.iter().filter(|v| v.pass).count();
        let failed: Vec<&str> = self.verdicts.iter().filter(|v| !v.pass).map(|v| v.name.as_str()).collect();
        let mut line = format!(
            "{}: {} ({passed}/{} checks) in {:.1}s",
            self.experiment,
            if self.passed() { "PASS" } else { "FAIL" },
            self.verdicts.len(),
            self.wall_time_s
        );
        if !failed.is_empty() {
            write!(line, "; failed: {}", failed.join(", ")).unwrap();
        }
        line
    }
}
