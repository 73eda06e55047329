use std::fmt::Write as _;

use serde::Serialize;
use serde_json::json;
use spinesim::accumulator::{Accumulator, Summary};

use crate::config::{Format, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const COLUMNS: &str = "stat,R,N,k,t,estimate,se,count";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub stat: String,
    pub estimate: f64,
    pub se: f64,
    pub count: u64,
}

impl Row {
    pub fn new(stat: &str, estimate: f64, se: f64, count: u64) -> Self {
        Self { stat: stat.to_string(), estimate, se, count }
    }

    pub fn from_summary(stat: &str, s: &Summary) -> Self {
        Self::new(stat, s.estimate, s.se, s.count)
    }

    pub fn from_acc(stat: &str, acc: &Accumulator) -> Self {
        Self::from_summary(stat, &acc.summary())
    }

    /// A value without a standard error.
    pub fn exact(stat: &str, estimate: f64, count: u64) -> Self {
        Self::new(stat, estimate, f64::NAN, count)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

/// Renders the header block and the rows.
pub fn render(cfg: &RunConfig, rows: &[Row]) -> String {
    let version = env!("CARGO_PKG_VERSION");
    let schema = format!("{}/{SCHEMA_VERSION}", cfg.subcommand);
    let config = serde_json::to_string(cfg).expect("config serializes");
    let mut s = String::new();
    match cfg.format {
        Format::Csv => {
            writeln!(s, "# spinesim {version}").unwrap();
            writeln!(s, "# schema: {schema} columns {COLUMNS}").unwrap();
            writeln!(s, "# seed: {}", cfg.seed).unwrap();
            writeln!(s, "# config: {config}").unwrap();
            writeln!(s, "{COLUMNS}").unwrap();
            for r in rows {
                writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    r.stat,
                    num(cfg.r),
                    cfg.n,
                    cfg.k,
                    num(cfg.t),
                    num(r.estimate),
                    num(r.se),
                    r.count
                )
                .unwrap();
            }
        }
        Format::Jsonl => {
            let header = json!({
                "type": "header",
                "version": version,
                "schema": schema,
                "seed": cfg.seed,
                "config": serde_json::to_value(cfg).expect("config serializes"),
            });
            writeln!(s, "{header}").unwrap();
            for r in rows {
                let rec = json!({
                    "type": "row",
                    "stat": r.stat,
                    "R": cfg.r,
                    "N": cfg.n,
                    "k": cfg.k,
                    "t": cfg.t,
                    "estimate": r.estimate,
                    "se": r.se,
                    "count": r.count,
                });
                writeln!(s, "{rec}").unwrap();
            }
        }
    }
    s
}
