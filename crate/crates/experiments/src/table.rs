//! In-memory CSV tables with declared headers.

use std::fmt::Display;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Table { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.headers.len(), "row width must match headers");
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Table { headers, rows })
    }
}

/// Cell formatting: shortest round-trip for floats, empty for missing values.
pub fn cell(v: impl Display) -> String {
    v.to_string()
}

pub fn opt_cell<T: Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Compact number formatting for thresholds and reports.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() < 1e-3 || v.abs() >= 1e6 {
        format!("{v:.3e}")
    } else {
        format!("{}", (v * 1e6).round() / 1e6)
    }
}

/// Outcome of one acceptance threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable threshold, e.g. `>= 0.15`.
    pub threshold: String,
    pub pass: bool,
}

impl Check {
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, threshold: format!(">= {}", fmt_num(bound)), pass: value >= bound }
    }

    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, threshold: format!("<= {}", fmt_num(bound)), pass: value <= bound }
    }

    pub fn less_than(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, threshold: format!("< {}", fmt_num(bound)), pass: value < bound }
    }

    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Check { name: name.into(), value, threshold: format!("in [{}, {}]", fmt_num(lo), fmt_num(hi)), pass: value >= lo && value <= hi }
    }

    pub fn table(checks: &[Check]) -> Table {
        let mut t = Table::new(&["check", "value", "threshold", "pass"]);
        for c in checks {
            t.push(vec![c.name.clone(), cell(c.value), c.threshold.clone(), cell(c.pass)]);
        }
        t
    }

    pub fn from_table(t: &Table) -> Option<Vec<Check>> {
        let (n, v, th, p) = (t.column("check")?, t.column("value")?, t.column("threshold")?, t.column("pass")?);
        t.rows
            .iter()
            .map(|r| {
                Some(Check {
                    name: r.get(n)?.clone(),
                    value: r.get(v)?.parse().ok()?,
                    threshold: r.get(th)?.clone(),
                    pass: r.get(p)?.parse().ok()?,
                })
            })
            .collect()
    }
}
