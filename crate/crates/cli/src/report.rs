use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::ExperimentConfig;

/// One pass/fail decision and the threshold it applied.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub comparison: &'static str,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, comparison: "<=", threshold, passed: value <= threshold }
    }

    pub fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, comparison: "<", threshold, passed: value < threshold }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, comparison: ">=", threshold, passed: value >= threshold }
    }
}

/// A table written to `<name>.csv`; the first column is the grid.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Series {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Series { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Full precision, scientific notation, `.` as decimal point.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn int(x: i64) -> String {
    x.to_string()
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub dimension: usize,
    pub results: Map<String, Value>,
    pub series: Vec<Series>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn put(&mut self, key: &str, v: impl Into<Value>) {
        self.results.insert(key.into(), v.into());
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Serialize)]
struct SeriesEntry<'a> {
    name: &'a str,
    file: String,
    grid: &'a str,
    columns: &'a [String],
    rows: usize,
}

#[derive(Serialize)]
struct Report<'a> {
    tool: &'static str,
    version: &'static str,
    kind: &'static str,
    config: &'a ExperimentConfig,
    dimension: usize,
    wall_clock_seconds: f64,
    results: &'a Map<String, Value>,
    series: Vec<SeriesEntry<'a>>,
    checks: &'a [Check],
    passed: bool,
}

pub fn report_json(cfg: &ExperimentConfig, out: &Outcome, seconds: f64) -> Vec<u8> {
    let report = Report {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        kind: cfg.kind.name(),
        config: cfg,
        dimension: out.dimension,
        wall_clock_seconds: seconds,
        results: &out.results,
        series: out
            .series
            .iter()
            .map(|s| SeriesEntry {
                name: &s.name,
                file: format!("{}.csv", s.name),
                grid: &s.columns[0],
                columns: &s.columns,
                rows: s.rows.len(),
            })
            .collect(),
        checks: &out.checks,
        passed: out.passed(),
    };
    let mut v = serde_json::to_vec_pretty(&report).expect("report serializes");
    v.push(b'\n');
    v
}

/// Writes every file under a temporary name first, then renames them into
/// place, so a failed run leaves no partial outputs.
pub fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut staged = Vec::new();
    for (name, bytes) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        let res = fs::File::create(&tmp).and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        });
        if let Err(e) = res {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            let _ = fs::remove_file(&tmp);
            return Err(e);
        }
        staged.push((tmp, dir.join(name)));
    }
    let mut done = Vec::new();
    for (tmp, fin) in staged {
        fs::rename(&tmp, &fin)?;
        done.push(fin);
    }
    Ok(done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_are_scientific_and_round_trip() {
        let x = 0.1 + 0.2;
        let s = num(x);
        assert!(s.contains('e'));
        assert_eq!(s.parse::<f64>().unwrap(), x);
        assert_eq!(num(f64::NAN), "NaN");
        assert_eq!(num(-3.0), "-3.0000000000000000e0");
    }

    #[test]
    fn csv_has_header() {
        let mut s = Series::new("t", &["m (steps)", "c_m (dimensionless)"]);
        s.push(vec![int(3), num(0.5)]);
        let text = String::from_utf8(s.to_csv()).unwrap();
        assert_eq!(text, "m (steps),c_m (dimensionless)\n3,5.0000000000000000e-1\n");
    }

    #[test]
    fn checks() {
        assert!(Check::at_most("x", 1.0, 1.0).passed);
        assert!(!Check::below("x", 1.0, 1.0).passed);
        assert!(!Check::at_least("x", f64::NAN, 0.0).passed);
    }
}
