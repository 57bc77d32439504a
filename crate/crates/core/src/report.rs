//! CSV tables and plain-text reports with a fixed float format.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::coefficients::HypothesisCheck;

/// Formats like C's `%.17g`.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    const P: i32 = 17;
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= P {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A table with a fixed header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// A checked hypothesis as it appears in reports.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisLine {
    pub id: String,
    pub passed: bool,
    pub margin: f64,
    pub detail: String,
}

impl From<&HypothesisCheck> for HypothesisLine {
    fn from(c: &HypothesisCheck) -> Self {
        HypothesisLine {
            id: c.id.to_string(),
            passed: c.passed,
            margin: c.margin,
            detail: c.detail.clone(),
        }
    }
}

/// Everything a pipeline run writes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub pipeline: String,
    pub spec_hash: String,
    /// Key/value summary, written in order.
    pub summary: Vec<(String, String)>,
    /// Detail tables by file stem.
    pub tables: Vec<(String, Table)>,
    pub hypotheses: Vec<HypothesisLine>,
    pub notes: Vec<String>,
    /// Set when results were produced outside the stated hypotheses.
    pub outside_hypotheses: bool,
}

impl Report {
    pub fn new(pipeline: &str, spec_hash: &str) -> Self {
        Report {
            pipeline: pipeline.into(),
            spec_hash: spec_hash.into(),
            ..Default::default()
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.summary.push((key.into(), value.into()));
    }

    pub fn num(&mut self, key: &str, value: f64) {
        self.set(key, fmt_g(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.summary
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn hypothesis(&mut self, id: &str, passed: bool, margin: f64, detail: impl Into<String>) {
        self.hypotheses.push(HypothesisLine {
            id: id.into(),
            passed,
            margin,
            detail: detail.into(),
        });
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(&["key", "value"]);
        for (k, v) in &self.summary {
            t.push(vec![k.clone(), v.clone()]);
        }
        t
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "pipeline: {}", self.pipeline);
        let _ = writeln!(s, "spec: {}", self.spec_hash);
        if self.outside_hypotheses {
            let _ = writeln!(s, "status: outside stated hypotheses");
        }
        let _ = writeln!(s, "\nhypotheses checked:");
        if self.hypotheses.is_empty() {
            let _ = writeln!(s, "  (none)");
        }
        for h in &self.hypotheses {
            let _ = writeln!(
                s,
                "  {} {} margin={} {}",
                h.id,
                if h.passed { "PASS" } else { "FAIL" },
                fmt_g(h.margin),
                h.detail
            );
        }
        let _ = writeln!(s, "\nsummary:");
        for (k, v) in &self.summary {
            let _ = writeln!(s, "  {k}={v}");
        }
        if !self.notes.is_empty() {
            let _ = writeln!(s, "\nnotes:");
            for n in &self.notes {
                let _ = writeln!(s, "  {n}");
            }
        }
        s
    }

    /// Writes `<pipeline>_summary.csv`, one CSV per detail table and
    /// `report.txt` into `dir`; returns the written paths.
    pub fn write(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        let mut put = |name: String, body: String| -> std::io::Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, body)?;
            paths.push(p);
            Ok(())
        };
        put(
            format!("{}_summary.csv", self.pipeline),
            self.summary_table().to_csv(),
        )?;
        for (stem, t) in &self.tables {
            put(format!("{stem}.csv"), t.to_csv())?;
        }
        put("report.txt".into(), self.text())?;
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_c_general_format() {
        assert_eq!(fmt_g(0.1), "0.10000000000000001");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(256.0), "256");
        assert_eq!(fmt_g(-2.5), "-2.5");
        assert_eq!(fmt_g(1e-5), "1.0000000000000001e-05");
        assert_eq!(fmt_g(1e17), "1e+17");
        assert_eq!(fmt_g(123456789.0), "123456789");
        assert_eq!(fmt_g(0.0001), "0.0001");
        assert_eq!(fmt_g(f64::INFINITY), "inf");
    }

    #[test]
    fn round_trips_exactly() {
        for x in [std::f64::consts::PI, 1.0 / 3.0, 6.02e23, -1.5e-300, 0.3] {
            assert_eq!(fmt_g(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn quotes_fields_with_commas() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["x,y".into(), "1".into()]);
        assert_eq!(t.to_csv(), "a,b\n\"x,y\",1\n");
    }
}
