use super::config::ExperimentConfig;
use super::suites::SuiteId;
use serde::Serialize;

/// Acceptance region for a criterion value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tolerance {
    Interval { lo: f64, hi: f64 },
    AtLeast { min: f64 },
    AtMost { max: f64 },
    /// `|value − target| ≤ tol`.
    Absolute { tol: f64 },
    /// `|value − target| ≤ tol·|target|`.
    Relative { tol: f64 },
}

impl Tolerance {
    pub fn admits(&self, value: f64, target: f64) -> bool {
        match *self {
            Tolerance::Interval { lo, hi } => lo <= value && value <= hi,
            Tolerance::AtLeast { min } => value >= min,
            Tolerance::AtMost { max } => value <= max,
            Tolerance::Absolute { tol } => (value - target).abs() <= tol,
            Tolerance::Relative { tol } => (value - target).abs() <= tol * target.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Criterion {
    pub fn new(name: impl Into<String>, value: f64, target: f64, tolerance: Tolerance) -> Self {
        let pass = !value.is_nan() && tolerance.admits(value, target);
        Self { name: name.into(), value, target, tolerance, pass, note: None }
    }

    /// A criterion that could not be evaluated.
    pub fn failed(name: impl Into<String>, target: f64, tolerance: Tolerance, why: impl Into<String>) -> Self {
        Self { name: name.into(), value: f64::NAN, target, tolerance, pass: false, note: Some(why.into()) }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        format!(
            "{} {}: value={} target={}{}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            short(self.value),
            short(self.target),
            self.note.as_ref().map(|n| format!(" ({n})")).unwrap_or_default()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BuildInfo {
    pub version: String,
    pub git: String,
}

impl Default for BuildInfo {
    fn default() -> Self {
        Self { version: env!("CARGO_PKG_VERSION").to_string(), git: "unknown".to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub suite: SuiteId,
    pub build: BuildInfo,
    pub criteria: Vec<Criterion>,
    pub timing: Timing,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// The report without its timing block, for reproducibility checks.
    pub fn data_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v.as_object_mut().expect("object").remove("timing");
        serde_json::to_string_pretty(&v).expect("value serializes")
    }
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DataTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl DataTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn short(x: f64) -> String {
    if x == 0.0 || (1e-3..1e6).contains(&x.abs()) {
        format!("{x:.6}")
    } else {
        format!("{x:.4e}")
    }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerances() {
        assert!(Tolerance::Interval { lo: -0.21, hi: -0.13 }.admits(-0.17, 0.0));
        assert!(!Tolerance::Interval { lo: -0.21, hi: -0.13 }.admits(-0.12, 0.0));
        assert!(Tolerance::Relative { tol: 0.15 }.admits(1.1, 1.0));
        assert!(!Tolerance::Relative { tol: 0.15 }.admits(1.2, 1.0));
        assert!(!Criterion::new("x", f64::NAN, 0.0, Tolerance::AtMost { max: 1.0 }).pass);
    }

    #[test]
    fn csv_is_lf_terminated() {
        let mut t = DataTable::new(&["a", "b"]);
        t.push(vec!["1".into(), "2".into()]);
        assert_eq!(t.to_csv(), "a,b\n1,2\n");
    }

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_f64(0.25), "2.5000000000000000e-1");
        assert_eq!(fmt_f64(2.0 / 3.0), "6.6666666666666663e-1");
    }
}
