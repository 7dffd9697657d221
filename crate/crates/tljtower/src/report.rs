//! Verification reports shared by every checker and the CLI.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub paper_label: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Report { title: title.into(), seed: None, checks: Vec::new() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Record a residual check. NaN residuals always fail.
    pub fn push(&mut self, name: impl Into<String>, label: &str, residual: f64, tolerance: f64) {
        self.push_detail(name, label, residual, tolerance, None);
    }

    pub fn push_detail(
        &mut self,
        name: impl Into<String>,
        label: &str,
        residual: f64,
        tolerance: f64,
        detail: Option<String>,
    ) {
        let pass = residual <= tolerance;
        self.checks.push(Check {
            name: name.into(),
            paper_label: label.to_string(),
            max_residual: residual,
            tolerance,
            pass,
            detail,
        });
    }

    /// Record an exact (integer or boolean) check; the residual is the absolute mismatch.
    pub fn push_exact(&mut self, name: impl Into<String>, label: &str, got: i64, want: i64) {
        let residual = (got - want).unsigned_abs() as f64;
        let detail = if got == want { None } else { Some(format!("got {got}, expected {want}")) };
        self.push_detail(name, label, residual, 0.0, detail);
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }

    /// Append another report's checks with a name prefix.
    pub fn extend_prefixed(&mut self, prefix: &str, other: Report) {
        for mut c in other.checks {
            c.name = format!("{prefix}{}", c.name);
            self.checks.push(c);
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.pass)
    }

    /// Largest residual among checks carrying the given label (0 if none).
    pub fn max_residual(&self, label: &str) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.paper_label == label)
            .map(|c| c.max_residual)
            .fold(0.0, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) })
    }

    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.checks {
            if !out.contains(&c.paper_label) {
                out.push(c.paper_label.clone());
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One line per check, for human consumption.
    pub fn summary(&self) -> String {
        let mut s = format!("{}\n", self.title);
        for c in &self.checks {
            s.push_str(&format!(
                "  [{}] {:<8} {:<40} residual {:.3e} (tol {:.1e}){}\n",
                if c.pass { "pass" } else { "FAIL" },
                c.paper_label,
                c.name,
                c.max_residual,
                c.tolerance,
                c.detail.as_ref().map(|d| format!("  {d}")).unwrap_or_default()
            ));
        }
        s
    }
}
