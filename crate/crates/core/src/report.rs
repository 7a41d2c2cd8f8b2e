//! Machine-readable results of numerical checks.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Direction in which the statistic must respect the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub parameters: Value,
    pub statistic: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fitted_constants: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<CheckReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Wall-clock time; never serialised so reports stay reproducible.
    #[serde(skip)]
    pub runtime: Duration,
}

impl CheckReport {
    /// `pass` is derived from the statistic, never set directly.
    pub fn new(check: impl Into<String>, statistic: f64, threshold: f64, comparison: Comparison) -> Self {
        let pass = match comparison {
            Comparison::AtMost => statistic <= threshold,
            Comparison::AtLeast => statistic >= threshold,
        };
        Self {
            check: check.into(),
            parameters: Value::Null,
            statistic,
            threshold,
            comparison,
            pass,
            grid: Vec::new(),
            values: Vec::new(),
            fitted_constants: BTreeMap::new(),
            parts: Vec::new(),
            notes: Vec::new(),
            runtime: Duration::ZERO,
        }
    }

    /// Passes iff every part passes; the statistic counts failing parts.
    pub fn composite(check: impl Into<String>, parts: Vec<CheckReport>) -> Self {
        let failing = parts.iter().filter(|p| !p.pass).count() as f64;
        let mut r = Self::new(check, failing, 0.0, Comparison::AtMost);
        r.parts = parts;
        r
    }

    pub fn with_parameters(mut self, p: Value) -> Self {
        self.parameters = p;
        self
    }

    pub fn with_grid(mut self, grid: Vec<Vec<f64>>, values: Vec<f64>) -> Self {
        self.grid = grid;
        self.values = values;
        self
    }

    pub fn with_constant(mut self, name: &str, v: f64) -> Self {
        self.fitted_constants.insert(name.to_string(), v);
        self
    }

    pub fn with_note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }

    /// One line: `PASS name: statistic <= threshold`.
    pub fn verdict(&self) -> String {
        let op = match self.comparison {
            Comparison::AtMost => "<=",
            Comparison::AtLeast => ">=",
        };
        format!(
            "{} {}: {:.6} {} {:.6}",
            if self.pass { "PASS" } else { "FAIL" },
            self.check,
            self.statistic,
            op,
            self.threshold
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_follows_statistic() {
        assert!(CheckReport::new("a", 0.5, 1.0, Comparison::AtMost).pass);
        assert!(!CheckReport::new("a", 1.5, 1.0, Comparison::AtMost).pass);
        assert!(CheckReport::new("a", 1.5, 1.0, Comparison::AtLeast).pass);
        assert!(!CheckReport::new("a", f64::NAN, 1.0, Comparison::AtLeast).pass);
        let c = CheckReport::composite(
            "c",
            vec![CheckReport::new("a", 0.5, 1.0, Comparison::AtMost), CheckReport::new("b", 2.0, 1.0, Comparison::AtMost)],
        );
        assert!(!c.pass && c.statistic == 1.0);
    }

    #[test]
    fn runtime_is_not_serialised() {
        let mut r = CheckReport::new("a", 0.5, 1.0, Comparison::AtMost);
        r.runtime = Duration::from_secs(3);
        let s = serde_json::to_string(&r).unwrap();
        assert!(!s.contains("runtime"));
    }
}
