//! Named pass/fail records shared by every invariant report.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured quantity compared against `bound`.
    pub value: f64,
    pub bound: f64,
}

impl Check {
    /// Passes when `value <= bound`.
    pub fn at_most(name: &str, value: f64, bound: f64) -> Check {
        Check { name: name.to_string(), passed: value <= bound, value, bound }
    }

    /// Passes when `value >= bound`.
    pub fn at_least(name: &str, value: f64, bound: f64) -> Check {
        Check { name: name.to_string(), passed: value >= bound, value, bound }
    }

    pub fn holds(name: &str, passed: bool) -> Check {
        Check { name: name.to_string(), passed, value: if passed { 1.0 } else { 0.0 }, bound: 1.0 }
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}
