//! Pass/fail reports for identity checks. A check compares many matrix
//! elements or series coefficients; the report keeps the count and the
//! first mismatch so failures are diagnosable without rerunning.

use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub passed: bool,
    pub cases: usize,
    pub first_mismatch: Option<String>,
}

impl CheckReport {
    pub fn new() -> Self {
        CheckReport {
            passed: true,
            cases: 0,
            first_mismatch: None,
        }
    }

    /// Record one compared case; the detail closure runs only on the
    /// first failure.
    pub fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok && self.passed {
            self.passed = false;
            self.first_mismatch = Some(detail());
        }
    }

    pub fn absorb(&mut self, other: CheckReport) {
        self.cases += other.cases;
        if !other.passed && self.passed {
            self.passed = false;
            self.first_mismatch = other.first_mismatch;
        }
    }
}

impl Default for CheckReport {
    fn default() -> Self {
        CheckReport::new()
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed {
            write!(f, "pass ({} cases)", self.cases)
        } else {
            write!(
                f,
                "FAIL ({} cases): {}",
                self.cases,
                self.first_mismatch.as_deref().unwrap_or("unknown")
            )
        }
    }
}
