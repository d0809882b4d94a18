//! Pass/fail bookkeeping for the acceptance run.
//!
//! The checks themselves live in `tests/acceptance.rs`; this crate only
//! collects their outcomes and prints one line per criterion.

use std::fmt;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} [{}] {}: {} ({:.2} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Result of one check: pass flag and a short measurement summary.
pub type Verdict = (bool, String);

#[derive(Debug, Default)]
pub struct Ledger {
    outcomes: Vec<Outcome>,
}

impl Ledger {
    /// Runs `check`, prints its line immediately and records it. A panic
    /// inside the check counts as a failure.
    pub fn run(&mut self, id: u32, title: &'static str, check: impl FnOnce() -> Verdict + std::panic::UnwindSafe) {
        let start = Instant::now();
        let (passed, detail) = match std::panic::catch_unwind(check) {
            Ok(v) => v,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                (false, format!("check panicked: {msg}"))
            }
        };
        let outcome = Outcome {
            id,
            title,
            passed,
            detail,
            elapsed: start.elapsed(),
        };
        println!("{outcome}");
        self.outcomes.push(outcome);
    }

    pub fn failures(&self) -> Vec<&Outcome> {
        self.outcomes.iter().filter(|o| !o.passed).collect()
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }
}
