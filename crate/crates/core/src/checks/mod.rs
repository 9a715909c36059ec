//! Seeded verification suites: finite-difference gradient checks of every
//! analytic backward pass, and equivalence of the production kernels and
//! metrics with the loop oracles in [`crate::reference`].

mod gradient;
mod oracle;

pub use gradient::{
    adaptive_conv_suite, ddpm_full_suite, ddpm_suite, gradient_suites, loss_suite, rel_error,
    LossKind, KINK_MARGIN, REL_FLOOR, STEP,
};
pub use oracle::{
    adaptive_conv_oracle, conv2d_oracle, ddpm_oracle, dilation_oracle, identity_zero_kernels,
    kgu_oracle, metric_oracles, oracle_suites, pool_oracle, random_pair, sweep_oracle,
};

use std::fmt;

/// Outcome of one suite: the worst per-element error over all instances
/// against its bound.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: String,
    pub instances: usize,
    /// Number of scalar comparisons made.
    pub checked: usize,
    pub worst: f64,
    pub tolerance: f64,
    /// `worst ≤ tolerance` rather than `worst < tolerance`.
    pub inclusive: bool,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        if self.inclusive {
            self.worst <= self.tolerance
        } else {
            self.worst < self.tolerance
        }
    }
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} instances={:<4} checked={:<7} worst={:.3e} bound={}{:.0e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.checked,
            self.worst,
            if self.inclusive { "<=" } else { "<" },
            self.tolerance,
        )
    }
}

/// Running maximum over the comparisons of one suite.
#[derive(Debug)]
struct Tally {
    checked: usize,
    worst: f64,
}

impl Tally {
    fn new() -> Self {
        Tally {
            checked: 0,
            worst: 0.0,
        }
    }

    fn record(&mut self, err: f64) {
        self.checked += 1;
        // NaN must surface as a failure.
        if err.is_nan() || err > self.worst {
            self.worst = if err.is_nan() { f64::INFINITY } else { err };
        }
    }

    fn finish(self, name: &str, instances: usize, tolerance: f64, inclusive: bool) -> SuiteResult {
        SuiteResult {
            name: name.to_string(),
            instances,
            checked: self.checked,
            worst: self.worst,
            tolerance,
            inclusive,
        }
    }
}
