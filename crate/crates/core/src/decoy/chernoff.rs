//! Multiplicative Chernoff inversion for Poisson-like counts.
//!
//! For an observed count `x` the expectation interval `[λ_L, λ_U]` solves
//!
//! ```text
//! -λ + x - x·ln(x/λ) = ln ε
//! ```
//!
//! on either side of `x`. The left side is the log of the Chernoff bound on
//! `P(X ≥ x | λ)` for `λ < x` and on `P(X ≤ x | λ)` for `λ > x`, so each
//! endpoint fails with probability at most `ε`.

use crate::{Error, Result};

fn log_tail(x: f64, lambda: f64) -> f64 {
    if x == 0.0 {
        -lambda
    } else {
        -lambda + x - x * (x / lambda).ln()
    }
}

fn bisect(mut lo: f64, mut hi: f64, increasing: bool, target: f64, x: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let above = log_tail(x, mid) > target;
        if above == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Confidence interval on the expectation behind `observed_count`.
pub fn chernoff_bounds(observed_count: f64, failure_prob: f64) -> Result<(f64, f64)> {
    if !(failure_prob > 0.0 && failure_prob < 1.0) {
        return Err(Error::domain(format!("failure probability {failure_prob} must lie in (0, 1)")));
    }
    if !(observed_count >= 0.0 && observed_count.is_finite()) {
        return Err(Error::domain(format!("observed count {observed_count} must be finite and nonnegative")));
    }
    let x = observed_count;
    let target = failure_prob.ln();

    let lower = if x == 0.0 { 0.0 } else { bisect(0.0, x, true, target, x) };

    // log_tail falls at least linearly once λ > 2x, so this bracket holds.
    let mut hi = 2.0 * x + 1.0;
    while log_tail(x, hi) > target {
        hi *= 2.0;
    }
    let upper = bisect(x, hi, false, target, x);
    Ok((lower, upper))
}
