//! Linear program over photon-number yields.
//!
//! Variables are the yields `y_nm` and error yields `t_nm` for `n, m` up to
//! the cutoff, all in `[0, 1]`. Each observed row contributes
//!
//! ```text
//! L - tail <= Σ_q N_q Σ_nm P(I_l(q), n) P(I_r(q), m) y_nm <= U
//! ```
//!
//! where `[L, U]` is the interval on the observed count and `tail` is the
//! expected mass beyond the cutoff (worst case yield 1 for the lower side,
//! yield 0 for the upper). Error rows constrain `t` in the same way, with
//! `t <= y` everywhere and `t = y/2` whenever one sender emitted vacuum.

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use super::{interval, CountInterval, EstimatorOptions, GainRow, ObservedGains, REQUIRED};
use crate::types::{IntensityPair, ProtocolConfig};
use crate::{Error, Result};

/// Row coefficients smaller than this after normalisation are moved into the
/// tail. The solver treats anything near 1e-10 as zero anyway.
const DROP_BELOW: f64 = 1e-9;

fn poisson(mean: f64, n: usize) -> f64 {
    let mut p = (-mean).exp();
    for k in 1..=n {
        p *= mean / k as f64;
    }
    p
}

/// One observed count in absolute units, before normalisation.
struct Row {
    coef: Vec<f64>,
    sent: f64,
    lower: f64,
    upper: f64,
    on_errors: bool,
}

/// How rows are normalised before they reach the solver.
#[derive(Clone, Copy)]
enum Scaling {
    /// By the upper endpoint, or the largest coefficient when that is below
    /// one count.
    Upper,
    /// By the largest coefficient.
    MaxCoef,
}

pub(super) struct System {
    k: usize,
    rows: Vec<Row>,
    pub intervals: Vec<CountInterval>,
}

impl System {
    pub fn build(joint: &ObservedGains, config: &ProtocolConfig, opts: &EstimatorOptions) -> Result<Self> {
        let k = opts.cutoff + 1;
        let mut rows = Vec::new();
        let mut intervals = Vec::new();
        for row in joint.rows().iter().filter(|r| r.pairs.iter().all(|p| REQUIRED.contains(p))) {
            let coef = coefficients(row, config, k);
            let label = row.label();
            let ci = interval(label.clone(), row.successes, opts.failure_prob)?;
            let sent = row.sent as f64;
            rows.push(Row { coef: coef.clone(), sent, lower: ci.lower, upper: ci.upper, on_errors: false });
            intervals.push(ci);
            if let Some(errors) = row.errors {
                let ci = interval(format!("{label}:errors"), errors, opts.failure_prob)?;
                rows.push(Row { coef, sent, lower: ci.lower, upper: ci.upper, on_errors: true });
                intervals.push(ci);
            }
        }
        Ok(Self { k, rows, intervals })
    }

    pub fn y11_lower(&self) -> Result<f64> {
        self.solve(OptimizationDirection::Minimize, false)
    }

    pub fn t11_upper(&self) -> Result<f64> {
        self.solve(OptimizationDirection::Maximize, true)
    }

    /// The simplex occasionally hits a singular basis on badly conditioned
    /// rows; a second pass with different row scaling usually avoids it.
    fn solve(&self, direction: OptimizationDirection, on_errors: bool) -> Result<f64> {
        match self.solve_scaled(direction, on_errors, Scaling::Upper) {
            Err(Error::Infeasible(msg)) if msg.starts_with("linear program failed") => {
                self.solve_scaled(direction, on_errors, Scaling::MaxCoef)
            }
            r => r,
        }
    }

    fn solve_scaled(&self, direction: OptimizationDirection, on_errors: bool, scaling: Scaling) -> Result<f64> {
        let k = self.k;
        let rows: Vec<Row> = self.rows.iter().map(|r| normalise(r, scaling)).collect();
        // Yields span many decades, so each column is rescaled to make its
        // largest coefficient 1. `y_nm` and `t_nm` share a scale so the
        // linking constraints keep unit coefficients.
        let mut col = vec![0.0f64; k * k];
        for row in &rows {
            for (c, a) in col.iter_mut().zip(&row.coef) {
                *c = c.max(*a);
            }
        }
        for c in &mut col {
            if *c == 0.0 {
                *c = 1.0;
            }
        }
        let target = k + 1;
        let mut lp = Problem::new(direction);
        let mut var = |i: usize, obj: bool| lp.add_var(if obj { 1.0 / col[i] } else { 0.0 }, (0.0, col[i]));
        let y: Vec<Variable> = (0..k * k).map(|i| var(i, !on_errors && i == target)).collect();
        let t: Vec<Variable> = (0..k * k).map(|i| var(i, on_errors && i == target)).collect();

        for row in &rows {
            let vars = if row.on_errors { &t } else { &y };
            let terms: Vec<(Variable, f64)> = vars
                .iter()
                .zip(row.coef.iter().zip(&col))
                .filter(|(_, (a, _))| **a != 0.0)
                .map(|(v, (a, c))| (*v, a / c))
                .collect();
            lp.add_constraint(terms.as_slice(), ComparisonOp::Le, row.upper);
            if row.lower > 0.0 {
                lp.add_constraint(terms.as_slice(), ComparisonOp::Ge, row.lower);
            }
        }
        for n in 0..k {
            for m in 0..k {
                let i = n * k + m;
                if n == 0 || m == 0 {
                    lp.add_constraint([(t[i], 1.0), (y[i], -0.5)].as_slice(), ComparisonOp::Eq, 0.0);
                } else {
                    lp.add_constraint([(t[i], 1.0), (y[i], -1.0)].as_slice(), ComparisonOp::Le, 0.0);
                }
            }
        }
        match lp.solve() {
            Ok(sol) => Ok(sol.objective().clamp(0.0, 1.0)),
            Err(microlp::Error::Infeasible) => {
                Err(Error::Infeasible("observed gains are inconsistent with any photon-number yield model".into()))
            }
            Err(e) => Err(Error::Infeasible(format!("linear program failed: {e}"))),
        }
    }
}

/// Expected counts per unit yield, `[n * k + m]`.
fn coefficients(row: &GainRow, config: &ProtocolConfig, k: usize) -> Vec<f64> {
    let weights: Vec<f64> = row.pairs.iter().map(|q| config.expected_pair_count(*q)).collect();
    let total: f64 = weights.iter().sum();
    let mut coef = vec![0.0; k * k];
    for (q, w) in row.pairs.iter().zip(&weights) {
        let share = if total > 0.0 { w / total } else { 1.0 / row.pairs.len() as f64 };
        add_pair(&mut coef, *q, row.sent as f64 * share, config, k);
    }
    coef
}

fn add_pair(coef: &mut [f64], q: IntensityPair, sent: f64, config: &ProtocolConfig, k: usize) {
    let a = config.intensities.get(q.alice);
    let b = config.intensities.get(q.bob);
    let pb: Vec<f64> = (0..k).map(|m| poisson(b, m)).collect();
    for n in 0..k {
        let pa = poisson(a, n);
        for m in 0..k {
            coef[n * k + m] += sent * pa * pb[m];
        }
    }
}

/// Scales a row and folds negligible terms into the tail.
fn normalise(row: &Row, scaling: Scaling) -> Row {
    let mut coef = row.coef.clone();
    let max_coef = coef.iter().copied().fold(0.0, f64::max).max(1.0);
    let scale = match scaling {
        Scaling::Upper if row.upper >= 1.0 => row.upper,
        _ => max_coef,
    };
    let mut tail = row.sent - coef.iter().sum::<f64>();
    for c in &mut coef {
        if *c / scale < DROP_BELOW {
            tail += *c;
            *c = 0.0;
        } else {
            *c /= scale;
        }
    }
    Row {
        coef,
        sent: row.sent,
        lower: (row.lower - tail.max(0.0)) / scale,
        upper: row.upper / scale,
        on_errors: row.on_errors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_matches_closed_form() {
        approx::assert_relative_eq!(poisson(0.5, 0), (-0.5f64).exp());
        approx::assert_relative_eq!(poisson(0.5, 3), (-0.5f64).exp() * 0.125 / 6.0, max_relative = 1e-14);
        approx::assert_relative_eq!((0..60).map(|n| poisson(3.0, n)).sum::<f64>(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn truncation_tail_is_tiny_for_decoy_intensities() {
        let cfg = ProtocolConfig::experiment_24db();
        let g = ObservedGains::measured_24db().joint();
        for row in g.rows().iter().filter(|r| r.pairs.iter().all(|p| REQUIRED.contains(p))) {
            let c = coefficients(row, &cfg, 11);
            let tail = row.sent as f64 - c.iter().sum::<f64>();
            assert!(tail / row.sent as f64 <= 1e-8, "{}", row.label());
        }
    }
}
