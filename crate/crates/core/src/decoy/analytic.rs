//! Closed-form two-decoy bounds.
//!
//! With `a = μ < b = ν` and gains `Q`,
//!
//! ```text
//! K_ll = e^{2l} Q_ll - e^l (Q_lo + Q_ol) + Q_oo = Σ_{n,m≥1} l^{n+m}/(n!m!) y_nm
//! y11 >= (b K_aa / a² - a K_bb / b²) / (b - a)
//! a² t11 <= e^{2a} T_aa - e^a (Q_ao + Q_oa) / 2 + Q_oo / 2
//! ```
//!
//! where `T_aa` is the μμ error gain. Each observed count is replaced by the
//! endpoint of its interval that makes the bound conservative.

use super::{interval, CountInterval, EstimatorOptions, GainRow, ObservedGains};
use crate::types::{IntensityLabel, IntensityPair, ProtocolConfig};
use crate::{Error, Result};

use IntensityLabel::{Mu, Nu, Vacuum};

struct Gain {
    lower: f64,
    upper: f64,
}

fn gain(row: &GainRow, count: u64, suffix: &str, eps: Option<f64>, out: &mut Vec<CountInterval>) -> Result<Gain> {
    if row.sent == 0 {
        return Err(Error::InvalidCounts(format!("{}: no pulses sent", row.label())));
    }
    let ci = interval(format!("{}{suffix}", row.label()), count, eps)?;
    let n = row.sent as f64;
    let g = Gain { lower: ci.lower / n, upper: ci.upper / n };
    out.push(ci);
    Ok(g)
}

struct Rows<'a> {
    oo: &'a GainRow,
    ao: &'a GainRow,
    bo: &'a GainRow,
    aa: &'a GainRow,
    bb: &'a GainRow,
    a: f64,
    b: f64,
}

fn rows<'a>(joint: &'a ObservedGains, config: &ProtocolConfig) -> Result<Rows<'a>> {
    let p = IntensityPair::new;
    let find = |q| joint.require(q);
    let vacuum_row = |l| -> Result<&'a GainRow> {
        let row = joint.require(p(l, Vacuum))?;
        if !row.pairs.contains(&p(Vacuum, l)) || row.pairs.len() != 2 {
            return Err(Error::InvalidCounts(format!("{}: expected the two vacuum orderings combined", row.label())));
        }
        Ok(row)
    };
    let (a, b) = (config.intensities.mu, config.intensities.nu);
    if !(0.0 < a && a < b) {
        return Err(Error::domain("analytic bounds need 0 < mu < nu"));
    }
    Ok(Rows {
        oo: find(p(Vacuum, Vacuum))?,
        ao: vacuum_row(Mu)?,
        bo: vacuum_row(Nu)?,
        aa: find(p(Mu, Mu))?,
        bb: find(p(Nu, Nu))?,
        a,
        b,
    })
}

pub(super) fn y11_lower(
    joint: &ObservedGains,
    config: &ProtocolConfig,
    opts: &EstimatorOptions,
) -> Result<(f64, Vec<CountInterval>)> {
    let r = rows(joint, config)?;
    let eps = opts.failure_prob;
    let mut iv = Vec::new();
    let oo = gain(r.oo, r.oo.successes, "", eps, &mut iv)?;
    let ao = gain(r.ao, r.ao.successes, "", eps, &mut iv)?;
    let bo = gain(r.bo, r.bo.successes, "", eps, &mut iv)?;
    let aa = gain(r.aa, r.aa.successes, "", eps, &mut iv)?;
    let bb = gain(r.bb, r.bb.successes, "", eps, &mut iv)?;
    let (a, b) = (r.a, r.b);
    // Vacuum rows hold both orderings, so (Q_lo + Q_ol) = 2 * row gain.
    let k_aa = (2.0 * a).exp() * aa.lower - a.exp() * 2.0 * ao.upper + oo.lower;
    let k_bb = (2.0 * b).exp() * bb.upper - b.exp() * 2.0 * bo.lower + oo.upper;
    Ok(((b * k_aa / (a * a) - a * k_bb / (b * b)) / (b - a), iv))
}

pub(super) fn t11_upper(
    joint: &ObservedGains,
    config: &ProtocolConfig,
    opts: &EstimatorOptions,
) -> Result<(f64, Vec<CountInterval>)> {
    let r = rows(joint, config)?;
    let eps = opts.failure_prob;
    let errors = r.aa.errors.ok_or_else(|| Error::InvalidCounts("mu_mu: errors are required".into()))?;
    let mut iv = Vec::new();
    let t_aa = gain(r.aa, errors, ":errors", eps, &mut iv)?;
    let ao = gain(r.ao, r.ao.successes, "", eps, &mut iv)?;
    let oo = gain(r.oo, r.oo.successes, "", eps, &mut iv)?;
    let a = r.a;
    let bound = ((2.0 * a).exp() * t_aa.upper - a.exp() * ao.lower + oo.upper / 2.0) / (a * a);
    Ok((bound.clamp(0.0, 1.0), iv))
}
