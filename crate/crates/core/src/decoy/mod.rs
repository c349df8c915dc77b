//! Four-intensity decoy-state estimation with finite-size corrections.
//!
//! Observed gains of the vacuum and decoy intensity pairs bound the yield
//! `y11` and phase-error rate `e11` of events where both senders emitted
//! exactly one photon. Two estimators are available: a linear program over
//! the photon-number yields (the default, and the tighter of the two) and a
//! closed-form two-decoy bound kept for cross-checking.

mod analytic;
mod chernoff;
mod lp;

use std::fmt;

pub use chernoff::chernoff_bounds;

use crate::types::{Basis, IntensityLabel, IntensityPair, ProtocolConfig, TallyTable};
use crate::{Error, Result};

use IntensityLabel::{Mu, Nu, Signal, Vacuum};

/// Photon-number cutoff of the linear program.
pub const DEFAULT_CUTOFF: usize = 10;

/// `-x log2 x - (1-x) log2 (1-x)`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("binary entropy argument {x} outside [0, 1]")));
    }
    let term = |p: f64| if p == 0.0 { 0.0 } else { -p * p.log2() };
    Ok(term(x) + term(1.0 - x))
}

/// Counts for one observable. A row may merge several ordered pairs that
/// are statistically identical (e.g. `mu_o` and `o_mu`); `sent` is then the
/// total over those pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GainRow {
    pub pairs: Vec<IntensityPair>,
    pub sent: u64,
    pub successes: u64,
    pub errors: Option<u64>,
}

impl GainRow {
    pub fn new(pair: IntensityPair, sent: u64, successes: u64, errors: Option<u64>) -> Self {
        Self { pairs: vec![pair], sent, successes, errors }
    }

    /// `mu_o+o_mu` style label.
    pub fn label(&self) -> String {
        self.pairs.iter().map(ToString::to_string).collect::<Vec<_>>().join("+")
    }

    pub fn parse_label(label: &str) -> Result<Vec<IntensityPair>> {
        label.split('+').map(|p| p.trim().parse()).collect()
    }

    pub fn basis(&self) -> Option<Basis> {
        let first = self.pairs.first()?.basis()?;
        self.pairs.iter().all(|p| p.basis() == Some(first)).then_some(first)
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidCounts(format!("{}: {msg}", self.label())));
        if self.pairs.is_empty() {
            return bad("row names no intensity pair");
        }
        if self.successes > self.sent {
            return bad("successes exceed sent");
        }
        if self.errors.is_some_and(|e| e > self.successes) {
            return bad("errors exceed successes");
        }
        Ok(())
    }
}

/// Observed counts per intensity pair, as simulated or as measured.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ObservedGains {
    rows: Vec<GainRow>,
}

impl ObservedGains {
    pub fn new(rows: Vec<GainRow>) -> Result<Self> {
        let mut seen = Vec::new();
        for row in &rows {
            row.check()?;
            for p in &row.pairs {
                if seen.contains(p) {
                    return Err(Error::InvalidCounts(format!("pair {p} appears in more than one row")));
                }
                seen.push(*p);
            }
        }
        Ok(Self { rows })
    }

    /// One row per ordered pair, with errors summed over both Bell outcomes.
    pub fn from_tally(tally: &TallyTable) -> Result<Self> {
        tally.check()?;
        Self::new(tally.iter().map(|(pair, t)| GainRow::new(pair, t.sent, t.successes(), Some(t.errors()))).collect())
    }

    pub fn rows(&self) -> &[GainRow] {
        &self.rows
    }

    pub fn row(&self, pair: IntensityPair) -> Option<&GainRow> {
        self.rows.iter().find(|r| r.pairs.contains(&pair))
    }

    fn require(&self, pair: IntensityPair) -> Result<&GainRow> {
        self.row(pair).ok_or_else(|| Error::MissingPair(pair.to_string()))
    }

    /// Checks that every pair needed by the estimators is present.
    pub fn check_complete(&self) -> Result<()> {
        for pair in REQUIRED {
            self.require(pair)?;
        }
        let mm = self.require(IntensityPair::new(Mu, Mu))?;
        if mm.errors.is_none() {
            return Err(Error::InvalidCounts("mu_mu: errors are required".into()));
        }
        let ss = self.require(IntensityPair::new(Signal, Signal))?;
        if ss.errors.is_none() {
            return Err(Error::InvalidCounts("s_s: errors are required".into()));
        }
        Ok(())
    }

    /// Merges each ordered pair with its swap. Rows already covering both
    /// orders stay as they are.
    pub fn joint(&self) -> Self {
        let mut rows: Vec<GainRow> = Vec::new();
        for row in &self.rows {
            let swapped: Vec<_> = row.pairs.iter().map(|p| p.swapped()).collect();
            let partner = rows.iter_mut().find(|r| {
                r.pairs.iter().all(|p| swapped.contains(p)) && r.pairs.len() == swapped.len() && r.pairs != row.pairs
            });
            match partner {
                Some(r) => {
                    r.pairs.extend(row.pairs.iter().copied());
                    r.sent += row.sent;
                    r.successes += row.successes;
                    r.errors = r.errors.zip(row.errors).map(|(a, b)| a + b);
                }
                None => rows.push(row.clone()),
            }
        }
        Self { rows }
    }

    /// Published counts at 24 dB total loss.
    pub fn measured_24db() -> Self {
        measured(
            &ProtocolConfig::experiment_24db(),
            [1_340_443_872, 189_673, 33_781, 11_123, 17_115, 0],
            [89_872, 54_435],
        )
    }

    /// Published counts at 35 dB total loss.
    pub fn measured_35db() -> Self {
        measured(&ProtocolConfig::experiment_35db(), [81_820_241, 47_419, 25_250, 2_673, 6_481, 0], [8_187, 13_193])
    }

    /// Published counts at 44 dB total loss.
    pub fn measured_44db() -> Self {
        measured(&ProtocolConfig::experiment_44db(), [83_430_549, 87_324, 37_087, 4_632, 9_494, 0], [29_458, 24_656])
    }
}

/// Successes of ss, μμ, νν, μo+oμ, νo+oν, oo and errors of ss, μμ. Sent
/// counts follow from the configured budget and probabilities.
fn measured(config: &ProtocolConfig, successes: [u64; 6], errors: [u64; 2]) -> ObservedGains {
    let p = IntensityPair::new;
    let layout: [(Vec<IntensityPair>, Option<u64>); 6] = [
        (vec![p(Signal, Signal)], Some(errors[0])),
        (vec![p(Mu, Mu)], Some(errors[1])),
        (vec![p(Nu, Nu)], None),
        (vec![p(Mu, Vacuum), p(Vacuum, Mu)], None),
        (vec![p(Nu, Vacuum), p(Vacuum, Nu)], None),
        (vec![p(Vacuum, Vacuum)], None),
    ];
    let rows = layout
        .into_iter()
        .zip(successes)
        .map(|((pairs, errors), successes)| {
            let sent = pairs.iter().map(|q| config.expected_pair_count(*q)).sum::<f64>().round() as u64;
            GainRow { pairs, sent, successes, errors }
        })
        .collect();
    ObservedGains::new(rows).expect("measured counts are consistent")
}

const REQUIRED: [IntensityPair; 7] = [
    IntensityPair::new(Vacuum, Vacuum),
    IntensityPair::new(Mu, Vacuum),
    IntensityPair::new(Vacuum, Mu),
    IntensityPair::new(Nu, Vacuum),
    IntensityPair::new(Vacuum, Nu),
    IntensityPair::new(Mu, Mu),
    IntensityPair::new(Nu, Nu),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    LinearProgram,
    Analytic,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::LinearProgram => "lp",
            Method::Analytic => "analytic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    /// Failure probability per bound; `None` uses the observed counts as
    /// expectations, up to integer rounding.
    pub failure_prob: Option<f64>,
    pub method: Method,
    pub cutoff: usize,
}

impl EstimatorOptions {
    pub fn from_config(config: &ProtocolConfig) -> Self {
        Self { failure_prob: Some(config.failure_prob), method: Method::LinearProgram, cutoff: DEFAULT_CUTOFF }
    }

    pub fn asymptotic(self) -> Self {
        Self { failure_prob: None, ..self }
    }

    pub fn method(self, method: Method) -> Self {
        Self { method, ..self }
    }
}

/// Confidence interval used for one observed count.
#[derive(Debug, Clone, PartialEq)]
pub struct CountInterval {
    /// Row label with `:errors` appended for error counts.
    pub label: String,
    pub observed: u64,
    pub lower: f64,
    pub upper: f64,
}

pub(crate) fn interval(label: String, observed: u64, failure_prob: Option<f64>) -> Result<CountInterval> {
    let (lower, upper) = match failure_prob {
        Some(eps) => chernoff_bounds(observed as f64, eps)?,
        // Counts are integers; the expectation is known to half a count.
        None => ((observed as f64 - 0.5).max(0.0), observed as f64 + 0.5),
    };
    Ok(CountInterval { label, observed, lower, upper })
}

/// Single-photon bounds with the intervals they were derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct SinglePhotonBounds {
    pub y11_lower: f64,
    pub e11ph_upper: f64,
    pub intervals: Vec<CountInterval>,
}

/// Lower bound on the single-photon-pair yield.
pub fn estimate_y11_lower(gains: &ObservedGains, config: &ProtocolConfig) -> Result<f64> {
    estimate_y11_lower_with(gains, config, &EstimatorOptions::from_config(config))
}

pub fn estimate_y11_lower_with(gains: &ObservedGains, config: &ProtocolConfig, opts: &EstimatorOptions) -> Result<f64> {
    check_inputs(gains, config, opts)?;
    let joint = gains.joint();
    match opts.method {
        Method::LinearProgram => lp::System::build(&joint, config, opts)?.y11_lower(),
        Method::Analytic => Ok(analytic::y11_lower(&joint, config, opts)?.0),
    }
}

/// Upper bound on the single-photon phase-error rate given a `y11` bound.
pub fn estimate_e11ph_upper(gains: &ObservedGains, config: &ProtocolConfig, y11_lower: f64) -> Result<f64> {
    estimate_e11ph_upper_with(gains, config, y11_lower, &EstimatorOptions::from_config(config))
}

pub fn estimate_e11ph_upper_with(
    gains: &ObservedGains,
    config: &ProtocolConfig,
    y11_lower: f64,
    opts: &EstimatorOptions,
) -> Result<f64> {
    if !(y11_lower > 0.0) {
        return Err(Error::domain("phase error rate is undefined without a positive y11 bound"));
    }
    check_inputs(gains, config, opts)?;
    let joint = gains.joint();
    let t11 = match opts.method {
        Method::LinearProgram => lp::System::build(&joint, config, opts)?.t11_upper()?,
        Method::Analytic => analytic::t11_upper(&joint, config, opts)?.0,
    };
    Ok((t11 / y11_lower).min(1.0))
}

/// Both bounds in one pass, keeping the count intervals for reporting.
pub fn estimate_single_photon(
    gains: &ObservedGains,
    config: &ProtocolConfig,
    opts: &EstimatorOptions,
) -> Result<SinglePhotonBounds> {
    check_inputs(gains, config, opts)?;
    let joint = gains.joint();
    let (y11, t11, intervals) = match opts.method {
        Method::LinearProgram => {
            let sys = lp::System::build(&joint, config, opts)?;
            let y11 = sys.y11_lower()?;
            let t11 = if y11 > 0.0 { sys.t11_upper()? } else { 0.0 };
            (y11, t11, sys.intervals)
        }
        Method::Analytic => {
            let (y11, mut iv) = analytic::y11_lower(&joint, config, opts)?;
            let y11 = y11.max(0.0);
            let (t11, iv_t) = analytic::t11_upper(&joint, config, opts)?;
            iv.extend(iv_t.into_iter().filter(|c| !iv.contains(c)).collect::<Vec<_>>());
            (y11, t11, iv)
        }
    };
    let e11 = if y11 > 0.0 { (t11 / y11).min(1.0) } else { 1.0 };
    Ok(SinglePhotonBounds { y11_lower: y11, e11ph_upper: e11, intervals })
}

fn check_inputs(gains: &ObservedGains, config: &ProtocolConfig, opts: &EstimatorOptions) -> Result<()> {
    config.validate().into_result()?;
    gains.check_complete()?;
    if let Some(eps) = opts.failure_prob {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain(format!("failure probability {eps} must lie in (0, 1)")));
        }
    }
    if opts.cutoff < 1 {
        return Err(Error::domain("photon-number cutoff must be at least 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyResult {
    pub y11_lower: f64,
    pub e11ph_upper: f64,
    pub key_rate_per_pulse: f64,
    pub key_rate_bps: f64,
    /// The unclamped rate was negative.
    pub clamped: bool,
}

/// `R = Ps² {s² e^{-2s} y11 [1 - h(e11)] - f y_ss h(E_ss)}`, clamped at 0.
/// Phase-error bounds at or above 1/2 leave no single-photon contribution.
pub fn key_rate(
    y11_lower: f64,
    e11ph_upper: f64,
    y_ss: f64,
    e_ss: f64,
    config: &ProtocolConfig,
) -> Result<DecoyResult> {
    for (name, v) in [("y11", y11_lower), ("e11", e11ph_upper), ("y_ss", y_ss), ("E_ss", e_ss)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("{name} = {v} outside [0, 1]")));
        }
    }
    let s = config.intensities.s;
    let ps = config.probabilities.s;
    let privacy = 1.0 - binary_entropy(e11ph_upper.min(0.5))?;
    let leak = config.error_correction_f * y_ss * binary_entropy(e_ss)?;
    let raw = ps * ps * (s * s * (-2.0 * s).exp() * y11_lower * privacy - leak);
    let rate = raw.max(0.0);
    Ok(DecoyResult {
        y11_lower,
        e11ph_upper,
        key_rate_per_pulse: rate,
        key_rate_bps: rate * config.effective_clock_hz(),
        clamped: raw < 0.0,
    })
}

/// Full analysis of a gains table.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub method: Method,
    pub result: DecoyResult,
    pub y_ss: f64,
    pub e_ss: f64,
    pub intervals: Vec<CountInterval>,
    /// Set when the constraint system had no solution; the rate is then 0.
    pub diagnostic: Option<String>,
}

pub fn analyze(gains: &ObservedGains, config: &ProtocolConfig, opts: &EstimatorOptions) -> Result<Analysis> {
    let ss = gains.require(IntensityPair::new(Signal, Signal))?;
    gains.check_complete()?;
    if ss.sent == 0 {
        return Err(Error::InvalidCounts("s_s: no pulses sent".into()));
    }
    let y_ss = ss.successes as f64 / ss.sent as f64;
    let e_ss = if ss.successes == 0 { 0.0 } else { ss.errors.unwrap_or(0) as f64 / ss.successes as f64 };
    let (bounds, diagnostic) = match estimate_single_photon(gains, config, opts) {
        Ok(b) => (b, None),
        Err(Error::Infeasible(msg)) => {
            (SinglePhotonBounds { y11_lower: 0.0, e11ph_upper: 1.0, intervals: Vec::new() }, Some(msg))
        }
        Err(e) => return Err(e),
    };
    let result = key_rate(bounds.y11_lower, bounds.e11ph_upper, y_ss, e_ss, config)?;
    Ok(Analysis { method: opts.method, result, y_ss, e_ss, intervals: bounds.intervals, diagnostic })
}
