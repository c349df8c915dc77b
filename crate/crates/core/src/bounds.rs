//! Reference bounds, rate-versus-loss sweeps and the comparison table.

use std::f64::consts::E;
use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::decoy::{analyze, EstimatorOptions, ObservedGains};
use crate::simulator::{expected_tally, run_simulation_with, SimulationOptions};
use crate::types::ProtocolConfig;
use crate::{Error, Result};

/// `10^(-loss/10)`.
pub fn transmissivity(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Repeaterless capacity `-log2(1 - η)`.
pub fn plob_bound(loss_db: f64) -> Result<f64> {
    if !(loss_db > 0.0) {
        return Err(Error::domain(format!("PLOB bound diverges for loss {loss_db} dB")));
    }
    Ok(-(-transmissivity(loss_db)).ln_1p() / std::f64::consts::LN_2)
}

/// Asymptotic decoy-state MDI rate `η / (2e²)`.
pub fn ideal_decoy_mdi_bound(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) {
        return Err(Error::domain(format!("loss {loss_db} dB must be nonnegative")));
    }
    Ok(transmissivity(loss_db) / (2.0 * E * E))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveSource {
    Simulated,
    ExperimentalReplay,
    Plob,
    IdealDecoy,
}

impl fmt::Display for CurveSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveSource::Simulated => "simulated",
            CurveSource::ExperimentalReplay => "experimental-replay",
            CurveSource::Plob => "plob",
            CurveSource::IdealDecoy => "ideal-decoy",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCurvePoint {
    pub total_loss_db: f64,
    pub transmissivity: f64,
    pub rate_per_pulse: f64,
    pub rate_bps: f64,
    pub source: CurveSource,
}

/// How gains are produced at each loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// Monte Carlo at the given budget.
    FullSimulation { seed: u64, workers: usize, pairs: u64 },
    /// Expected counts of the dead-time-free model at the configured budget.
    AnalyticGains,
}

/// Which protocol parameters are used at each loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParameterSchedule {
    /// The template unchanged apart from its loss.
    Fixed,
    /// Intensities, probabilities and budget interpolated between the
    /// three optimised parameter sets at 24, 35 and 44 dB.
    Interpolated,
}

impl ParameterSchedule {
    /// One-line description written into sweep metadata.
    pub fn describe(self) -> &'static str {
        match self {
            ParameterSchedule::Fixed => "fixed: template parameters at every loss",
            ParameterSchedule::Interpolated => {
                "interpolated: intensities and probabilities piecewise linear in loss_db between the \
                 24/35/44 dB parameter sets, pulse budget log-linear, clamped to the end sets outside 24-44 dB"
            }
        }
    }

    pub fn config_at(self, template: &ProtocolConfig, loss_db: f64) -> ProtocolConfig {
        let mut cfg = template.clone().with_total_loss_db(loss_db);
        if self == ParameterSchedule::Fixed {
            return cfg;
        }
        let anchors =
            [ProtocolConfig::experiment_24db(), ProtocolConfig::experiment_35db(), ProtocolConfig::experiment_44db()];
        let losses: Vec<f64> = anchors.iter().map(ProtocolConfig::total_loss_db).collect();
        let (lo, hi, w) = if loss_db <= losses[0] {
            (0, 0, 0.0)
        } else if loss_db >= losses[2] {
            (2, 2, 0.0)
        } else {
            let i = usize::from(loss_db > losses[1]);
            (i, i + 1, (loss_db - losses[i]) / (losses[i + 1] - losses[i]))
        };
        let (a, b) = (&anchors[lo], &anchors[hi]);
        let lerp = |x: f64, y: f64| x + w * (y - x);
        cfg.intensities.s = lerp(a.intensities.s, b.intensities.s);
        cfg.intensities.mu = lerp(a.intensities.mu, b.intensities.mu);
        cfg.intensities.nu = lerp(a.intensities.nu, b.intensities.nu);
        cfg.probabilities.s = lerp(a.probabilities.s, b.probabilities.s);
        cfg.probabilities.mu = lerp(a.probabilities.mu, b.probabilities.mu);
        cfg.probabilities.nu = lerp(a.probabilities.nu, b.probabilities.nu);
        let log_n = lerp((a.pulse_pair_budget as f64).ln(), (b.pulse_pair_budget as f64).ln());
        cfg.pulse_pair_budget = log_n.exp().round() as u64;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub mode: SweepMode,
    pub schedule: ParameterSchedule,
    /// Phase grid for analytic gains.
    pub phase_steps: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { mode: SweepMode::AnalyticGains, schedule: ParameterSchedule::Interpolated, phase_steps: 64 }
    }
}

/// One sweep row: the secure rate and both reference bounds at one loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub loss_db: f64,
    pub eta: f64,
    pub y11_lower: f64,
    pub e11ph_upper: f64,
    pub rate_per_pulse: f64,
    pub rate_bps: f64,
    pub plob: f64,
    pub ideal_decoy: f64,
    /// Clock used to express the bounds in bps.
    pub clock_hz: f64,
    pub diagnostic: Option<String>,
}

impl SweepRow {
    pub fn curve_points(&self) -> [RateCurvePoint; 3] {
        let point = |rate: f64, source| RateCurvePoint {
            total_loss_db: self.loss_db,
            transmissivity: self.eta,
            rate_per_pulse: rate,
            rate_bps: rate * self.clock_hz,
            source,
        };
        [
            point(self.rate_per_pulse, CurveSource::Simulated),
            point(self.plob, CurveSource::Plob),
            point(self.ideal_decoy, CurveSource::IdealDecoy),
        ]
    }
}

/// Secure rate at each loss of `loss_grid`, in grid order.
pub fn sweep_rate_vs_loss(template: &ProtocolConfig, loss_grid: &[f64], opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    loss_grid.par_iter().map(|&loss| sweep_point(template, loss, opts)).collect()
}

fn sweep_point(template: &ProtocolConfig, loss_db: f64, opts: &SweepOptions) -> Result<SweepRow> {
    let cfg = opts.schedule.config_at(template, loss_db);
    cfg.validate().into_result()?;
    let tally = match opts.mode {
        SweepMode::FullSimulation { seed, workers, pairs } => {
            run_simulation_with(&cfg, &SimulationOptions::new(seed, pairs).workers(workers))?
        }
        SweepMode::AnalyticGains => expected_tally(&cfg, opts.phase_steps)?,
    };
    let gains = ObservedGains::from_tally(&tally)?;
    let a = analyze(&gains, &cfg, &EstimatorOptions::from_config(&cfg))?;
    Ok(SweepRow {
        loss_db,
        eta: transmissivity(loss_db),
        y11_lower: a.result.y11_lower,
        e11ph_upper: a.result.e11ph_upper,
        rate_per_pulse: a.result.key_rate_per_pulse,
        rate_bps: a.result.key_rate_bps,
        plob: plob_bound(loss_db)?,
        ideal_decoy: ideal_decoy_mdi_bound(loss_db)?,
        clock_hz: cfg.effective_clock_hz(),
        diagnostic: a.diagnostic,
    })
}

/// One row of the comparison report.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub reference: String,
    pub clock_mhz: f64,
    pub loss_db: f64,
    pub key_rate_bps: f64,
    pub key_rate_per_pulse: f64,
}

impl ComparisonRow {
    fn new(reference: &str, clock_mhz: f64, loss_db: f64, key_rate_bps: f64, key_rate_per_pulse: f64) -> Self {
        Self { reference: reference.into(), clock_mhz, loss_db, key_rate_bps, key_rate_per_pulse }
    }
}

/// Published results of other MDI-QKD systems.
pub fn published_comparisons() -> Vec<ComparisonRow> {
    vec![
        ComparisonRow::new("Comandar et al. (no random modulation)", 1000.0, 20.4, 4567.0, 4.57e-6),
        ComparisonRow::new("Wei et al. (simulation)", 1250.0, 20.4, 6172.0, 4.94e-6),
        ComparisonRow::new("Wei et al.", 1250.0, 28.0, 268.0, 2.14e-7),
        ComparisonRow::new("Wei et al.", 1250.0, 36.0, 31.0, 2.48e-8),
        ComparisonRow::new("Woodward et al.", 1000.0, 30.0, 1971.0, 1.97e-6),
        ComparisonRow::new("Woodward et al.", 1000.0, 40.0, 58.0, 5.80e-8),
    ]
}

/// Measured rates of the integrated-detector system itself.
pub fn measured_relay_rows() -> Vec<ComparisonRow> {
    vec![
        ComparisonRow::new("integrated relay (measured)", 125.0, 24.0, 6166.0, 4.93e-5),
        ComparisonRow::new("integrated relay (measured)", 125.0, 35.0, 170.0, 1.36e-6),
        ComparisonRow::new("integrated relay (measured)", 125.0, 44.0, 34.0, 2.72e-7),
    ]
}

pub const COMPARISON_HEADER: &str = "reference,clock_mhz,loss_db,key_rate_bps,key_rate_per_pulse";

/// CSV report: external rows first, then the secure-rate points of
/// `points` (bound curves are skipped).
pub fn comparison_table(points: &[RateCurvePoint], external_rows: &[ComparisonRow]) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    let own = points
        .iter()
        .filter(|p| matches!(p.source, CurveSource::Simulated | CurveSource::ExperimentalReplay))
        .map(|p| ComparisonRow {
            reference: format!("model ({})", p.source),
            clock_mhz: if p.rate_per_pulse > 0.0 { p.rate_bps / p.rate_per_pulse / 1e6 } else { f64::NAN },
            loss_db: p.total_loss_db,
            key_rate_bps: p.rate_bps,
            key_rate_per_pulse: p.rate_per_pulse,
        });
    for r in external_rows.iter().cloned().chain(own) {
        let _ = writeln!(
            out,
            "{},{},{},{:.0},{:.3e}",
            r.reference, r.clock_mhz, r.loss_db, r.key_rate_bps, r.key_rate_per_pulse
        );
    }
    out
}
