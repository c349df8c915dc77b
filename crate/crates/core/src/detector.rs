//! Waveguide-integrated nanowire detector: click probability, dark counts,
//! dead-time recovery and the on-chip calibration relations.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    /// On-chip detection efficiency.
    pub ocde: f64,
    pub dark_rate_hz: f64,
    /// 1/e time constant of the efficiency recovery after a click.
    pub decay_time_1e_ns: f64,
    /// Separation beyond which the efficiency is fully restored.
    pub full_recovery_ns: f64,
    /// Hard blind interval right after a click.
    pub blind_interval_ns: f64,
    /// Detection gate per time bin (sets the dark-count probability).
    pub gate_window_ns: f64,
    /// `false` treats the detector as always fully recovered.
    pub dead_time: bool,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            ocde: 0.8,
            dark_rate_hz: 0.25,
            decay_time_1e_ns: 3.39,
            full_recovery_ns: 12.0,
            blind_interval_ns: 1.0,
            gate_window_ns: 2.0,
            dead_time: true,
        }
    }
}

impl DetectorParams {
    pub(crate) fn check(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.ocde) {
            return Err("ocde must lie in [0, 1]".into());
        }
        if !(self.dark_rate_hz >= 0.0) {
            return Err("dark rate must be nonnegative".into());
        }
        if !(self.decay_time_1e_ns > 0.0 && self.decay_time_1e_ns < self.full_recovery_ns) {
            return Err("need 0 < decay_time_1e_ns < full_recovery_ns".into());
        }
        if !(self.blind_interval_ns >= 0.0 && self.blind_interval_ns < self.full_recovery_ns) {
            return Err("need 0 <= blind_interval_ns < full_recovery_ns".into());
        }
        if !(self.gate_window_ns > 0.0) {
            return Err("gate window must be positive".into());
        }
        Ok(())
    }

    /// Probability of a dark count within one gate.
    pub fn dark_probability(&self) -> f64 {
        -(-self.dark_rate_hz * self.gate_window_ns * 1e-9).exp_m1()
    }

    pub fn without_dead_time(self) -> Self {
        Self { dead_time: false, ..self }
    }
}

/// Relative efficiency `time_since_click` seconds after the last click.
///
/// Zero inside the blind interval, then `1 - exp(-(t - blind)/κ)` rescaled so
/// that it reaches exactly 1 at the full-recovery time, and 1 afterwards.
pub fn recovery_factor(time_since_click: f64, params: &DetectorParams) -> Result<f64> {
    if !(time_since_click >= 0.0) {
        return Err(Error::domain("time since last click must be nonnegative"));
    }
    Ok(recovery_unchecked(time_since_click, params))
}

#[inline]
fn recovery_unchecked(t: f64, params: &DetectorParams) -> f64 {
    if !params.dead_time {
        return 1.0;
    }
    let t_ns = t * 1e9;
    if t_ns >= params.full_recovery_ns {
        return 1.0;
    }
    if t_ns <= params.blind_interval_ns {
        return 0.0;
    }
    let kappa = params.decay_time_1e_ns;
    let span = params.full_recovery_ns - params.blind_interval_ns;
    (-(t_ns - params.blind_interval_ns) / kappa).exp_m1() / (-span / kappa).exp_m1()
}

/// Mutable per-detector state carried through one simulation batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorState {
    pub params: DetectorParams,
    last_click: Option<f64>,
    dark_probability: f64,
}

impl DetectorState {
    pub fn new(params: DetectorParams) -> Self {
        Self { params, last_click: None, dark_probability: params.dark_probability() }
    }

    pub fn last_click(&self) -> Option<f64> {
        self.last_click
    }

    /// Efficiency multiplier at time `t` given the click history.
    #[inline]
    pub fn recovery_at(&self, t: f64) -> f64 {
        match self.last_click {
            Some(last) => recovery_unchecked((t - last).max(0.0), &self.params),
            None => 1.0,
        }
    }

    /// Records a click. Click times must be nondecreasing.
    #[inline]
    pub fn register_click(&mut self, t: f64) {
        debug_assert!(self.last_click.is_none_or(|last| t >= last));
        self.last_click = Some(t);
    }

    pub fn reset(&mut self) {
        self.last_click = None;
    }

    #[inline]
    pub(crate) fn click_probability_at(&self, mean_photons: f64, t: f64) -> f64 {
        let eta = self.params.ocde * self.recovery_at(t);
        1.0 - (1.0 - self.dark_probability) * (-eta * mean_photons).exp()
    }
}

/// Probability that the detector fires in a bin at `bin_time` when
/// `incident_mean_photons` arrive: `1 - (1 - p_dark)·exp(-η_eff·n̄)`.
pub fn click_probability(incident_mean_photons: f64, state: &DetectorState, bin_time: f64) -> Result<f64> {
    if !(incident_mean_photons >= 0.0) {
        return Err(Error::domain("mean photon number must be nonnegative"));
    }
    if let Some(last) = state.last_click {
        if bin_time < last {
            return Err(Error::domain("bin time precedes the last click"));
        }
    }
    Ok(state.click_probability_at(incident_mean_photons, bin_time))
}

/// On-chip detection efficiency `(C - C_d) / N_in`.
pub fn ocde_from_counts(on_chip_count_rate: f64, dark_count_rate: f64, photon_arrival_rate: f64) -> Result<f64> {
    if !(photon_arrival_rate > 0.0) {
        return Err(Error::domain("photon arrival rate must be positive"));
    }
    if on_chip_count_rate < dark_count_rate {
        return Err(Error::domain("count rate below dark count rate"));
    }
    Ok((on_chip_count_rate - dark_count_rate) / photon_arrival_rate)
}

/// Photon rate reaching the nanowire: `N_in = (P_in / hν)·η·r·A`.
pub fn photon_arrival_rate(
    input_power: f64,
    attenuation: f64,
    coupler_efficiency: f64,
    splitter_ratio: f64,
    photon_energy: f64,
) -> Result<f64> {
    if !(input_power > 0.0 && photon_energy > 0.0) {
        return Err(Error::domain("input power and photon energy must be positive"));
    }
    for (name, v) in [("coupler efficiency", coupler_efficiency), ("splitter ratio", splitter_ratio)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::domain(format!("{name} must lie in (0, 1]")));
        }
    }
    if !(0.0..=1.0).contains(&attenuation) {
        return Err(Error::domain("attenuation must lie in [0, 1]"));
    }
    Ok(input_power / photon_energy * coupler_efficiency * splitter_ratio * attenuation)
}

/// Single-coupler efficiency from a two-coupler reference device,
/// assuming identical couplers and negligible waveguide loss.
pub fn coupler_efficiency(power_in: f64, power_out: f64) -> Result<f64> {
    if !(power_in > 0.0 && power_out >= 0.0 && power_out <= power_in) {
        return Err(Error::domain("need 0 <= P_out <= P_in and P_in > 0"));
    }
    Ok((power_out / power_in).sqrt())
}

pub fn db_to_efficiency(db: f64) -> f64 {
    10f64.powf(-db.abs() / 10.0)
}

/// `hc/λ` for a wavelength in metres.
pub fn photon_energy(wavelength: f64) -> f64 {
    PLANCK * crate::optics::SPEED_OF_LIGHT / wavelength
}
