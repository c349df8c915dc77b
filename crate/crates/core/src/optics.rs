//! Closed-form optics of the relay: detuning phase, X-basis coincidence
//! weights, QBER formulas, HOM visibility and the 50:50 beam splitter.

use num_complex::Complex64;

use crate::types::BellState;
use crate::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Parameters of the two-laser X-basis interference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceParams {
    pub visibility: f64,
    /// Coincidence window, s.
    pub coincidence_window: f64,
    /// Alice's wavelength, m.
    pub wavelength_a: f64,
    /// Bob's wavelength, m.
    pub wavelength_b: f64,
    /// Early/late separation, s.
    pub bin_separation: f64,
}

impl InterferenceParams {
    fn check(&self) -> Result<()> {
        if !(self.wavelength_a > 0.0 && self.wavelength_b > 0.0) {
            return Err(Error::domain("wavelengths must be positive"));
        }
        if !(self.coincidence_window > 0.0) {
            return Err(Error::domain("coincidence window must be positive"));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::domain("visibility must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Laser frequency difference in Hz.
    pub fn detuning(&self) -> f64 {
        wavelength_detuning(self.wavelength_a, self.wavelength_b)
    }
}

/// Frequency difference `c |λa - λb| / (λa λb)` of two lasers.
pub fn wavelength_detuning(wavelength_a: f64, wavelength_b: f64) -> f64 {
    SPEED_OF_LIGHT * (wavelength_a - wavelength_b).abs() / (wavelength_a * wavelength_b)
}

/// Phase accumulated between consecutive time bins by a laser detuning:
/// `θ = 2π Δω Δt`.
pub fn phase_offset(detuning_hz: f64, bin_separation: f64) -> Result<f64> {
    if !(bin_separation > 0.0) {
        return Err(Error::domain("bin separation must be positive"));
    }
    Ok(2.0 * std::f64::consts::PI * detuning_hz * bin_separation)
}

/// Same as [`phase_offset`] with the detuning given as two wavelengths (m).
pub fn phase_offset_from_wavelengths(wavelength_a: f64, wavelength_b: f64, bin_separation: f64) -> Result<f64> {
    if !(wavelength_a > 0.0 && wavelength_b > 0.0) {
        return Err(Error::domain("wavelengths must be positive"));
    }
    phase_offset(wavelength_detuning(wavelength_a, wavelength_b), bin_separation)
}

/// Unnormalised coincidence weights `(P⁺, P⁻) = 1 ± V·exp[-τ²Δω²]·cos θ`.
pub fn x_basis_coincidence_probs(params: &InterferenceParams) -> Result<(f64, f64)> {
    params.check()?;
    let detuning = params.detuning();
    let theta = phase_offset(detuning, params.bin_separation)?;
    let tau = params.coincidence_window;
    let damping = (-(tau * tau) * detuning * detuning).exp();
    let term = params.visibility * damping * theta.cos();
    Ok((1.0 + term, 1.0 - term))
}

/// X-basis QBER for the given Bell state from the coincidence weights.
pub fn qber_x(p_plus: f64, p_minus: f64, target: BellState) -> Result<f64> {
    let total = p_plus + p_minus;
    if !(total > 0.0) {
        return Err(Error::domain("coincidence weights sum to zero"));
    }
    Ok(match target {
        BellState::PsiMinus => p_minus / total,
        BellState::PsiPlus => p_plus / total,
    })
}

/// Z-basis QBER, identical for both Bell states.
pub fn qber_z(error_weight: f64, correct_weight: f64) -> Result<f64> {
    let total = error_weight + correct_weight;
    if !(total > 0.0) {
        return Err(Error::domain("weights sum to zero"));
    }
    Ok(error_weight / total)
}

/// 50:50 beam splitter, `d1 = (a + i b)/√2`, `d2 = (i a + b)/√2`.
#[inline]
pub fn beamsplitter_mix(alice: Complex64, bob: Complex64) -> (Complex64, Complex64) {
    let i = Complex64::i();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ((alice + i * bob) * s, (i * alice + bob) * s)
}

/// HOM dip visibility `1 - C_indistinguishable / C_distinguishable`.
pub fn hom_dip_visibility(coincidences_indistinguishable: f64, coincidences_distinguishable: f64) -> Result<f64> {
    if !(coincidences_distinguishable > 0.0) {
        return Err(Error::domain("distinguishable baseline must be positive"));
    }
    Ok(1.0 - coincidences_indistinguishable / coincidences_distinguishable)
}
