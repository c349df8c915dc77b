//! Monte Carlo relay simulation.
//!
//! Sources are phase-randomised weak coherent pulses, so the fields reaching
//! the detectors remain coherent states and click probabilities follow
//! directly from the output amplitudes of the beam splitter.
//!
//! # Random streams
//!
//! A single `u64` seed keys one ChaCha8 stream. Pulse pair `i` (counted over
//! the whole run, slot-major within a frame) always reads the
//! [`DRAWS_PER_PAIR`] 64-bit words starting at word offset
//! `i * DRAWS_PER_PAIR * 2` of that stream. Batches seek to their first pair,
//! so splitting the budget across workers never reuses or shifts randomness;
//! the worker count changes a result only through the detector-state reset at
//! each batch boundary.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::detector::DetectorState;
use crate::optics::{beamsplitter_mix, phase_offset, qber_z};
use crate::types::{
    Basis, BellState, BsmOutcome, Intensities, IntensityLabel, IntensityPair, ProtocolConfig, PulseFrame, TallyTable,
};
use crate::{Error, Result};

/// 64-bit draws reserved for every pulse pair.
pub const DRAWS_PER_PAIR: usize = 10;

const D1: usize = 0;
const D2: usize = 1;
const EARLY: usize = 0;
const LATE: usize = 1;

#[inline]
fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draws for one pulse pair, in a fixed layout.
#[derive(Debug, Clone, Copy)]
struct PairDraws([u64; DRAWS_PER_PAIR]);

impl PairDraws {
    fn next(rng: &mut ChaCha8Rng) -> Self {
        let mut words = [0u64; DRAWS_PER_PAIR];
        for w in &mut words {
            *w = rng.next_u64();
        }
        Self(words)
    }

    fn label_u(&self, who: usize) -> f64 {
        unit(self.0[who])
    }

    fn bit(&self, who: usize) -> u8 {
        (self.0[2 + who] >> 63) as u8
    }

    fn phase(&self, who: usize) -> f64 {
        TAU * unit(self.0[4 + who])
    }

    fn click_u(&self, bin: usize, det: usize) -> f64 {
        unit(self.0[6 + 2 * bin + det])
    }
}

fn stream_at(seed: u64, pair_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(u128::from(pair_index) * (DRAWS_PER_PAIR as u128 * 2));
    rng
}

/// Builds the pulses of one sender. The global phase is drawn from `rng`.
pub fn encode_frame(
    basis: Basis,
    bit: u8,
    intensity_label: IntensityLabel,
    slot_index: u32,
    intensities: &Intensities,
    rng: &mut impl RngCore,
) -> Result<PulseFrame> {
    let phase = TAU * unit(rng.next_u64());
    encode_with_phase(basis, bit, intensity_label, slot_index, phase, intensities)
}

/// [`encode_frame`] with an explicit global phase.
pub fn encode_with_phase(
    basis: Basis,
    bit: u8,
    intensity_label: IntensityLabel,
    slot_index: u32,
    global_phase: f64,
    intensities: &Intensities,
) -> Result<PulseFrame> {
    let mean = intensities.get(intensity_label);
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::domain(format!("intensity for label {intensity_label} is not configured")));
    }
    if bit > 1 {
        return Err(Error::domain("bit must be 0 or 1"));
    }
    let rotor = Complex64::from_polar(1.0, global_phase);
    let zero = Complex64::new(0.0, 0.0);
    let (early, late) = match basis {
        Basis::Z => {
            let amp = rotor * mean.sqrt();
            if bit == 0 {
                (amp, zero)
            } else {
                (zero, amp)
            }
        }
        Basis::X => {
            let amp = rotor * (mean / 2.0).sqrt();
            (amp, if bit == 0 { amp } else { -amp })
        }
    };
    Ok(PulseFrame {
        basis,
        bit,
        intensity_label,
        slot_index,
        global_phase,
        early_amplitude: early,
        late_amplitude: late,
    })
}

fn cumulative_probs(config: &ProtocolConfig) -> [f64; 3] {
    let p = &config.probabilities;
    [p.s, p.s + p.mu, p.s + p.mu + p.nu]
}

fn label_from_uniform(u: f64, cumulative: &[f64; 3]) -> IntensityLabel {
    if u < cumulative[0] {
        IntensityLabel::Signal
    } else if u < cumulative[1] {
        IntensityLabel::Mu
    } else if u < cumulative[2] {
        IntensityLabel::Nu
    } else {
        IntensityLabel::Vacuum
    }
}

/// Draws one sender's intensity label and the basis it implies.
pub fn sample_intensity_and_basis(config: &ProtocolConfig, rng: &mut impl RngCore) -> (Basis, IntensityLabel) {
    let label = label_from_uniform(unit(rng.next_u64()), &cumulative_probs(config));
    (label.basis(), label)
}

/// Channel and relay constants shared by every pair of a run.
#[derive(Debug, Clone, Copy)]
pub struct Relay {
    arm_amplitude: f64,
    late_rotor: Complex64,
    bin_separation: f64,
    slot_spacing: f64,
    frame_period: f64,
    slots: u32,
}

impl Relay {
    pub fn new(config: &ProtocolConfig) -> Result<Self> {
        let theta = phase_offset(config.laser_detuning_hz, config.bin_separation_s())?;
        Ok(Self {
            arm_amplitude: config.arm_transmissivity().sqrt(),
            late_rotor: Complex64::from_polar(1.0, theta),
            bin_separation: config.bin_separation_s(),
            slot_spacing: config.slot_spacing_s(),
            frame_period: 1.0 / config.frame_rate_hz(),
            slots: config.slots_per_frame(),
        })
    }

    /// Mean photon numbers `[bin][detector]` at the two detectors.
    #[inline]
    pub fn detector_photons(&self, a: &PulseFrame, b: &PulseFrame) -> [[f64; 2]; 2] {
        let t = self.arm_amplitude;
        let (e1, e2) = beamsplitter_mix(a.early_amplitude * t, b.early_amplitude * t);
        let (l1, l2) = beamsplitter_mix(a.late_amplitude * t, b.late_amplitude * t * self.late_rotor);
        [[e1.norm_sqr(), e2.norm_sqr()], [l1.norm_sqr(), l2.norm_sqr()]]
    }
}

/// Clicks of one slot, `[bin][detector]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClickRecord(pub [[bool; 2]; 2]);

impl ClickRecord {
    /// Exactly one click in each bin: same detector is Ψ⁺, different detectors
    /// is Ψ⁻. Anything else, including both detectors in one bin, is
    /// inconclusive.
    pub fn classify(&self) -> BsmOutcome {
        let [e, l] = self.0;
        let n_clicks = e.iter().chain(l.iter()).filter(|c| **c).count();
        if n_clicks != 2 || e[D1] == e[D2] || l[D1] == l[D2] {
            return BsmOutcome::Inconclusive;
        }
        if e[D1] == l[D1] {
            BsmOutcome::PsiPlus
        } else {
            BsmOutcome::PsiMinus
        }
    }
}

/// Whether a success with these bits is a bit error for the sifted key.
///
/// Both Bell outcomes imply anticorrelated bits in Z. In X, Ψ⁻ implies
/// anticorrelation and Ψ⁺ correlation. Mixed-basis pairs carry no key.
pub fn is_bit_error(pair: IntensityPair, state: BellState, bit_a: u8, bit_b: u8) -> bool {
    match pair.basis() {
        Some(Basis::Z) => bit_a == bit_b,
        Some(Basis::X) => match state {
            BellState::PsiMinus => bit_a == bit_b,
            BellState::PsiPlus => bit_a != bit_b,
        },
        None => false,
    }
}

/// Simulates one isolated slot with its early bin at `early_time`. Detector
/// states are updated on every click.
pub fn simulate_pair(
    frame_a: &PulseFrame,
    frame_b: &PulseFrame,
    detectors: &mut [DetectorState; 2],
    relay: &Relay,
    early_time: f64,
    rng: &mut impl RngCore,
) -> (BsmOutcome, ClickRecord) {
    let photons = relay.detector_photons(frame_a, frame_b);
    let mut record = ClickRecord::default();
    for (bin, t) in [(EARLY, early_time), (LATE, early_time + relay.bin_separation)] {
        for det in [D1, D2] {
            let p = detectors[det].click_probability_at(photons[bin][det], t);
            if unit(rng.next_u64()) < p {
                record.0[bin][det] = true;
                detectors[det].register_click(t);
            }
        }
    }
    (record.classify(), record)
}

/// Options for [`run_simulation_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationOptions {
    pub seed: u64,
    pub pairs: u64,
    /// Number of independent batches (and rayon tasks).
    pub workers: usize,
    /// Fix both senders' labels instead of sampling them.
    pub forced_pair: Option<IntensityPair>,
    /// Fix both senders' bits.
    pub forced_bits: Option<(u8, u8)>,
}

impl SimulationOptions {
    pub fn new(seed: u64, pairs: u64) -> Self {
        Self { seed, pairs, workers: 1, forced_pair: None, forced_bits: None }
    }

    pub fn workers(self, workers: usize) -> Self {
        Self { workers, ..self }
    }

    pub fn forced(self, pair: IntensityPair) -> Self {
        Self { forced_pair: Some(pair), ..self }
    }

    pub fn bits(self, alice: u8, bob: u8) -> Self {
        Self { forced_bits: Some((alice, bob)), ..self }
    }
}

/// Runs `pair_budget` pulse pairs on one batch.
pub fn run_simulation(config: &ProtocolConfig, seed: u64, pair_budget: u64) -> Result<TallyTable> {
    run_simulation_with(config, &SimulationOptions::new(seed, pair_budget))
}

pub fn run_simulation_with(config: &ProtocolConfig, opts: &SimulationOptions) -> Result<TallyTable> {
    config.validate().into_result()?;
    if opts.forced_bits.is_some_and(|(a, b)| a > 1 || b > 1) {
        return Err(Error::domain("forced bits must be 0 or 1"));
    }
    if opts.workers == 0 {
        return Err(Error::domain("worker count must be at least 1"));
    }
    let relay = Relay::new(config)?;
    let slots = u64::from(relay.slots);
    let frames = opts.pairs.div_ceil(slots);
    let workers = opts.workers as u64;
    let tallies: Vec<TallyTable> = (0..workers)
        .into_par_iter()
        .map(|b| {
            let start = frames * b / workers;
            let end = frames * (b + 1) / workers;
            run_batch(config, &relay, opts, start..end)
        })
        .collect();
    Ok(tallies.into_iter().fold(TallyTable::new(), |acc, t| acc.merged(&t)))
}

struct SlotState {
    pair: IntensityPair,
    frames: [PulseFrame; 2],
    photons: [[f64; 2]; 2],
    draws: PairDraws,
    clicks: ClickRecord,
}

fn label_index(label: IntensityLabel) -> usize {
    IntensityLabel::ALL.iter().position(|l| *l == label).expect("label listed in ALL")
}

fn run_batch(
    config: &ProtocolConfig,
    relay: &Relay,
    opts: &SimulationOptions,
    frames: std::ops::Range<u64>,
) -> TallyTable {
    let slots = u64::from(relay.slots);
    let first_pair = frames.start * slots;
    if first_pair >= opts.pairs {
        return TallyTable::new();
    }
    // Dense per-batch counts, converted once at the end.
    let mut dense = [[crate::types::PairTally::default(); 4]; 4];
    let mut rng = stream_at(opts.seed, first_pair);
    let mut detectors = [DetectorState::new(config.detector_1), DetectorState::new(config.detector_2)];
    let cumulative = cumulative_probs(config);
    let mut slot_states: Vec<SlotState> = Vec::with_capacity(slots as usize);

    for frame in frames {
        let t0 = frame as f64 * relay.frame_period;
        slot_states.clear();
        for k in 0..slots {
            let index = frame * slots + k;
            if index >= opts.pairs {
                break;
            }
            let draws = PairDraws::next(&mut rng);
            let pair = opts.forced_pair.unwrap_or_else(|| {
                IntensityPair::new(
                    label_from_uniform(draws.label_u(0), &cumulative),
                    label_from_uniform(draws.label_u(1), &cumulative),
                )
            });
            let encode = |who: usize, label: IntensityLabel| {
                let bit = match opts.forced_bits {
                    Some((a, b)) => [a, b][who],
                    None => draws.bit(who),
                };
                encode_with_phase(label.basis(), bit, label, k as u32, draws.phase(who), &config.intensities)
                    .expect("validated intensities")
            };
            let frames = [encode(0, pair.alice), encode(1, pair.bob)];
            slot_states.push(SlotState {
                pair,
                photons: relay.detector_photons(&frames[0], &frames[1]),
                frames,
                draws,
                clicks: ClickRecord::default(),
            });
        }

        // All early bins precede all late bins because the inserted slots fit
        // inside one bin separation.
        for bin in [EARLY, LATE] {
            let bin_offset = if bin == EARLY { 0.0 } else { relay.bin_separation };
            for (k, slot) in slot_states.iter_mut().enumerate() {
                let t = t0 + bin_offset + k as f64 * relay.slot_spacing;
                for det in [D1, D2] {
                    let p = detectors[det].click_probability_at(slot.photons[bin][det], t);
                    if slot.draws.click_u(bin, det) < p {
                        slot.clicks.0[bin][det] = true;
                        detectors[det].register_click(t);
                    }
                }
            }
        }

        for slot in &slot_states {
            let entry = &mut dense[label_index(slot.pair.alice)][label_index(slot.pair.bob)];
            entry.sent += 1;
            if let Ok(state) = BellState::try_from(slot.clicks.classify()) {
                let counts = entry.outcome_mut(state);
                counts.successes += 1;
                counts.errors += u64::from(is_bit_error(slot.pair, state, slot.frames[0].bit, slot.frames[1].bit));
            }
        }
    }
    let mut tally = TallyTable::new();
    for (a, row) in IntensityLabel::ALL.iter().zip(&dense) {
        for (b, counts) in IntensityLabel::ALL.iter().zip(row) {
            if counts.sent > 0 {
                *tally.entry(IntensityPair::new(*a, *b)) = *counts;
            }
        }
    }
    tally
}

/// Which Bell outcomes the relay announces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsmMode {
    /// Ψ⁻ and Ψ⁺.
    Optimal,
    PsiMinusOnly,
}

impl BsmMode {
    fn states(self) -> &'static [BellState] {
        match self {
            BsmMode::Optimal => &BellState::BOTH,
            BsmMode::PsiMinusOnly => &[BellState::PsiMinus],
        }
    }
}

/// Sifted key statistics of a tally.
#[derive(Debug, Clone, PartialEq)]
pub struct SiftedStats {
    pub mode: BsmMode,
    /// Z-basis signal-signal successes kept as raw key.
    pub sifted_bits: u64,
    pub pulse_pairs: u64,
    pub sifted_rate_bps: f64,
    pub qber_z: f64,
    /// Z-basis QBER restricted to Ψ⁻ / Ψ⁺ announcements.
    pub qber_z_by_state: [Option<f64>; 2],
    /// X-basis QBER over equal-intensity decoy pairs, Ψ⁻ / Ψ⁺.
    pub qber_x_by_state: [Option<f64>; 2],
}

impl SiftedStats {
    pub fn qber_x(&self, state: BellState) -> Option<f64> {
        self.qber_x_by_state[state as usize]
    }
}

fn ratio(errors: u64, successes: u64) -> Option<f64> {
    qber_z(errors as f64, (successes - errors) as f64).ok()
}

/// Sifted key rate and QBERs. The rate counts signal-signal successes per
/// pulse pair at the multiplexed clock.
pub fn sift(tally: &TallyTable, config: &ProtocolConfig, mode: BsmMode) -> Result<SiftedStats> {
    let ss = tally.get(IntensityPair::new(IntensityLabel::Signal, IntensityLabel::Signal));
    let (successes, errors) = mode.states().iter().fold((0, 0), |(s, e), st| {
        let c = ss.outcome(*st);
        (s + c.successes, e + c.errors)
    });
    if successes == 0 {
        return Err(Error::NoSuccesses("Z basis".into()));
    }
    let pulse_pairs = tally.total_sent();
    let by_state = |f: &dyn Fn(BellState) -> (u64, u64)| {
        let mut out = [None, None];
        for st in mode.states() {
            let (s, e) = f(*st);
            out[*st as usize] = ratio(e, s);
        }
        out
    };
    let x_pairs = [IntensityLabel::Mu, IntensityLabel::Nu].map(|l| tally.get(IntensityPair::new(l, l)));
    Ok(SiftedStats {
        mode,
        sifted_bits: successes,
        pulse_pairs,
        sifted_rate_bps: successes as f64 / pulse_pairs as f64 * config.effective_clock_hz(),
        qber_z: errors as f64 / successes as f64,
        qber_z_by_state: by_state(&|st| (ss.outcome(st).successes, ss.outcome(st).errors)),
        qber_x_by_state: by_state(&|st| {
            x_pairs.iter().fold((0, 0), |(s, e), t| (s + t.outcome(st).successes, e + t.outcome(st).errors))
        }),
    })
}

/// Two-detector coincidence counts for a HOM measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HomCounts {
    pub pulses: u64,
    pub coincidences: u64,
}

/// Both senders emit one phase-randomised pulse of intensity `s` into the
/// same bin; counts frames in which both detectors fire. With
/// `distinguishable` set the inputs occupy orthogonal modes and add
/// incoherently at each output.
pub fn simulate_hom(config: &ProtocolConfig, seed: u64, pulses: u64, distinguishable: bool) -> Result<HomCounts> {
    config.validate().into_result()?;
    let relay = Relay::new(config)?;
    let mut rng = stream_at(seed, 0);
    let mut detectors = [DetectorState::new(config.detector_1), DetectorState::new(config.detector_2)];
    let label = IntensityLabel::Signal;
    let mut coincidences = 0;
    for n in 0..pulses {
        let draws = PairDraws::next(&mut rng);
        let t = n as f64 * relay.frame_period;
        let enc = |who| encode_with_phase(Basis::Z, 0, label, 0, draws.phase(who), &config.intensities);
        let (a, b) = (enc(0)?, enc(1)?);
        let photons = if distinguishable {
            let tr = relay.arm_amplitude * relay.arm_amplitude;
            let each = 0.5 * tr * (a.early_amplitude.norm_sqr() + b.early_amplitude.norm_sqr());
            [each, each]
        } else {
            relay.detector_photons(&a, &b)[EARLY]
        };
        let mut both = true;
        for det in [D1, D2] {
            let clicked = draws.click_u(EARLY, det) < detectors[det].click_probability_at(photons[det], t);
            if clicked {
                detectors[det].register_click(t);
            }
            both &= clicked;
        }
        coincidences += u64::from(both);
    }
    Ok(HomCounts { pulses, coincidences })
}

/// Expected success and error probability per sent pulse pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedGain {
    pub success: f64,
    pub error: f64,
}

/// Expected gain of one intensity pair with dead time ignored: the bits are
/// averaged exactly and the relative phase of the two senders with a
/// `phase_steps`-point midpoint rule.
pub fn expected_gain(config: &ProtocolConfig, pair: IntensityPair, phase_steps: usize) -> Result<ExpectedGain> {
    if phase_steps == 0 {
        return Err(Error::domain("phase_steps must be positive"));
    }
    let relay = Relay::new(config)?;
    let dets = [
        DetectorState::new(config.detector_1.without_dead_time()),
        DetectorState::new(config.detector_2.without_dead_time()),
    ];
    let (mut success, mut error) = (0.0, 0.0);
    for step in 0..phase_steps {
        let phase = TAU * (step as f64 + 0.5) / phase_steps as f64;
        for (bit_a, bit_b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let a = encode_with_phase(pair.alice.basis(), bit_a, pair.alice, 0, 0.0, &config.intensities)?;
            let b = encode_with_phase(pair.bob.basis(), bit_b, pair.bob, 0, phase, &config.intensities)?;
            let photons = relay.detector_photons(&a, &b);
            let p = photons.map(|bin| [0, 1].map(|d| dets[d].click_probability_at(bin[d], 0.0)));
            let q = |bin: usize, det: usize, click: bool| if click { p[bin][det] } else { 1.0 - p[bin][det] };
            let weight = 0.25 / phase_steps as f64;
            for (state, e_det, l_det) in [
                (BellState::PsiMinus, D1, D2),
                (BellState::PsiMinus, D2, D1),
                (BellState::PsiPlus, D1, D1),
                (BellState::PsiPlus, D2, D2),
            ] {
                let prob = q(EARLY, e_det, true)
                    * q(EARLY, 1 - e_det, false)
                    * q(LATE, l_det, true)
                    * q(LATE, 1 - l_det, false);
                success += weight * prob;
                if is_bit_error(pair, state, bit_a, bit_b) {
                    error += weight * prob;
                }
            }
        }
    }
    Ok(ExpectedGain { success, error })
}

/// Expected counts for every intensity pair at the configured budget.
pub fn expected_tally(config: &ProtocolConfig, phase_steps: usize) -> Result<TallyTable> {
    config.validate().into_result()?;
    let mut tally = TallyTable::new();
    for alice in IntensityLabel::ALL {
        for bob in IntensityLabel::ALL {
            let pair = IntensityPair::new(alice, bob);
            let sent = config.expected_pair_count(pair).round() as u64;
            let g = expected_gain(config, pair, phase_steps)?;
            let t = tally.entry(pair);
            t.sent = sent;
            // Both Bell outcomes are folded into Ψ⁻; callers only use totals.
            t.psi_minus.successes = (g.success * sent as f64).round() as u64;
            t.psi_minus.errors = (g.error * sent as f64).round().min(t.psi_minus.successes as f64) as u64;
        }
    }
    Ok(tally)
}
