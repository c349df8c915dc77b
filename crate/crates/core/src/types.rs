//! Protocol parameters, enumerations and the tally data model.
//!
//! Configuration values are stored in the same units as the on-disk config
//! (ns, MHz, dB) so that a load/save cycle is lossless; accessor methods
//! return SI values.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detector::DetectorParams;
use crate::Error;

/// Encoding basis. The Z basis carries key bits, the X basis is used for
/// error testing and decoy estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::Z => write!(f, "Z"),
            Basis::X => write!(f, "X"),
        }
    }
}

/// Intensity setting of one sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntensityLabel {
    /// Signal intensity, Z basis only.
    Signal,
    /// Weak decoy, X basis.
    Mu,
    /// Strong decoy, X basis.
    Nu,
    /// Vacuum.
    Vacuum,
}

impl IntensityLabel {
    pub const ALL: [IntensityLabel; 4] =
        [IntensityLabel::Signal, IntensityLabel::Mu, IntensityLabel::Nu, IntensityLabel::Vacuum];

    /// Basis this label is sent in. Vacuum is recorded as X.
    pub fn basis(self) -> Basis {
        match self {
            IntensityLabel::Signal => Basis::Z,
            _ => Basis::X,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            IntensityLabel::Signal => "s",
            IntensityLabel::Mu => "mu",
            IntensityLabel::Nu => "nu",
            IntensityLabel::Vacuum => "o",
        }
    }
}

impl fmt::Display for IntensityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for IntensityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "s" => Ok(IntensityLabel::Signal),
            "mu" | "μ" => Ok(IntensityLabel::Mu),
            "nu" | "ν" => Ok(IntensityLabel::Nu),
            "o" => Ok(IntensityLabel::Vacuum),
            other => Err(Error::Parse(format!("unknown intensity label '{other}'"))),
        }
    }
}

/// Ordered (Alice, Bob) intensity pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IntensityPair {
    pub alice: IntensityLabel,
    pub bob: IntensityLabel,
}

impl IntensityPair {
    pub const fn new(alice: IntensityLabel, bob: IntensityLabel) -> Self {
        Self { alice, bob }
    }

    pub fn swapped(self) -> Self {
        Self::new(self.bob, self.alice)
    }

    /// Common basis of the pair, or `None` when the senders used different bases.
    pub fn basis(self) -> Option<Basis> {
        let (a, b) = (self.alice.basis(), self.bob.basis());
        (a == b).then_some(a)
    }
}

impl fmt::Display for IntensityPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.alice, self.bob)
    }
}

impl FromStr for IntensityPair {
    type Err = Error;

    /// Accepts `mu_o` style labels as well as the compact `ss`, `mumu`, `oo` forms.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some((a, b)) = s.split_once('_') {
            return Ok(Self::new(a.parse()?, b.parse()?));
        }
        for label in IntensityLabel::ALL {
            if let Some(rest) = s.strip_prefix(label.symbol()) {
                if let Ok(bob) = rest.parse() {
                    return Ok(Self::new(label, bob));
                }
            }
        }
        Err(Error::Parse(format!("unknown intensity pair '{s}'")))
    }
}

/// Bell-state measurement result for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BsmOutcome {
    PsiMinus,
    PsiPlus,
    Inconclusive,
}

impl fmt::Display for BsmOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BsmOutcome::PsiMinus => write!(f, "psi_minus"),
            BsmOutcome::PsiPlus => write!(f, "psi_plus"),
            BsmOutcome::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// Bell outcomes that count as a successful projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BellState {
    PsiMinus,
    PsiPlus,
}

impl BellState {
    pub const BOTH: [BellState; 2] = [BellState::PsiMinus, BellState::PsiPlus];
}

impl fmt::Display for BellState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BellState::PsiMinus => write!(f, "psi_minus"),
            BellState::PsiPlus => write!(f, "psi_plus"),
        }
    }
}

impl FromStr for BellState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "psi_minus" => Ok(BellState::PsiMinus),
            "psi_plus" => Ok(BellState::PsiPlus),
            other => Err(Error::Parse(format!("unknown Bell state '{other}'"))),
        }
    }
}

impl TryFrom<BsmOutcome> for BellState {
    type Error = ();

    fn try_from(outcome: BsmOutcome) -> Result<Self, ()> {
        match outcome {
            BsmOutcome::PsiMinus => Ok(BellState::PsiMinus),
            BsmOutcome::PsiPlus => Ok(BellState::PsiPlus),
            BsmOutcome::Inconclusive => Err(()),
        }
    }
}

/// Mean photon number per pulse for each label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intensities {
    pub s: f64,
    pub mu: f64,
    pub nu: f64,
    #[serde(default)]
    pub o: f64,
}

impl Intensities {
    pub fn get(&self, label: IntensityLabel) -> f64 {
        match label {
            IntensityLabel::Signal => self.s,
            IntensityLabel::Mu => self.mu,
            IntensityLabel::Nu => self.nu,
            IntensityLabel::Vacuum => self.o,
        }
    }
}

/// Send probabilities. The vacuum probability is the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityProbs {
    pub s: f64,
    pub mu: f64,
    pub nu: f64,
}

impl IntensityProbs {
    pub fn vacuum(&self) -> f64 {
        (1.0 - self.s - self.mu - self.nu).max(0.0)
    }

    pub fn get(&self, label: IntensityLabel) -> f64 {
        match label {
            IntensityLabel::Signal => self.s,
            IntensityLabel::Mu => self.mu,
            IntensityLabel::Nu => self.nu,
            IntensityLabel::Vacuum => self.vacuum(),
        }
    }
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Frame rate of one unmultiplexed e/l pair.
    pub clock_rate_mhz: f64,
    /// Early/late separation.
    pub bin_separation_ns: f64,
    /// Spacing between multiplexed slots.
    pub slot_spacing_ns: f64,
    /// Independent e/l pairs inserted between the first pair's bins.
    pub inserted_pairs: u32,
    /// Channel attenuation per arm, excluding the chip.
    pub channel_loss_db: f64,
    /// Total chip insertion loss; half is charged to each arm.
    pub chip_insertion_loss_db: f64,
    pub pulse_pair_budget: u64,
    pub failure_prob: f64,
    pub error_correction_f: f64,
    pub laser_detuning_hz: f64,
    pub visibility: f64,
    pub coincidence_window_ns: f64,
    pub center_wavelength_nm: f64,
    pub intensities: Intensities,
    pub probabilities: IntensityProbs,
    pub detector_1: DetectorParams,
    pub detector_2: DetectorParams,
}

/// One failed invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<(), Error> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Validation(self.violations))
        }
    }

    fn push(&mut self, field: &'static str, message: impl Into<String>) {
        self.violations.push(Violation { field, message: message.into() });
    }
}

impl ProtocolConfig {
    /// Table 1, 24.0 dB column, with the detector calibration of the chip.
    pub fn experiment_24db() -> Self {
        Self {
            clock_rate_mhz: 1e3 / 24.0,
            bin_separation_ns: 12.0,
            slot_spacing_ns: 4.0,
            inserted_pairs: 2,
            channel_loss_db: 9.75,
            chip_insertion_loss_db: 4.5,
            pulse_pair_budget: 3_000_000_000_000,
            failure_prob: 1e-10,
            error_correction_f: 1.16,
            laser_detuning_hz: 0.0,
            visibility: 0.5,
            coincidence_window_ns: 0.37,
            center_wavelength_nm: 1536.47,
            intensities: Intensities { s: 0.714, mu: 0.034, nu: 0.172, o: 0.0 },
            probabilities: IntensityProbs { s: 0.828, mu: 0.14, nu: 0.014 },
            detector_1: DetectorParams { ocde: 0.80, dark_rate_hz: 0.25, ..DetectorParams::default() },
            detector_2: DetectorParams { ocde: 0.81, dark_rate_hz: 0.24, ..DetectorParams::default() },
        }
    }

    /// Table 1, 35.0 dB column.
    pub fn experiment_35db() -> Self {
        Self {
            channel_loss_db: 15.25,
            intensities: Intensities { s: 0.66, mu: 0.048, nu: 0.196, o: 0.0 },
            probabilities: IntensityProbs { s: 0.774, mu: 0.176, nu: 0.03 },
            ..Self::experiment_24db()
        }
    }

    /// Table 1, 44.0 dB column.
    pub fn experiment_44db() -> Self {
        Self {
            channel_loss_db: 19.75,
            pulse_pair_budget: 30_000_000_000_000,
            intensities: Intensities { s: 0.624, mu: 0.054, nu: 0.208, o: 0.0 },
            probabilities: IntensityProbs { s: 0.736, mu: 0.204, nu: 0.039 },
            ..Self::experiment_24db()
        }
    }

    pub fn validate(&self) -> ValidationResult {
        let mut v = ValidationResult::default();
        let i = &self.intensities;
        for (field, value) in [("intensities.s", i.s), ("intensities.mu", i.mu), ("intensities.nu", i.nu)] {
            if !(value >= 0.0 && value.is_finite()) {
                v.push(field, "intensity must be a finite nonnegative number");
            }
        }
        if i.o != 0.0 {
            v.push("intensities.o", "vacuum intensity must be 0");
        }
        let p = &self.probabilities;
        for (field, value) in [("probabilities.s", p.s), ("probabilities.mu", p.mu), ("probabilities.nu", p.nu)] {
            if !(0.0..=1.0).contains(&value) {
                v.push(field, "probability must lie in [0, 1]");
            }
        }
        if p.s + p.mu + p.nu > 1.0 + 1e-12 {
            v.push("probabilities", "probabilities exceed 1");
        }
        if !(self.bin_separation_ns > 0.0) {
            v.push("bin_separation_ns", "bin separation must be positive");
        }
        if !(self.slot_spacing_ns > 0.0) {
            v.push("slot_spacing_ns", "slot spacing must be positive");
        }
        if self.bin_separation_ns > 0.0
            && self.slot_spacing_ns > 0.0
            && (f64::from(self.inserted_pairs) + 1.0) * self.slot_spacing_ns > self.bin_separation_ns * (1.0 + 1e-12)
        {
            v.push("inserted_pairs", "inserted slots do not fit between early and late bins");
        }
        if !(self.clock_rate_mhz > 0.0) {
            v.push("clock_rate_mhz", "clock rate must be positive");
        } else if 1e3 / self.clock_rate_mhz
            <= self.bin_separation_ns + f64::from(self.inserted_pairs) * self.slot_spacing_ns
        {
            v.push("clock_rate_mhz", "frame period must exceed the span of its early and late bins");
        }
        if !(self.failure_prob > 0.0 && self.failure_prob < 1.0) {
            v.push("failure_prob", "failure probability must lie in (0, 1)");
        }
        if !(self.error_correction_f >= 1.0) {
            v.push("error_correction_f", "error-correction efficiency must be at least 1");
        }
        if !(self.channel_loss_db >= 0.0) {
            v.push("channel_loss_db", "loss must be nonnegative");
        }
        if !(self.chip_insertion_loss_db >= 0.0) {
            v.push("chip_insertion_loss_db", "loss must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            v.push("visibility", "visibility must lie in [0, 1]");
        }
        if !(self.coincidence_window_ns > 0.0) {
            v.push("coincidence_window_ns", "coincidence window must be positive");
        }
        if !(self.center_wavelength_nm > 0.0) {
            v.push("center_wavelength_nm", "wavelength must be positive");
        }
        for (field, det) in [("detector_1", &self.detector_1), ("detector_2", &self.detector_2)] {
            if let Err(msg) = det.check() {
                v.push(field, msg);
            }
        }
        v
    }

    pub fn bin_separation_s(&self) -> f64 {
        self.bin_separation_ns * 1e-9
    }

    pub fn slot_spacing_s(&self) -> f64 {
        self.slot_spacing_ns * 1e-9
    }

    /// Frame (unmultiplexed) rate in Hz.
    pub fn frame_rate_hz(&self) -> f64 {
        self.clock_rate_mhz * 1e6
    }

    pub fn slots_per_frame(&self) -> u32 {
        self.inserted_pairs + 1
    }

    /// Pulse-pair rate after time multiplexing.
    pub fn effective_clock_hz(&self) -> f64 {
        self.frame_rate_hz() * f64::from(self.slots_per_frame())
    }

    /// Sum of both arms and the chip, as quoted in the loss tables.
    pub fn total_loss_db(&self) -> f64 {
        2.0 * self.channel_loss_db + self.chip_insertion_loss_db
    }

    pub fn arm_loss_db(&self) -> f64 {
        self.channel_loss_db + 0.5 * self.chip_insertion_loss_db
    }

    /// Power transmissivity of one arm, source to detector input.
    pub fn arm_transmissivity(&self) -> f64 {
        10f64.powf(-self.arm_loss_db() / 10.0)
    }

    /// Sets the per-arm channel loss so that the total loss equals `total_db`.
    pub fn with_total_loss_db(mut self, total_db: f64) -> Self {
        self.channel_loss_db = ((total_db - self.chip_insertion_loss_db) / 2.0).max(0.0);
        self
    }

    /// Expected number of pulse pairs sent with a given ordered intensity pair.
    pub fn expected_pair_count(&self, pair: IntensityPair) -> f64 {
        self.pulse_pair_budget as f64 * self.probabilities.get(pair.alice) * self.probabilities.get(pair.bob)
    }
}

/// One sender's pulses in one multiplexed slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseFrame {
    pub basis: Basis,
    pub bit: u8,
    pub intensity_label: IntensityLabel,
    pub slot_index: u32,
    pub global_phase: f64,
    pub early_amplitude: Complex64,
    pub late_amplitude: Complex64,
}

impl PulseFrame {
    pub fn mean_photons(&self) -> f64 {
        self.early_amplitude.norm_sqr() + self.late_amplitude.norm_sqr()
    }
}

/// Success and error counts for one Bell outcome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub successes: u64,
    pub errors: u64,
}

impl OutcomeCounts {
    fn merge(&mut self, other: &OutcomeCounts) {
        self.successes += other.successes;
        self.errors += other.errors;
    }
}

/// Counts for one ordered intensity pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairTally {
    pub sent: u64,
    pub psi_minus: OutcomeCounts,
    pub psi_plus: OutcomeCounts,
}

impl PairTally {
    pub fn outcome(&self, state: BellState) -> &OutcomeCounts {
        match state {
            BellState::PsiMinus => &self.psi_minus,
            BellState::PsiPlus => &self.psi_plus,
        }
    }

    pub fn outcome_mut(&mut self, state: BellState) -> &mut OutcomeCounts {
        match state {
            BellState::PsiMinus => &mut self.psi_minus,
            BellState::PsiPlus => &mut self.psi_plus,
        }
    }

    pub fn successes(&self) -> u64 {
        self.psi_minus.successes + self.psi_plus.successes
    }

    pub fn errors(&self) -> u64 {
        self.psi_minus.errors + self.psi_plus.errors
    }

    pub fn is_consistent(&self) -> bool {
        self.psi_minus.errors <= self.psi_minus.successes
            && self.psi_plus.errors <= self.psi_plus.successes
            && self.successes() <= self.sent
    }
}

/// Counts of sent pairs, BSM successes and errors keyed by ordered intensity
/// pair. The pair determines the basis.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TallyTable {
    entries: BTreeMap<IntensityPair, PairTally>,
}

impl TallyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.values().all(|t| t.sent == 0)
    }

    pub fn get(&self, pair: IntensityPair) -> PairTally {
        self.entries.get(&pair).copied().unwrap_or_default()
    }

    pub fn entry(&mut self, pair: IntensityPair) -> &mut PairTally {
        self.entries.entry(pair).or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (IntensityPair, &PairTally)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn total_sent(&self) -> u64 {
        self.entries.values().map(|t| t.sent).sum()
    }

    pub fn record_sent(&mut self, pair: IntensityPair) {
        self.entry(pair).sent += 1;
    }

    pub fn record_success(&mut self, pair: IntensityPair, state: BellState, error: bool) {
        let counts = self.entry(pair).outcome_mut(state);
        counts.successes += 1;
        counts.errors += u64::from(error);
    }

    pub fn merge(&mut self, other: &TallyTable) {
        for (pair, t) in &other.entries {
            let mine = self.entry(*pair);
            mine.sent += t.sent;
            mine.psi_minus.merge(&t.psi_minus);
            mine.psi_plus.merge(&t.psi_plus);
        }
    }

    pub fn merged(mut self, other: &TallyTable) -> Self {
        self.merge(other);
        self
    }

    /// Checks `errors <= successes <= sent` for every key.
    pub fn check(&self) -> Result<(), Error> {
        for (pair, t) in &self.entries {
            if !t.is_consistent() {
                return Err(Error::InvalidCounts(format!(
                    "pair {pair}: errors must not exceed successes and successes must not exceed sent"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use IntensityLabel::*;

    #[test]
    fn experiment_24db_is_valid() {
        let cfg = ProtocolConfig::experiment_24db();
        assert!(cfg.validate().is_ok(), "{:?}", cfg.validate());
        assert!((cfg.probabilities.vacuum() - 0.018).abs() < 1e-12);
        assert!((cfg.total_loss_db() - 24.0).abs() < 1e-12);
        assert!((cfg.effective_clock_hz() - 125e6).abs() < 1e-3);
    }

    #[test]
    fn all_table1_columns_validate() {
        for cfg in [ProtocolConfig::experiment_35db(), ProtocolConfig::experiment_44db()] {
            assert!(cfg.validate().is_ok());
        }
        assert!((ProtocolConfig::experiment_35db().total_loss_db() - 35.0).abs() < 1e-12);
        assert!((ProtocolConfig::experiment_44db().total_loss_db() - 44.0).abs() < 1e-12);
    }

    #[test]
    fn nonzero_vacuum_is_rejected() {
        let mut cfg = ProtocolConfig::experiment_24db();
        cfg.intensities.o = 0.1;
        let v = cfg.validate();
        assert_eq!(v.violations.len(), 1);
        assert_eq!(v.violations[0].field, "intensities.o");
        assert_eq!(v.violations[0].message, "vacuum intensity must be 0");
    }

    #[test]
    fn probabilities_above_one_are_rejected() {
        let mut cfg = ProtocolConfig::experiment_24db();
        cfg.probabilities = IntensityProbs { s: 0.6, mu: 0.3, nu: 0.2 };
        let v = cfg.validate();
        assert!(v.violations.iter().any(|x| x.message == "probabilities exceed 1"));
    }

    #[test]
    fn slot_overflow_is_rejected() {
        let mut cfg = ProtocolConfig::experiment_24db();
        cfg.inserted_pairs = 5;
        cfg.slot_spacing_ns = 2.5;
        assert!(cfg.validate().violations.iter().any(|x| x.field == "inserted_pairs"));
        cfg.slot_spacing_ns = 2.0;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn bad_failure_prob_and_f() {
        let mut cfg = ProtocolConfig::experiment_24db();
        cfg.failure_prob = 1.0;
        cfg.error_correction_f = 0.9;
        let fields: Vec<_> = cfg.validate().violations.iter().map(|v| v.field).collect();
        assert_eq!(fields, vec!["failure_prob", "error_correction_f"]);
    }

    #[test]
    fn frame_must_hold_all_bins() {
        let mut cfg = ProtocolConfig::experiment_24db();
        // Two inserted pairs at 4 ns after a 12 ns separation span 20 ns.
        cfg.clock_rate_mhz = 50.0;
        let fields: Vec<_> = cfg.validate().violations.iter().map(|v| v.field).collect();
        assert_eq!(fields, vec!["clock_rate_mhz"]);
        cfg.clock_rate_mhz = 49.0;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn pair_labels_parse() {
        assert_eq!("ss".parse::<IntensityPair>().unwrap(), IntensityPair::new(Signal, Signal));
        assert_eq!("mumu".parse::<IntensityPair>().unwrap(), IntensityPair::new(Mu, Mu));
        assert_eq!("mu_o".parse::<IntensityPair>().unwrap(), IntensityPair::new(Mu, Vacuum));
        assert_eq!("onu".parse::<IntensityPair>().unwrap(), IntensityPair::new(Vacuum, Nu));
        assert!("xx".parse::<IntensityPair>().is_err());
        let p = IntensityPair::new(Nu, Vacuum);
        assert_eq!(p.to_string().parse::<IntensityPair>().unwrap(), p);
    }

    #[test]
    fn pair_basis() {
        assert_eq!(IntensityPair::new(Signal, Signal).basis(), Some(Basis::Z));
        assert_eq!(IntensityPair::new(Mu, Vacuum).basis(), Some(Basis::X));
        assert_eq!(IntensityPair::new(Signal, Mu).basis(), None);
    }

    #[test]
    fn tally_check_catches_inconsistency() {
        let mut t = TallyTable::new();
        let p = IntensityPair::new(Mu, Mu);
        t.record_sent(p);
        t.record_success(p, BellState::PsiMinus, true);
        assert!(t.check().is_ok());
        t.entry(p).psi_minus.errors = 2;
        assert!(t.check().is_err());
    }
}
