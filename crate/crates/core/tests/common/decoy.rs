//! Synthetic photon-number yield models with known single-photon values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use mdiqkd::decoy::{estimate_single_photon, EstimatorOptions, GainRow, ObservedGains};
use mdiqkd::{IntensityLabel, IntensityPair, ProtocolConfig};

use IntensityLabel::*;

const N: usize = 30;

/// Yields `y[n][m]` and error yields `t[n][m]`.
pub struct YieldModel {
    pub y: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>,
}

impl YieldModel {
    pub fn y11(&self) -> f64 {
        self.y[1][1]
    }
    pub fn e11(&self) -> f64 {
        self.t[1][1] / self.y[1][1]
    }

    /// Random but physically shaped model: threshold detection behind a
    /// lossy channel, with jitter on every component.
    pub fn random(rng: &mut impl Rng) -> Self {
        let eta = 10f64.powf(rng.random_range(-1.3..-0.8));
        let dark = 10f64.powf(rng.random_range(-8.0..-6.0));
        let c1 = rng.random_range(0.3..0.5);
        let c2 = rng.random_range(0.1..0.3);
        let q = |n: usize| 1.0 - (1.0 - eta).powi(n as i32);
        let mut y = vec![vec![0.0; N]; N];
        let mut t = vec![vec![0.0; N]; N];
        for n in 0..N {
            for m in 0..N {
                let jitter = rng.random_range(0.7..1.3);
                let v = (dark + (c1 * q(n) * q(m) + c2 * (q(n).powi(2) + q(m).powi(2))) * jitter).min(1.0);
                let e = if n == 0 || m == 0 {
                    0.5
                } else if n == 1 && m == 1 {
                    rng.random_range(0.02..0.3)
                } else {
                    rng.random_range(0.05..0.5)
                };
                y[n][m] = v;
                t[n][m] = e * v;
            }
        }
        Self { y, t }
    }

    fn poisson(mean: f64) -> Vec<f64> {
        let mut p = vec![(-mean).exp(); N];
        for k in 1..N {
            p[k] = p[k - 1] * mean / k as f64;
        }
        p
    }

    /// Expected gain and error gain for one pair of intensities.
    pub fn gain(&self, a: f64, b: f64) -> (f64, f64) {
        let (pa, pb) = (Self::poisson(a), Self::poisson(b));
        let (mut q, mut e) = (0.0, 0.0);
        for (n, an) in pa.iter().enumerate() {
            for (m, bm) in pb.iter().enumerate() {
                q += an * bm * self.y[n][m];
                e += an * bm * self.t[n][m];
            }
        }
        (q, e)
    }
}

pub const PAIRS: [IntensityPair; 8] = [
    IntensityPair::new(Vacuum, Vacuum),
    IntensityPair::new(Mu, Vacuum),
    IntensityPair::new(Vacuum, Mu),
    IntensityPair::new(Nu, Vacuum),
    IntensityPair::new(Vacuum, Nu),
    IntensityPair::new(Mu, Mu),
    IntensityPair::new(Nu, Nu),
    IntensityPair::new(Signal, Signal),
];

/// Gains table drawn from `model`. With `rng = None` the expected counts are
/// used directly, and `sent` is multiplied by `boost` so rounding them to
/// integers costs nothing.
pub fn gains(model: &YieldModel, cfg: &ProtocolConfig, mut rng: Option<&mut ChaCha8Rng>) -> ObservedGains {
    let boost = if rng.is_some() { 1.0 } else { 1e6 };
    let rows = PAIRS
        .iter()
        .map(|&pair| {
            let sent = (boost * cfg.expected_pair_count(pair)).round() as u64;
            let (q, e) = model.gain(cfg.intensities.get(pair.alice), cfg.intensities.get(pair.bob));
            let mean = sent as f64 * q;
            let (successes, errors) = match rng.as_deref_mut() {
                Some(r) => {
                    let s = if mean > 0.0 { Poisson::new(mean).unwrap().sample(r) as u64 } else { 0 };
                    (s, Binomial::new(s, (e / q).min(1.0)).unwrap().sample(r))
                }
                None => (mean.round() as u64, (sent as f64 * e).round() as u64),
            };
            let with_errors = pair.alice == pair.bob && pair.alice != Vacuum;
            GainRow::new(pair, sent, successes, with_errors.then_some(errors))
        })
        .collect();
    ObservedGains::new(rows).unwrap()
}

pub struct Soundness {
    pub trials: usize,
    pub y11_sound: usize,
    pub e11_sound: usize,
    /// Trials where the bounds said something (`y11 > 0`, `e11 < 1/2`).
    pub informative: usize,
}

/// Runs `trials` finite-key estimates on random models and counts how often
/// each bound holds.
pub fn soundness_trials(trials: usize, seed: u64) -> Soundness {
    let cfg = ProtocolConfig::experiment_24db();
    let opts = EstimatorOptions::from_config(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Soundness { trials, y11_sound: 0, e11_sound: 0, informative: 0 };
    for _ in 0..trials {
        let model = YieldModel::random(&mut rng);
        let g = gains(&model, &cfg, Some(&mut rng));
        let b = estimate_single_photon(&g, &cfg, &opts).unwrap();
        out.y11_sound += usize::from(b.y11_lower <= model.y11());
        out.e11_sound += usize::from(b.e11ph_upper >= model.e11());
        out.informative += usize::from(b.y11_lower > 0.0 && b.e11ph_upper < 0.5);
    }
    out
}
