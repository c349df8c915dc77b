//! Reference models shared by the integration tests. Nothing here calls into
//! the simulator's optics or detector code.

#![allow(dead_code)]

pub mod decoy;

use std::f64::consts::{PI, TAU};

use mdiqkd::{IntensityLabel, IntensityPair, ProtocolConfig};

/// Plain complex arithmetic on `(re, im)` tuples.
#[derive(Clone, Copy, Debug)]
pub struct C(pub f64, pub f64);

impl C {
    pub fn polar(r: f64, phi: f64) -> C {
        C(r * phi.cos(), r * phi.sin())
    }
    pub fn add(self, o: C) -> C {
        C(self.0 + o.0, self.1 + o.1)
    }
    pub fn mul(self, o: C) -> C {
        C(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
    }
    pub fn scale(self, s: f64) -> C {
        C(self.0 * s, self.1 * s)
    }
    pub fn abs2(self) -> f64 {
        self.0 * self.0 + self.1 * self.1
    }
}

const I: C = C(0.0, 1.0);

fn is_x(label: IntensityLabel) -> bool {
    !matches!(label, IntensityLabel::Signal)
}

/// Early and late amplitudes of one sender.
fn sender(label: IntensityLabel, mean: f64, bit: u8, phase: f64) -> [C; 2] {
    if is_x(label) {
        let a = C::polar((mean / 2.0).sqrt(), phase);
        [a, if bit == 0 { a } else { a.scale(-1.0) }]
    } else {
        let a = C::polar(mean.sqrt(), phase);
        let z = C(0.0, 0.0);
        if bit == 0 {
            [a, z]
        } else {
            [z, a]
        }
    }
}

/// Success and error probabilities for one ordered pair, per Bell state
/// `[Ψ⁻, Ψ⁺]`, dead time ignored.
#[derive(Debug, Clone, Copy)]
pub struct PairOracle {
    pub success: [f64; 2],
    pub error: [f64; 2],
}

impl PairOracle {
    pub fn total_success(&self) -> f64 {
        self.success[0] + self.success[1]
    }
    pub fn total_error(&self) -> f64 {
        self.error[0] + self.error[1]
    }
}

/// Integrates click probabilities over both senders' phases on a
/// `steps × steps` midpoint grid and averages the four bit combinations.
pub fn pair_oracle(cfg: &ProtocolConfig, pair: IntensityPair, steps: usize) -> PairOracle {
    let arm_db = cfg.channel_loss_db + cfg.chip_insertion_loss_db / 2.0;
    let eta = 10f64.powf(-arm_db / 10.0);
    let theta = TAU * cfg.laser_detuning_hz * cfg.bin_separation_ns * 1e-9;
    let det = [cfg.detector_1, cfg.detector_2];
    let dark: Vec<f64> = det.iter().map(|d| 1.0 - (-d.dark_rate_hz * d.gate_window_ns * 1e-9).exp()).collect();
    let ma = cfg.intensities.get(pair.alice) * eta;
    let mb = cfg.intensities.get(pair.bob) * eta;
    let x_pair = is_x(pair.alice) && is_x(pair.bob);
    let z_pair = !is_x(pair.alice) && !is_x(pair.bob);
    let mut out = PairOracle { success: [0.0; 2], error: [0.0; 2] };
    let w = 1.0 / (steps * steps * 4) as f64;
    for i in 0..steps {
        let pa = TAU * (i as f64 + 0.5) / steps as f64;
        for j in 0..steps {
            let pb = TAU * (j as f64 + 0.5) / steps as f64;
            for ba in 0..2u8 {
                for bb in 0..2u8 {
                    let a = sender(pair.alice, ma, ba, pa);
                    let mut b = sender(pair.bob, mb, bb, pb);
                    b[1] = b[1].mul(C::polar(1.0, theta));
                    // click[bin][detector]
                    let mut click = [[0.0; 2]; 2];
                    for bin in 0..2 {
                        let d1 = a[bin].add(I.mul(b[bin])).scale(1.0 / 2f64.sqrt());
                        let d2 = I.mul(a[bin]).add(b[bin]).scale(1.0 / 2f64.sqrt());
                        for (k, d) in [d1, d2].iter().enumerate() {
                            click[bin][k] = 1.0 - (1.0 - dark[k]) * (-det[k].ocde * d.abs2()).exp();
                        }
                    }
                    let only = |bin: usize, k: usize| click[bin][k] * (1.0 - click[bin][1 - k]);
                    let minus = only(0, 0) * only(1, 1) + only(0, 1) * only(1, 0);
                    let plus = only(0, 0) * only(1, 0) + only(0, 1) * only(1, 1);
                    out.success[0] += w * minus;
                    out.success[1] += w * plus;
                    let same = ba == bb;
                    if z_pair && same {
                        out.error[0] += w * minus;
                        out.error[1] += w * plus;
                    }
                    if x_pair {
                        if same {
                            out.error[0] += w * minus;
                        } else {
                            out.error[1] += w * plus;
                        }
                    }
                }
            }
        }
    }
    out
}

/// HOM visibility `1 - C_ind / C_dist` for two equal phase-randomised pulses
/// of `mean` photons per detector input, integrating the relative phase.
pub fn hom_oracle(mean: f64, ocde: f64, steps: usize) -> f64 {
    let mut ind = 0.0;
    for i in 0..steps {
        let phi = 2.0 * PI * (i as f64 + 0.5) / steps as f64;
        let n1 = mean * (1.0 + phi.sin());
        let n2 = mean * (1.0 - phi.sin());
        ind += (1.0 - (-ocde * n1).exp()) * (1.0 - (-ocde * n2).exp());
    }
    ind /= steps as f64;
    let dist = (1.0 - (-ocde * mean).exp()).powi(2);
    1.0 - ind / dist
}

/// Normal-approximation z score of an observed binomial count.
pub fn z_score(observed: u64, trials: u64, p: f64) -> f64 {
    let n = trials as f64;
    let sd = (n * p * (1.0 - p)).sqrt();
    if sd == 0.0 {
        return if observed as f64 == n * p { 0.0 } else { f64::INFINITY };
    }
    (observed as f64 - n * p) / sd
}

pub fn config_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}
