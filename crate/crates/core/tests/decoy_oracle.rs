//! Decoy bounds against synthetic yield models whose single-photon values
//! are known.

mod common;

use common::decoy::{gains, YieldModel};
use mdiqkd::decoy::{estimate_single_photon, EstimatorOptions, Method};
use mdiqkd::ProtocolConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn asymptotic_bounds_are_tight() {
    let cfg = ProtocolConfig::experiment_24db();
    let opts = EstimatorOptions::from_config(&cfg).asymptotic();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let model = YieldModel::random(&mut rng);
        let b = estimate_single_photon(&gains(&model, &cfg, None), &cfg, &opts).unwrap();
        assert!(b.y11_lower <= model.y11() && b.y11_lower >= 0.9 * model.y11(), "{} vs {}", b.y11_lower, model.y11());
        assert!(
            b.e11ph_upper >= model.e11() && b.e11ph_upper <= model.e11() + 0.1,
            "{} vs {}",
            b.e11ph_upper,
            model.e11()
        );
    }
}

#[test]
fn linear_program_is_at_least_as_tight_as_closed_form() {
    let cfg = ProtocolConfig::experiment_24db();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let model = YieldModel::random(&mut rng);
        let g = gains(&model, &cfg, Some(&mut rng));
        let lp = estimate_single_photon(&g, &cfg, &EstimatorOptions::from_config(&cfg)).unwrap();
        let an =
            estimate_single_photon(&g, &cfg, &EstimatorOptions::from_config(&cfg).method(Method::Analytic)).unwrap();
        assert!(lp.y11_lower >= an.y11_lower * (1.0 - 1e-6), "{} < {}", lp.y11_lower, an.y11_lower);
        assert!(lp.e11ph_upper <= an.e11ph_upper * (1.0 + 1e-6) || an.y11_lower == 0.0);
    }
}

#[test]
fn bounds_loosen_as_failure_probability_shrinks() {
    let cfg = ProtocolConfig::experiment_24db();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let model = YieldModel::random(&mut rng);
    let g = gains(&model, &cfg, Some(&mut rng));
    let mut prev: Option<(f64, f64)> = None;
    for eps in [1e-3, 1e-6, 1e-10, 1e-15, 1e-30] {
        let opts = EstimatorOptions { failure_prob: Some(eps), ..EstimatorOptions::from_config(&cfg) };
        let b = estimate_single_photon(&g, &cfg, &opts).unwrap();
        if let Some((y, e)) = prev {
            assert!(b.y11_lower <= y * (1.0 + 1e-9), "eps {eps}: y11 {} after {y}", b.y11_lower);
            assert!(b.e11ph_upper >= e * (1.0 - 1e-9), "eps {eps}: e11 {} after {e}", b.e11ph_upper);
        }
        prev = Some((b.y11_lower, b.e11ph_upper));
    }
}

#[test]
fn finite_key_never_beats_asymptotic_on_measured_gains() {
    use mdiqkd::decoy::ObservedGains;
    for (g, cfg) in [
        (ObservedGains::measured_24db(), ProtocolConfig::experiment_24db()),
        (ObservedGains::measured_35db(), ProtocolConfig::experiment_35db()),
        (ObservedGains::measured_44db(), ProtocolConfig::experiment_44db()),
    ] {
        let opts = EstimatorOptions::from_config(&cfg);
        let fin = estimate_single_photon(&g, &cfg, &opts).unwrap();
        let asym = estimate_single_photon(&g, &cfg, &opts.asymptotic()).unwrap();
        assert!(fin.y11_lower <= asym.y11_lower * (1.0 + 1e-9));
        assert!(fin.e11ph_upper >= asym.e11ph_upper * (1.0 - 1e-9));
    }
}
