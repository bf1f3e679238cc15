mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use nvs4d_core::diffusion::film::{masked_film, FilmParams};
use nvs4d_core::diffusion::guidance::{multi_guided_v, sample_mask, ConditioningMask, DenoiserOracle, DropoutScheme, GuidanceSpec, Signals};
use nvs4d_core::diffusion::sampler::{ddim_sample, SamplerConfig};
use nvs4d_core::diffusion::schedule::{alpha, sigma, v_convert, NoiseSchedule};
use nvs4d_core::diffusion::world::{GaussianWorld, Observation};
use nvs4d_core::diffusion::{DiffusionError, SamplerKind};
use proptest::prelude::*;
use rand::Rng;
use std::sync::Mutex;

/// Arbitrary nonlinear oracle that records every mask it is asked about.
struct ScrambledOracle {
    seen: Mutex<Vec<ConditioningMask>>,
}

impl DenoiserOracle for ScrambledOracle {
    fn dim(&self) -> usize {
        4
    }

    fn predict_v(&self, z: &DVector<f64>, lambda: f64, mask: ConditioningMask, _: &Signals) -> Result<DVector<f64>, DiffusionError> {
        self.seen.lock().unwrap().push(mask);
        let k = mask.present_count() as f64 + 1.0;
        Ok(DVector::from_fn(z.len(), |i, _| (k * z[i] + lambda).sin() * k + (i as f64 * z[i]).cos()))
    }
}

fn toy_signals(world: &GaussianWorld, seed: u64) -> Signals {
    world.sample_signals(&mut rng(seed)).1
}

#[test]
fn schedule_endpoints_and_monotone() {
    let s = NoiseSchedule::default();
    assert_eq!(s.logsnr(0.0).unwrap(), 15.0);
    assert_eq!(s.logsnr(1.0).unwrap(), -15.0);
    let grid: Vec<f64> = (0..1000).map(|i| s.logsnr(i as f64 / 999.0).unwrap()).collect();
    assert!(grid.windows(2).all(|w| w[1] < w[0]));
}

proptest! {
    #[test]
    fn alpha_sigma_unit(lambda in -30.0f64..30.0) {
        prop_assert!((alpha(lambda).powi(2) + sigma(lambda).powi(2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn v_convert_round_trip(z in prop::collection::vec(-5.0f64..5.0, 1..8), seed in any::<u64>(), lambda in -10.0f64..10.0) {
        let mut r = rng(seed);
        let v: Vec<f64> = z.iter().map(|_| normal(&mut r)).collect();
        let (x, e) = v_convert(&z, &v, lambda);
        for i in 0..z.len() {
            prop_assert!((alpha(lambda) * x[i] + sigma(lambda) * e[i] - z[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn true_noise_recovers_clean(x in prop::collection::vec(-3.0f64..3.0, 1..8), seed in any::<u64>(), lambda in -8.0f64..8.0) {
        let mut r = rng(seed);
        let eps: Vec<f64> = x.iter().map(|_| normal(&mut r)).collect();
        let (a, s) = (alpha(lambda), sigma(lambda));
        let z: Vec<f64> = x.iter().zip(&eps).map(|(x, e)| a * x + s * e).collect();
        let v: Vec<f64> = x.iter().zip(&eps).map(|(x, e)| a * e - s * x).collect();
        let (xh, eh) = v_convert(&z, &v, lambda);
        for i in 0..x.len() {
            prop_assert!((xh[i] - x[i]).abs() < 1e-9);
            prop_assert!((eh[i] - eps[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn film_mask_is_bit_exact(seed in any::<u64>(), f in 1usize..16, e in 1usize..8) {
        let mut r = rng(seed);
        let mut m = |rows, cols| DMatrix::from_fn(rows, cols, |_, _| normal(&mut r) * 1e3);
        let params = FilmParams::new(m(f, e), m(f, 1).column(0).into(), m(f, e), m(f, 1).column(0).into()).unwrap();
        let h = DVector::from_fn(f, |i, _| if i == 0 { -0.0 } else { (i as f64).exp() * 1e-300 });
        let out = masked_film(&h, None, &params).unwrap();
        let bits = |v: &DVector<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&out), bits(&h));
    }

    #[test]
    fn coefficient_form_equals_nested_differences(w in prop::collection::vec(-3.0f64..5.0, 1..=3), seed in any::<u64>(), lambda in -6.0f64..6.0) {
        let oracle = ScrambledOracle { seen: Mutex::new(Vec::new()) };
        let mut r = rng(seed);
        let z = DVector::from_fn(4, |_, _| normal(&mut r));
        let sig = Signals { values: vec![DVector::zeros(4); 3] };
        let spec = GuidanceSpec::new(w.clone()).unwrap();
        let got = multi_guided_v(&oracle, &z, lambda, &spec, &sig).unwrap();
        for m in oracle.seen.lock().unwrap().iter() {
            prop_assert!(m.present_count() <= 3);
        }
        let levels: Vec<DVector<f64>> = (0..=w.len())
            .map(|j| eps_from_v(&z, lambda, &oracle.predict_v(&z, lambda, ConditioningMask::prefix(j), &sig).unwrap()))
            .collect();
        let eps = additive_guidance(&levels, &w);
        let (a, s) = (alpha(lambda), sigma(lambda));
        let want = (&eps - &z * s) / a;
        prop_assert!((got - want).amax() < 1e-10);
    }
}

#[test]
fn uniform_weights_collapse_to_classic_guidance() {
    let world = GaussianWorld::toy(6, 4).unwrap();
    let sig = toy_signals(&world, 2);
    let mut r = rng(3);
    for w in [0.0, 0.5, 1.0, 2.5] {
        let z = DVector::from_fn(6, |_, _| normal(&mut r));
        let lambda = r.random_range(-5.0..5.0);
        let got = multi_guided_v(&world, &z, lambda, &GuidanceSpec::uniform(w).unwrap(), &sig).unwrap();
        let e0 = eps_from_v(&z, lambda, &world.predict_v(&z, lambda, ConditioningMask::UNCONDITIONAL, &sig).unwrap());
        let e3 = eps_from_v(&z, lambda, &world.predict_v(&z, lambda, ConditioningMask::FULL, &sig).unwrap());
        let eps = e0 * (1.0 - w) + e3 * w;
        let want = (&eps - &z * sigma(lambda)) / alpha(lambda);
        assert!((got - want).amax() < 1e-10);
    }
}

#[test]
fn world_conditionals_match_schur_complement() {
    let world = GaussianWorld::toy(6, 8).unwrap();
    let sig = toy_signals(&world, 1);
    for j in 0..=3 {
        let (m, s) = world.conditional(ConditioningMask::prefix(j), &sig).unwrap();
        let (m2, s2) = schur_conditional(&world, j, &sig);
        assert!((m - m2).amax() < 1e-10);
        assert!((s - s2).amax() < 1e-10);
    }
}

#[test]
fn dropout_frequencies_grouped() {
    let scheme = DropoutScheme::Grouped { p_drop: 0.1 };
    let n = 1_000_000;
    let mut counts = [0usize; 4];
    let mut r = rng(77);
    for _ in 0..n {
        let m = sample_mask(&mut r, &scheme).unwrap();
        assert!(ConditioningMask::new(m.images(), m.poses(), m.timestamps()).is_ok());
        counts[m.present_count()] += 1;
    }
    let p = [0.1 / 3.0, 0.1 / 3.0, 0.1 / 3.0, 0.9];
    for k in 0..4 {
        assert!(within_binomial(counts[k], n, p[k], 4.0), "mask {k}: {} of {n}", counts[k]);
    }
}

#[test]
fn dropout_frequencies_nested_coins() {
    let scheme = DropoutScheme::NestedCoins { p_drop: 0.1 };
    let n = 1_000_000;
    let mut counts = [0usize; 4];
    let mut r = rng(78);
    for _ in 0..n {
        counts[sample_mask(&mut r, &scheme).unwrap().present_count()] += 1;
    }
    // Timestamps drop with p; poses drop only after timestamps, with p; images likewise.
    let p = [1e-3, 0.01 * 0.9, 0.1 * 0.9, 0.9];
    assert_eq!(scheme.mask_probabilities().iter().sum::<f64>(), 1.0);
    for k in 0..4 {
        assert!(within_binomial(counts[k], n, p[k], 4.0), "mask {k}: {} of {n}", counts[k]);
    }
}

#[test]
fn zero_dropout_always_full() {
    let mut r = rng(1);
    for scheme in [DropoutScheme::Grouped { p_drop: 0.0 }, DropoutScheme::NestedCoins { p_drop: 0.0 }] {
        for _ in 0..1000 {
            assert_eq!(sample_mask(&mut r, &scheme).unwrap(), ConditioningMask::FULL);
        }
    }
}

#[test]
fn rk4_oracle_recovers_posterior_at_unit_weights() {
    let world = GaussianWorld::toy(6, 1).unwrap();
    let sig = toy_signals(&world, 5);
    let levels: Vec<_> = (0..=3).map(|j| schur_conditional(&world, j, &sig)).collect();
    // Start from the exact noised marginal so only integration error remains.
    let eta2 = 15f64.exp();
    let start = (levels[3].0.clone(), &levels[3].1 + DMatrix::identity(6, 6) * eta2);
    let (m, c) = rk4_moments(&levels, &[0.0, 0.0, 0.0, 1.0], -15.0, 15.0, 20_000, Some(start));
    assert!((&m - &levels[3].0).amax() < 1e-6, "{}", (&m - &levels[3].0).amax());
    assert!((&c - &levels[3].1).norm() < 1e-5, "{}", (&c - &levels[3].1).norm());
}

#[test]
fn sampler_matches_rk4_moments_under_guidance() {
    let world = GaussianWorld::toy(6, 1).unwrap();
    let sig = toy_signals(&world, 5);
    let levels: Vec<_> = (0..=3).map(|j| schur_conditional(&world, j, &sig)).collect();
    for w in [[1.25, 2.0, 2.0], [0.5, 3.0, 1.5]] {
        let spec = GuidanceSpec::new(w.to_vec()).unwrap();
        let (m, c) = rk4_moments(&levels, &spec.coefficients(), -15.0, 15.0, 20_000, None);
        let samples = ddim_sample(&world, &spec, &sig, &SamplerConfig::deterministic(256, 11, 20_000)).unwrap();
        let (sm, sc) = moments(&samples);
        let mean_err = (&sm - &m).amax();
        let cov_err = (&sc - &c).norm();
        assert!(mean_err < 0.05, "weights {w:?}: mean error {mean_err}");
        assert!(cov_err < 0.1, "weights {w:?}: covariance error {cov_err}");
    }
}

#[test]
fn unconditional_standard_prior() {
    let id = DMatrix::identity(4, 4);
    let obs = (0..3).map(|_| Observation { map: id.clone(), noise: id.clone() }).collect();
    let world = GaussianWorld::new(DVector::zeros(4), id.clone(), obs).unwrap();
    let sig = Signals { values: vec![DVector::from_element(4, 3.0); 3] };
    let spec = GuidanceSpec::uniform(0.0).unwrap();
    let samples = ddim_sample(&world, &spec, &sig, &SamplerConfig::deterministic(256, 4, 20_000)).unwrap();
    let (m, c) = moments(&samples);
    assert!(m.amax() < 0.05);
    assert!((c - id).norm() < 0.1);
}

#[test]
fn deterministic_samples_are_gaussian() {
    let world = GaussianWorld::toy(6, 1).unwrap();
    let sig = toy_signals(&world, 5);
    let spec = GuidanceSpec::image_pose_time(1.25, 2.0, 2.0).unwrap();
    let samples = ddim_sample(&world, &spec, &sig, &SamplerConfig::deterministic(64, 21, 20_000)).unwrap();
    let n = samples.len() as f64;
    let (m, c) = moments(&samples);
    for i in 0..6 {
        let sd = c[(i, i)].sqrt();
        let z: Vec<f64> = samples.iter().map(|s| (s[i] - m[i]) / sd).collect();
        let skew = z.iter().map(|v| v.powi(3)).sum::<f64>() / n;
        let kurt = z.iter().map(|v| v.powi(4)).sum::<f64>() / n - 3.0;
        assert!(skew.abs() < 4.0 * (6.0 / n).sqrt(), "component {i}: skewness {skew}");
        assert!(kurt.abs() < 4.0 * (24.0 / n).sqrt(), "component {i}: excess kurtosis {kurt}");
    }
}

#[test]
fn ancestral_sampler_tracks_posterior() {
    let world = GaussianWorld::toy(6, 1).unwrap();
    let sig = toy_signals(&world, 5);
    let (pm, pc) = schur_conditional(&world, 3, &sig);
    let cfg = SamplerConfig { kind: SamplerKind::Ancestral, ..SamplerConfig::deterministic(256, 3, 20_000) };
    let samples = ddim_sample(&world, &GuidanceSpec::uniform(1.0).unwrap(), &sig, &cfg).unwrap();
    let (m, c) = moments(&samples);
    assert!((m - pm).amax() < 0.05);
    assert!((c - pc).norm() < 0.15);
}
