use bearing_rul::dataset::{apply_censoring, stratified_kfold, zscore_fit_rows, Provenance, SupervisedDataset, SurvivalRecord};
use bearing_rul::detector::{detect_band, threshold, DetectorConfig};
use bearing_rul::dsp::{band_pass, envelope_spectrum, estimate_pdf, estimate_pdf_with_edges, kl_divergence, BandKind, Signal};
use bearing_rul::eval::{cra, d_calibration_from_values, mae_hinge};
use bearing_rul::features::extract_features;
use bearing_rul::survival::cox::partial_log_likelihood;
use bearing_rul::survival::mtlr::MtlrConfig;
use bearing_rul::survival::rsf::rsf_predict_oob;
use bearing_rul::survival::{
    cox_fit, km_bounds, km_fit, rsf_fit, rsf_predict, CoxConfig, FittedModel, ModelConfig, ModelKind, RsfConfig,
    SurvivalCurve, SurvivalData,
};
use bearing_rul::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn finite_values(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, 1..max_len)
}

/// Survival data with `n` records, `d` features and roughly 30% censoring.
fn random_data(seed: u64, n: usize, d: usize) -> SurvivalData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let times: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0f64).round()).collect();
    let mut events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    events[0] = true;
    SurvivalData::new(x, times, events).unwrap()
}

fn monotone_in_unit_interval(curve: &SurvivalCurve) -> bool {
    let p = curve.probabilities();
    p.iter().all(|v| (0.0..=1.0).contains(v)) && p.windows(2).all(|w| w[1] <= w[0]) && curve.is_valid()
}

proptest! {
    #[test]
    fn kl_is_non_negative_and_zero_on_itself(a in finite_values(300), b in finite_values(300), bins in 2usize..60) {
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let p0 = estimate_pdf(&all, bins).unwrap();
        let p = estimate_pdf_with_edges(&a, &p0.edges).unwrap();
        let q = estimate_pdf_with_edges(&b, &p0.edges).unwrap();
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn pdf_has_unit_mass(v in finite_values(500), bins in 2usize..100) {
        let p = estimate_pdf(&v, bins).unwrap();
        prop_assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn envelope_is_amplitude_linear(seed in any::<u64>(), c in 0.01..100.0f64, len in 16usize..512) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let a = envelope_spectrum(&Signal::new(x, 1000.0).unwrap()).unwrap();
        let b = envelope_spectrum(&Signal::new(scaled, 1000.0).unwrap()).unwrap();
        let peak = a.magnitudes.iter().cloned().fold(0.0, f64::max);
        for (u, v) in a.magnitudes.iter().zip(&b.magnitudes) {
            prop_assert!((c * u - v).abs() <= 1e-9 * c * peak.max(1e-12));
        }
    }

    #[test]
    fn band_pass_is_idempotent(seed in any::<u64>(), center in 50.0..450.0f64, half in 1.0..40.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = envelope_spectrum(&Signal::new(x, 1000.0).unwrap()).unwrap();
        let once = band_pass(&spec, center, half).unwrap();
        let twice = band_pass(&once, center, half).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn threshold_strictly_decays(
        w in 0usize..500,
        sigma in 1e-6..10.0f64,
        eta in 1.1..10.0f64,
        ratio in 0.05..0.95f64,
        life in 10.0..500.0f64,
    ) {
        let config = DetectorConfig {
            window_seconds: 60.0,
            eta,
            lambda_kl: eta * ratio,
            end_of_life_minutes: life,
            n_bins: 10,
            half_width: 5.0,
        };
        prop_assert!(threshold(w + 1, sigma, &config) < threshold(w, sigma, &config));
    }

    #[test]
    fn band_detection_is_deterministic_and_monotone_in_lambda(seed in any::<u64>(), n_windows in 8usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift_at = rng.random_range(1..n_windows);
        let windows: Vec<Vec<f64>> = (0..n_windows)
            .map(|w| {
                let mu = if w >= shift_at { 1.0 } else { 0.0 };
                (0..64).map(|_| mu + rng.random_range(-1.0..1.0)).collect()
            })
            .collect();
        let config = |lambda_kl| DetectorConfig {
            window_seconds: 60.0,
            eta: 5.0,
            lambda_kl,
            end_of_life_minutes: n_windows as f64,
            n_bins: 8,
            half_width: 5.0,
        };
        let high = detect_band(BandKind::Bpfo, &windows, &config(4.0)).unwrap();
        let low = detect_band(BandKind::Bpfo, &windows, &config(1.5)).unwrap();
        prop_assert_eq!(&high, &detect_band(BandKind::Bpfo, &windows, &config(4.0)).unwrap());
        let at = |t: Option<usize>| t.unwrap_or(n_windows);
        prop_assert!(at(low.detected_window) <= at(high.detected_window));
        prop_assert!(at(high.detected_window) as f64 <= n_windows as f64);
    }

    #[test]
    fn feature_scale_behaviour(seed in any::<u64>(), c in 0.01..100.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..256).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| c * v).collect();
        let a = extract_features(&x).unwrap().to_array();
        let b = extract_features(&y).unwrap().to_array();
        let close = |u: f64, v: f64| (u - v).abs() <= 1e-9 * u.abs().max(v.abs()).max(1e-12);
        // absolute_mean, std, rms, max_value, peak_to_peak
        for k in [0, 1, 5, 6, 7] {
            prop_assert!(close(c * a[k], b[k]), "feature {}", k);
        }
        // skewness, kurtosis, crest, clearance, shape, impulse
        for k in [2, 3, 8, 9, 10, 11] {
            prop_assert!(close(a[k], b[k]) || (a[k] - b[k]).abs() < 1e-12, "feature {}", k);
        }
    }

    #[test]
    fn km_duplication_and_bounds(seed in any::<u64>(), n in 1usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let times: Vec<f64> = (0..n).map(|_| rng.random_range(1..30) as f64).collect();
        let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        let km = km_fit(&times, &events).unwrap();
        let doubled_t: Vec<f64> = times.iter().chain(&times).copied().collect();
        let doubled_e: Vec<bool> = events.iter().chain(&events).copied().collect();
        let km2 = km_fit(&doubled_t, &doubled_e).unwrap();
        prop_assert_eq!(km.times(), km2.times());
        for (a, b) in km.probabilities().iter().zip(km2.probabilities()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let (upper, lower) = km_bounds(&times, &events).unwrap();
        for &t in km.times() {
            prop_assert!(upper.at(t) >= km.at(t) - 1e-12 && km.at(t) >= lower.at(t) - 1e-12);
        }
    }

    #[test]
    fn cra_ignores_time_units(seed in any::<u64>(), k in 1usize..30, scale in 0.001..1000.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actual: Vec<f64> = (0..k).map(|_| rng.random_range(1.0..200.0)).collect();
        let predicted: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..300.0)).collect();
        let a = cra(&predicted, &actual).unwrap();
        let p2: Vec<f64> = predicted.iter().map(|v| v * scale).collect();
        let a2: Vec<f64> = actual.iter().map(|v| v * scale).collect();
        prop_assert!((a - cra(&p2, &a2).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn d_calibration_counts_cover_every_value(values in prop::collection::vec(0.0..=1.0f64, 10..400)) {
        let d = d_calibration_from_values(&values).unwrap();
        prop_assert_eq!(d.counts.iter().sum::<usize>(), values.len());
        prop_assert!((0.0..=1.0).contains(&d.p_value));
    }

    #[test]
    fn hinge_never_exceeds_true_error_on_undershoot(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n {
            let e = rng.random_range(1.0..100.0f64);
            let c = rng.random_range(0.0..e);
            let pred = rng.random_range(0.0..150.0f64);
            let hinge = mae_hinge(&[pred], &[c], &[false]).unwrap();
            if pred <= e {
                prop_assert!(hinge <= (e - pred).abs() + 1e-12);
            }
        }
    }

    #[test]
    fn censoring_only_shortens(seed in any::<u64>(), n in 4usize..80, pct in 0.0..=1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records: Vec<SurvivalRecord> = (0..n)
            .map(|i| SurvivalRecord {
                features: vec![rng.random_range(-1.0..1.0), i as f64],
                time: rng.random_range(0.5..50.0),
                event: true,
                bearing_id: format!("b{}", i % 3),
            })
            .collect();
        let ds = SupervisedDataset::new(records, Provenance::default()).unwrap();
        let censored = apply_censoring(&ds, pct, seed).unwrap();
        prop_assert_eq!(censored.len(), ds.len());
        for (a, b) in ds.records.iter().zip(&censored.records) {
            prop_assert!(b.time <= a.time);
            prop_assert_eq!(&a.features, &b.features);
            if !b.event {
                prop_assert!(b.time > 0.0 && b.time < a.time);
            }
        }
        prop_assert_eq!(&censored, &apply_censoring(&ds, pct, seed).unwrap());
    }

    #[test]
    fn folds_partition_and_balance(seed in any::<u64>(), n in 10usize..200, k in 2usize..8) {
        prop_assume!(k <= n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let folds = stratified_kfold(&times, &events, k, seed).unwrap();
        let mut seen = vec![0usize; n];
        for f in &folds {
            for &i in &f.test {
                seen[i] += 1;
            }
            prop_assert_eq!(f.train.len() + f.test.len(), n);
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let censored = events.iter().filter(|e| !**e).count() as f64;
        for f in &folds {
            let in_fold = f.test.iter().filter(|&&i| !events[i]).count() as f64;
            let expected = censored * f.test.len() as f64 / n as f64;
            // up to one record per stratum of drift
            prop_assert!((in_fold - expected).abs() <= 4.0 + 1e-9);
        }
    }

    #[test]
    fn zscore_centres_training_columns(seed in any::<u64>(), n in 2usize..50, d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-50.0..50.0)).collect()).collect();
        let stats = zscore_fit_rows(&rows, None).unwrap();
        let z: Vec<Vec<f64>> = rows.iter().map(|r| stats.apply_row(r).unwrap()).collect();
        for j in 0..d {
            let mean = z.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = z.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_model_emits_valid_curves(seed in any::<u64>(), n in 12usize..60, d in 1usize..4) {
        let data = random_data(seed, n, d);
        let config = ModelConfig {
            rsf: RsfConfig { n_trees: 20, seed, ..RsfConfig::default() },
            mtlr: MtlrConfig { epochs: 200, seed, ..MtlrConfig::default() },
            ..ModelConfig::default()
        };
        for kind in ModelKind::ALL {
            let model = match FittedModel::fit(kind, &data, &config) {
                Ok(m) => m,
                Err(Error::Separation { .. }) if kind == ModelKind::Cox => continue,
                Err(e) => return Err(TestCaseError::fail(format!("{kind}: {e}"))),
            };
            for x in &data.x {
                let curve = model.predict(x).unwrap();
                prop_assert!(monotone_in_unit_interval(&curve), "{}", kind);
            }
        }
    }

    #[test]
    fn cox_never_worse_than_null(seed in any::<u64>(), n in 6usize..40) {
        let data = random_data(seed, n, 2);
        match cox_fit(&data, &CoxConfig::default()) {
            Ok(model) => {
                prop_assert!(model.log_likelihood >= partial_log_likelihood(&data, &[0.0, 0.0]) - 1e-9);
            }
            Err(Error::Separation { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}

#[test]
fn forest_is_deterministic_and_oob_gap_does_not_grow_with_trees() {
    let data = random_data(17, 120, 3);
    let gap = |n_trees| {
        let config = RsfConfig {
            n_trees,
            seed: 5,
            ..RsfConfig::default()
        };
        let model = rsf_fit(&data, &config).unwrap();
        assert_eq!(model, rsf_fit(&data, &config).unwrap());
        let oob = rsf_predict_oob(&model, &data.x).unwrap();
        let mut total = 0.0;
        let mut count = 0usize;
        for (x, o) in data.x.iter().zip(&oob) {
            let full = rsf_predict(&model, x).unwrap();
            for &t in &model.grid {
                total += (full.at(t) - o.at(t)).abs();
                count += 1;
            }
        }
        total / count as f64
    };
    let (g100, g400) = (gap(100), gap(400));
    assert!(g400 <= g100, "{g400} > {g100}");
}
