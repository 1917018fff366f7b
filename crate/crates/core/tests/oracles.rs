//! Worked examples checked against hand arithmetic, frozen script output or
//! brute-force reimplementations kept inside this file.

use bearing_rul::dataset::{bearing_records, load_bearing, read_minute_file, XJTU_SAMPLE_RATE};
use bearing_rul::detector::{detect_band, detect_event, threshold, DetectorConfig};
use bearing_rul::dsp::{band_pass, critical_bands, envelope_spectrum, BandKind, BearingGeometry, Signal};
use bearing_rul::eval::{d_calibration, stratified_curves};
use bearing_rul::features::{extract_features, FeatureVector};
use bearing_rul::survival::cox::partial_log_likelihood;
use bearing_rul::survival::mtlr::MtlrConfig;
use bearing_rul::survival::{
    cox_fit, cox_predict, km_fit, mtlr_fit, mtlr_predict, rsf_fit, rsf_predict, CoxConfig, FittedModel,
    RsfConfig, SurvivalCurve, SurvivalData,
};
use bearing_rul::synthetic::{simulate_bearing, BearingSimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Weibull};
use std::f64::consts::PI;
use std::fs;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn threshold_halfway_example() {
    let config = DetectorConfig {
        window_seconds: 600.0,
        eta: 5.0,
        lambda_kl: 2.0,
        end_of_life_minutes: 100.0,
        n_bins: 50,
        half_width: 5.0,
    };
    // window 5 of 10-minute windows starts at minute 50
    let th = threshold(5, 1.0, &config);
    let expected = 5.0 * (-0.5 * (5.0f64 / 2.0).ln()).exp();
    assert!((th - expected).abs() < 1e-12);
    assert!((th - 3.1623).abs() < 5e-5);
}

#[test]
fn bpfo_band_keeps_modulation_energy() {
    let fs = 25_600.0;
    let bands = critical_bands(&BearingGeometry::ldk_uer204(), 35.0, 5.0).unwrap();
    let bpfo = bands.center(BandKind::Bpfo);
    let samples: Vec<f64> = (0..32_768)
        .map(|i| {
            let t = i as f64 / fs;
            (1.0 + 0.8 * (2.0 * PI * bpfo * t).cos()) * (2.0 * PI * 3000.0 * t).sin()
        })
        .collect();
    let spectrum = envelope_spectrum(&Signal::new(samples, fs).unwrap()).unwrap();
    let peak = spectrum.peak_bin_above(50.0).unwrap();
    assert!((spectrum.frequency(peak) - bpfo).abs() <= spectrum.bin_width);
    let band = band_pass(&spectrum, bpfo, 5.0).unwrap();
    let retained: f64 = band.magnitudes.iter().map(|m| m * m).sum();
    assert!(retained >= 0.9 * spectrum.magnitudes[peak].powi(2));
}

#[test]
fn frozen_feature_fixture() {
    // numpy: population moments, np.histogram(x, bins=50), natural log
    let x = [0.5, -1.2, 3.3, 0.1, -0.7, 2.2, -2.9, 1.4];
    let expected = [
        1.5375,
        1.8499577697882728,
        -0.099379621525431,
        2.2085872287084563,
        2.0794415416798357,
        1.8804919569091487,
        3.3,
        3.1999999999999997,
        1.7548599385790573,
        2.527354657543914,
        1.2230841996157065,
        2.146341463414634,
    ];
    let got = extract_features(&x).unwrap().to_array();
    for (g, e) in got.iter().zip(expected) {
        assert!(rel_close(*g, e, 1e-12), "{g} vs {e}");
    }
}

/// Direct transcription of the twelve feature expressions.
fn brute_force_features(x: &[f64]) -> [f64; 12] {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let skew = x.iter().map(|v| ((v - mean) / sd).powi(3)).sum::<f64>() / n;
    let kurt = x.iter().map(|v| ((v - mean) / sd).powi(4)).sum::<f64>() / n;
    let abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let abs_mean = abs.iter().sum::<f64>() / n;
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let max = abs.iter().cloned().fold(f64::MIN, f64::max);
    let min = abs.iter().cloned().fold(f64::MAX, f64::min);
    let sqrt_mean = abs.iter().map(|v| v.sqrt()).sum::<f64>() / n;

    let lo = x.iter().cloned().fold(f64::MAX, f64::min);
    let hi = x.iter().cloned().fold(f64::MIN, f64::max);
    let mut counts = [0usize; 50];
    for v in x {
        let k = (((v - lo) / (hi - lo)) * 50.0).floor() as usize;
        counts[k.min(49)] += 1;
    }
    let entropy = -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>();

    [
        abs_mean,
        sd,
        skew,
        kurt,
        entropy,
        rms,
        max,
        max - min,
        max / rms,
        max / (sqrt_mean * sqrt_mean),
        rms / abs_mean,
        max / abs_mean,
    ]
}

#[test]
fn features_match_brute_force_on_random_windows() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let len = rng.random_range(64..2048);
        let scale: f64 = rng.random_range(0.1..10.0);
        let x: Vec<f64> = (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z + rng.random_range(-1.0..1.0)
            })
            .collect();
        let got = extract_features(&x).unwrap().to_array();
        let want = brute_force_features(&x);
        for (k, (g, w)) in got.iter().zip(want).enumerate() {
            let tol = if k == 4 { 1e-12 } else { 1e-9 };
            assert!(rel_close(*g, w, tol) || (g - w).abs() < 1e-12, "feature {k}: {g} vs {w}");
        }
    }
}

#[test]
fn gaussian_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let f: FeatureVector = extract_features(&x).unwrap();
    assert!((2.9..=3.1).contains(&f.kurtosis), "kurtosis {}", f.kurtosis);
    assert!((-0.05..=0.05).contains(&f.skewness), "skewness {}", f.skewness);
}

#[test]
fn injected_fault_is_annotated_near_its_minute() {
    for seed in 0..5u64 {
        let m = 32 + (seed as usize * 5) % 20;
        let cfg = BearingSimConfig {
            fault_minute: Some(m),
            ..BearingSimConfig::default()
        };
        let rec = simulate_bearing("b", &cfg, seed).unwrap();
        let det = cfg.detector_config();
        let ann = detect_event(&rec, &cfg.geometry, cfg.shaft_hz, &det).unwrap();
        let step = det.window_seconds / 60.0;
        let t = ann.event_time_minutes;
        assert!(t >= m as f64 - step && t <= m as f64 + 2.0 * step, "seed {seed}: {t} vs {m}");
    }
}

#[test]
fn healthy_bearing_runs_to_end_of_life() {
    let cfg = BearingSimConfig::default();
    let rec = simulate_bearing("h", &cfg, 3).unwrap();
    let det = cfg.detector_config();
    let ann = detect_event(&rec, &cfg.geometry, cfg.shaft_hz, &det).unwrap();
    assert_eq!(ann.event_time_minutes, det.end_of_life_minutes);
    assert!(ann.per_band.iter().all(|b| b.detected_window.is_none()));
}

#[test]
fn lower_lambda_never_detects_later() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let shift_at = rng.random_range(8..30);
        let shift: f64 = rng.random_range(0.2..2.0);
        let windows: Vec<Vec<f64>> = (0..40)
            .map(|w| {
                let mu = if w >= shift_at { shift } else { 0.0 };
                (0..200)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        mu + z
                    })
                    .collect()
            })
            .collect();
        let mut last = 0usize;
        for lambda in [4.9, 4.5, 4.0, 3.0, 2.0, 1.5, 1.1] {
            let config = DetectorConfig {
                window_seconds: 60.0,
                eta: 5.0,
                lambda_kl: lambda,
                end_of_life_minutes: 40.0,
                n_bins: 5,
                half_width: 5.0,
            };
            let trace = detect_band(BandKind::Bpfo, &windows, &config).unwrap();
            let w = trace.detected_window.unwrap_or(40);
            if lambda < 4.9 {
                assert!(w <= last, "lambda {lambda}: window {w} after {last}");
            }
            last = w;
        }
    }
}

fn toy_cox_set() -> SurvivalData {
    SurvivalData::new(
        vec![vec![1.0], vec![0.0], vec![1.0], vec![0.0], vec![1.0], vec![0.0]],
        vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
        vec![true, true, false, true, true, false],
    )
    .unwrap()
}

#[test]
fn cox_six_record_grid_search() {
    let data = toy_cox_set();
    let model = cox_fit(&data, &CoxConfig::default()).unwrap();
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
    for k in 0..=100_000 {
        let b = -5.0 + k as f64 * 1e-4;
        let ll = partial_log_likelihood(&data, &[b]);
        if ll > best {
            best = ll;
            arg = b;
        }
    }
    assert!((model.coefficients[0] - arg).abs() < 1e-3);
    assert!(model.log_likelihood >= partial_log_likelihood(&data, &[0.0]));
}

#[test]
fn cox_curves_follow_risk_order() {
    let data = toy_cox_set();
    let model = cox_fit(&data, &CoxConfig::default()).unwrap();
    let beta = model.coefficients[0];
    let (hi, lo) = if beta > 0.0 { (1.0, 0.0) } else { (0.0, 1.0) };
    let s_hi = cox_predict(&model, &[hi]).unwrap();
    let s_lo = cox_predict(&model, &[lo]).unwrap();
    for &t in s_hi.times() {
        assert!(s_hi.at(t) <= s_lo.at(t) + 1e-12);
    }
    // zero linear predictor gives the Breslow baseline
    let zero = SurvivalData::new(data.x.iter().map(|_| vec![0.0]).collect(), data.times.clone(), data.events.clone())
        .unwrap();
    let m0 = cox_fit(&zero, &CoxConfig::default()).unwrap();
    let s0 = cox_predict(&m0, &[0.0]).unwrap();
    let mut h = 0.0;
    let n = data.times.len();
    for i in 0..n {
        if data.events[i] {
            h += 1.0 / (n - i) as f64;
        }
        assert!((s0.at(data.times[i]) - (-h).exp()).abs() < 1e-12);
    }
}

#[test]
fn single_stump_is_bootstrap_nelson_aalen() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 30;
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
    let times: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
    let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    let data = SurvivalData::new(x, times.clone(), events.clone()).unwrap();
    let config = RsfConfig {
        n_trees: 1,
        max_depth: 0,
        ..RsfConfig::default()
    };
    let model = rsf_fit(&data, &config).unwrap();
    let bag = &model.in_bag[0];
    let a = rsf_predict(&model, &[0.1]).unwrap();
    let b = rsf_predict(&model, &[0.9]).unwrap();
    for &t in &model.grid {
        // hand Nelson-Aalen over the bootstrap multiset
        let mut h = 0.0;
        let mut distinct: Vec<f64> = (0..n).filter(|&i| bag[i] > 0 && events[i] && times[i] <= t).map(|i| times[i]).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        for s in distinct {
            let d: u32 = (0..n).filter(|&i| events[i] && times[i] == s).map(|i| bag[i]).sum();
            let r: u32 = (0..n).filter(|&i| times[i] >= s).map(|i| bag[i]).sum();
            h += d as f64 / r as f64;
        }
        assert!((a.at(t) - (-h).exp()).abs() < 1e-12, "t = {t}");
        assert_eq!(a.at(t), b.at(t));
    }
}

/// Group 0 fails around 10-20, group 1 around 60-80.
fn two_groups(seed: u64) -> SurvivalData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut times = Vec::new();
    for i in 0..60 {
        let late = i % 2 == 1;
        let sign = if late { 1.0 } else { -1.0 };
        x.push(vec![sign * rng.random_range(1.0..2.0), rng.random_range(-1.0..1.0)]);
        times.push(if late { rng.random_range(60.0..80.0) } else { rng.random_range(10.0..20.0) });
    }
    SurvivalData::new(x, times, vec![true; 60]).unwrap()
}

#[test]
fn mtlr_orders_separated_groups() {
    let data = two_groups(4);
    let config = MtlrConfig {
        seed: 1,
        ..MtlrConfig::default()
    };
    let model = mtlr_fit(&data, &config).unwrap();
    let early = mtlr_predict(&model, &[-1.5, 0.0]).unwrap().median_time();
    let late = mtlr_predict(&model, &[1.5, 0.0]).unwrap().median_time();
    assert!(early < late, "{early} vs {late}");
}

#[test]
fn stratified_means_on_separated_groups() {
    let data = two_groups(8);
    let model = FittedModel::Rsf(rsf_fit(&data, &RsfConfig::default()).unwrap());
    let s = stratified_curves(&model, &data.x, 0, 0.5).unwrap();
    assert!(s.below.median_time() < s.above.median_time());
    let n = (s.n_below + s.n_above) as f64;
    for &t in s.overall.times() {
        let mix = (s.n_below as f64 * s.below.at(t) + s.n_above as f64 * s.above.at(t)) / n;
        assert!((s.overall.at(t) - mix).abs() < 1e-12);
    }
}

#[test]
fn km_on_own_training_lifetimes_is_calibrated() {
    for (seed, n) in [(1u64, 50usize), (2, 80), (3, 200), (4, 500)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Weibull::new(30.0, 1.5).unwrap();
        let times: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let events = vec![true; n];
        let km = km_fit(&times, &events).unwrap();
        let curves: Vec<SurvivalCurve> = vec![km; n];
        let d = d_calibration(&curves, &times, &events).unwrap();
        assert!(d.p_value > 0.05, "n = {n}: p = {}", d.p_value);
        assert_eq!(d.counts.iter().sum::<usize>(), n);
    }
}

#[test]
fn rolling_average_toy_bearing() {
    let minutes: Vec<FeatureVector> = (0..3)
        .map(|i| FeatureVector::from_array([i as f64 + 1.0; 12]))
        .collect();
    let records = bearing_records("toy", &minutes, 3.0, 2, 0).unwrap();
    let times: Vec<f64> = records.iter().map(|r| r.time).collect();
    assert_eq!(times, vec![2.5, 1.5]);
    assert_eq!(records[0].features[0], 1.5);
}

#[test]
fn xjtu_layout_loading() {
    let dir = tempfile::tempdir().unwrap();
    let bearing = dir.path().join("Bearing1_1");
    fs::create_dir(&bearing).unwrap();
    for m in 1..=122 {
        fs::write(bearing.join(format!("{m}.csv")), "Horizontal_vibration_signals,Vertical_vibration_signals\n0.1,0.2\n-0.3,0.4\n0.5,0.6\n").unwrap();
    }
    let rec = load_bearing(&bearing, XJTU_SAMPLE_RATE, None).unwrap();
    assert_eq!(rec.len_minutes(), 122);
    assert_eq!(rec.minutes[0].samples(), &[0.1, -0.3, 0.5]);

    let full = dir.path().join("full.csv");
    let mut text = String::from("h,v\n");
    for i in 0..32_768 {
        text.push_str(&format!("{},{}\n", (i % 7) as f64 * 0.01, 0.0));
    }
    fs::write(&full, text).unwrap();
    let signal = read_minute_file(&full, XJTU_SAMPLE_RATE, Some(32_768)).unwrap();
    assert_eq!(signal.len(), 32_768);
    assert_eq!(signal.sample_rate(), 25_600.0);

    let short = bearing.join("1.csv");
    let err = read_minute_file(&short, XJTU_SAMPLE_RATE, Some(32_768)).unwrap_err();
    assert!(err.to_string().contains("1.csv"), "{err}");

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert!(load_bearing(&empty, XJTU_SAMPLE_RATE, None).is_err());
}
