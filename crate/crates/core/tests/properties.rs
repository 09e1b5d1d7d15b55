mod props;

use proptest::prelude::*;

use pqgdr::indices::{analyze, DetectorConfig};
use pqgdr::siggen::{add_noise, synthesize, ClassLabel, DisturbanceSpec, MagnitudeEvent};
use pqgdr::svm::{self, smo, kkt_residual, FeatureScaler, Kernel, SvmParams};

fn ok(r: props::Check) -> Result<(), TestCaseError> {
    r.map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gdr_is_scale_invariant(seed in any::<u64>(), exp in -3.0f64..3.0) {
        ok(props::gdr_scale_invariance(seed, 10f64.powf(exp)))?;
    }

    #[test]
    fn decomposition_is_linear(seed in any::<u64>(), a in -50.0f64..50.0, b in -50.0f64..50.0) {
        ok(props::decomposition_linearity(seed, a, b))?;
    }

    #[test]
    fn bands_reconstruct_the_window(seed in any::<u64>()) {
        let (rec, parseval) = props::reconstruction(seed).map_err(TestCaseError::fail)?;
        prop_assert!(rec < 1e-9, "reconstruction error {rec:e}");
        prop_assert!(parseval < 5e-3, "band RMS error {parseval:e}");
    }

    #[test]
    fn estimator_is_exact_and_amplitude_free(
        f in 45.0f64..55.0,
        exp in -3.0f64..4.0,
        phase in 0.0f64..std::f64::consts::TAU,
    ) {
        ok(props::estimator_exact(f, 10f64.powf(exp), phase))?;
    }

    #[test]
    fn votes_are_accounted(seed in 0u64..4, x in 195.0f64..215.0, y in 0.0f64..15.0) {
        let model = props::fixture_model(seed, &SvmParams::default());
        ok(props::vote_accounting(&model, &[x, y]))?;
    }

    #[test]
    fn smo_meets_kkt(seed in any::<u64>(), n in 4usize..40, c_exp in -1.0f64..2.0, gamma in 0.1f64..5.0) {
        ok(props::smo_kkt(seed, n, 10f64.powf(c_exp), gamma))?;
    }

    #[test]
    fn model_survives_save_and_load(seed in 0u64..1000, c in 0.5f64..50.0, gamma in 0.1f64..5.0) {
        let params = SvmParams { c, kernel: Kernel::Rbf { gamma }, ..SvmParams::default() };
        let model = props::fixture_model(seed, &params);
        let probes: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![198.0 + i as f64, 4.0 + (i % 7) as f64])
            .collect();
        ok(props::save_load_round_trip(&model, &probes))?;
    }

    #[test]
    fn standardization_removes_feature_units(seed in 0u64..1000, sx in -4i32..4, sy in -4i32..4) {
        // power-of-two rescaling keeps the arithmetic exact
        let (x, l) = props::fixture(seed, 8, 1.2);
        let k = [2f64.powi(sx), 2f64.powi(sy)];
        let xs: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] * k[0], r[1] * k[1]]).collect();
        let a = svm::fit(&x, &l, &SvmParams::default()).unwrap();
        let b = svm::fit(&xs, &l, &SvmParams::default()).unwrap();
        for r in &x {
            let p = a.predict(r).unwrap();
            let q = b.predict(&[r[0] * k[0], r[1] * k[1]]).unwrap();
            prop_assert_eq!(p, q);
        }
    }

    #[test]
    fn scaler_inverts(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 2), 2..30)) {
        let s = FeatureScaler::fit(&rows).unwrap();
        for r in &rows {
            let back = s.inverse(&s.transform(r));
            for (u, v) in back.iter().zip(r) {
                prop_assert!((u - v).abs() <= 1e-9 * (1.0 + v.abs()));
            }
        }
    }

    #[test]
    fn duplicate_points_with_both_labels(n in 1usize..6, c in 0.1f64..100.0) {
        let mut x = vec![vec![0.5, -0.5]; 2 * n];
        x.push(vec![2.0, 2.0]);
        x.push(vec![-2.0, -2.0]);
        let mut y: Vec<f64> = (0..2 * n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        y.extend([1.0, -1.0]);
        let params = SvmParams { c, ..SvmParams::default() };
        let sol = smo(&x, &y, &params);
        prop_assert!(sol.alpha.iter().all(|a| a.is_finite() && (0.0..=c).contains(a)));
        prop_assert!(sol.bias.is_finite());
        if sol.converged {
            prop_assert!(kkt_residual(&x, &y, &params, &sol) <= params.tol + 1e-9);
        }
    }

    #[test]
    fn noise_meets_its_snr(seed in any::<u64>(), snr in 20.0f64..60.0) {
        let w = synthesize(&DisturbanceSpec::clean(ClassLabel::Harmonics)).unwrap();
        let noisy = add_noise(&w, snr, seed).unwrap();
        let pn = noisy.samples.iter().zip(&w.samples).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            / w.samples.len() as f64;
        let measured = 10.0 * (w.power() / pn).log10();
        prop_assert!((measured - snr).abs() < 0.1, "{measured} vs {snr}");
    }

    #[test]
    fn longer_sags_are_not_shorter(start in 0.03f64..0.06, d in 0.03f64..0.08, extra in 0.01f64..0.05, depth in 0.4f64..0.8) {
        let sag = |len: f64| {
            let mut s = DisturbanceSpec::clean(ClassLabel::Sag);
            s.magnitude_event = Some(MagnitudeEvent { magnitude: depth, start, end: start + len });
            analyze(&synthesize(&s).unwrap(), &DetectorConfig::default()).unwrap().record.t0_duration
        };
        let (t1, t2) = (sag(d), sag(d + extra));
        prop_assert!(t2 >= t1 - 2e-3, "T0 {t1} then {t2}");
    }

    #[test]
    fn sag_is_located(start in 0.025f64..0.08, d in 0.04f64..0.1, depth in 0.4f64..0.8) {
        let mut s = DisturbanceSpec::clean(ClassLabel::Sag);
        s.magnitude_event = Some(MagnitudeEvent { magnitude: depth, start, end: start + d });
        let r = analyze(&synthesize(&s).unwrap(), &DetectorConfig::default()).unwrap().record;
        prop_assert!((r.t0 - start).abs() <= 2e-3, "t0 {} vs {start}", r.t0);
        prop_assert!((r.t0_duration - d).abs() <= 2e-3, "T0 {} vs {d}", r.t0_duration);
    }
}

#[test]
fn generated_items_ignore_thread_count() {
    let cfg = pqgdr::siggen::DatasetConfig {
        per_class_count: 3,
        master_seed: 5,
        snr: pqgdr::siggen::SnrPolicy::Mixed { lo: 30.0, hi: 40.0 },
        ..Default::default()
    };
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| pqgdr::siggen::make_dataset(&cfg).unwrap());
    let many = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| pqgdr::siggen::make_dataset(&cfg).unwrap());
    assert_eq!(one, many);
}
