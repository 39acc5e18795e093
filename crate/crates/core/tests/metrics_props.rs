use proptest::prelude::*;
use rbench_core::metrics::*;

fn forward_points(w: f64, b: f64, ids: &[f64]) -> Vec<AccuracyPoint> {
    ids.iter()
        .map(|&x| AccuracyPoint {
            acc_id: x,
            acc_ood: inv_logit(w * logit(x).unwrap() + b),
        })
        .collect()
}

fn distinct_ids() -> impl Strategy<Value = Vec<f64>> {
    // ID accuracies in [0.05, 0.95]; beyond that, generated OOD values sit so
    // close to 0 or 1 that binary64 cannot carry their logit to 1e-9.
    prop::collection::btree_set(50u32..=950, 3..12)
        .prop_map(|s| s.into_iter().map(|k| k as f64 / 1000.0).collect())
}

proptest! {
    #[test]
    fn logit_roundtrip(x in 1e-6f64..(1.0 - 1e-6)) {
        let back = inv_logit(logit(x).unwrap());
        prop_assert!((back - x).abs() <= 1e-12, "{x} -> {back}");
    }

    #[test]
    fn logit_is_odd_about_half(x in 1e-6f64..(1.0 - 1e-6)) {
        let a = logit(x).unwrap();
        let b = logit(1.0 - x).unwrap();
        prop_assert!((a + b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn fit_recovers_noiseless_parameters(
        w in -3.0f64..3.0,
        b in -3.0f64..3.0,
        ids in distinct_ids(),
    ) {
        let pts = forward_points(w, b, &ids);
        let (fit, stats) = fit_beta(&pts).unwrap();
        prop_assert!((fit.w - w).abs() < 1e-9, "w {} vs {}", fit.w, w);
        prop_assert!((fit.b - b).abs() < 1e-9, "b {} vs {}", fit.b, b);
        prop_assert!(stats.d < 1e-9);
    }

    #[test]
    fn fit_is_permutation_invariant(
        pts in prop::collection::vec((0.01f64..0.99, 0.01f64..0.99), 3..15),
        seed in any::<u64>(),
    ) {
        let pts: Vec<_> = pts.into_iter().map(|(i, o)| AccuracyPoint { acc_id: i, acc_ood: o }).collect();
        prop_assume!(pts.iter().any(|p| p.acc_id != pts[0].acc_id));
        let mut shuffled = pts.clone();
        let n = shuffled.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let (f1, s1) = fit_beta(&pts).unwrap();
        let (f2, s2) = fit_beta(&shuffled).unwrap();
        prop_assert_eq!(f1, f2);
        prop_assert_eq!(s1.d, s2.d);
        prop_assert_eq!(s1.mae_pp, s2.mae_pp);
        prop_assert_eq!(s1.r2, s2.r2);
    }

    #[test]
    fn on_curve_point_has_zero_rho(w in 0.1f64..3.0, b in -2.0f64..2.0, x in 0.01f64..0.99) {
        let fit = LogitLinearFit::from_params(w, b);
        let p = AccuracyPoint { acc_id: x, acc_ood: predict_beta(&fit, x).unwrap() };
        prop_assert!(effective_robustness(&fit, &p).unwrap().abs() < 1e-9);
    }

    #[test]
    fn beta_is_increasing_for_positive_slope(
        w in 0.05f64..3.0,
        b in -2.0f64..2.0,
        x in 0.01f64..0.98,
        dx in 1e-3f64..0.01,
    ) {
        let fit = LogitLinearFit::from_params(w, b);
        prop_assert!(predict_beta(&fit, x + dx).unwrap() > predict_beta(&fit, x).unwrap());
    }

    #[test]
    fn shifted_curve_dominates(
        w in -3.0f64..3.0,
        b in -2.0f64..2.0,
        d in 0.0f64..0.5,
        lambda in 0.0f64..3.0,
        x in 0.01f64..0.99,
    ) {
        let fit = LogitLinearFit::from_params(w, b);
        let base = predict_beta(&fit, x).unwrap();
        let shifted = beta_lambda(&fit, d, lambda, x).unwrap();
        if lambda * d == 0.0 {
            prop_assert_eq!(shifted, base);
        } else {
            prop_assert!(shifted >= base);
            if lambda * d > 1e-9 {
                prop_assert!(shifted > base);
            }
        }
    }

    #[test]
    fn significance_implies_improvement(
        w in 0.1f64..2.0,
        b in -2.0f64..2.0,
        d in 1e-3f64..0.5,
        lambda in 1e-3f64..3.0,
        gamma in 0.0f64..5.0,
        id in 0.01f64..0.99,
        ood in 0.01f64..0.99,
        reference in 0.01f64..0.99,
    ) {
        let fit = LogitLinearFit::from_params(w, b);
        let cfg = SignificanceConfig::new(lambda, gamma).unwrap();
        let p = AccuracyPoint { acc_id: id, acc_ood: ood };
        let a = assess_significance(&fit, d, &p, reference, &cfg).unwrap();
        if a.significant {
            prop_assert!(a.rho_pp > 0.0 && a.tau_pp > 0.0 && a.improves);
            prop_assert!(a.tau_pp > gamma - 1e-9);
        }
    }

    #[test]
    fn perfect_fit_equivalences(
        pts in prop::collection::vec((0.02f64..0.98, 0.02f64..0.98), 3..10),
    ) {
        let pts: Vec<_> = pts.into_iter().map(|(i, o)| AccuracyPoint { acc_id: i, acc_ood: o }).collect();
        prop_assume!(pts.iter().any(|p| p.acc_id != pts[0].acc_id));
        let (_, s) = fit_beta(&pts).unwrap();
        let zero = s.residuals.iter().all(|&r| r == 0.0);
        prop_assert_eq!(zero, s.r2 == 1.0);
        prop_assert_eq!(zero, s.d == 0.0);
        prop_assert_eq!(zero, s.mae_pp == 0.0);
        prop_assert!(s.r2 <= 1.0);
    }
}

#[test]
fn exact_line_gives_perfect_fit_statistics() {
    let pts: Vec<_> = [0.1, 0.3, 0.45, 0.8]
        .iter()
        .map(|&x| AccuracyPoint { acc_id: x, acc_ood: x })
        .collect();
    let (_, s) = fit_beta(&pts).unwrap();
    assert!(s.residuals.iter().all(|&r| r == 0.0));
    assert_eq!((s.r2, s.d, s.mae_pp), (1.0, 0.0, 0.0));
}

/// Across-regime rule versus a direct enumeration of every verdict vector for
/// up to four low-shot regimes.
#[test]
fn across_regimes_matches_enumeration() {
    let lows = [Regime::Extreme, Regime::Low, Regime::Moderate, Regime::High];
    for n_low in 1..=4 {
        for mask in 0u32..(1 << (n_low + 1)) {
            let full = mask & 1 == 1;
            let verdicts: Vec<(Regime, bool)> = std::iter::once((Regime::Full, full))
                .chain((0..n_low).map(|i| (lows[i], mask >> (i + 1) & 1 == 1)))
                .collect();
            let passed = (0..n_low).filter(|i| mask >> (i + 1) & 1 == 1).count();
            let expected = full && passed * 2 > n_low;
            assert_eq!(assess_across_regimes(&verdicts).unwrap(), expected, "{verdicts:?}");
        }
    }
}
