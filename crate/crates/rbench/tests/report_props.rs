use proptest::prelude::*;
use rbench::profile::{DatasetProfile, MetricMode};
use rbench::records::{parse_records, RecordTable};
use rbench::report::{build_report, highlight, FitParams, Report};
use rbench_core::metrics::{
    assess_across_regimes, assess_significance, AccuracyPoint, LogitForm, Regime,
    SignificanceConfig,
};

const REGIMES: [Regime; 4] = [Regime::Extreme, Regime::Moderate, Regime::High, Regime::Full];

fn profile() -> DatasetProfile {
    DatasetProfile {
        name: "prop".into(),
        metric_mode: MetricMode::Top1,
        ood_shifts: vec!["s1".into(), "s2".into()],
        regimes: REGIMES.to_vec(),
    }
}

fn fit(w: f64, b: f64, d: f64) -> FitParams {
    FitParams {
        dataset: "prop".into(),
        w,
        b,
        d,
        n: 10,
        mae_pp: 0.0,
        r2: 0.0,
        logit_form: LogitForm::LogOdds,
    }
}

/// Per regime: intervention ID, two OOD shifts, reference two OOD shifts.
type Row = (f64, f64, f64, f64, f64);

fn csv(rows: &[Row]) -> String {
    let mut s = String::from("model,regime,role,split,shift,accuracy_pct\n");
    for (regime, (id, o1, o2, r1, r2)) in REGIMES.iter().zip(rows) {
        s += &format!("iv,{regime},intervention,id,val,{id}\n");
        s += &format!("iv,{regime},intervention,ood,s1,{o1}\n");
        s += &format!("iv,{regime},intervention,ood,s2,{o2}\n");
        s += &format!("ref,{regime},reference,ood,s1,{r1}\n");
        s += &format!("ref,{regime},reference,ood,s2,{r2}\n");
    }
    s
}

fn pct() -> impl Strategy<Value = f64> {
    (100u32..9900).prop_map(|v| v as f64 / 100.0)
}

fn rows() -> impl Strategy<Value = Vec<Row>> {
    prop::collection::vec((pct(), pct(), pct(), pct(), pct()), 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Report values agree with the core operations applied record by
    /// record, survive a JSON round trip within 0.005 pp, and every highlight
    /// follows the cross-regime rule.
    #[test]
    fn report_matches_core_and_roundtrips(
        rows in rows(),
        w in 0.2f64..1.5,
        b in -1.5f64..1.0,
        d in 0.0f64..0.3,
        lambda in 0.0f64..2.0,
        gamma in 0.0f64..3.0,
    ) {
        let table = RecordTable::new(&parse_records(&csv(&rows)).unwrap());
        let fit = fit(w, b, d);
        let cfg = SignificanceConfig::new(lambda, gamma).unwrap();
        let report = build_report(&fit, &table, &profile(), "ref", &cfg).unwrap();
        let back = Report::from_json(&report.to_json()).unwrap();
        prop_assert_eq!(&back, &report);

        let iv = &back.interventions[0];
        prop_assert_eq!(iv.regimes.len(), 4);
        let mut verdicts = Vec::new();
        for (regime, (id, o1, o2, r1, r2)) in REGIMES.iter().zip(&rows) {
            let e = iv.regimes.iter().find(|e| e.regime == *regime).unwrap();
            let point = AccuracyPoint::new(id / 100.0, (o1 / 100.0 + o2 / 100.0) / 2.0).unwrap();
            let reference = (r1 / 100.0 + r2 / 100.0) / 2.0;
            let core = assess_significance(&fit.curve(), d, &point, reference, &cfg).unwrap();
            prop_assert!((e.rho - core.rho_pp).abs() <= 0.005 + 1e-12, "rho {} vs {}", e.rho, core.rho_pp);
            prop_assert!((e.tau - core.tau_pp).abs() <= 0.005 + 1e-12, "tau {} vs {}", e.tau, core.tau_pp);
            prop_assert_eq!(e.significant, core.significant);
            prop_assert_eq!(e.improves, core.improves);
            verdicts.push((*regime, e.significant));
        }
        prop_assert_eq!(iv.highlighted, assess_across_regimes(&verdicts).unwrap());
    }
}

#[test]
fn highlight_resolves_degenerate_verdict_sets() {
    assert!(!highlight(&[]).unwrap());
    assert!(!highlight(&[(Regime::High, true), (Regime::Moderate, true)]).unwrap());
    assert!(highlight(&[(Regime::Full, true)]).unwrap());
    assert!(highlight(&[(Regime::Full, true), (Regime::Full, true)]).is_err());
}

#[test]
fn shifts_missing_from_records_are_listed() {
    let text = "model,regime,role,split,shift,accuracy_pct\n\
                iv,full,intervention,id,val,50\niv,full,intervention,ood,s1,40\n\
                ref,full,reference,ood,s1,30\nref,full,reference,ood,s2,30\n";
    let table = RecordTable::new(&parse_records(text).unwrap());
    let err = build_report(&fit(1.0, 0.0, 0.1), &table, &profile(), "ref", &SignificanceConfig::default())
        .unwrap_err();
    assert!(err.to_string().contains("s2"), "{err}");
}
