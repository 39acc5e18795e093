//! Per-intervention robustness reports with significance verdicts and the
//! cross-regime highlight.

use std::fmt::Write as _;

use rbench_core::metrics::{
    assess_across_regimes, assess_significance, beta_lambda, predict_beta, LogitForm,
    LogitLinearFit, MetricsError, Regime, ResidualStats, SignificanceConfig,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::DatasetProfile;
use crate::records::{RecordError, RecordTable, Role};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Records(#[from] RecordError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("unsupported report schema version {0} (expected {REPORT_SCHEMA_VERSION})")]
    Schema(u32),
    #[error("malformed report JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Baseline curve parameters as exchanged between commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub dataset: String,
    pub w: f64,
    pub b: f64,
    pub d: f64,
    pub n: usize,
    pub mae_pp: f64,
    pub r2: f64,
    #[serde(default, skip_serializing_if = "is_default_form")]
    pub logit_form: LogitForm,
}

fn is_default_form(f: &LogitForm) -> bool {
    *f == LogitForm::default()
}

impl FitParams {
    pub fn from_fit(dataset: &str, fit: &LogitLinearFit, stats: &ResidualStats) -> Self {
        Self {
            dataset: dataset.to_string(),
            w: fit.w,
            b: fit.b,
            d: stats.d,
            n: fit.n,
            mae_pp: stats.mae_pp,
            r2: stats.r2,
            logit_form: fit.form,
        }
    }

    pub fn curve(&self) -> LogitLinearFit {
        LogitLinearFit {
            w: self.w,
            b: self.b,
            n: self.n,
            form: self.logit_form,
        }
    }
}

/// Rounds to two decimals, the precision reports are printed at.
pub fn round2(x: f64) -> f64 {
    let r = (x * 100.0).round() / 100.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeEntry {
    pub regime: Regime,
    pub acc_id_pct: f64,
    pub acc_ood_pct: f64,
    pub reference_ood_pct: f64,
    /// Baseline and shifted-baseline OOD accuracy at this ID accuracy.
    pub beta_pct: f64,
    pub beta_lambda_pct: f64,
    pub rho: f64,
    pub tau: f64,
    pub improves: bool,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionReport {
    pub model: String,
    pub regimes: Vec<RegimeEntry>,
    /// Significant in full-shot and in a strict majority of low-shot regimes.
    pub highlighted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub dataset: String,
    pub reference_model: String,
    pub fit: FitParams,
    pub significance: SignificanceConfig,
    pub interventions: Vec<InterventionReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: u32,
        }
        let v: Version = serde_json::from_str(text)?;
        if v.schema_version != REPORT_SCHEMA_VERSION {
            return Err(ReportError::Schema(v.schema_version));
        }
        Ok(serde_json::from_str(text)?)
    }
}

/// Cross-regime highlight with the degenerate cases resolved: no full-shot
/// verdict means no highlight, and with no low-shot verdicts the full-shot
/// verdict decides alone.
pub fn highlight(verdicts: &[(Regime, bool)]) -> Result<bool, MetricsError> {
    match assess_across_regimes(verdicts) {
        Err(MetricsError::MissingFullShot) => Ok(false),
        Err(MetricsError::NoLowShot) => Ok(verdicts.iter().any(|&(r, v)| r == Regime::Full && v)),
        other => other,
    }
}

/// Scores every intervention in every profile regime it has records for.
pub fn build_report(
    fit: &FitParams,
    table: &RecordTable,
    profile: &DatasetProfile,
    reference_model: &str,
    cfg: &SignificanceConfig,
) -> Result<Report, ReportError> {
    cfg.validate()?;
    let curve = fit.curve();
    let points = table.points_with_role(Role::Intervention, profile)?;

    let mut models: Vec<String> = points.iter().map(|p| p.model.clone()).collect();
    models.dedup();
    let mut interventions = Vec::new();
    for model in models {
        let mut entries = Vec::new();
        for regime in &profile.regimes {
            let Some(mp) = points.iter().find(|p| p.model == model && p.regime == *regime) else {
                continue;
            };
            let reference = table.reference_ood(reference_model, *regime, profile)?;
            let a = assess_significance(&curve, fit.d, &mp.point, reference, cfg)?;
            entries.push(RegimeEntry {
                regime: *regime,
                acc_id_pct: 100.0 * mp.point.acc_id,
                acc_ood_pct: 100.0 * mp.point.acc_ood,
                reference_ood_pct: 100.0 * reference,
                beta_pct: 100.0 * predict_beta(&curve, mp.point.acc_id)?,
                beta_lambda_pct: 100.0 * beta_lambda(&curve, fit.d, cfg.lambda, mp.point.acc_id)?,
                rho: round2(a.rho_pp),
                tau: round2(a.tau_pp),
                improves: a.improves,
                significant: a.significant,
            });
        }
        if entries.is_empty() {
            continue;
        }
        let verdicts: Vec<(Regime, bool)> = entries.iter().map(|e| (e.regime, e.significant)).collect();
        interventions.push(InterventionReport {
            model,
            highlighted: highlight(&verdicts)?,
            regimes: entries,
        });
    }
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset: profile.name.clone(),
        reference_model: reference_model.to_string(),
        fit: fit.clone(),
        significance: *cfg,
        interventions,
    })
}

/// Which columns a rendered table carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableStyle {
    /// ρ and τ only.
    Robustness,
    /// Adds β_λ, the per-regime verdict and the highlight.
    Significance,
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Aligned plain-text table grouped by regime: full-shot first, then the
/// low-shot tiers.
pub fn render_table(report: &Report, style: TableStyle) -> String {
    let mut header = vec!["regime", "model", "id%", "ood%", "ref_ood%", "rho", "tau", "improves"];
    if style == TableStyle::Significance {
        header.extend(["beta_l%", "significant", "highlight"]);
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    let present = |r: &Regime| {
        report
            .interventions
            .iter()
            .any(|i| i.regimes.iter().any(|e| e.regime == *r))
    };
    // Full-shot first, then low-shot tiers from fewest to most samples.
    let ordered: Vec<Regime> = std::iter::once(Regime::Full)
        .chain(Regime::ALL.iter().copied().filter(|r| r.is_low_shot()))
        .filter(present)
        .collect();

    for regime in ordered {
        for i in &report.interventions {
            let Some(e) = i.regimes.iter().find(|e| e.regime == regime) else {
                continue;
            };
            let mut row = vec![
                regime.to_string(),
                i.model.clone(),
                format!("{:.2}", e.acc_id_pct),
                format!("{:.2}", e.acc_ood_pct),
                format!("{:.2}", e.reference_ood_pct),
                format!("{:.2}", e.rho),
                format!("{:.2}", e.tau),
                yes_no(e.improves).to_string(),
            ];
            if style == TableStyle::Significance {
                row.push(format!("{:.2}", e.beta_lambda_pct));
                row.push(yes_no(e.significant).to_string());
                row.push(yes_no(i.highlighted).to_string());
            }
            rows.push(row);
        }
    }

    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(c, s)| {
                // Text columns left-aligned, numbers right-aligned.
                if c < 2 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    let head: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    line(&head, &mut out);
    for r in &rows {
        line(r, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::parse_records;

    fn imagenet_fit() -> FitParams {
        FitParams {
            dataset: "imagenet".into(),
            w: 0.825,
            b: -1.609,
            d: 0.136,
            n: 0,
            mae_pp: 0.0,
            r2: 0.0,
            logit_form: LogitForm::LogOdds,
        }
    }

    const HEAD: &str = "model,regime,role,split,shift,accuracy_pct\n";

    fn single_shift_profile(regimes: &[Regime]) -> DatasetProfile {
        DatasetProfile {
            name: "toy".into(),
            metric_mode: crate::profile::MetricMode::Top1,
            ood_shifts: vec!["x".into()],
            regimes: regimes.to_vec(),
        }
    }

    fn rows(model: &str, role: &str, data: &[(&str, f64, f64)]) -> String {
        data.iter()
            .map(|(r, id, ood)| format!("{model},{r},{role},id,val,{id}\n{model},{r},{role},ood,x,{ood}\n"))
            .collect()
    }

    #[test]
    fn rounding() {
        assert_eq!(round2(30.2749), 30.27);
        assert_eq!(round2(-14.625_1), -14.63);
        assert_eq!(round2(-0.001), 0.0);
        assert!(round2(-0.001).is_sign_positive());
    }

    #[test]
    fn highlight_edge_cases() {
        assert!(!highlight(&[(Regime::Low, true)]).unwrap());
        assert!(highlight(&[(Regime::Full, true)]).unwrap());
        assert!(!highlight(&[(Regime::Full, false)]).unwrap());
        assert!(highlight(&[(Regime::Full, true), (Regime::Low, true)]).unwrap());
    }

    #[test]
    fn improves_without_significance() {
        // ρ > 0 and τ > 0 everywhere, but the full-shot OOD accuracy sits
        // between β and β_λ, so the intervention is not highlighted.
        let fit = imagenet_fit();
        let curve = fit.curve();
        let id = 0.70;
        let beta = predict_beta(&curve, id).unwrap();
        let shifted = beta_lambda(&curve, fit.d, 1.0, id).unwrap();
        let between = 100.0 * (beta + shifted) / 2.0;
        let above = 100.0 * shifted + 2.0;
        let text = format!(
            "{HEAD}{}{}",
            rows("clip", "intervention", &[("full", 70.0, between), ("extreme", 70.0, above), ("high", 70.0, above)]),
            rows("ref", "reference", &[("full", 60.0, 10.0), ("extreme", 30.0, 10.0), ("high", 40.0, 10.0)]),
        );
        let table = RecordTable::new(&parse_records(&text).unwrap());
        let profile = single_shift_profile(&[Regime::Extreme, Regime::High, Regime::Full]);
        let report = build_report(&fit, &table, &profile, "ref", &SignificanceConfig::default()).unwrap();
        let clip = &report.interventions[0];
        let full = clip.regimes.iter().find(|e| e.regime == Regime::Full).unwrap();
        assert!(full.improves && full.rho > 0.0 && full.tau > 0.0);
        assert!(!full.significant);
        assert!(clip.regimes.iter().filter(|e| e.regime != Regime::Full).all(|e| e.significant));
        assert!(!clip.highlighted);
    }

    #[test]
    fn missing_reference_regime_is_an_error() {
        let text = format!(
            "{HEAD}{}{}",
            rows("clip", "intervention", &[("full", 70.0, 60.0), ("high", 50.0, 40.0)]),
            rows("ref", "reference", &[("full", 60.0, 10.0)]),
        );
        let table = RecordTable::new(&parse_records(&text).unwrap());
        let profile = single_shift_profile(&[Regime::High, Regime::Full]);
        let err = build_report(&imagenet_fit(), &table, &profile, "ref", &SignificanceConfig::default())
            .unwrap_err();
        assert!(matches!(
            err,
            ReportError::Records(RecordError::MissingReference { regime: Regime::High, .. })
        ));
    }

    #[test]
    fn json_roundtrip_and_version_check() {
        let text = format!(
            "{HEAD}{}{}",
            rows("clip", "intervention", &[("full", 67.93, 57.37)]),
            rows("ref", "reference", &[("full", 80.0, 46.57)]),
        );
        let table = RecordTable::new(&parse_records(&text).unwrap());
        let profile = single_shift_profile(&[Regime::Full]);
        let report =
            build_report(&imagenet_fit(), &table, &profile, "ref", &SignificanceConfig::default()).unwrap();
        let back = Report::from_json(&report.to_json()).unwrap();
        assert_eq!(back, report);
        let e = &report.interventions[0].regimes[0];
        assert_eq!((e.rho, e.tau), (30.27, 10.8));
        assert!(report.interventions[0].highlighted);

        let bumped = report.to_json().replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(Report::from_json(&bumped).unwrap_err(), ReportError::Schema(9)));
        let table = render_table(&report, TableStyle::Significance);
        assert!(table.lines().nth(1).unwrap().starts_with("full"));
        assert!(table.contains("30.27") && table.contains("10.80"));
    }
}
