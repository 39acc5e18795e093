//! Robustness metrics on (in-domain, out-of-distribution) accuracy pairs.
//!
//! A baseline curve is fitted to a cloud of "standard" models by ordinary
//! least squares in logit space:
//!
//! ```text
//! beta(x) = sigmoid(w * logit(x) + b)
//! ```
//!
//! Interventions are then scored against it. Effective robustness is the OOD
//! accuracy above the curve, relative robustness is the OOD gain over a
//! reference model, and significance shifts the curve up by `lambda * d`
//! where `d` is the residual deviation of the fit.
//!
//! Accuracies are fractions in `(0, 1)` here; percentage points only appear in
//! the returned robustness values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower clamp applied to accuracies of exactly 0 or 1.
pub const ACCURACY_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("logit undefined for {0}: value must lie strictly inside (0, 1)")]
    Domain(f64),
    #[error("need at least 3 points to fit the baseline curve, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate regression: all in-domain accuracies are identical")]
    Degenerate,
    #[error("invalid significance config: {0}")]
    InvalidConfig(String),
    #[error("no full-shot verdict supplied")]
    MissingFullShot,
    #[error("more than one full-shot verdict supplied")]
    DuplicateFullShot,
    #[error("no low-shot verdicts supplied")]
    NoLowShot,
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Which logit transform to apply.
///
/// `LogOdds` (`ln(x / (1 - x))`) is the one that matches the reference
/// robustness numbers. `NegLogComplement` (`ln(1 / (1 - x))`) is kept for
/// auditing the alternative reading; its inverse is `1 - exp(-y)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogitForm {
    #[default]
    LogOdds,
    NegLogComplement,
}

impl LogitForm {
    pub fn apply(self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x < 1.0) {
            return Err(MetricsError::Domain(x));
        }
        Ok(match self {
            LogitForm::LogOdds => (x / (1.0 - x)).ln(),
            LogitForm::NegLogComplement => -(-x).ln_1p(),
        })
    }

    pub fn invert(self, y: f64) -> f64 {
        match self {
            LogitForm::LogOdds => inv_logit(y),
            LogitForm::NegLogComplement => -(-y).exp_m1(),
        }
    }
}

/// Log-odds transform `ln(x / (1 - x))`.
pub fn logit(x: f64) -> Result<f64> {
    LogitForm::LogOdds.apply(x)
}

/// Logistic sigmoid, evaluated without overflow for large `|y|`.
pub fn inv_logit(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// Clamp an accuracy into `[ACCURACY_EPS, 1 - ACCURACY_EPS]`, warning when it
/// had to move.
pub fn clamp_accuracy(x: f64) -> f64 {
    let clamped = x.clamp(ACCURACY_EPS, 1.0 - ACCURACY_EPS);
    if clamped != x {
        log::warn!("accuracy {x} clamped to {clamped} to keep logit finite");
    }
    clamped
}

/// One model's accuracy pair, as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub acc_id: f64,
    pub acc_ood: f64,
}

impl AccuracyPoint {
    /// Builds a point from fractions in `[0, 1]`, clamping the endpoints.
    pub fn new(acc_id: f64, acc_ood: f64) -> Result<Self> {
        for v in [acc_id, acc_ood] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MetricsError::Domain(v));
            }
        }
        Ok(Self {
            acc_id: clamp_accuracy(acc_id),
            acc_ood: clamp_accuracy(acc_ood),
        })
    }

    /// Builds a point from percentages in `[0, 100]`.
    pub fn from_percent(id_pct: f64, ood_pct: f64) -> Result<Self> {
        Self::new(id_pct / 100.0, ood_pct / 100.0)
    }
}

/// Fitted baseline curve parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitLinearFit {
    pub w: f64,
    pub b: f64,
    pub n: usize,
    #[serde(default)]
    pub form: LogitForm,
}

impl LogitLinearFit {
    /// A curve with given parameters, e.g. reference values.
    pub fn from_params(w: f64, b: f64) -> Self {
        Self {
            w,
            b,
            n: 0,
            form: LogitForm::LogOdds,
        }
    }

    /// Value of the curve in logit space at logit-space abscissa `t`.
    pub fn linear(&self, t: f64) -> f64 {
        self.w * t + self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    /// `logit(ood) - (w * logit(id) + b)` per input point, in input order.
    pub residuals: Vec<f64>,
    /// `sqrt(sum(r^2) / (n - 2))`.
    pub d: f64,
    /// Mean absolute error in accuracy space, percentage points.
    pub mae_pp: f64,
    /// Coefficient of determination in logit space.
    pub r2: f64,
}

/// Ordinary least squares fit of `logit(ood)` on `logit(id)`.
pub fn fit_beta(points: &[AccuracyPoint]) -> Result<(LogitLinearFit, ResidualStats)> {
    fit_beta_with(points, LogitForm::LogOdds)
}

pub fn fit_beta_with(
    points: &[AccuracyPoint],
    form: LogitForm,
) -> Result<(LogitLinearFit, ResidualStats)> {
    let n = points.len();
    if n < 3 {
        return Err(MetricsError::TooFewPoints(n));
    }
    let xs = points
        .iter()
        .map(|p| form.apply(p.acc_id))
        .collect::<Result<Vec<_>>>()?;
    let ys = points
        .iter()
        .map(|p| form.apply(p.acc_ood))
        .collect::<Result<Vec<_>>>()?;

    // Sorted summation keeps the result independent of input order.
    let nf = n as f64;
    let x_mean = ordered_sum(&xs) / nf;
    let y_mean = ordered_sum(&ys) / nf;
    let sxx = ordered_sum(&xs.iter().map(|x| (x - x_mean).powi(2)).collect::<Vec<_>>());
    let sxy = ordered_sum(
        &xs.iter()
            .zip(&ys)
            .map(|(x, y)| (x - x_mean) * (y - y_mean))
            .collect::<Vec<_>>(),
    );
    if xs.iter().all(|&x| x == xs[0]) || sxx == 0.0 {
        return Err(MetricsError::Degenerate);
    }
    let w = sxy / sxx;
    let b = y_mean - w * x_mean;
    let fit = LogitLinearFit { w, b, n, form };

    let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - fit.linear(*x)).collect();
    let ss_res = ordered_sum(&residuals.iter().map(|r| r * r).collect::<Vec<_>>());
    let ss_tot = ordered_sum(&ys.iter().map(|y| (y - y_mean).powi(2)).collect::<Vec<_>>());
    let d = (ss_res / (nf - 2.0)).sqrt();
    let r2 = if ss_res == 0.0 {
        1.0
    } else if ss_tot == 0.0 {
        0.0
    } else {
        1.0 - ss_res / ss_tot
    };
    // A zero logit residual means the point is on the curve; skip the
    // sigmoid round trip so MAE vanishes exactly with the residuals.
    let abs_errors: Vec<f64> = points
        .iter()
        .zip(&xs)
        .zip(&residuals)
        .map(|((p, &x), &r)| {
            if r == 0.0 {
                0.0
            } else {
                (p.acc_ood - form.invert(fit.linear(x))).abs()
            }
        })
        .collect();
    let mae_pp = 100.0 * ordered_sum(&abs_errors) / nf;

    Ok((
        fit,
        ResidualStats {
            residuals,
            d,
            mae_pp,
            r2,
        },
    ))
}

fn ordered_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum()
}

/// Baseline OOD accuracy expected at in-domain accuracy `acc_id`.
pub fn predict_beta(fit: &LogitLinearFit, acc_id: f64) -> Result<f64> {
    beta_lambda(fit, 0.0, 0.0, acc_id)
}

/// Baseline curve shifted up by `lambda * d` in logit space.
pub fn beta_lambda(fit: &LogitLinearFit, d: f64, lambda: f64, acc_id: f64) -> Result<f64> {
    let t = fit.form.apply(acc_id)?;
    Ok(fit.form.invert(fit.linear(t) + lambda * d))
}

/// OOD accuracy above the baseline curve, in percentage points.
pub fn effective_robustness(fit: &LogitLinearFit, point: &AccuracyPoint) -> Result<f64> {
    Ok(100.0 * (point.acc_ood - predict_beta(fit, point.acc_id)?))
}

/// OOD gain of an intervention over its reference, in percentage points.
pub fn relative_robustness(acc_r_ood: f64, acc_s_ood: f64) -> f64 {
    100.0 * (acc_r_ood - acc_s_ood)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceConfig {
    /// Multiple of `d` the baseline is shifted by.
    pub lambda: f64,
    /// Required OOD margin over the reference, percentage points.
    pub gamma: f64,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            gamma: 0.0,
        }
    }
}

impl SignificanceConfig {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        let cfg = Self { lambda, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(MetricsError::InvalidConfig(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !self.gamma.is_finite() {
            return Err(MetricsError::InvalidConfig(format!(
                "gamma must be finite, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessAssessment {
    pub rho_pp: f64,
    pub tau_pp: f64,
    /// `rho > 0 && tau > 0`.
    pub improves: bool,
    /// Above the shifted curve and above the reference by more than `gamma`.
    pub significant: bool,
}

/// Scores one intervention point against the baseline and its reference.
pub fn assess_significance(
    fit: &LogitLinearFit,
    d: f64,
    point: &AccuracyPoint,
    baseline_ood: f64,
    cfg: &SignificanceConfig,
) -> Result<RobustnessAssessment> {
    cfg.validate()?;
    let rho_pp = effective_robustness(fit, point)?;
    let tau_pp = relative_robustness(point.acc_ood, baseline_ood);
    let shifted = beta_lambda(fit, d, cfg.lambda, point.acc_id)?;
    let significant =
        point.acc_ood > shifted && point.acc_ood > baseline_ood + cfg.gamma / 100.0;
    Ok(RobustnessAssessment {
        rho_pp,
        tau_pp,
        improves: rho_pp > 0.0 && tau_pp > 0.0,
        significant,
    })
}

/// Training-data regime a model was trained in.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Extreme,
    Low,
    Moderate,
    High,
    Full,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::Extreme,
        Regime::Low,
        Regime::Moderate,
        Regime::High,
        Regime::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Extreme => "extreme",
            Regime::Low => "low",
            Regime::Moderate => "moderate",
            Regime::High => "high",
            Regime::Full => "full",
        }
    }

    pub fn is_low_shot(self) -> bool {
        self != Regime::Full
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown regime tag {0:?} (expected extreme, low, moderate, high or full)")]
pub struct UnknownRegime(pub String);

impl FromStr for Regime {
    type Err = UnknownRegime;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| UnknownRegime(s.to_string()))
    }
}

/// Cross-regime rule: significant in the full-shot regime and in strictly
/// more than half of the low-shot regimes.
pub fn assess_across_regimes(verdicts: &[(Regime, bool)]) -> Result<bool> {
    let mut full = None;
    for &(regime, verdict) in verdicts {
        if regime == Regime::Full && full.replace(verdict).is_some() {
            return Err(MetricsError::DuplicateFullShot);
        }
    }
    let full = full.ok_or(MetricsError::MissingFullShot)?;
    let low: Vec<bool> = verdicts
        .iter()
        .filter(|(r, _)| r.is_low_shot())
        .map(|&(_, v)| v)
        .collect();
    if low.is_empty() {
        return Err(MetricsError::NoLowShot);
    }
    let passed = low.iter().filter(|&&v| v).count();
    Ok(full && 2 * passed > low.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const IMAGENET: (f64, f64, f64) = (0.825, -1.609, 0.136);
    const IWILDCAM: (f64, f64, f64) = (0.850, -0.496, 0.128);
    const CAMELYON: (f64, f64, f64) = (0.325, 0.665, 0.268);

    fn fit_of(p: (f64, f64, f64)) -> LogitLinearFit {
        LogitLinearFit::from_params(p.0, p.1)
    }

    fn pt(id: f64, ood: f64) -> AccuracyPoint {
        AccuracyPoint::new(id, ood).unwrap()
    }

    #[test]
    fn logit_examples() {
        assert_eq!(logit(0.5).unwrap(), 0.0);
        // Reference values from a 30-digit evaluation.
        assert_abs_diff_eq!(logit(0.6793).unwrap(), 0.750_556_749_498_147, epsilon = 1e-12);
        assert_abs_diff_eq!(logit(0.0967).unwrap(), -2.234_441_321_696_549, epsilon = 1e-12);
        assert_abs_diff_eq!(logit(0.3).unwrap(), -logit(0.7).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn logit_rejects_boundaries() {
        for x in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(logit(x), Err(MetricsError::Domain(_))), "{x}");
        }
    }

    #[test]
    fn inv_logit_examples() {
        assert_eq!(inv_logit(0.0), 0.5);
        assert_abs_diff_eq!(inv_logit(-0.9898), 0.270_951_583_205_378, epsilon = 1e-12);
        assert_abs_diff_eq!(inv_logit(logit(0.31).unwrap()), 0.31, epsilon = 1e-12);
        assert_eq!(inv_logit(-1000.0), 0.0);
        assert_eq!(inv_logit(1000.0), 1.0);
    }

    #[test]
    fn neg_log_complement_roundtrip() {
        let f = LogitForm::NegLogComplement;
        for x in [0.01, 0.3, 0.5, 0.99] {
            let y = f.apply(x).unwrap();
            assert_abs_diff_eq!(y, (1.0 / (1.0 - x)).ln(), epsilon = 1e-12);
            assert_abs_diff_eq!(f.invert(y), x, epsilon = 1e-12);
        }
    }

    #[test]
    fn clamps_endpoints() {
        let p = AccuracyPoint::new(0.0, 1.0).unwrap();
        assert_eq!(p.acc_id, ACCURACY_EPS);
        assert_eq!(p.acc_ood, 1.0 - ACCURACY_EPS);
        assert!(AccuracyPoint::new(1.2, 0.5).is_err());
        assert!(AccuracyPoint::from_percent(101.0, 50.0).is_err());
    }

    #[test]
    fn identity_cloud_fits_identity() {
        let pts: Vec<_> = [0.2, 0.4, 0.55, 0.9].iter().map(|&x| pt(x, x)).collect();
        let (fit, stats) = fit_beta(&pts).unwrap();
        assert_eq!(fit.w, 1.0);
        assert_eq!(fit.b, 0.0);
        assert_eq!(fit.n, 4);
        assert_eq!(stats.d, 0.0);
        assert_eq!(stats.r2, 1.0);
        assert_eq!(stats.mae_pp, 0.0);
        assert_eq!(stats.residuals.len(), 4);
    }

    #[test]
    fn recovers_forward_generated_imagenet_curve() {
        let (w, b) = (0.825, -1.609);
        let pts: Vec<_> = (1..=10)
            .map(|k| {
                let x = 0.05 + 0.09 * k as f64;
                pt(x, inv_logit(w * logit(x).unwrap() + b))
            })
            .collect();
        let (fit, stats) = fit_beta(&pts).unwrap();
        assert_abs_diff_eq!(fit.w, w, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.b, b, epsilon = 1e-9);
        assert!(stats.d < 1e-9);
    }

    #[test]
    fn residual_deviation_uses_n_minus_two() {
        // Hand-built: logit-space points (−1,−1), (0,0.5), (1,0), (2,1.5).
        let raw = [(-1.0, -1.0), (0.0, 0.5), (1.0, 0.0), (2.0, 1.5)];
        let pts: Vec<_> = raw.iter().map(|&(x, y)| pt(inv_logit(x), inv_logit(y))).collect();
        let (fit, stats) = fit_beta(&pts).unwrap();
        // x̄ = 0.5, ȳ = 0.25, Sxx = 5, Sxy = 3.5
        assert_abs_diff_eq!(fit.w, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.b, -0.1, epsilon = 1e-12);
        let ss: f64 = stats.residuals.iter().map(|r| r * r).sum();
        assert_abs_diff_eq!(stats.d, (ss / 2.0).sqrt(), epsilon = 1e-15);
        // residuals: −0.2, 0.6, −0.6, 0.2 → SS = 0.8, SStot = 3.25
        assert_abs_diff_eq!(ss, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.r2, 1.0 - 0.8 / 3.25, epsilon = 1e-12);
    }

    #[test]
    fn fit_errors() {
        let two = [pt(0.2, 0.1), pt(0.4, 0.3)];
        assert_eq!(fit_beta(&two).unwrap_err(), MetricsError::TooFewPoints(2));
        let same = [pt(0.4, 0.1), pt(0.4, 0.3), pt(0.4, 0.2)];
        assert_eq!(fit_beta(&same).unwrap_err(), MetricsError::Degenerate);
    }

    #[test]
    fn predict_beta_examples() {
        assert_abs_diff_eq!(
            predict_beta(&fit_of(IMAGENET), 0.6793).unwrap(),
            0.2709,
            epsilon = 1e-4
        );
        assert_abs_diff_eq!(
            predict_beta(&fit_of(CAMELYON), 0.5048).unwrap(),
            0.6618,
            epsilon = 1e-4
        );
        let id = LogitLinearFit::from_params(1.0, 0.0);
        for x in [0.01, 0.37, 0.5, 0.93] {
            assert_abs_diff_eq!(predict_beta(&id, x).unwrap(), x, epsilon = 1e-15);
        }
    }

    #[test]
    fn effective_robustness_examples() {
        let rho = effective_robustness(&fit_of(IMAGENET), &pt(0.6793, 0.5737)).unwrap();
        assert_abs_diff_eq!(rho, 30.28, epsilon = 0.05);
        let rho = effective_robustness(&fit_of(IWILDCAM), &pt(0.0967, 0.1682)).unwrap();
        assert_abs_diff_eq!(rho, 8.46, epsilon = 0.05);
        let fit = fit_of(CAMELYON);
        let on = pt(0.42, predict_beta(&fit, 0.42).unwrap());
        assert_abs_diff_eq!(effective_robustness(&fit, &on).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn relative_robustness_examples() {
        assert_abs_diff_eq!(relative_robustness(0.5737, 0.4657), 10.80, epsilon = 1e-9);
        assert_abs_diff_eq!(relative_robustness(0.5155, 0.8009), -28.54, epsilon = 1e-9);
        assert_eq!(relative_robustness(0.3, 0.3), 0.0);
    }

    #[test]
    fn beta_lambda_examples() {
        let fit = fit_of(IMAGENET);
        for x in [0.1, 0.6793] {
            assert_eq!(
                beta_lambda(&fit, 0.136, 0.0, x).unwrap(),
                predict_beta(&fit, x).unwrap()
            );
        }
        assert_abs_diff_eq!(
            beta_lambda(&fit, IMAGENET.2, 1.0, 0.6793).unwrap(),
            0.298_638_280_595_810,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            beta_lambda(&fit_of(IWILDCAM), IWILDCAM.2, 1.0, 0.5318).unwrap(),
            0.435_429_131_246_356,
            epsilon = 1e-12
        );
    }

    #[test]
    fn significance_examples() {
        let cfg = SignificanceConfig::default();
        let a = assess_significance(&fit_of(IMAGENET), IMAGENET.2, &pt(0.6793, 0.5737), 0.4657, &cfg)
            .unwrap();
        assert!(a.significant && a.improves);

        let a = assess_significance(&fit_of(CAMELYON), CAMELYON.2, &pt(0.5048, 0.5155), 0.8009, &cfg)
            .unwrap();
        assert!(!a.significant && !a.improves);
        assert!(a.tau_pp < 0.0);

        let a = assess_significance(&fit_of(IWILDCAM), IWILDCAM.2, &pt(0.5318, 0.4492), 0.3998, &cfg)
            .unwrap();
        assert!(a.significant);
        assert_abs_diff_eq!(a.tau_pp, 4.94, epsilon = 1e-9);
    }

    #[test]
    fn gamma_margin_is_in_percentage_points() {
        let fit = fit_of(IMAGENET);
        let p = pt(0.6793, 0.5737);
        let tight = SignificanceConfig::new(1.0, 10.79).unwrap();
        assert!(assess_significance(&fit, 0.136, &p, 0.4657, &tight).unwrap().significant);
        let strict = SignificanceConfig::new(1.0, 10.81).unwrap();
        assert!(!assess_significance(&fit, 0.136, &p, 0.4657, &strict).unwrap().significant);
        assert!(SignificanceConfig::new(-0.5, 0.0).is_err());
    }

    #[test]
    fn across_regimes_rule() {
        use Regime::*;
        assert!(assess_across_regimes(&[(Full, true), (Extreme, true), (Moderate, true), (High, false)]).unwrap());
        assert!(!assess_across_regimes(&[(Full, false), (Extreme, true), (Moderate, true), (High, true)]).unwrap());
        assert!(!assess_across_regimes(&[(Full, true), (Extreme, true), (Moderate, false)]).unwrap());
        assert_eq!(
            assess_across_regimes(&[(Extreme, true)]).unwrap_err(),
            MetricsError::MissingFullShot
        );
        assert_eq!(
            assess_across_regimes(&[(Full, true), (Full, true), (Low, true)]).unwrap_err(),
            MetricsError::DuplicateFullShot
        );
        assert_eq!(
            assess_across_regimes(&[(Full, true)]).unwrap_err(),
            MetricsError::NoLowShot
        );
    }

    #[test]
    fn two_low_shot_regimes_need_both() {
        // Enumerate every verdict combination for full + two low-shot regimes.
        for mask in 0u8..8 {
            let full = mask & 1 == 1;
            let a = mask & 2 == 2;
            let b = mask & 4 == 4;
            let got = assess_across_regimes(&[(Regime::Full, full), (Regime::Extreme, a), (Regime::High, b)])
                .unwrap();
            assert_eq!(got, full && a && b, "mask {mask}");
        }
    }

    #[test]
    fn regime_parses() {
        assert_eq!("moderate".parse::<Regime>().unwrap(), Regime::Moderate);
        assert!("medium".parse::<Regime>().is_err());
    }
}
