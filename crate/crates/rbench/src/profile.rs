//! Dataset profiles: which OOD shifts to average, which regimes exist and
//! which accuracy metric the dataset is scored with.

use std::fs;
use std::path::Path;

use rbench_core::classifiers::AccuracyMode;
use rbench_core::metrics::Regime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("unknown dataset profile {0:?} (built-ins: imagenet, iwildcam, camelyon; or pass a JSON file)")]
    Unknown(String),
    #[error("profile {0:?} lists no OOD shifts")]
    NoShifts(String),
    #[error("profile {0:?} lists no regimes")]
    NoRegimes(String),
    #[error("failed to read profile: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed profile JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricMode {
    Top1,
    PerClassAverage,
}

impl From<MetricMode> for AccuracyMode {
    fn from(m: MetricMode) -> Self {
        match m {
            MetricMode::Top1 => AccuracyMode::Top1,
            MetricMode::PerClassAverage => AccuracyMode::PerClassAverage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub name: String,
    pub metric_mode: MetricMode,
    pub ood_shifts: Vec<String>,
    pub regimes: Vec<Regime>,
}

const LOW_SHOT_TIERS: [Regime; 4] = [Regime::Extreme, Regime::Moderate, Regime::High, Regime::Full];

impl DatasetProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.ood_shifts.is_empty() {
            return Err(ProfileError::NoShifts(self.name.clone()));
        }
        if self.regimes.is_empty() {
            return Err(ProfileError::NoRegimes(self.name.clone()));
        }
        Ok(())
    }

    pub fn builtin(name: &str) -> Option<Self> {
        let shifts: &[&str] = match name {
            "imagenet" => &["imagenet-v2", "imagenet-r", "imagenet-sketch", "objectnet", "imagenet-a"],
            "iwildcam" | "camelyon" => &["test-ood"],
            _ => return None,
        };
        Some(Self {
            name: name.to_string(),
            metric_mode: if name == "imagenet" {
                MetricMode::Top1
            } else {
                MetricMode::PerClassAverage
            },
            ood_shifts: shifts.iter().map(|s| s.to_string()).collect(),
            regimes: LOW_SHOT_TIERS.to_vec(),
        })
    }

    /// A built-in name, or a path to a JSON profile.
    pub fn resolve(spec: &str) -> Result<Self, ProfileError> {
        if let Some(p) = Self::builtin(spec) {
            return Ok(p);
        }
        let path = Path::new(spec);
        if !path.exists() {
            return Err(ProfileError::Unknown(spec.to_string()));
        }
        let profile: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        profile.validate()?;
        Ok(profile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins() {
        let inet = DatasetProfile::builtin("imagenet").unwrap();
        assert_eq!(inet.ood_shifts.len(), 5);
        assert_eq!(inet.metric_mode, MetricMode::Top1);
        let cam = DatasetProfile::builtin("camelyon").unwrap();
        assert_eq!(cam.metric_mode, MetricMode::PerClassAverage);
        assert!(DatasetProfile::builtin("cifar").is_none());
        assert!(matches!(
            DatasetProfile::resolve("cifar").unwrap_err(),
            ProfileError::Unknown(_)
        ));
    }

    #[test]
    fn json_profile_requires_shifts() {
        let dir = std::env::temp_dir().join(format!("rbench-profile-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("p.json");
        fs::write(
            &path,
            r#"{"name":"x","metric_mode":"top1","ood_shifts":[],"regimes":["full"]}"#,
        )
        .unwrap();
        let err = DatasetProfile::resolve(path.to_str().unwrap()).unwrap_err();
        assert!(matches!(err, ProfileError::NoShifts(_)));
        fs::write(
            &path,
            r#"{"name":"x","metric_mode":"per-class-average","ood_shifts":["a"],"regimes":["low","full"]}"#,
        )
        .unwrap();
        let p = DatasetProfile::resolve(path.to_str().unwrap()).unwrap();
        assert_eq!(p.regimes, vec![Regime::Low, Regime::Full]);
        fs::remove_dir_all(&dir).unwrap();
    }
}
