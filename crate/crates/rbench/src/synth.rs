//! Seeded synthetic embedding datasets with an in-domain split and shifted
//! OOD splits, for smoke-testing the pipeline end to end.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rbench_core::classifiers::EmbeddingMatrix;
use rbench_core::curate::Manifest;
use rbench_core::metrics::Regime;

use crate::embedding::{write_embedding_file, Dtype, EmbeddingError};
use crate::manifest_io::{write_manifest, ManifestError};
use crate::profile::{DatasetProfile, MetricMode};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub dims: usize,
    pub train_per_class: usize,
    pub eval_per_class: usize,
    /// Spread of the class means.
    pub separation: f64,
    /// Within-class noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            dims: 8,
            train_per_class: 40,
            eval_per_class: 25,
            separation: 1.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

/// How an OOD split departs from the training distribution.
#[derive(Debug, Clone, Copy)]
struct Shift {
    name: &'static str,
    /// Fraction of the way each class mean moves toward the global mean.
    contraction: f64,
    /// Extra noise multiplier.
    noise_scale: f64,
    /// Constant offset on every coordinate.
    offset: f64,
}

const SHIFTS: [Shift; 2] = [
    Shift {
        name: "shift-a",
        contraction: 0.35,
        noise_scale: 1.3,
        offset: 0.4,
    },
    Shift {
        name: "shift-b",
        contraction: 0.55,
        noise_scale: 1.6,
        offset: -0.3,
    },
];

pub const ID_SPLIT: &str = "val";

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn sample_split(
    rng: &mut ChaCha8Rng,
    means: &[Vec<f64>],
    per_class: usize,
    noise: f64,
    prefix: &str,
) -> (EmbeddingMatrix, Manifest) {
    let dims = means[0].len();
    let normal = Normal::new(0.0, noise).expect("noise is positive");
    let mut data = Vec::with_capacity(means.len() * per_class * dims);
    let mut items = Vec::new();
    // Interleave classes so files are not grouped by label.
    for i in 0..per_class {
        for (c, mean) in means.iter().enumerate() {
            data.extend(mean.iter().map(|m| m + normal.sample(rng)));
            items.push((format!("{prefix}-{c}-{i:04}"), c));
        }
    }
    (
        EmbeddingMatrix::new(items.len(), dims, data).expect("finite samples"),
        Manifest::new(items, means.len()).expect("unique ids"),
    )
}

/// Dataset profile matching the generated files.
pub fn profile() -> DatasetProfile {
    DatasetProfile {
        name: "synthetic".into(),
        metric_mode: MetricMode::Top1,
        ood_shifts: SHIFTS.iter().map(|s| s.name.to_string()).collect(),
        regimes: vec![Regime::Extreme, Regime::Moderate, Regime::High, Regime::Full],
    }
}

/// Writes `{split}.emb` + `{split}.tsv` for `train`, `val` and each OOD
/// shift, plus `profile.json`.
pub fn generate(dir: &Path, cfg: &SynthConfig) -> Result<(), SynthError> {
    fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| (0..cfg.dims).map(|_| rng.gen_range(-cfg.separation..cfg.separation)).collect())
        .collect();
    let center: Vec<f64> = (0..cfg.dims)
        .map(|k| means.iter().map(|m| m[k]).sum::<f64>() / cfg.classes as f64)
        .collect();

    let write = |name: &str, x: &EmbeddingMatrix, m: &Manifest| -> Result<(), SynthError> {
        write_embedding_file(&dir.join(format!("{name}.emb")), x, Dtype::F32)?;
        write_manifest(&dir.join(format!("{name}.tsv")), m)?;
        Ok(())
    };
    let (x, m) = sample_split(&mut rng, &means, cfg.train_per_class, cfg.noise, "train");
    write("train", &x, &m)?;
    let (x, m) = sample_split(&mut rng, &means, cfg.eval_per_class, cfg.noise, ID_SPLIT);
    write(ID_SPLIT, &x, &m)?;
    for shift in SHIFTS {
        let shifted: Vec<Vec<f64>> = means
            .iter()
            .map(|mu| {
                mu.iter()
                    .zip(&center)
                    .map(|(m, c)| m + shift.contraction * (c - m) + shift.offset)
                    .collect()
            })
            .collect();
        let (x, m) = sample_split(
            &mut rng,
            &shifted,
            cfg.eval_per_class,
            cfg.noise * shift.noise_scale,
            shift.name,
        );
        write(shift.name, &x, &m)?;
    }
    let mut json = serde_json::to_string_pretty(&profile()).expect("profile serializes");
    json.push('\n');
    fs::write(dir.join("profile.json"), json)?;
    Ok(())
}
