//! Harness around `rbench-core`: file formats, dataset profiles, reports and
//! plots used by the `rbench` command-line tool.

pub mod embedding;
pub mod manifest_io;
pub mod plot;
pub mod profile;
pub mod records;
pub mod report;
pub mod synth;

use std::path::Path;

use rbench_core::classifiers::{EmbeddingMatrix, LabelVector};

/// Loads `{name}.emb` with its labels from `{name}.tsv` in `dir`.
pub fn load_split(dir: &Path, name: &str) -> anyhow::Result<(EmbeddingMatrix, LabelVector)> {
    use anyhow::Context;
    let emb = dir.join(format!("{name}.emb"));
    let tsv = dir.join(format!("{name}.tsv"));
    let x = embedding::load_embedding_file(&emb).with_context(|| format!("loading {}", emb.display()))?;
    let m = manifest_io::load_manifest(&tsv, None).with_context(|| format!("loading {}", tsv.display()))?;
    let y = manifest_io::labels_for(&m, &x).with_context(|| format!("pairing {} with {}", tsv.display(), emb.display()))?;
    Ok((x, y))
}

/// Accuracy of `model` on `(x, y)`, with labels re-read against the model's
/// class count so splits missing a class still score.
pub fn score(
    model: &rbench_core::classifiers::ClassifierModel,
    x: &EmbeddingMatrix,
    y: &LabelVector,
    mode: rbench_core::classifiers::AccuracyMode,
) -> anyhow::Result<f64> {
    let truth = LabelVector::new(y.labels().to_vec(), model.num_classes)?;
    let pred = rbench_core::classifiers::predict(model, x)?;
    Ok(rbench_core::classifiers::evaluate_accuracy(&truth, &pred, mode)?)
}
