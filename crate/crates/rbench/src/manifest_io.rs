//! Line-delimited manifests (`item_id<TAB>class_index`) and subset sidecars.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rbench_core::classifiers::{EmbeddingMatrix, LabelVector};
use rbench_core::curate::{CurateError, Manifest, SubsetSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("line {line}: expected `item_id<TAB>class_index`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("item {0:?} from the subset is not in the labelled set")]
    UnknownItem(String),
    #[error("{items} labelled items but {rows} embedding rows")]
    RowMismatch { items: usize, rows: usize },
    #[error(transparent)]
    Curate(#[from] CurateError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed sidecar: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn parse_manifest(text: &str, num_classes: Option<usize>) -> Result<Manifest, ManifestError> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let syntax = || ManifestError::Syntax {
            line: i + 1,
            text: line.to_string(),
        };
        let (id, class) = line.split_once('\t').ok_or_else(syntax)?;
        let class: usize = class.trim().parse().map_err(|_| syntax())?;
        if id.is_empty() {
            return Err(syntax());
        }
        items.push((id.to_string(), class));
    }
    Ok(match num_classes {
        Some(c) => Manifest::new(items, c)?,
        None => Manifest::from_items(items)?,
    })
}

pub fn format_manifest(m: &Manifest) -> String {
    m.items()
        .iter()
        .map(|(id, c)| format!("{id}\t{c}\n"))
        .collect()
}

pub fn load_manifest(path: &Path, num_classes: Option<usize>) -> Result<Manifest, ManifestError> {
    parse_manifest(&fs::read_to_string(path)?, num_classes)
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<(), ManifestError> {
    fs::write(path, format_manifest(m))?;
    Ok(())
}

/// What a subset file was drawn with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSidecar {
    pub spec: SubsetSpec,
    pub num_classes: usize,
    pub class_counts: Vec<usize>,
}

/// `<subset path>.json`.
pub fn sidecar_path(subset: &Path) -> PathBuf {
    let mut s = subset.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_sidecar(subset_path: &Path, spec: &SubsetSpec, subset: &Manifest) -> Result<(), ManifestError> {
    let sidecar = SubsetSidecar {
        spec: *spec,
        num_classes: subset.num_classes(),
        class_counts: subset.class_counts(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(sidecar_path(subset_path), text)?;
    Ok(())
}

pub fn read_sidecar(subset_path: &Path) -> Result<SubsetSidecar, ManifestError> {
    Ok(serde_json::from_str(&fs::read_to_string(sidecar_path(subset_path))?)?)
}

/// Labels for the embedding rows; row `i` corresponds to manifest item `i`.
pub fn labels_for(manifest: &Manifest, x: &EmbeddingMatrix) -> Result<LabelVector, ManifestError> {
    if manifest.len() != x.rows() {
        return Err(ManifestError::RowMismatch {
            items: manifest.len(),
            rows: x.rows(),
        });
    }
    let labels = manifest.items().iter().map(|(_, c)| *c).collect();
    Ok(LabelVector::new(labels, manifest.num_classes()).expect("manifest classes are in range"))
}

/// Row indices of `subset` items within `manifest`, in subset order.
pub fn subset_rows(manifest: &Manifest, subset: &Manifest) -> Result<Vec<usize>, ManifestError> {
    let index: HashMap<&str, usize> = manifest
        .items()
        .iter()
        .enumerate()
        .map(|(i, (id, _))| (id.as_str(), i))
        .collect();
    subset
        .items()
        .iter()
        .map(|(id, _)| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| ManifestError::UnknownItem(id.clone()))
        })
        .collect()
}
