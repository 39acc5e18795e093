//! Class-balanced low-shot subset curation.
//!
//! Each class is sampled independently with a ChaCha stream keyed by
//! `(seed, class)`, so adding or removing classes never changes the selection
//! made for another class.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurateError {
    #[error("duplicate item id {0:?}")]
    DuplicateId(String),
    #[error("item {id:?} has class {class} but only {num_classes} classes exist")]
    ClassOutOfRange {
        id: String,
        class: usize,
        num_classes: usize,
    },
    #[error("class {0} has no items but the scheme requires at least one")]
    EmptyClass(usize),
    #[error("ratio must lie in (0, 1], got {0}")]
    InvalidRatio(f64),
    #[error("per-class count must be >= 1, got {0}")]
    InvalidCount(usize),
}

pub type Result<T, E = CurateError> = std::result::Result<T, E>;

/// Labelled item ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    items: Vec<(String, usize)>,
    num_classes: usize,
}

impl Manifest {
    pub fn new(items: Vec<(String, usize)>, num_classes: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(items.len());
        for (id, class) in &items {
            if *class >= num_classes {
                return Err(CurateError::ClassOutOfRange {
                    id: id.clone(),
                    class: *class,
                    num_classes,
                });
            }
            if !seen.insert(id.as_str()) {
                return Err(CurateError::DuplicateId(id.clone()));
            }
        }
        Ok(Self { items, num_classes })
    }

    /// Infers the class count as `max(class) + 1`.
    pub fn from_items(items: Vec<(String, usize)>) -> Result<Self> {
        let num_classes = items.iter().map(|(_, c)| c + 1).max().unwrap_or(0);
        Self::new(items, num_classes)
    }

    pub fn items(&self) -> &[(String, usize)] {
        &self.items
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for (_, c) in &self.items {
            counts[*c] += 1;
        }
        counts
    }

    /// Item positions grouped by class, each group in manifest order.
    fn by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_classes];
        for (i, (_, c)) in self.items.iter().enumerate() {
            groups[*c].push(i);
        }
        groups
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum Scheme {
    KPerClass { k: usize },
    Ratio { ratio: f64 },
    FixedPerClass { count: usize },
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::KPerClass { k } => write!(f, "k-per-class(k={k})"),
            Scheme::Ratio { ratio } => write!(f, "ratio({ratio})"),
            Scheme::FixedPerClass { count } => write!(f, "fixed-per-class({count})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetSpec {
    #[serde(flatten)]
    pub scheme: Scheme,
    pub min_per_class: usize,
    pub seed: u64,
}

impl SubsetSpec {
    pub fn new(scheme: Scheme, seed: u64) -> Self {
        Self {
            scheme,
            min_per_class: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.scheme {
            Scheme::Ratio { ratio } if !(ratio > 0.0 && ratio <= 1.0) => {
                Err(CurateError::InvalidRatio(ratio))
            }
            Scheme::KPerClass { k: n } | Scheme::FixedPerClass { count: n } if n == 0 => {
                Err(CurateError::InvalidCount(n))
            }
            _ => Ok(()),
        }
    }

    /// Whether every class must contribute at least one item.
    fn requires_every_class(&self) -> bool {
        match self.scheme {
            Scheme::Ratio { .. } => self.min_per_class > 0,
            _ => true,
        }
    }

    /// Items to draw from a class holding `available` items.
    pub fn target_count(&self, available: usize) -> usize {
        let want = match self.scheme {
            Scheme::KPerClass { k } => k,
            Scheme::FixedPerClass { count } => count,
            Scheme::Ratio { ratio } => {
                let rounded = (ratio * available as f64).round() as usize;
                rounded.max(self.min_per_class)
            }
        };
        want.min(available)
    }
}

/// Draws the subset described by `spec`. Output is grouped by ascending class
/// index, manifest order within a class.
pub fn curate(manifest: &Manifest, spec: &SubsetSpec) -> Result<Manifest> {
    spec.validate()?;
    let groups = manifest.by_class();
    if spec.requires_every_class() {
        if let Some(c) = groups.iter().position(Vec::is_empty) {
            return Err(CurateError::EmptyClass(c));
        }
    }
    let mut items = Vec::new();
    for (class, group) in groups.iter().enumerate() {
        let take = spec.target_count(group.len());
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(class as u64);
        let mut picked: Vec<usize> = sample(&mut rng, group.len(), take)
            .into_iter()
            .map(|j| group[j])
            .collect();
        picked.sort_unstable();
        items.extend(picked.into_iter().map(|i| manifest.items[i].clone()));
    }
    Ok(Manifest {
        items,
        num_classes: manifest.num_classes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    NotInManifest,
    ClassMismatch,
    Duplicate,
    CountMismatch,
    ClassEmpty,
    BelowMinimum,
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DiagnosticKind::NotInManifest => "not-in-manifest",
            DiagnosticKind::ClassMismatch => "class-mismatch",
            DiagnosticKind::Duplicate => "duplicate",
            DiagnosticKind::CountMismatch => "count-mismatch",
            DiagnosticKind::ClassEmpty => "class-empty",
            DiagnosticKind::BelowMinimum => "below-minimum",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub class: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub passed: bool,
    /// `(class, expected, actual)` for every class.
    pub per_class: Vec<(usize, usize, usize)>,
    pub diagnostics: Vec<Diagnostic>,
}

impl VerificationReport {
    pub fn has(&self, kind: DiagnosticKind) -> bool {
        self.diagnostics.iter().any(|d| d.kind == kind)
    }
}

/// Checks that `subset` could have come from `curate(manifest, spec)`:
/// membership, uniqueness, per-class counts and the per-class minimum.
pub fn verify_subset(manifest: &Manifest, subset: &Manifest, spec: &SubsetSpec) -> VerificationReport {
    let mut diagnostics = Vec::new();
    let lookup: HashMap<&str, usize> = manifest
        .items
        .iter()
        .map(|(id, c)| (id.as_str(), *c))
        .collect();
    let mut seen = HashSet::new();
    let mut actual: BTreeMap<usize, usize> = BTreeMap::new();

    for (id, class) in &subset.items {
        if !seen.insert(id.as_str()) {
            diagnostics.push(Diagnostic {
                kind: DiagnosticKind::Duplicate,
                class: Some(*class),
                message: format!("item {id:?} appears more than once"),
            });
            continue;
        }
        match lookup.get(id.as_str()) {
            None => diagnostics.push(Diagnostic {
                kind: DiagnosticKind::NotInManifest,
                class: Some(*class),
                message: format!("item {id:?} is not in the source manifest"),
            }),
            Some(&c) if c != *class => diagnostics.push(Diagnostic {
                kind: DiagnosticKind::ClassMismatch,
                class: Some(*class),
                message: format!("item {id:?} labelled {class} but manifest says {c}"),
            }),
            Some(_) => *actual.entry(*class).or_default() += 1,
        }
    }

    let available = manifest.class_counts();
    let mut per_class = Vec::with_capacity(available.len());
    for (class, &n) in available.iter().enumerate() {
        let expected = spec.target_count(n);
        let got = actual.get(&class).copied().unwrap_or(0);
        per_class.push((class, expected, got));
        if got != expected {
            diagnostics.push(Diagnostic {
                kind: DiagnosticKind::CountMismatch,
                class: Some(class),
                message: format!("class {class}: expected {expected} items, found {got}"),
            });
        }
        if got == 0 && spec.requires_every_class() {
            diagnostics.push(Diagnostic {
                kind: DiagnosticKind::ClassEmpty,
                class: Some(class),
                message: format!("class {class} has no items in the subset"),
            });
        } else if got < spec.min_per_class.min(n) {
            diagnostics.push(Diagnostic {
                kind: DiagnosticKind::BelowMinimum,
                class: Some(class),
                message: format!(
                    "class {class}: {got} items, minimum is {}",
                    spec.min_per_class
                ),
            });
        }
    }

    VerificationReport {
        passed: diagnostics.is_empty(),
        per_class,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(counts: &[usize]) -> Manifest {
        let items = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| (0..n).map(move |i| (format!("c{c}_{i}"), c)))
            .collect();
        Manifest::new(items, counts.len()).unwrap()
    }

    #[test]
    fn manifest_validation() {
        let dup = vec![("a".to_string(), 0), ("a".to_string(), 1)];
        assert_eq!(
            Manifest::new(dup, 2).unwrap_err(),
            CurateError::DuplicateId("a".into())
        );
        assert!(Manifest::new(vec![("a".into(), 2)], 2).is_err());
        assert_eq!(Manifest::from_items(vec![("a".into(), 4)]).unwrap().num_classes(), 5);
    }

    #[test]
    fn ratio_rounding_example() {
        let m = synthetic(&[100, 3, 50]);
        let spec = SubsetSpec::new(Scheme::Ratio { ratio: 0.10 }, 0);
        let s = curate(&m, &spec).unwrap();
        assert_eq!(s.class_counts(), vec![10, 1, 5]);
        assert_eq!(s.len(), 16);
    }

    #[test]
    fn fixed_per_class_two_classes() {
        let m = synthetic(&[2000, 1800]);
        let spec = SubsetSpec::new(Scheme::FixedPerClass { count: 1500 }, 4);
        let s = curate(&m, &spec).unwrap();
        assert_eq!(s.len(), 3000);
        assert!(verify_subset(&m, &s, &spec).passed);
    }

    #[test]
    fn one_per_class_on_thousand_classes() {
        let m = synthetic(&vec![3; 1000]);
        let spec = SubsetSpec::new(Scheme::KPerClass { k: 1 }, 9);
        let s = curate(&m, &spec).unwrap();
        assert_eq!(s.len(), 1000);
        assert!(s.class_counts().iter().all(|&c| c == 1));
    }

    #[test]
    fn k_larger_than_class_takes_all() {
        let m = synthetic(&[2, 7]);
        let s = curate(&m, &SubsetSpec::new(Scheme::KPerClass { k: 5 }, 0)).unwrap();
        assert_eq!(s.class_counts(), vec![2, 5]);
    }

    #[test]
    fn errors() {
        let m = synthetic(&[4, 0, 2]);
        assert_eq!(
            curate(&m, &SubsetSpec::new(Scheme::KPerClass { k: 1 }, 0)).unwrap_err(),
            CurateError::EmptyClass(1)
        );
        let ok = synthetic(&[4, 2]);
        for ratio in [0.0, 1.5, -0.2] {
            assert_eq!(
                curate(&ok, &SubsetSpec::new(Scheme::Ratio { ratio }, 0)).unwrap_err(),
                CurateError::InvalidRatio(ratio)
            );
        }
        assert!(curate(&ok, &SubsetSpec::new(Scheme::FixedPerClass { count: 0 }, 0)).is_err());
        let mut lenient = SubsetSpec::new(Scheme::Ratio { ratio: 0.5 }, 0);
        lenient.min_per_class = 0;
        assert_eq!(curate(&m, &lenient).unwrap().class_counts(), vec![2, 0, 1]);
    }

    #[test]
    fn seeds_change_choice_not_counts() {
        let m = synthetic(&[40, 13, 27]);
        let a = curate(&m, &SubsetSpec::new(Scheme::Ratio { ratio: 0.2 }, 1)).unwrap();
        let b = curate(&m, &SubsetSpec::new(Scheme::Ratio { ratio: 0.2 }, 2)).unwrap();
        assert_eq!(a.class_counts(), b.class_counts());
        assert_ne!(a, b);
    }

    #[test]
    fn adding_a_class_leaves_others_alone() {
        let spec = SubsetSpec::new(Scheme::KPerClass { k: 3 }, 5);
        let a = curate(&synthetic(&[20, 20]), &spec).unwrap();
        let b = curate(&synthetic(&[20, 20, 20]), &spec).unwrap();
        assert_eq!(&b.items()[..6], a.items());
    }

    #[test]
    fn verify_flags_duplicates_and_missing_classes() {
        let m = synthetic(&[5, 5]);
        let spec = SubsetSpec::new(Scheme::KPerClass { k: 1 }, 0);
        let good = curate(&m, &spec).unwrap();
        assert!(verify_subset(&m, &good, &spec).passed);

        let mut items = good.items().to_vec();
        items.push(items[0].clone());
        let dup = Manifest {
            items,
            num_classes: 2,
        };
        let report = verify_subset(&m, &dup, &spec);
        assert!(!report.passed);
        assert!(report.has(DiagnosticKind::Duplicate));

        let missing = Manifest::new(vec![good.items()[0].clone()], 2).unwrap();
        let report = verify_subset(&m, &missing, &spec);
        assert!(report.has(DiagnosticKind::ClassEmpty));

        let foreign = Manifest::new(vec![("zzz".into(), 0), good.items()[1].clone()], 2).unwrap();
        assert!(verify_subset(&m, &foreign, &spec).has(DiagnosticKind::NotInManifest));
    }
}
