//! Weight-space ensembling: linear interpolation between two checkpoints,
//! uniform and greedy soups, and random sampling of soup training configs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pool size used for greedy soups unless configured otherwise.
pub const DEFAULT_SOUP_POOL: usize = 9;
/// Default mixing coefficient for interpolation.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("incompatible parameter sets: {}", .0.join("; "))]
    Incompatible(Vec<String>),
    #[error("no candidates supplied")]
    Empty,
    #[error("mixing coefficient must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("non-finite value in parameter {0:?}")]
    NonFinite(String),
    #[error("held-out accuracy {1} of candidate {0:?} is outside [0, 1]")]
    InvalidAccuracy(String, f64),
}

pub type Result<T, E = EnsembleError> = std::result::Result<T, E>;

/// Named flat parameter arrays, ordered by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    entries: BTreeMap<String, Vec<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EnsembleError::NonFinite(name));
        }
        self.entries.insert(name, values);
        Ok(())
    }

    pub fn with(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        self.insert(name, values)?;
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.entries.get(name).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lists every name/length disagreement with `other`.
    pub fn mismatches(&self, other: &ParamSet) -> Vec<String> {
        let mut out = Vec::new();
        for (name, values) in &self.entries {
            match other.entries.get(name) {
                None => out.push(format!("{name:?} missing from second set")),
                Some(o) if o.len() != values.len() => out.push(format!(
                    "{name:?} has length {} vs {}",
                    values.len(),
                    o.len()
                )),
                _ => {}
            }
        }
        for name in other.entries.keys() {
            if !self.entries.contains_key(name) {
                out.push(format!("{name:?} missing from first set"));
            }
        }
        out
    }

    pub fn check_compatible(&self, other: &ParamSet) -> Result<()> {
        let m = self.mismatches(other);
        if m.is_empty() {
            Ok(())
        } else {
            Err(EnsembleError::Incompatible(m))
        }
    }

    fn zip_map(&self, other: &ParamSet, f: impl Fn(f64, f64) -> f64) -> ParamSet {
        let entries = self
            .entries
            .iter()
            .map(|(k, a)| {
                let b = &other.entries[k];
                (k.clone(), a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
            })
            .collect();
        ParamSet { entries }
    }
}

/// `(1 - alpha) * theta0 + alpha * theta1`, exact at the endpoints.
pub fn interpolate(theta0: &ParamSet, theta1: &ParamSet, alpha: f64) -> Result<ParamSet> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(EnsembleError::InvalidAlpha(alpha));
    }
    theta0.check_compatible(theta1)?;
    if alpha == 0.0 {
        return Ok(theta0.clone());
    }
    if alpha == 1.0 {
        return Ok(theta1.clone());
    }
    Ok(theta0.zip_map(theta1, |a, b| (1.0 - alpha) * a + alpha * b))
}

/// Elementwise mean, summed in input order.
pub fn uniform_soup<'a, I>(candidates: I) -> Result<ParamSet>
where
    I: IntoIterator<Item = &'a ParamSet>,
{
    let mut iter = candidates.into_iter();
    let first = iter.next().ok_or(EnsembleError::Empty)?;
    let mut sum = first.clone();
    let mut count = 1usize;
    for p in iter {
        first.check_compatible(p)?;
        sum = sum.zip_map(p, |a, b| a + b);
        count += 1;
    }
    let n = count as f64;
    for values in sum.entries.values_mut() {
        values.iter_mut().for_each(|v| *v /= n);
    }
    Ok(sum)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoupCandidate {
    pub params: ParamSet,
    /// Held-out in-domain accuracy used to order the candidates.
    pub held_out_id_acc: f64,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedySoup {
    pub params: ParamSet,
    /// Member tags in the order they were admitted.
    pub members: Vec<String>,
    /// `eval_fn` on the final soup.
    pub score: f64,
}

/// Greedy soup: visit candidates by descending held-out accuracy (stable on
/// ties) and keep each one only if the uniform average of the current members
/// plus the candidate strictly raises `eval_fn`.
///
/// `eval_fn` is called sequentially, once on the first candidate and once per
/// remaining candidate.
pub fn greedy_soup<F>(candidates: &[SoupCandidate], mut eval_fn: F) -> Result<GreedySoup>
where
    F: FnMut(&ParamSet) -> f64,
{
    if candidates.is_empty() {
        return Err(EnsembleError::Empty);
    }
    for c in candidates {
        if !(0.0..=1.0).contains(&c.held_out_id_acc) {
            return Err(EnsembleError::InvalidAccuracy(c.tag.clone(), c.held_out_id_acc));
        }
        candidates[0].params.check_compatible(&c.params)?;
    }
    let mut order: Vec<&SoupCandidate> = candidates.iter().collect();
    order.sort_by(|a, b| b.held_out_id_acc.total_cmp(&a.held_out_id_acc));

    let mut members = vec![order[0]];
    let mut soup = order[0].params.clone();
    let mut best = eval_fn(&soup);
    for cand in &order[1..] {
        let trial = uniform_soup(members.iter().map(|m| &m.params).chain([&cand.params]))?;
        let score = eval_fn(&trial);
        if score > best {
            members.push(cand);
            soup = trial;
            best = score;
        }
    }
    Ok(GreedySoup {
        params: soup,
        members: members.iter().map(|m| m.tag.clone()).collect(),
        score: best,
    })
}

/// Value ranges for randomly configured soup ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoupConfigRanges {
    pub epochs: (u32, u32),
    pub learning_rate: (f64, f64),
    pub weight_decay: (f64, f64),
    pub label_smoothing: (f64, f64),
    pub mixup: (f64, f64),
    pub randaug_m: (u32, u32),
    pub randaug_n: (u32, u32),
}

impl Default for SoupConfigRanges {
    fn default() -> Self {
        Self {
            epochs: (4, 16),
            learning_rate: (1e-6, 1e-4),
            weight_decay: (1e-4, 10f64.powf(-0.2)),
            label_smoothing: (0.0, 0.25),
            mixup: (0.0, 0.9),
            randaug_m: (0, 20),
            randaug_n: (0, 2),
        }
    }
}

/// One sampled ingredient configuration. Augmentation values are recorded
/// only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoupConfig {
    pub seed: u64,
    pub epochs: u32,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub mixup: f64,
    pub randaug_m: u32,
    pub randaug_n: u32,
}

/// Integers and smoothing/mixup uniform, learning rate and weight decay
/// log-uniform. Bounds are inclusive.
pub fn sample_soup_config(ranges: &SoupConfigRanges, seed: u64) -> SoupConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        let v = rng.gen_range(lo.ln()..=hi.ln()).exp();
        v.clamp(lo, hi)
    };
    SoupConfig {
        seed,
        epochs: rng.gen_range(ranges.epochs.0..=ranges.epochs.1),
        learning_rate: log_uniform(&mut rng, ranges.learning_rate),
        weight_decay: log_uniform(&mut rng, ranges.weight_decay),
        label_smoothing: rng.gen_range(ranges.label_smoothing.0..=ranges.label_smoothing.1),
        mixup: rng.gen_range(ranges.mixup.0..=ranges.mixup.1),
        randaug_m: rng.gen_range(ranges.randaug_m.0..=ranges.randaug_m.1),
        randaug_n: rng.gen_range(ranges.randaug_n.0..=ranges.randaug_n.1),
    }
}
