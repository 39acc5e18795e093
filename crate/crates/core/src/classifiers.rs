//! Low-shot classifiers trained on frozen embeddings.
//!
//! Three heads are supported:
//!
//! - multinomial logistic regression (affine logits, L2 weight penalty),
//! - mean-centroid (nearest class mean under L2 distance),
//! - Baseline++ (scaled cosine similarity between class directions and the
//!   L2-normalised embedding).
//!
//! Training is single-threaded and reproducible bit-for-bit given the data,
//! the config and the seed. Argmax/argmin ties always resolve to the lowest
//! class index.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("embedding matrix must have at least one row and one column (got {rows}x{dims})")]
    EmptyMatrix { rows: usize, dims: usize },
    #[error("embedding payload has {got} values, expected {rows}x{dims}")]
    ShapeMismatch { rows: usize, dims: usize, got: usize },
    #[error("non-finite embedding value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("label {label} at position {index} is out of range for {num_classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("{rows} embedding rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("model expects {expected}-dimensional embeddings, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("class {0} has no training samples")]
    EmptyClass(usize),
    #[error("embedding row {0} has zero norm; cosine similarity is undefined")]
    ZeroNorm(usize),
    #[error("label vectors use different class counts ({0} vs {1})")]
    ClassCountMismatch(usize, usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = ClassifierError> = std::result::Result<T, E>;

/// Dense row-major matrix of frozen features.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dims: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dims: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || dims == 0 {
            return Err(ClassifierError::EmptyMatrix { rows, dims });
        }
        if data.len() != rows * dims {
            return Err(ClassifierError::ShapeMismatch {
                rows,
                dims,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFinite {
                row: pos / dims,
                col: pos % dims,
            });
        }
        Ok(Self { rows, dims, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dims = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dims) {
            return Err(ClassifierError::DimensionMismatch {
                expected: dims,
                got: bad.len(),
            });
        }
        Self::new(rows.len(), dims, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dims);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.dims, data)
    }

    fn map_rows(&self, f: impl Fn(&mut [f64])) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.dims) {
            f(row);
        }
        Self {
            rows: self.rows,
            dims: self.dims,
            data,
        }
    }
}

/// Class indices paired with the number of classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(ClassifierError::LabelOutOfRange {
                index,
                label,
                num_classes,
            });
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    fn require_all_classes(&self) -> Result<()> {
        match self.class_counts().iter().position(|&c| c == 0) {
            Some(c) => Err(ClassifierError::EmptyClass(c)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Logistic,
    Centroid,
    #[serde(rename = "baselinepp")]
    BaselinePp,
}

impl ClassifierKind {
    pub fn code(self) -> u32 {
        match self {
            ClassifierKind::Logistic => 0,
            ClassifierKind::Centroid => 1,
            ClassifierKind::BaselinePp => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(ClassifierKind::Logistic),
            1 => Some(ClassifierKind::Centroid),
            2 => Some(ClassifierKind::BaselinePp),
            _ => None,
        }
    }
}

/// Per-sample input transforms applied before the head, layer norm first.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub layer_norm: bool,
    pub l2_normalize: bool,
}

impl Preprocessing {
    pub fn apply(&self, x: &EmbeddingMatrix) -> EmbeddingMatrix {
        if !self.layer_norm && !self.l2_normalize {
            return x.clone();
        }
        let (layer_norm, l2) = (self.layer_norm, self.l2_normalize);
        x.map_rows(|row| {
            if layer_norm {
                standardize(row);
            }
            if l2 {
                let norm = l2_norm(row);
                if norm > 0.0 {
                    row.iter_mut().for_each(|v| *v /= norm);
                }
            }
        })
    }
}

fn standardize(row: &mut [f64]) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in row.iter_mut() {
        *v -= mean;
        if std > 0.0 {
            *v /= std;
        }
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Logit scale for Baseline++ cosine logits.
    pub cosine_scale: f64,
    pub preprocessing: Preprocessing,
}

impl TrainConfig {
    /// Logistic-regression head: 300 epochs, batch 16, weight decay 0.0025.
    pub fn logistic() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.01,
            batch_size: 16,
            weight_decay: 0.0025,
            momentum: 0.0,
            seed: 0,
            cosine_scale: 10.0,
            preprocessing: Preprocessing::default(),
        }
    }

    /// Baseline++ head: 100 epochs, lr 0.01, batch 16, weight decay 0.001.
    pub fn baselinepp() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.01,
            batch_size: 16,
            weight_decay: 0.001,
            momentum: 0.9,
            seed: 0,
            cosine_scale: 10.0,
            preprocessing: Preprocessing::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ClassifierError::InvalidConfig(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.cosine_scale.is_finite() && self.cosine_scale > 0.0) {
            return bad(format!("cosine_scale must be > 0, got {}", self.cosine_scale));
        }
        Ok(())
    }
}

/// A trained head. `weights` is `num_classes x dims`, row-major; `biases` is
/// only non-zero for logistic regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub kind: ClassifierKind,
    pub num_classes: usize,
    pub dims: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub cosine_scale: f64,
    pub preprocessing: Preprocessing,
}

impl ClassifierModel {
    pub fn weight_row(&self, c: usize) -> &[f64] {
        &self.weights[c * self.dims..(c + 1) * self.dims]
    }

    /// Raw per-class scores for already-preprocessed input rows. For the
    /// centroid head the score is the negated squared distance.
    fn scores(&self, z: &[f64], out: &mut [f64]) {
        match self.kind {
            ClassifierKind::Logistic => {
                for (c, s) in out.iter_mut().enumerate() {
                    *s = dot(self.weight_row(c), z) + self.biases[c];
                }
            }
            ClassifierKind::Centroid => {
                for (c, s) in out.iter_mut().enumerate() {
                    *s = -self
                        .weight_row(c)
                        .iter()
                        .zip(z)
                        .map(|(m, v)| (m - v).powi(2))
                        .sum::<f64>();
                }
            }
            ClassifierKind::BaselinePp => {
                let zn = l2_norm(z);
                for (c, s) in out.iter_mut().enumerate() {
                    let w = self.weight_row(c);
                    let wn = l2_norm(w);
                    *s = if wn > 0.0 && zn > 0.0 {
                        self.cosine_scale * dot(w, z) / (wn * zn)
                    } else {
                        0.0
                    };
                }
            }
        }
    }
}

/// Output of an iterative trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub model: ClassifierModel,
    /// Full-dataset training objective after each epoch.
    pub epoch_loss: Vec<f64>,
}

fn check_pair(x: &EmbeddingMatrix, y: &LabelVector) -> Result<()> {
    if x.rows() != y.len() {
        return Err(ClassifierError::LengthMismatch {
            rows: x.rows(),
            labels: y.len(),
        });
    }
    y.require_all_classes()
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    logits.iter_mut().for_each(|v| *v /= sum);
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Parameters of a multinomial logistic head, exposed for gradient checks.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticParams {
    pub num_classes: usize,
    pub dims: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LogisticParams {
    pub fn zeros(num_classes: usize, dims: usize) -> Self {
        Self {
            num_classes,
            dims,
            weights: vec![0.0; num_classes * dims],
            biases: vec![0.0; num_classes],
        }
    }
}

/// Mean cross-entropy over `rows` plus `(weight_decay / 2) * ||W||^2`, and its
/// gradient with respect to weights and biases.
pub fn logistic_loss_and_grad(
    params: &LogisticParams,
    x: &EmbeddingMatrix,
    y: &LabelVector,
    rows: &[usize],
    weight_decay: f64,
) -> (f64, LogisticParams) {
    let (c_n, d_n) = (params.num_classes, params.dims);
    let mut grad = LogisticParams::zeros(c_n, d_n);
    let mut logits = vec![0.0; c_n];
    let mut loss = 0.0;
    let scale = 1.0 / rows.len() as f64;
    for &i in rows {
        let z = x.row(i);
        let target = y.labels()[i];
        for (c, l) in logits.iter_mut().enumerate() {
            *l = dot(&params.weights[c * d_n..(c + 1) * d_n], z) + params.biases[c];
        }
        loss += log_sum_exp(&logits) - logits[target];
        softmax_in_place(&mut logits);
        for (c, p) in logits.iter().enumerate() {
            let g = (p - if c == target { 1.0 } else { 0.0 }) * scale;
            grad.biases[c] += g;
            for (gw, zv) in grad.weights[c * d_n..(c + 1) * d_n].iter_mut().zip(z) {
                *gw += g * zv;
            }
        }
    }
    loss *= scale;
    loss += 0.5 * weight_decay * params.weights.iter().map(|w| w * w).sum::<f64>();
    for (gw, w) in grad.weights.iter_mut().zip(&params.weights) {
        *gw += weight_decay * w;
    }
    (loss, grad)
}

fn epoch_batches(rows: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Multinomial logistic regression by mini-batch gradient descent from zero
/// initialisation.
pub fn train_logistic_regression(
    x: &EmbeddingMatrix,
    y: &LabelVector,
    cfg: &TrainConfig,
) -> Result<TrainedClassifier> {
    cfg.validate()?;
    check_pair(x, y)?;
    let x = cfg.preprocessing.apply(x);
    let all: Vec<usize> = (0..x.rows()).collect();
    let mut params = LogisticParams::zeros(y.num_classes(), x.dims());
    let mut velocity = LogisticParams::zeros(y.num_classes(), x.dims());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        for batch in epoch_batches(x.rows(), cfg.batch_size, &mut rng) {
            let (_, grad) = logistic_loss_and_grad(&params, &x, y, &batch, cfg.weight_decay);
            momentum_step(
                &mut params.weights,
                &mut velocity.weights,
                &grad.weights,
                cfg,
            );
            momentum_step(&mut params.biases, &mut velocity.biases, &grad.biases, cfg);
        }
        epoch_loss.push(logistic_loss_and_grad(&params, &x, y, &all, cfg.weight_decay).0);
    }

    Ok(TrainedClassifier {
        model: ClassifierModel {
            kind: ClassifierKind::Logistic,
            num_classes: y.num_classes(),
            dims: x.dims(),
            weights: params.weights,
            biases: params.biases,
            cosine_scale: cfg.cosine_scale,
            preprocessing: cfg.preprocessing,
        },
        epoch_loss,
    })
}

fn momentum_step(param: &mut [f64], velocity: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
    for ((p, v), g) in param.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = cfg.momentum * *v + g;
        *p -= cfg.learning_rate * *v;
    }
}

/// Class means of the training embeddings.
pub fn train_mean_centroid(x: &EmbeddingMatrix, y: &LabelVector) -> Result<ClassifierModel> {
    check_pair(x, y)?;
    let (c_n, d_n) = (y.num_classes(), x.dims());
    let counts = y.class_counts();
    let mut weights = vec![0.0; c_n * d_n];
    for (i, &label) in y.labels().iter().enumerate() {
        for (acc, v) in weights[label * d_n..(label + 1) * d_n].iter_mut().zip(x.row(i)) {
            *acc += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        weights[c * d_n..(c + 1) * d_n]
            .iter_mut()
            .for_each(|v| *v /= count as f64);
    }
    Ok(ClassifierModel {
        kind: ClassifierKind::Centroid,
        num_classes: c_n,
        dims: d_n,
        weights,
        biases: vec![0.0; c_n],
        cosine_scale: 1.0,
        preprocessing: Preprocessing::default(),
    })
}

/// Mean cross-entropy of Baseline++ cosine logits and its gradient with
/// respect to the class directions (weight decay included).
pub fn baselinepp_loss_and_grad(
    directions: &[f64],
    dims: usize,
    scale: f64,
    x_unit: &EmbeddingMatrix,
    y: &LabelVector,
    rows: &[usize],
    weight_decay: f64,
) -> (f64, Vec<f64>) {
    let c_n = directions.len() / dims;
    let norms: Vec<f64> = directions.chunks(dims).map(l2_norm).collect();
    let mut grad = vec![0.0; directions.len()];
    let mut cos = vec![0.0; c_n];
    let mut probs = vec![0.0; c_n];
    let mut loss = 0.0;
    let inv_n = 1.0 / rows.len() as f64;
    for &i in rows {
        let z = x_unit.row(i);
        let target = y.labels()[i];
        for c in 0..c_n {
            let w = &directions[c * dims..(c + 1) * dims];
            cos[c] = if norms[c] > 0.0 { dot(w, z) / norms[c] } else { 0.0 };
            probs[c] = scale * cos[c];
        }
        loss += log_sum_exp(&probs) - probs[target];
        softmax_in_place(&mut probs);
        for c in 0..c_n {
            if norms[c] == 0.0 {
                continue;
            }
            let g = (probs[c] - if c == target { 1.0 } else { 0.0 }) * scale * inv_n;
            let w = &directions[c * dims..(c + 1) * dims];
            // d cos / d w = (z - cos * w / |w|) / |w| for unit z.
            for ((gw, wv), zv) in grad[c * dims..(c + 1) * dims].iter_mut().zip(w).zip(z) {
                *gw += g * (zv - cos[c] * wv / norms[c]) / norms[c];
            }
        }
    }
    loss *= inv_n;
    loss += 0.5 * weight_decay * directions.iter().map(|w| w * w).sum::<f64>();
    for (g, w) in grad.iter_mut().zip(directions) {
        *g += weight_decay * w;
    }
    (loss, grad)
}

/// Baseline++ head: class directions trained by momentum SGD on scaled cosine
/// logits against the L2-normalised embeddings.
pub fn train_baselinepp(
    x: &EmbeddingMatrix,
    y: &LabelVector,
    cfg: &TrainConfig,
) -> Result<TrainedClassifier> {
    cfg.validate()?;
    check_pair(x, y)?;
    let x = cfg.preprocessing.apply(x);
    if let Some(row) = (0..x.rows()).find(|&i| l2_norm(x.row(i)) == 0.0) {
        return Err(ClassifierError::ZeroNorm(row));
    }
    let x_unit = Preprocessing {
        layer_norm: false,
        l2_normalize: true,
    }
    .apply(&x);
    let (c_n, d_n) = (y.num_classes(), x.dims());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound = 1.0 / (d_n as f64).sqrt();
    let mut directions: Vec<f64> = (0..c_n * d_n).map(|_| rng.gen_range(-bound..bound)).collect();
    let mut velocity = vec![0.0; directions.len()];
    let all: Vec<usize> = (0..x.rows()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        for batch in epoch_batches(x.rows(), cfg.batch_size, &mut rng) {
            let (_, grad) = baselinepp_loss_and_grad(
                &directions,
                d_n,
                cfg.cosine_scale,
                &x_unit,
                y,
                &batch,
                cfg.weight_decay,
            );
            momentum_step(&mut directions, &mut velocity, &grad, cfg);
        }
        let (loss, _) = baselinepp_loss_and_grad(
            &directions,
            d_n,
            cfg.cosine_scale,
            &x_unit,
            y,
            &all,
            cfg.weight_decay,
        );
        epoch_loss.push(loss);
    }

    Ok(TrainedClassifier {
        model: ClassifierModel {
            kind: ClassifierKind::BaselinePp,
            num_classes: c_n,
            dims: d_n,
            weights: directions,
            biases: vec![0.0; c_n],
            cosine_scale: cfg.cosine_scale,
            preprocessing: cfg.preprocessing,
        },
        epoch_loss,
    })
}

/// Argmax class per row; ties go to the lowest class index.
pub fn predict(model: &ClassifierModel, x: &EmbeddingMatrix) -> Result<LabelVector> {
    if x.dims() != model.dims {
        return Err(ClassifierError::DimensionMismatch {
            expected: model.dims,
            got: x.dims(),
        });
    }
    let x = model.preprocessing.apply(x);
    let mut scores = vec![0.0; model.num_classes];
    let labels = (0..x.rows())
        .map(|i| {
            model.scores(x.row(i), &mut scores);
            argmax(&scores)
        })
        .collect();
    LabelVector::new(labels, model.num_classes)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyMode {
    Top1,
    PerClassAverage,
}

/// Fraction correct, or the unweighted mean of per-class recall over classes
/// present in `truth`.
pub fn evaluate_accuracy(
    truth: &LabelVector,
    pred: &LabelVector,
    mode: AccuracyMode,
) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(ClassifierError::LengthMismatch {
            rows: truth.len(),
            labels: pred.len(),
        });
    }
    if truth.num_classes() != pred.num_classes() {
        return Err(ClassifierError::ClassCountMismatch(
            truth.num_classes(),
            pred.num_classes(),
        ));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let pairs = truth.labels().iter().zip(pred.labels());
    match mode {
        AccuracyMode::Top1 => {
            let correct = pairs.filter(|(t, p)| t == p).count();
            Ok(correct as f64 / truth.len() as f64)
        }
        AccuracyMode::PerClassAverage => {
            let mut total = vec![0usize; truth.num_classes()];
            let mut correct = vec![0usize; truth.num_classes()];
            for (&t, &p) in pairs {
                total[t] += 1;
                if t == p {
                    correct[t] += 1;
                }
            }
            let recalls: Vec<f64> = total
                .iter()
                .zip(&correct)
                .filter(|(&n, _)| n > 0)
                .map(|(&n, &k)| k as f64 / n as f64)
                .collect();
            Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
        }
    }
}
