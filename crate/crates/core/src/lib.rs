//! Building blocks for evaluating robustness to distribution shift in low-shot
//! regimes.
//!
//! - [`metrics`]: logit-space baseline fits, effective/relative robustness and
//!   the residual-based significance rule.
//! - [`classifiers`]: logistic-regression, mean-centroid and Baseline++ heads
//!   on frozen embeddings.
//! - [`ensemble`]: weight interpolation, uniform/greedy soups and soup config
//!   sampling.
//! - [`curate`]: class-balanced low-shot subset selection and verification.
//! - [`blob`]: the binary container shared by classifier heads and parameter
//!   sets.

pub mod blob;
pub mod classifiers;
pub mod curate;
pub mod ensemble;
pub mod metrics;

pub use blob::{Blob, BlobError, BlobHeader};
pub use classifiers::{
    evaluate_accuracy, predict, train_baselinepp, train_logistic_regression, train_mean_centroid,
    AccuracyMode, ClassifierError, ClassifierKind, ClassifierModel, EmbeddingMatrix, LabelVector,
    Preprocessing, TrainConfig, TrainedClassifier,
};
pub use curate::{curate, verify_subset, CurateError, Manifest, Scheme, SubsetSpec, VerificationReport};
pub use ensemble::{
    greedy_soup, interpolate, sample_soup_config, uniform_soup, EnsembleError, GreedySoup,
    ParamSet, SoupCandidate, SoupConfig, SoupConfigRanges,
};
pub use metrics::{
    assess_across_regimes, assess_significance, beta_lambda, effective_robustness, fit_beta,
    inv_logit, logit, predict_beta, relative_robustness, AccuracyPoint, LogitForm, LogitLinearFit,
    MetricsError, Regime, ResidualStats, RobustnessAssessment, SignificanceConfig,
};
