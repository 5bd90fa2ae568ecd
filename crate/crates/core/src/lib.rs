//! Ensemble phrase classification on an in-process data-parallel engine.
//!
//! Five classifiers (multinomial naive Bayes, nearest neighbours, a
//! one-vs-rest linear SVM, a random forest and a small neural network
//! trained with parameter averaging) each map a phrase to a distribution
//! over classes; the ensemble is their element-wise mean.

pub mod archive;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod forest;
pub mod knn;
pub mod mlp;
pub mod model;
pub mod naive_bayes;
pub mod probs;
pub mod svm;
pub mod synth;
pub mod text;

pub use archive::ModelArchive;
pub use engine::{Engine, PartitionedDataset};
pub use ensemble::{ensemble_average, predict_ensemble, score_table, EnsembleModel, ScoreTable};
pub use error::{Error, Result};
pub use eval::{cross_validate, evaluate, CvReport, EvalReport};
pub use knn::DistanceMetric;
pub use model::{train, Algorithm, Classifier, TrainConfig, TrainedModel};
pub use probs::ClassProbabilities;
pub use text::{FeatureVector, LabelSet, LabeledPhrase, LabeledVector, Vocabulary};
