//! End-to-end text models: a trained classifier (or the five-member
//! ensemble) bundled with the vocabulary and label set it was fitted on.

use std::fmt;
use std::str::FromStr;

use crate::engine::{Engine, PartitionedDataset};
use crate::ensemble::EnsembleModel;
use crate::error::{Error, Result};
use crate::forest::{predict_rf, train_rf, ForestModel, ForestParams};
use crate::knn::{DistanceMetric, KnnKnowledgeBase, KnnModel};
use crate::mlp::{forward, train_parameter_averaging, MLPModel, NetParams, TrainingMasterConfig};
use crate::naive_bayes::{predict_nb, train_nb, NBModel, DEFAULT_ALPHA};
use crate::probs::ClassProbabilities;
use crate::svm::{predict_ovr, train_ovr, OvRModel, SvmHyperParams};
use crate::text::{
    build_vocabulary, vectorize_corpus, vectorize_text, FeatureVector, LabelSet, LabeledPhrase,
    LabeledVector, Vocabulary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    NaiveBayes,
    Knn,
    Svm,
    RandomForest,
    Mlp,
    Ensemble,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::NaiveBayes,
        Algorithm::Knn,
        Algorithm::Svm,
        Algorithm::RandomForest,
        Algorithm::Mlp,
        Algorithm::Ensemble,
    ];

    /// Short name used on the command line and in archives.
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::NaiveBayes => "nb",
            Algorithm::Knn => "knn",
            Algorithm::Svm => "svm",
            Algorithm::RandomForest => "rf",
            Algorithm::Mlp => "mlp",
            Algorithm::Ensemble => "ensemble",
        }
    }

    /// Row title used in score tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Algorithm::NaiveBayes => "NaiveBayes",
            Algorithm::Knn => "KNN",
            Algorithm::Svm => "SVM",
            Algorithm::RandomForest => "RandomForest",
            Algorithm::Mlp => "DNN",
            Algorithm::Ensemble => "ENSEMBLE",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown algorithm {s:?}")))
    }
}

/// Every training knob, with defaults for each classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    /// Number of partitions the training corpus is split into.
    pub partitions: usize,
    pub alpha: f64,
    pub k: usize,
    pub metric: DistanceMetric,
    pub svm: SvmHyperParams,
    pub forest: ForestParams,
    pub net: NetParams,
    pub master: TrainingMasterConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            partitions: 4,
            alpha: DEFAULT_ALPHA,
            k: 1,
            metric: DistanceMetric::Cosine,
            svm: SvmHyperParams::default(),
            forest: ForestParams::default(),
            net: NetParams::default(),
            master: TrainingMasterConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Copies `seed` into every per-algorithm seed field.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.svm.seed = seed;
        self.forest.seed = seed;
        self
    }
}

/// A single trained classifier over feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    NaiveBayes(NBModel),
    Knn(KnnModel),
    Svm(OvRModel),
    RandomForest(ForestModel),
    Mlp(MLPModel),
}

impl Classifier {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Classifier::NaiveBayes(_) => Algorithm::NaiveBayes,
            Classifier::Knn(_) => Algorithm::Knn,
            Classifier::Svm(_) => Algorithm::Svm,
            Classifier::RandomForest(_) => Algorithm::RandomForest,
            Classifier::Mlp(_) => Algorithm::Mlp,
        }
    }

    /// Predicts class probabilities. A zero query under the cosine metric
    /// has no nearest neighbour and maps to the uniform distribution.
    pub fn predict(&self, engine: &Engine, x: &FeatureVector) -> Result<ClassProbabilities> {
        match self {
            Classifier::NaiveBayes(m) => predict_nb(m, x),
            Classifier::Knn(m) => match m.predict(engine, x) {
                Err(Error::ZeroVector) => Ok(ClassProbabilities::uniform(m.kb.n_classes)),
                other => other,
            },
            Classifier::Svm(m) => predict_ovr(m, x),
            Classifier::RandomForest(m) => predict_rf(m, x),
            Classifier::Mlp(m) => forward(m, x),
        }
    }

    pub fn train(
        engine: &Engine,
        algorithm: Algorithm,
        corpus: &PartitionedDataset<LabeledVector>,
        n_classes: usize,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        Ok(match algorithm {
            Algorithm::NaiveBayes => Classifier::NaiveBayes(train_nb(engine, corpus, n_classes, cfg.alpha)?),
            Algorithm::Knn => {
                if cfg.k == 0 {
                    return Err(Error::InvalidParams("k must be at least 1".into()));
                }
                Classifier::Knn(KnnModel {
                    kb: KnnKnowledgeBase::new(corpus.clone(), n_classes)?,
                    k: cfg.k,
                    metric: cfg.metric,
                })
            }
            Algorithm::Svm => Classifier::Svm(train_ovr(engine, corpus, n_classes, &cfg.svm)?),
            Algorithm::RandomForest => {
                Classifier::RandomForest(train_rf(engine, corpus, n_classes, &cfg.forest)?)
            }
            Algorithm::Mlp => Classifier::Mlp(train_parameter_averaging(
                engine,
                corpus,
                n_classes,
                &cfg.master,
                &cfg.net,
                cfg.seed,
            )?),
            Algorithm::Ensemble => {
                return Err(Error::InvalidParams(
                    "the ensemble is not a single classifier".into(),
                ))
            }
        })
    }
}

/// One classifier bundled with its text front end.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleModel {
    pub vocabulary: Vocabulary,
    pub label_set: LabelSet,
    pub classifier: Classifier,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Single(SingleModel),
    Ensemble(EnsembleModel),
}

/// Vocabulary, label set and partitioned feature vectors of a corpus.
pub struct PreparedCorpus {
    pub vocabulary: Vocabulary,
    pub label_set: LabelSet,
    pub vectors: PartitionedDataset<LabeledVector>,
}

pub fn prepare_corpus(corpus: &[LabeledPhrase], partitions: usize) -> Result<PreparedCorpus> {
    let vocabulary = build_vocabulary(corpus)?;
    let label_set = LabelSet::from_corpus(corpus);
    let vectors = vectorize_corpus(corpus, &vocabulary, &label_set)?;
    Ok(PreparedCorpus {
        vectors: PartitionedDataset::partition(vectors, partitions)?,
        vocabulary,
        label_set,
    })
}

/// Builds the vocabulary and label set from `corpus` and trains `algorithm`.
pub fn train(
    engine: &Engine,
    algorithm: Algorithm,
    corpus: &[LabeledPhrase],
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    let PreparedCorpus {
        vocabulary,
        label_set,
        vectors,
    } = prepare_corpus(corpus, cfg.partitions)?;
    let n = label_set.len();
    if algorithm == Algorithm::Ensemble {
        return Ok(TrainedModel::Ensemble(EnsembleModel::train(
            engine, vocabulary, label_set, &vectors, cfg,
        )?));
    }
    let classifier = Classifier::train(engine, algorithm, &vectors, n, cfg)?;
    Ok(TrainedModel::Single(SingleModel {
        vocabulary,
        label_set,
        classifier,
    }))
}

impl TrainedModel {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            TrainedModel::Single(m) => m.classifier.algorithm(),
            TrainedModel::Ensemble(_) => Algorithm::Ensemble,
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        match self {
            TrainedModel::Single(m) => &m.vocabulary,
            TrainedModel::Ensemble(m) => &m.vocabulary,
        }
    }

    pub fn label_set(&self) -> &LabelSet {
        match self {
            TrainedModel::Single(m) => &m.label_set,
            TrainedModel::Ensemble(m) => &m.label_set,
        }
    }

    pub fn predict_vector(&self, engine: &Engine, x: &FeatureVector) -> Result<ClassProbabilities> {
        match self {
            TrainedModel::Single(m) => m.classifier.predict(engine, x),
            TrainedModel::Ensemble(m) => m.predict_vector(engine, x),
        }
    }

    pub fn predict_text(&self, engine: &Engine, text: &str) -> Result<ClassProbabilities> {
        self.predict_vector(engine, &vectorize_text(text, self.vocabulary()))
    }

    /// Predicted label and probabilities; ties go to the lowest ordinal.
    pub fn classify(&self, engine: &Engine, text: &str) -> Result<(ClassProbabilities, String)> {
        let p = self.predict_text(engine, text)?;
        let label = self.label_set().name(p.argmax()).to_string();
        Ok((p, label))
    }
}
