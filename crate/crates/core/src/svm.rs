//! Linear soft-margin SVM trained by full-batch hinge-loss subgradient
//! descent, and its one-vs-rest multiclass lift.

use crate::engine::{Engine, PartitionedDataset};
use crate::error::{Error, Result};
use crate::naive_bayes::check_corpus;
use crate::probs::{argmax, ClassProbabilities};
use crate::text::{FeatureVector, LabeledVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmHyperParams {
    /// Coefficient of the `‖w‖²` penalty.
    pub reg_lambda: f64,
    /// Base step size; step `t` uses `learning_rate / √t`.
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SvmHyperParams {
    fn default() -> Self {
        Self {
            reg_lambda: 1e-3,
            learning_rate: 0.1,
            iterations: 200,
            seed: 42,
        }
    }
}

impl SvmHyperParams {
    fn validate(&self) -> Result<()> {
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return Err(Error::InvalidParams("reg_lambda must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParams("learning_rate must be > 0".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParams("iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Separating hyperplane `w · x + b = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneModel {
    pub w: Vec<f64>,
    pub b: f64,
}

impl HyperplaneModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w: vec![0.0; dim],
            b: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    fn dot(&self, x: &FeatureVector) -> f64 {
        x.entries()
            .iter()
            .map(|&(k, c)| self.w[k] * f64::from(c))
            .sum()
    }
}

/// Raw margin `w · x + b`; its sign is the predicted side.
pub fn decision(model: &HyperplaneModel, x: &FeatureVector) -> Result<f64> {
    x.check_dim(model.dim())?;
    Ok(model.dot(x) + model.b)
}

/// `λ‖w‖² + (1/N) Σ max(0, 1 − y (w · x + b))`.
pub fn objective(
    corpus: &PartitionedDataset<(f64, FeatureVector)>,
    model: &HyperplaneModel,
    reg_lambda: f64,
) -> f64 {
    let n = corpus.len() as f64;
    let hinge: f64 = corpus
        .iter()
        .map(|(y, x)| (1.0 - y * (model.dot(x) + model.b)).max(0.0))
        .sum();
    reg_lambda * model.w.iter().map(|w| w * w).sum::<f64>() + hinge / n
}

#[derive(Clone)]
struct Subgradient {
    w: Vec<f64>,
    b: f64,
}

fn fit<T, V>(
    engine: &Engine,
    corpus: &PartitionedDataset<T>,
    dim: usize,
    hp: &SvmHyperParams,
    view: V,
) -> HyperplaneModel
where
    T: Sync,
    V: Fn(&T) -> (f64, &FeatureVector) + Sync + Send,
{
    let n = corpus.len() as f64;
    let mut model = HyperplaneModel::zeros(dim);
    for t in 1..=hp.iterations {
        let current = &model;
        let g = engine.aggregate(
            corpus,
            Subgradient {
                w: vec![0.0; dim],
                b: 0.0,
            },
            |mut acc, item| {
                let (y, x) = view(item);
                if y * (current.dot(x) + current.b) < 1.0 {
                    for &(k, c) in x.entries() {
                        acc.w[k] -= y * f64::from(c);
                    }
                    acc.b -= y;
                }
                acc
            },
            |mut a, b| {
                for (x, y) in a.w.iter_mut().zip(&b.w) {
                    *x += y;
                }
                a.b += b.b;
                a
            },
        );
        let step = hp.learning_rate / (t as f64).sqrt();
        for (w, gw) in model.w.iter_mut().zip(&g.w) {
            *w -= step * (2.0 * hp.reg_lambda * *w + gw / n);
        }
        model.b -= step * g.b / n;
    }
    model
}

pub fn train_binary_svm(
    engine: &Engine,
    corpus: &PartitionedDataset<(f64, FeatureVector)>,
    hp: &SvmHyperParams,
) -> Result<HyperplaneModel> {
    hp.validate()?;
    let (_, first) = corpus.iter().next().ok_or(Error::EmptyCorpus)?;
    let dim = first.dim();
    let (mut pos, mut neg) = (false, false);
    for (y, x) in corpus.iter() {
        x.check_dim(dim)?;
        match *y {
            1.0 => pos = true,
            -1.0 => neg = true,
            other => {
                return Err(Error::InvalidParams(format!(
                    "binary labels must be +1 or -1, got {other}"
                )))
            }
        }
    }
    if !(pos && neg) {
        return Err(Error::SingleClassCorpus);
    }
    Ok(fit(engine, corpus, dim, hp, |(y, x)| (*y, x)))
}

/// One hyperplane per class, each separating that class from the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct OvRModel {
    pub per_class: Vec<HyperplaneModel>,
}

impl OvRModel {
    pub fn margins(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        self.per_class.iter().map(|h| decision(h, x)).collect()
    }
}

pub fn train_ovr(
    engine: &Engine,
    corpus: &PartitionedDataset<LabeledVector>,
    n_classes: usize,
    hp: &SvmHyperParams,
) -> Result<OvRModel> {
    hp.validate()?;
    let dim = check_corpus(corpus, n_classes)?;
    let mut present = vec![false; n_classes];
    for ex in corpus.iter() {
        present[ex.label] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::SingleClassCorpus);
    }
    if present.contains(&false) {
        // A class with no examples has no positive side to learn.
        return Err(Error::SingleClassCorpus);
    }
    let per_class = (0..n_classes)
        .map(|j| {
            fit(engine, corpus, dim, hp, |ex: &LabeledVector| {
                (if ex.label == j { 1.0 } else { -1.0 }, &ex.features)
            })
        })
        .collect();
    Ok(OvRModel { per_class })
}

/// One-hot on the class with the largest margin; lowest ordinal on ties.
pub fn predict_ovr(model: &OvRModel, x: &FeatureVector) -> Result<ClassProbabilities> {
    let margins = model.margins(x)?;
    Ok(ClassProbabilities::one_hot(margins.len(), argmax(&margins)))
}
