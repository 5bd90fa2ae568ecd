//! Multinomial naive Bayes with additive (Laplace) smoothing.
//!
//! Training is a single pass of integer count aggregation over the
//! partitions, so the fitted model does not depend on the partition count.

use crate::engine::{Engine, PartitionedDataset};
use crate::error::{Error, Result};
use crate::probs::ClassProbabilities;
use crate::text::{FeatureVector, LabeledVector};

pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct NBModel {
    /// `log p(c_j)`.
    pub log_priors: Vec<f64>,
    /// `log p(x_k | c_j)`, one row per class.
    pub log_likelihoods: Vec<Vec<f64>>,
    pub alpha: f64,
    pub dim: usize,
}

#[derive(Clone)]
struct Counts {
    docs: Vec<u64>,
    terms: Vec<Vec<u64>>,
}

impl Counts {
    fn zero(n_classes: usize, dim: usize) -> Self {
        Self {
            docs: vec![0; n_classes],
            terms: vec![vec![0; dim]; n_classes],
        }
    }

    fn add(mut self, ex: &LabeledVector) -> Self {
        self.docs[ex.label] += 1;
        let row = &mut self.terms[ex.label];
        for &(k, c) in ex.features.entries() {
            row[k] += u64::from(c);
        }
        self
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.docs.iter_mut().zip(&other.docs) {
            *a += b;
        }
        for (ra, rb) in self.terms.iter_mut().zip(&other.terms) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += b;
            }
        }
        self
    }
}

pub(crate) fn check_corpus(corpus: &PartitionedDataset<LabeledVector>, n_classes: usize) -> Result<usize> {
    let first = corpus.iter().next().ok_or(Error::EmptyCorpus)?;
    let dim = first.features.dim();
    for ex in corpus.iter() {
        ex.features.check_dim(dim)?;
        if ex.label >= n_classes {
            return Err(Error::InvalidParams(format!(
                "label ordinal {} out of range for {} classes",
                ex.label, n_classes
            )));
        }
    }
    Ok(dim)
}

pub fn train_nb(
    engine: &Engine,
    corpus: &PartitionedDataset<LabeledVector>,
    n_classes: usize,
    alpha: f64,
) -> Result<NBModel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParams(format!("smoothing alpha must be > 0, got {alpha}")));
    }
    let dim = check_corpus(corpus, n_classes)?;
    let counts = engine.aggregate(
        corpus,
        Counts::zero(n_classes, dim),
        Counts::add,
        Counts::merge,
    );
    let total: u64 = counts.docs.iter().sum();
    let log_priors = counts
        .docs
        .iter()
        .map(|&n| (n as f64 / total as f64).ln())
        .collect();
    let log_likelihoods = counts
        .terms
        .iter()
        .map(|row| {
            let class_total: u64 = row.iter().sum();
            let denom = class_total as f64 + alpha * dim as f64;
            row.iter()
                .map(|&c| ((c as f64 + alpha) / denom).ln())
                .collect()
        })
        .collect();
    Ok(NBModel {
        log_priors,
        log_likelihoods,
        alpha,
        dim,
    })
}

impl NBModel {
    pub fn n_classes(&self) -> usize {
        self.log_priors.len()
    }

    /// Unnormalized log posterior per class.
    pub fn log_scores(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        x.check_dim(self.dim)?;
        Ok(self
            .log_priors
            .iter()
            .zip(&self.log_likelihoods)
            .map(|(&prior, row)| {
                prior
                    + x.entries()
                        .iter()
                        .map(|&(k, c)| f64::from(c) * row[k])
                        .sum::<f64>()
            })
            .collect())
    }
}

pub fn predict_nb(model: &NBModel, x: &FeatureVector) -> Result<ClassProbabilities> {
    Ok(ClassProbabilities::from_log_scores(&model.log_scores(x)?))
}
