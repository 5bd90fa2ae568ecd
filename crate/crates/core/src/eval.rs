//! Accuracy, confusion matrices and stratified k-fold cross-validation.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{Engine, PartitionedDataset};
use crate::ensemble::MEMBER_ORDER;
use crate::error::{Error, Result};
use crate::model::{train, Algorithm, TrainConfig, TrainedModel};
use crate::text::{vectorize_text, LabelSet, LabeledPhrase};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub labels: Vec<String>,
    pub accuracy: f64,
    /// `confusion[i][j]` counts phrases of true class `i` predicted as `j`.
    pub confusion: Vec<Vec<usize>>,
    pub per_fold: Vec<f64>,
}

impl EvalReport {
    fn empty(labels: &LabelSet) -> Self {
        let n = labels.len();
        Self {
            labels: labels.labels().to_vec(),
            accuracy: 0.0,
            confusion: vec![vec![0; n]; n],
            per_fold: Vec::new(),
        }
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }

    fn record(&mut self, truth: usize, predicted: usize) {
        self.confusion[truth][predicted] += 1;
    }

    fn finish_single(&mut self) {
        self.accuracy = self.correct() as f64 / self.total() as f64;
    }

    fn add_fold(&mut self, fold: &EvalReport) {
        for (row, frow) in self.confusion.iter_mut().zip(&fold.confusion) {
            for (c, f) in row.iter_mut().zip(frow) {
                *c += f;
            }
        }
        self.per_fold.push(fold.accuracy);
        self.accuracy = self.per_fold.iter().sum::<f64>() / self.per_fold.len() as f64;
    }

    /// Plain-text report: per-fold and mean accuracy, then the confusion
    /// matrix with true classes as rows.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, a) in self.per_fold.iter().enumerate() {
            let _ = writeln!(out, "fold {}: {a:.4}", i + 1);
        }
        let _ = writeln!(out, "accuracy: {:.4}", self.accuracy);
        let name_w = self.labels.iter().map(String::len).max().unwrap_or(0);
        let widths: Vec<usize> = self
            .labels
            .iter()
            .zip(0..)
            .map(|(l, j)| {
                let max_count = self.confusion.iter().map(|r| r[j]).max().unwrap_or(0);
                l.len().max(max_count.to_string().len())
            })
            .collect();
        let _ = write!(out, "{:name_w$}", "");
        for (l, w) in self.labels.iter().zip(&widths) {
            let _ = write!(out, "  {l:>w$}");
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.confusion) {
            let _ = write!(out, "{l:<name_w$}");
            for (c, w) in row.iter().zip(&widths) {
                let _ = write!(out, "  {c:>w$}");
            }
            out.push('\n');
        }
        out
    }
}

fn predictions(
    engine: &Engine,
    model: &TrainedModel,
    test: &[LabeledPhrase],
) -> Result<Vec<(usize, Vec<usize>)>> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let labels = model.label_set();
    let pd = PartitionedDataset::partition(test.iter().collect(), engine.threads())?;
    let out = engine.try_par_map(&pd, |p: &&LabeledPhrase| -> Result<(usize, Vec<usize>)> {
        let truth = labels
            .ordinal(&p.label)
            .ok_or_else(|| Error::UnknownLabel(p.label.clone()))?;
        let x = vectorize_text(&p.text, model.vocabulary());
        let mut preds = vec![model.predict_vector(engine, &x)?.argmax()];
        if let TrainedModel::Ensemble(e) = model {
            preds.extend(e.member_scores(engine, &x)?.iter().map(|s| s.argmax()));
        }
        Ok((truth, preds))
    })?;
    Ok(out.collect())
}

/// Accuracy and confusion matrix of `model` on `test`.
pub fn evaluate(engine: &Engine, model: &TrainedModel, test: &[LabeledPhrase]) -> Result<EvalReport> {
    let mut report = EvalReport::empty(model.label_set());
    for (truth, preds) in predictions(engine, model, test)? {
        report.record(truth, preds[0]);
    }
    report.finish_single();
    Ok(report)
}

/// Cross-validation result. For the ensemble, `members` holds the report of
/// each member classifier measured on the same folds.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub report: EvalReport,
    pub members: Vec<(Algorithm, EvalReport)>,
}

/// Stratified fold index of every phrase: each class is shuffled and dealt
/// round-robin, continuing the rotation from one class to the next.
pub fn stratified_folds(corpus: &[LabeledPhrase], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidParams("folds must be at least 2".into()));
    }
    let labels = LabelSet::from_corpus(corpus);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labels.len()];
    for (i, p) in corpus.iter().enumerate() {
        by_class[labels.ordinal(&p.label).expect("label from corpus")].push(i);
    }
    if let Some((j, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() < folds) {
        return Err(Error::InsufficientClassCount {
            label: labels.name(j).to_string(),
            count: members.len(),
            folds,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; corpus.len()];
    let mut next = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

/// Stratified k-fold cross-validation. Each fold rebuilds the vocabulary
/// from its training split only.
pub fn cross_validate(
    engine: &Engine,
    corpus: &[LabeledPhrase],
    folds: usize,
    algorithm: Algorithm,
    cfg: &TrainConfig,
) -> Result<CvReport> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let assignment = stratified_folds(corpus, folds, cfg.seed)?;
    let labels = LabelSet::from_corpus(corpus);
    let mut total = EvalReport::empty(&labels);
    let mut members: Vec<(Algorithm, EvalReport)> = if algorithm == Algorithm::Ensemble {
        MEMBER_ORDER.iter().map(|&a| (a, EvalReport::empty(&labels))).collect()
    } else {
        Vec::new()
    };
    for f in 0..folds {
        let (test, training): (Vec<_>, Vec<_>) = corpus
            .iter()
            .zip(&assignment)
            .partition(|&(_, &a)| a == f);
        let training: Vec<LabeledPhrase> = training.into_iter().map(|(p, _)| p.clone()).collect();
        let test: Vec<LabeledPhrase> = test.into_iter().map(|(p, _)| p.clone()).collect();
        let model = train(engine, algorithm, &training, cfg)?;

        let mut fold = EvalReport::empty(&labels);
        let mut member_folds = vec![EvalReport::empty(&labels); members.len()];
        for (truth, preds) in predictions(engine, &model, &test)? {
            fold.record(truth, preds[0]);
            for (m, &p) in member_folds.iter_mut().zip(&preds[1..]) {
                m.record(truth, p);
            }
        }
        fold.finish_single();
        total.add_fold(&fold);
        for ((_, acc), mut m) in members.iter_mut().zip(member_folds) {
            m.finish_single();
            acc.add_fold(&m);
        }
    }
    Ok(CvReport {
        report: total,
        members,
    })
}
