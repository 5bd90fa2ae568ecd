//! Equal-weight averaging of the five member classifiers and the per-phrase
//! score table.

use std::fmt::Write as _;

use crate::engine::{Engine, PartitionedDataset};
use crate::error::{Error, Result};
use crate::forest::{predict_rf, train_rf, ForestModel};
use crate::knn::{KnnKnowledgeBase, KnnModel};
use crate::mlp::{forward, train_parameter_averaging, MLPModel};
use crate::model::{Algorithm, Classifier, TrainConfig};
use crate::naive_bayes::{predict_nb, train_nb, NBModel};
use crate::probs::ClassProbabilities;
use crate::svm::{predict_ovr, train_ovr, OvRModel};
use crate::text::{vectorize_text, FeatureVector, LabelSet, LabeledVector, Vocabulary};

pub const ENSEMBLE_SIZE: usize = 5;

/// Members in score-table row order.
pub const MEMBER_ORDER: [Algorithm; ENSEMBLE_SIZE] = [
    Algorithm::NaiveBayes,
    Algorithm::RandomForest,
    Algorithm::Mlp,
    Algorithm::Svm,
    Algorithm::Knn,
];

/// Element-wise mean of exactly five equal-length score vectors. No
/// distribution check is made on the inputs.
pub fn average_scores(scores: &[&[f64]]) -> Result<Vec<f64>> {
    if scores.len() != ENSEMBLE_SIZE {
        return Err(Error::WrongArity(scores.len()));
    }
    let n = scores[0].len();
    if let Some(bad) = scores.iter().find(|s| s.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            found: bad.len(),
        });
    }
    Ok((0..n)
        .map(|j| scores.iter().map(|s| s[j]).sum::<f64>() / ENSEMBLE_SIZE as f64)
        .collect())
}

/// Mean of five class distributions.
pub fn ensemble_average(scores: &[ClassProbabilities]) -> Result<ClassProbabilities> {
    let slices: Vec<&[f64]> = scores.iter().map(ClassProbabilities::as_slice).collect();
    ClassProbabilities::new(average_scores(&slices)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub nb: NBModel,
    pub knn: KnnModel,
    pub svm: OvRModel,
    pub rf: ForestModel,
    pub dnn: MLPModel,
    pub label_set: LabelSet,
    pub vocabulary: Vocabulary,
}

impl EnsembleModel {
    pub fn train(
        engine: &Engine,
        vocabulary: Vocabulary,
        label_set: LabelSet,
        corpus: &PartitionedDataset<LabeledVector>,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        let n = label_set.len();
        if cfg.k == 0 {
            return Err(Error::InvalidParams("k must be at least 1".into()));
        }
        Ok(Self {
            nb: train_nb(engine, corpus, n, cfg.alpha)?,
            knn: KnnModel {
                kb: KnnKnowledgeBase::new(corpus.clone(), n)?,
                k: cfg.k,
                metric: cfg.metric,
            },
            svm: train_ovr(engine, corpus, n, &cfg.svm)?,
            rf: train_rf(engine, corpus, n, &cfg.forest)?,
            dnn: train_parameter_averaging(engine, corpus, n, &cfg.master, &cfg.net, cfg.seed)?,
            label_set,
            vocabulary,
        })
    }

    /// Scores of every member, in [`MEMBER_ORDER`].
    pub fn member_scores(&self, engine: &Engine, x: &FeatureVector) -> Result<[ClassProbabilities; ENSEMBLE_SIZE]> {
        let knn = match self.knn.predict(engine, x) {
            Err(Error::ZeroVector) => ClassProbabilities::uniform(self.label_set.len()),
            other => other?,
        };
        Ok([
            predict_nb(&self.nb, x)?,
            predict_rf(&self.rf, x)?,
            forward(&self.dnn, x)?,
            predict_ovr(&self.svm, x)?,
            knn,
        ])
    }

    pub fn predict_vector(&self, engine: &Engine, x: &FeatureVector) -> Result<ClassProbabilities> {
        ensemble_average(&self.member_scores(engine, x)?)
    }

    /// Member classifiers as standalone [`Classifier`]s, in [`MEMBER_ORDER`].
    pub fn members(&self) -> [Classifier; ENSEMBLE_SIZE] {
        [
            Classifier::NaiveBayes(self.nb.clone()),
            Classifier::RandomForest(self.rf.clone()),
            Classifier::Mlp(self.dnn.clone()),
            Classifier::Svm(self.svm.clone()),
            Classifier::Knn(self.knn.clone()),
        ]
    }
}

/// Averaged probabilities and the winning label for `text`.
pub fn predict_ensemble(
    engine: &Engine,
    model: &EnsembleModel,
    text: &str,
) -> Result<(ClassProbabilities, String)> {
    let p = model.predict_vector(engine, &vectorize_text(text, &model.vocabulary))?;
    let label = model.label_set.name(p.argmax()).to_string();
    Ok((p, label))
}

/// Six rows (five members then the ensemble) of per-class scores for one
/// phrase. Values keep full precision; rendering rounds to 3 decimals.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub phrase: String,
    pub labels: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

pub fn score_table(engine: &Engine, model: &EnsembleModel, text: &str) -> Result<ScoreTable> {
    let x = vectorize_text(text, &model.vocabulary);
    let members = model.member_scores(engine, &x)?;
    let avg = ensemble_average(&members)?;
    let mut rows: Vec<(String, Vec<f64>)> = MEMBER_ORDER
        .iter()
        .zip(members)
        .map(|(a, p)| (a.display_name().to_string(), p.into_vec()))
        .collect();
    rows.push((Algorithm::Ensemble.display_name().to_string(), avg.into_vec()));
    Ok(ScoreTable {
        phrase: text.to_string(),
        labels: model.label_set.labels().to_vec(),
        rows,
    })
}

impl ScoreTable {
    /// Aligned plain-text rendering, cells rounded to 3 decimals.
    pub fn to_text(&self) -> String {
        let name_w = self.rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
        let widths: Vec<usize> = self.labels.iter().map(|l| l.len().max(5)).collect();
        let mut out = String::new();
        let _ = writeln!(out, "Accuracy {:?}", self.phrase);
        let _ = write!(out, "{:name_w$}", "");
        for (l, w) in self.labels.iter().zip(&widths) {
            let _ = write!(out, "  {l:>w$}");
        }
        out.push('\n');
        for (name, values) in &self.rows {
            let _ = write!(out, "{name:<name_w$}");
            for (v, w) in values.iter().zip(&widths) {
                let _ = write!(out, "  {v:>w$.3}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cp(v: &[f64]) -> ClassProbabilities {
        ClassProbabilities::new(v.to_vec()).unwrap()
    }

    #[test]
    fn reference_columns() {
        let config = [0.345, 1.000, 1.000, 1.000, 0.994];
        let ric = [0.476, 1.000, 1.000, 1.000, 0.983];
        for (col, expected) in [(config, 0.868), (ric, 0.892)] {
            let rows: Vec<[f64; 1]> = col.iter().map(|&v| [v]).collect();
            let slices: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let avg = average_scores(&slices).unwrap();
            assert!((avg[0] - expected).abs() <= 0.005, "{} vs {expected}", avg[0]);
        }
    }

    #[test]
    fn identical_one_hots_average_to_themselves() {
        let v = ClassProbabilities::one_hot(4, 2);
        let avg = ensemble_average(&vec![v.clone(); 5]).unwrap();
        assert_eq!(avg, v);
    }

    #[test]
    fn hand_computed_mean_with_disagreement() {
        let scores = [
            cp(&[0.6, 0.3, 0.1]),
            cp(&[0.0, 1.0, 0.0]),
            cp(&[0.2, 0.5, 0.3]),
            cp(&[1.0, 0.0, 0.0]),
            cp(&[0.0, 0.0, 1.0]),
        ];
        let avg = ensemble_average(&scores).unwrap();
        let expected = [1.8 / 5.0, 1.8 / 5.0, 1.4 / 5.0];
        for (a, e) in avg.as_slice().iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
        // Exact tie between classes 0 and 1 goes to the lower ordinal.
        assert_eq!(avg.argmax(), 0);
    }

    #[test]
    fn arity_and_length_errors() {
        let v = ClassProbabilities::uniform(3);
        assert!(matches!(
            ensemble_average(&vec![v.clone(); 4]),
            Err(Error::WrongArity(4))
        ));
        let mut five = vec![v; 4];
        five.push(ClassProbabilities::uniform(2));
        assert!(matches!(
            ensemble_average(&five),
            Err(Error::LengthMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn text_rendering_rounds_to_three_decimals() {
        let t = ScoreTable {
            phrase: "come attivo offerta".into(),
            labels: vec!["A".into(), "BB".into()],
            rows: vec![("NaiveBayes".into(), vec![0.12345, 0.87655]), ("KNN".into(), vec![1.0, 0.0])],
        };
        let s = t.to_text();
        assert!(s.starts_with("Accuracy \"come attivo offerta\"\n"));
        assert!(s.contains("NaiveBayes  0.123  0.877"));
        assert!(s.contains("KNN         1.000  0.000"));
    }
}
