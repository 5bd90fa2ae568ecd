//! Instance-based classification over a partitioned knowledge base.
//!
//! With `k = 1` the classifier computes, in parallel, the distance from the
//! query to every stored phrase, keeps the minimum per label, and predicts
//! the label holding the global minimum. Larger `k` falls back to a
//! majority vote over the `k` nearest instances.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::engine::{Engine, PartitionedDataset};
use crate::error::{Error, Result};
use crate::naive_bayes::check_corpus;
use crate::probs::ClassProbabilities;
use crate::text::{FeatureVector, LabeledVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DistanceMetric {
    Euclidean,
    Manhattan,
    Chebyshev,
    Hamming,
    #[default]
    Cosine,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 5] = [
        DistanceMetric::Euclidean,
        DistanceMetric::Manhattan,
        DistanceMetric::Chebyshev,
        DistanceMetric::Hamming,
        DistanceMetric::Cosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::Manhattan => "manhattan",
            DistanceMetric::Chebyshev => "chebyshev",
            DistanceMetric::Hamming => "hamming",
            DistanceMetric::Cosine => "cosine",
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistanceMetric::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidParams(format!("unknown distance metric {s:?}")))
    }
}

/// Walks the union of non-zero dimensions of `x` and `y`, calling `f` with
/// the pair of values at each.
fn for_each_union(x: &FeatureVector, y: &FeatureVector, mut f: impl FnMut(f64, f64)) {
    let (a, b) = (x.entries(), y.entries());
    let (mut i, mut j) = (0, 0);
    loop {
        match (a.get(i), b.get(j)) {
            (Some(&(da, va)), Some(&(db, vb))) => match da.cmp(&db) {
                Ordering::Equal => {
                    f(f64::from(va), f64::from(vb));
                    i += 1;
                    j += 1;
                }
                Ordering::Less => {
                    f(f64::from(va), 0.0);
                    i += 1;
                }
                Ordering::Greater => {
                    f(0.0, f64::from(vb));
                    j += 1;
                }
            },
            (Some(&(_, va)), None) => {
                f(f64::from(va), 0.0);
                i += 1;
            }
            (None, Some(&(_, vb))) => {
                f(0.0, f64::from(vb));
                j += 1;
            }
            (None, None) => break,
        }
    }
}

pub fn distance(metric: DistanceMetric, x: &FeatureVector, y: &FeatureVector) -> Result<f64> {
    y.check_dim(x.dim())?;
    let d = match metric {
        DistanceMetric::Euclidean => {
            let mut s = 0.0;
            for_each_union(x, y, |a, b| s += (a - b) * (a - b));
            s.sqrt()
        }
        DistanceMetric::Manhattan => {
            let mut s = 0.0;
            for_each_union(x, y, |a, b| s += (a - b).abs());
            s
        }
        DistanceMetric::Chebyshev => {
            let mut m: f64 = 0.0;
            for_each_union(x, y, |a, b| m = m.max((a - b).abs()));
            m
        }
        DistanceMetric::Hamming => {
            let mut n = 0usize;
            for_each_union(x, y, |a, b| n += usize::from(a != b));
            n as f64
        }
        DistanceMetric::Cosine => {
            if x.is_zero() || y.is_zero() {
                return Err(Error::ZeroVector);
            }
            let (mut dot, mut xx, mut yy) = (0.0, 0.0, 0.0);
            for_each_union(x, y, |a, b| {
                dot += a * b;
                xx += a * a;
                yy += b * b;
            });
            (1.0 - dot / (xx * yy).sqrt()).max(0.0)
        }
    };
    Ok(d)
}

/// The stored training instances.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnKnowledgeBase {
    pub instances: PartitionedDataset<LabeledVector>,
    pub n_classes: usize,
    pub dim: usize,
}

impl KnnKnowledgeBase {
    pub fn new(instances: PartitionedDataset<LabeledVector>, n_classes: usize) -> Result<Self> {
        let dim = check_corpus(&instances, n_classes)?;
        Ok(Self {
            instances,
            n_classes,
            dim,
        })
    }

    pub fn repartition(self, p: usize) -> Result<Self> {
        Ok(Self {
            instances: self.instances.repartition(p)?,
            ..self
        })
    }
}

/// A knowledge base together with its query-time settings.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub kb: KnnKnowledgeBase,
    pub k: usize,
    pub metric: DistanceMetric,
}

impl KnnModel {
    pub fn predict(&self, engine: &Engine, x: &FeatureVector) -> Result<ClassProbabilities> {
        knn_classify(engine, &self.kb, x, self.k, self.metric)
    }
}

/// Distance to an instance; `None` when the instance is a zero vector under
/// the cosine metric, which has no defined angle.
fn instance_distance(
    metric: DistanceMetric,
    query: &FeatureVector,
    inst: &LabeledVector,
) -> Result<Option<f64>> {
    match distance(metric, query, &inst.features) {
        Ok(d) => Ok(Some(d)),
        Err(Error::ZeroVector) if !query.is_zero() => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn knn_classify(
    engine: &Engine,
    kb: &KnnKnowledgeBase,
    query: &FeatureVector,
    k: usize,
    metric: DistanceMetric,
) -> Result<ClassProbabilities> {
    if k == 0 {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    query.check_dim(kb.dim)?;
    if metric == DistanceMetric::Cosine && query.is_zero() {
        return Err(Error::ZeroVector);
    }

    if k == 1 {
        let dists = engine.try_par_map(&kb.instances, |inst| {
            Ok::<_, Error>((inst.label, instance_distance(metric, query, inst)?.unwrap_or(f64::NAN)))
        })?;
        let per_label = engine.group_min_by_key(&dists);
        let mut best: Option<(usize, f64)> = None;
        for (label, d) in per_label {
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((label, d));
            }
        }
        let (winner, _) = best.ok_or(Error::ZeroVector)?;
        return Ok(ClassProbabilities::one_hot(kb.n_classes, winner));
    }

    // Candidates are ordered by (distance, global position) so the selection
    // does not depend on how the knowledge base is partitioned.
    let mut offsets = Vec::with_capacity(kb.instances.num_partitions());
    let mut acc = 0;
    for size in kb.instances.partition_sizes() {
        offsets.push(acc);
        acc += size;
    }
    let partials = engine.map_partitions(&kb.instances, |pi, part| -> Result<Vec<(f64, usize, usize)>> {
        let mut local = Vec::with_capacity(part.len());
        for (i, inst) in part.iter().enumerate() {
            if let Some(d) = instance_distance(metric, query, inst)? {
                local.push((d, offsets[pi] + i, inst.label));
            }
        }
        local.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        local.truncate(k);
        Ok(local)
    });
    let mut all = Vec::new();
    for p in partials {
        all.extend(p?);
    }
    if all.is_empty() {
        return Err(Error::ZeroVector);
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    let mut votes = vec![0usize; kb.n_classes];
    for &(_, _, label) in &all {
        votes[label] += 1;
    }
    Ok(ClassProbabilities::from_counts(&votes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[u32]) -> FeatureVector {
        FeatureVector::from_dense(v)
    }

    fn kb(items: &[(usize, &[u32])], n_classes: usize, p: usize) -> KnnKnowledgeBase {
        let v = items
            .iter()
            .map(|&(label, x)| LabeledVector {
                label,
                features: fv(x),
            })
            .collect();
        KnnKnowledgeBase::new(PartitionedDataset::partition(v, p).unwrap(), n_classes).unwrap()
    }

    #[test]
    fn distance_examples() {
        use DistanceMetric::*;
        assert_eq!(distance(Euclidean, &fv(&[0, 0]), &fv(&[3, 4])).unwrap(), 5.0);
        assert_eq!(distance(Cosine, &fv(&[1, 0]), &fv(&[0, 1])).unwrap(), 1.0);
        assert_eq!(distance(Hamming, &fv(&[1, 0, 2]), &fv(&[1, 3, 2])).unwrap(), 1.0);
        assert_eq!(distance(Manhattan, &fv(&[1, 0, 2]), &fv(&[0, 3, 2])).unwrap(), 4.0);
        assert_eq!(distance(Chebyshev, &fv(&[1, 0, 2]), &fv(&[0, 3, 2])).unwrap(), 3.0);
        let x = fv(&[3, 0, 7, 1]);
        for m in DistanceMetric::ALL {
            assert_eq!(distance(m, &x, &x).unwrap(), 0.0, "{m}");
        }
    }

    #[test]
    fn distance_errors() {
        assert!(matches!(
            distance(DistanceMetric::Cosine, &fv(&[0, 0]), &fv(&[1, 0])),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            distance(DistanceMetric::Euclidean, &fv(&[0, 0]), &fv(&[1, 0, 0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn metric_parsing() {
        for m in DistanceMetric::ALL {
            assert_eq!(m.to_string().parse::<DistanceMetric>().unwrap(), m);
        }
        assert!("minkowski".parse::<DistanceMetric>().is_err());
    }

    #[test]
    fn exact_match_wins() {
        let e = Engine::new(2).unwrap();
        let kb = kb(&[(0, &[1, 0]), (1, &[0, 1])], 2, 1);
        let p = knn_classify(&e, &kb, &fv(&[1, 0]), 1, DistanceMetric::Cosine).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn equidistant_vote_fractions() {
        let e = Engine::new(2).unwrap();
        let kb = kb(&[(0, &[1, 0]), (0, &[0, 1]), (1, &[1, 1])], 2, 2);
        // Chebyshev distance from the origin is 1 for every instance.
        let p = knn_classify(&e, &kb, &fv(&[0, 0]), 3, DistanceMetric::Chebyshev).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_lowest_label() {
        let e = Engine::new(2).unwrap();
        let kb = kb(&[(1, &[1, 0]), (0, &[0, 1])], 2, 2);
        let p = knn_classify(&e, &kb, &fv(&[1, 1]), 1, DistanceMetric::Euclidean).unwrap();
        assert_eq!(p.argmax(), 0);
        let p = knn_classify(&e, &kb, &fv(&[1, 1]), 2, DistanceMetric::Euclidean).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn zero_query_under_cosine_is_an_error() {
        let e = Engine::new(1).unwrap();
        let kb = kb(&[(0, &[1, 0]), (1, &[0, 1])], 2, 1);
        assert!(matches!(
            knn_classify(&e, &kb, &fv(&[0, 0]), 1, DistanceMetric::Cosine),
            Err(Error::ZeroVector)
        ));
        // Other metrics are defined at the origin.
        assert!(knn_classify(&e, &kb, &fv(&[0, 0]), 1, DistanceMetric::Euclidean).is_ok());
    }

    #[test]
    fn zero_instances_are_skipped_for_cosine() {
        let e = Engine::new(1).unwrap();
        let kb = kb(&[(0, &[0, 0]), (1, &[0, 1])], 2, 1);
        let p = knn_classify(&e, &kb, &fv(&[1, 0]), 1, DistanceMetric::Cosine).unwrap();
        assert_eq!(p.argmax(), 1);
    }

    #[test]
    fn k_larger_than_kb_uses_every_instance() {
        let e = Engine::new(1).unwrap();
        let kb = kb(&[(0, &[1, 0]), (1, &[0, 1])], 2, 1);
        let p = knn_classify(&e, &kb, &fv(&[1, 0]), 10, DistanceMetric::Euclidean).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
    }
}
