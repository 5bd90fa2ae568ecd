//! Random forest: bootstrap-sampled CART trees with per-node random
//! feature subsets, combined by equal-weight majority voting.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Engine, PartitionedDataset};
use crate::error::{Error, Result};
use crate::naive_bayes::check_corpus;
use crate::probs::ClassProbabilities;
use crate::text::{FeatureVector, LabeledVector};

/// Minimum impurity decrease for a split to count as an improvement.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features sampled per split; `None` means `ceil(√dim)`.
    pub feature_subset: Option<usize>,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            feature_subset: None,
            max_depth: 16,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf {
        class: usize,
    },
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub root: usize,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Best split of `(value, label)` pairs on one feature, as `(gain,
/// threshold)`. Candidate thresholds are midpoints between consecutive
/// distinct values.
pub(crate) fn best_threshold(
    pairs: &mut [(f64, usize)],
    parent: &[usize],
    n_classes: usize,
) -> Option<(f64, f64)> {
    let n = pairs.len();
    if n < 2 {
        return None;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let parent_gini = gini(parent, n);
    let mut left = vec![0usize; n_classes];
    let mut right = parent.to_vec();
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        let label = pairs[i].1;
        left[label] += 1;
        right[label] -= 1;
        if pairs[i].0 == pairs[i + 1].0 {
            continue;
        }
        let nl = i + 1;
        let nr = n - nl;
        let weighted = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
        let gain = parent_gini - weighted;
        if best.is_none_or(|(g, _)| gain > g) {
            best = Some((gain, (pairs[i].0 + pairs[i + 1].0) / 2.0));
        }
    }
    best
}

struct Builder<'a> {
    data: &'a [LabeledVector],
    n_classes: usize,
    dim: usize,
    feature_subset: usize,
    max_depth: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn build(&mut self, samples: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let mut counts = vec![0usize; self.n_classes];
        for &s in samples {
            counts[self.data[s].label] += 1;
        }
        let leaf = Node::Leaf {
            class: majority(&counts),
        };
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.max_depth {
            return self.push(leaf);
        }

        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs = Vec::with_capacity(samples.len());
        for feature in sample(rng, self.dim, self.feature_subset).into_iter() {
            pairs.clear();
            pairs.extend(
                samples
                    .iter()
                    .map(|&s| (f64::from(self.data[s].features.get(feature)), self.data[s].label)),
            );
            if let Some((gain, threshold)) = best_threshold(&mut pairs, &counts, self.n_classes) {
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, feature, threshold));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            return self.push(leaf);
        };
        if gain <= MIN_GAIN {
            return self.push(leaf);
        }

        let (l, r): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&s| f64::from(self.data[s].features.get(feature)) <= threshold);
        let id = self.push(leaf);
        let left = self.build(&l, depth + 1, rng);
        let right = self.build(&r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn push(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }
}

impl DecisionTree {
    /// Grows a tree on `samples` (indices into `data`, repeats allowed).
    pub fn fit(
        data: &[LabeledVector],
        samples: &[usize],
        n_classes: usize,
        feature_subset: usize,
        max_depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let dim = data.first().map_or(0, |d| d.features.dim());
        let mut b = Builder {
            data,
            n_classes,
            dim,
            feature_subset: feature_subset.min(dim),
            max_depth,
            nodes: Vec::new(),
        };
        let root = b.build(samples, 0, rng);
        Self {
            nodes: b.nodes,
            root,
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> usize {
        let mut id = self.root;
        loop {
            match self.nodes[id] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if f64::from(x.get(feature)) <= threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, id: usize) -> usize {
            match t.nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, self.root)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
    pub dim: usize,
    pub feature_subset: usize,
    pub seed: u64,
}

/// RNG stream for tree `index` of a forest seeded with `seed`.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn train_rf(
    engine: &Engine,
    corpus: &PartitionedDataset<LabeledVector>,
    n_classes: usize,
    params: &ForestParams,
) -> Result<ForestModel> {
    let dim = check_corpus(corpus, n_classes)?;
    if params.n_trees == 0 || params.max_depth == 0 {
        return Err(Error::InvalidParams(
            "n_trees and max_depth must be positive".into(),
        ));
    }
    let m = params
        .feature_subset
        .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize);
    if m == 0 || m > dim {
        return Err(Error::InvalidParams(format!(
            "feature subset size must be in 1..={dim}, got {m}"
        )));
    }
    let data: Vec<LabeledVector> = corpus.iter().cloned().collect();
    let n = data.len();
    let indices = PartitionedDataset::partition((0..params.n_trees).collect(), engine.threads())?;
    let trees = engine
        .par_map(&indices, |&t| {
            let mut rng = tree_rng(params.seed, t);
            let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            DecisionTree::fit(&data, &bootstrap, n_classes, m, params.max_depth, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        n_classes,
        dim,
        feature_subset: m,
        seed: params.seed,
    })
}

pub fn predict_rf(model: &ForestModel, x: &FeatureVector) -> Result<ClassProbabilities> {
    x.check_dim(model.dim)?;
    let mut votes = vec![0usize; model.n_classes];
    for t in &model.trees {
        votes[t.predict(x)] += 1;
    }
    Ok(ClassProbabilities::from_counts(&votes))
}
