//! Binary model archive.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "PHRASAL\0"
//! version  u32
//! kind     u8       nb=0 knn=1 svm=2 rf=3 mlp=4 ensemble=5
//! config   training configuration echo
//! vocab    u64 count, then length-prefixed UTF-8 terms
//! labels   u64 count, then length-prefixed UTF-8 labels
//! payload  model parameters, f64 values as IEEE-754 bits
//! digest   32 bytes SHA-256 over everything above
//! ```
//!
//! The header is checked before the digest, so an archive written by a
//! newer format version is rejected without inspecting its payload.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::engine::PartitionedDataset;
use crate::ensemble::EnsembleModel;
use crate::error::{Error, Result};
use crate::forest::{DecisionTree, ForestModel, ForestParams, Node};
use crate::knn::{DistanceMetric, KnnKnowledgeBase, KnnModel};
use crate::mlp::{AdamConfig, MLPModel, NetParams, Params, TrainingMasterConfig};
use crate::model::{Algorithm, Classifier, SingleModel, TrainConfig, TrainedModel};
use crate::naive_bayes::NBModel;
use crate::svm::{HyperplaneModel, OvRModel, SvmHyperParams};
use crate::text::{FeatureVector, LabelSet, LabeledVector, Vocabulary};

pub const MAGIC: &[u8; 8] = b"PHRASAL\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 1;
const DIGEST_LEN: usize = 32;

/// A trained model with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArchive {
    pub config: TrainConfig,
    pub model: TrainedModel,
}

fn kind_tag(a: Algorithm) -> u8 {
    match a {
        Algorithm::NaiveBayes => 0,
        Algorithm::Knn => 1,
        Algorithm::Svm => 2,
        Algorithm::RandomForest => 3,
        Algorithm::Mlp => 4,
        Algorithm::Ensemble => 5,
    }
}

fn tag_kind(t: u8) -> Result<Algorithm> {
    Algorithm::ALL
        .into_iter()
        .find(|&a| kind_tag(a) == t)
        .ok_or_else(|| Error::CorruptArchive(format!("unknown model kind {t}")))
}

fn metric_tag(m: DistanceMetric) -> u8 {
    DistanceMetric::ALL.iter().position(|&x| x == m).unwrap() as u8
}

fn tag_metric(t: u8) -> Result<DistanceMetric> {
    DistanceMetric::ALL
        .get(usize::from(t))
        .copied()
        .ok_or_else(|| Error::CorruptArchive(format!("unknown metric {t}")))
}

/// Checks magic and version and returns the model kind.
pub fn read_header(bytes: &[u8]) -> Result<Algorithm> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::CorruptArchive("not a model archive".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    tag_kind(bytes[12])
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|&x| self.f64(x));
    }
    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn strs(&mut self, v: &[String]) {
        self.usize(v.len());
        v.iter().for_each(|s| self.str(s));
    }

    fn config(&mut self, c: &TrainConfig) {
        self.u64(c.seed);
        self.usize(c.partitions);
        self.f64(c.alpha);
        self.usize(c.k);
        self.u8(metric_tag(c.metric));
        self.f64(c.svm.reg_lambda);
        self.f64(c.svm.learning_rate);
        self.usize(c.svm.iterations);
        self.u64(c.svm.seed);
        self.usize(c.forest.n_trees);
        self.usize(c.forest.feature_subset.unwrap_or(0));
        self.usize(c.forest.max_depth);
        self.u64(c.forest.seed);
        self.usize(c.net.units);
        self.usize(c.net.epochs);
        self.f64(c.net.adam.learning_rate);
        self.f64(c.net.adam.beta1);
        self.f64(c.net.adam.beta2);
        self.f64(c.net.adam.epsilon);
        self.usize(c.master.worker_count);
        self.usize(c.master.averaging_frequency);
        self.usize(c.master.batch_size_per_worker);
    }

    fn nb(&mut self, m: &NBModel) {
        self.usize(m.dim);
        self.f64(m.alpha);
        self.usize(m.log_priors.len());
        self.f64s(&m.log_priors);
        m.log_likelihoods.iter().for_each(|r| self.f64s(r));
    }

    fn knn(&mut self, m: &KnnModel) {
        self.usize(m.k);
        self.u8(metric_tag(m.metric));
        self.usize(m.kb.n_classes);
        self.usize(m.kb.dim);
        self.usize(m.kb.instances.num_partitions());
        for part in m.kb.instances.partitions() {
            self.usize(part.len());
            for ex in part {
                self.usize(ex.label);
                self.usize(ex.features.nnz());
                for &(d, c) in ex.features.entries() {
                    self.usize(d);
                    self.u32(c);
                }
            }
        }
    }

    fn svm(&mut self, m: &OvRModel) {
        self.usize(m.per_class.len());
        self.usize(m.per_class.first().map_or(0, HyperplaneModel::dim));
        for h in &m.per_class {
            self.f64s(&h.w);
            self.f64(h.b);
        }
    }

    fn rf(&mut self, m: &ForestModel) {
        self.usize(m.n_classes);
        self.usize(m.dim);
        self.usize(m.feature_subset);
        self.u64(m.seed);
        self.usize(m.trees.len());
        for t in &m.trees {
            self.usize(t.root);
            self.usize(t.nodes.len());
            for n in &t.nodes {
                match *n {
                    Node::Leaf { class } => {
                        self.u8(0);
                        self.usize(class);
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        self.u8(1);
                        self.usize(feature);
                        self.f64(threshold);
                        self.usize(left);
                        self.usize(right);
                    }
                }
            }
        }
    }

    fn mlp(&mut self, m: &MLPModel) {
        self.usize(m.units);
        self.usize(m.dim);
        self.usize(m.n_classes);
        self.u64(m.seed);
        for block in m.params.blocks() {
            self.f64s(block);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptArchive(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt("unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length overflow"))
    }
    /// A count of items that each occupy at least `min_size` bytes.
    fn count(&mut self, min_size: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(min_size) > self.buf.len() - self.pos {
            return Err(corrupt("length exceeds archive size"));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(corrupt("length exceeds archive size"));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<String> {
        let n = self.count(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid UTF-8"))
    }
    fn strs(&mut self) -> Result<Vec<String>> {
        let n = self.count(8)?;
        (0..n).map(|_| self.str()).collect()
    }

    fn config(&mut self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            seed: self.u64()?,
            partitions: self.usize()?,
            alpha: self.f64()?,
            k: self.usize()?,
            metric: tag_metric(self.u8()?)?,
            svm: SvmHyperParams {
                reg_lambda: self.f64()?,
                learning_rate: self.f64()?,
                iterations: self.usize()?,
                seed: self.u64()?,
            },
            forest: ForestParams {
                n_trees: self.usize()?,
                feature_subset: Some(self.usize()?).filter(|&m| m > 0),
                max_depth: self.usize()?,
                seed: self.u64()?,
            },
            net: NetParams {
                units: self.usize()?,
                epochs: self.usize()?,
                adam: AdamConfig {
                    learning_rate: self.f64()?,
                    beta1: self.f64()?,
                    beta2: self.f64()?,
                    epsilon: self.f64()?,
                },
            },
            master: TrainingMasterConfig {
                worker_count: self.usize()?,
                averaging_frequency: self.usize()?,
                batch_size_per_worker: self.usize()?,
            },
        })
    }

    fn nb(&mut self) -> Result<NBModel> {
        let dim = self.usize()?;
        let alpha = self.f64()?;
        let n = self.count(8)?;
        let log_priors = self.f64s(n)?;
        let log_likelihoods = (0..n).map(|_| self.f64s(dim)).collect::<Result<_>>()?;
        Ok(NBModel {
            log_priors,
            log_likelihoods,
            alpha,
            dim,
        })
    }

    fn knn(&mut self) -> Result<KnnModel> {
        let k = self.usize()?;
        let metric = tag_metric(self.u8()?)?;
        let n_classes = self.usize()?;
        let dim = self.usize()?;
        let n_parts = self.count(8)?;
        let mut parts = Vec::with_capacity(n_parts);
        for _ in 0..n_parts {
            let len = self.count(16)?;
            let mut part = Vec::with_capacity(len);
            for _ in 0..len {
                let label = self.usize()?;
                let nnz = self.count(12)?;
                let mut pairs = Vec::with_capacity(nnz);
                for _ in 0..nnz {
                    pairs.push((self.usize()?, self.u32()?));
                }
                let features = FeatureVector::from_pairs(dim, pairs)?;
                if features.nnz() != nnz {
                    return Err(corrupt("non-canonical feature vector"));
                }
                part.push(LabeledVector { label, features });
            }
            parts.push(part);
        }
        let kb = KnnKnowledgeBase::new(PartitionedDataset::from_partitions(parts)?, n_classes)?;
        if kb.dim != dim || k == 0 {
            return Err(corrupt("inconsistent knowledge base"));
        }
        Ok(KnnModel { kb, k, metric })
    }

    fn svm(&mut self) -> Result<OvRModel> {
        let n = self.count(8)?;
        let dim = self.usize()?;
        let per_class = (0..n)
            .map(|_| {
                Ok(HyperplaneModel {
                    w: self.f64s(dim)?,
                    b: self.f64()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(OvRModel { per_class })
    }

    fn rf(&mut self) -> Result<ForestModel> {
        let n_classes = self.usize()?;
        let dim = self.usize()?;
        let feature_subset = self.usize()?;
        let seed = self.u64()?;
        let n_trees = self.count(16)?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let root = self.usize()?;
            let n_nodes = self.count(9)?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let node = match self.u8()? {
                    0 => Node::Leaf {
                        class: self.usize()?,
                    },
                    1 => Node::Split {
                        feature: self.usize()?,
                        threshold: self.f64()?,
                        left: self.usize()?,
                        right: self.usize()?,
                    },
                    t => return Err(corrupt(format!("unknown node tag {t}"))),
                };
                nodes.push(node);
            }
            validate_tree(&nodes, root, n_classes, dim)?;
            trees.push(DecisionTree { nodes, root });
        }
        Ok(ForestModel {
            trees,
            n_classes,
            dim,
            feature_subset,
            seed,
        })
    }

    fn mlp(&mut self) -> Result<MLPModel> {
        let units = self.usize()?;
        let dim = self.usize()?;
        let n_classes = self.usize()?;
        let seed = self.u64()?;
        let w1_len = units
            .checked_mul(dim)
            .ok_or_else(|| corrupt("network too large"))?;
        let w2_len = n_classes
            .checked_mul(units)
            .ok_or_else(|| corrupt("network too large"))?;
        Ok(MLPModel {
            params: Params {
                w1: self.f64s(w1_len)?,
                b1: self.f64s(units)?,
                w2: self.f64s(w2_len)?,
                b2: self.f64s(n_classes)?,
            },
            units,
            dim,
            n_classes,
            seed,
        })
    }
}

/// Children must point to later nodes so that every path terminates.
fn validate_tree(nodes: &[Node], root: usize, n_classes: usize, dim: usize) -> Result<()> {
    if root >= nodes.len() {
        return Err(corrupt("tree root out of range"));
    }
    for (i, n) in nodes.iter().enumerate() {
        match *n {
            Node::Leaf { class } if class >= n_classes => return Err(corrupt("leaf class out of range")),
            Node::Split {
                feature,
                left,
                right,
                ..
            } if feature >= dim || left <= i || right <= i || left >= nodes.len() || right >= nodes.len() => {
                return Err(corrupt("invalid tree node"))
            }
            _ => {}
        }
    }
    Ok(())
}

fn check_consistency(model: &TrainedModel) -> Result<()> {
    let dim = model.vocabulary().dim();
    let n = model.label_set().len();
    let check = |c: &Classifier| -> bool {
        match c {
            Classifier::NaiveBayes(m) => m.dim == dim && m.n_classes() == n,
            Classifier::Knn(m) => m.kb.dim == dim && m.kb.n_classes == n,
            Classifier::Svm(m) => m.per_class.len() == n && m.per_class.iter().all(|h| h.dim() == dim),
            Classifier::RandomForest(m) => m.dim == dim && m.n_classes == n,
            Classifier::Mlp(m) => m.dim == dim && m.n_classes == n,
        }
    };
    let ok = match model {
        TrainedModel::Single(m) => check(&m.classifier),
        TrainedModel::Ensemble(e) => e.members().iter().all(check),
    };
    if !ok {
        return Err(corrupt("model shape does not match vocabulary or label set"));
    }
    Ok(())
}

impl ModelArchive {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u8(kind_tag(self.model.algorithm()));
        w.config(&self.config);
        w.strs(self.model.vocabulary().terms());
        w.strs(self.model.label_set().labels());
        match &self.model {
            TrainedModel::Single(m) => match &m.classifier {
                Classifier::NaiveBayes(x) => w.nb(x),
                Classifier::Knn(x) => w.knn(x),
                Classifier::Svm(x) => w.svm(x),
                Classifier::RandomForest(x) => w.rf(x),
                Classifier::Mlp(x) => w.mlp(x),
            },
            TrainedModel::Ensemble(e) => {
                w.nb(&e.nb);
                w.knn(&e.knn);
                w.svm(&e.svm);
                w.rf(&e.rf);
                w.mlp(&e.dnn);
            }
        }
        let digest = Sha256::digest(&w.buf);
        w.buf.extend_from_slice(&digest);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let kind = read_header(bytes)?;
        if bytes.len() < HEADER_LEN + DIGEST_LEN {
            return Err(corrupt("truncated archive"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = Reader {
            buf: body,
            pos: HEADER_LEN,
        };
        let config = r.config()?;
        let vocabulary = Vocabulary::from_terms(r.strs()?)?;
        let label_set = LabelSet::new(r.strs()?);
        let single = |classifier| {
            TrainedModel::Single(SingleModel {
                vocabulary: vocabulary.clone(),
                label_set: label_set.clone(),
                classifier,
            })
        };
        let model = match kind {
            Algorithm::NaiveBayes => single(Classifier::NaiveBayes(r.nb()?)),
            Algorithm::Knn => single(Classifier::Knn(r.knn()?)),
            Algorithm::Svm => single(Classifier::Svm(r.svm()?)),
            Algorithm::RandomForest => single(Classifier::RandomForest(r.rf()?)),
            Algorithm::Mlp => single(Classifier::Mlp(r.mlp()?)),
            Algorithm::Ensemble => TrainedModel::Ensemble(EnsembleModel {
                nb: r.nb()?,
                knn: r.knn()?,
                svm: r.svm()?,
                rf: r.rf()?,
                dnn: r.mlp()?,
                label_set: label_set.clone(),
                vocabulary: vocabulary.clone(),
            }),
        };
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        check_consistency(&model)?;
        Ok(Self { config, model })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
