//! Single-hidden-layer network (ELU hidden units, softmax output) trained
//! with Adam on categorical cross-entropy, plus the parameter-averaging
//! training master that runs one replica per worker.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::{Engine, PartitionedDataset};
use crate::error::{Error, Result};
use crate::naive_bayes::check_corpus;
use crate::probs::ClassProbabilities;
use crate::text::{FeatureVector, LabeledVector};

/// The four parameter blocks of the network. Also used for gradients and
/// Adam moments, which share the same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// Hidden weights, `units × dim`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Output weights, `n_classes × units`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Params {
    fn zeros_like(other: &Params) -> Self {
        Self {
            w1: vec![0.0; other.w1.len()],
            b1: vec![0.0; other.b1.len()],
            w2: vec![0.0; other.w2.len()],
            b2: vec![0.0; other.b2.len()],
        }
    }

    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Element-wise mean, accumulated as a running mean so that averaging
    /// identical replicas reproduces them exactly.
    pub fn mean<'a>(mut items: impl Iterator<Item = &'a Params>) -> Option<Params> {
        let mut acc = items.next()?.clone();
        for (i, p) in items.enumerate() {
            let n = (i + 2) as f64;
            for (dst, src) in acc.blocks_mut().into_iter().zip(p.blocks()) {
                for (a, &x) in dst.iter_mut().zip(src) {
                    *a += (x - *a) / n;
                }
            }
        }
        Some(acc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MLPModel {
    pub params: Params,
    pub units: usize,
    pub dim: usize,
    pub n_classes: usize,
    pub seed: u64,
}

pub fn elu(z: f64) -> f64 {
    if z >= 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

/// Uniform weights in `±1/√fan_in`, zero biases.
pub fn init_mlp(dim: usize, units: usize, n_classes: usize, seed: u64) -> Result<MLPModel> {
    if dim == 0 || units == 0 || n_classes == 0 {
        return Err(Error::InvalidParams(
            "network dimensions must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
        let scale = 1.0 / (fan_in as f64).sqrt();
        (0..n)
            .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale)
            .collect()
    };
    let w1 = uniform(units * dim, dim);
    let w2 = uniform(n_classes * units, units);
    Ok(MLPModel {
        params: Params {
            w1,
            b1: vec![0.0; units],
            w2,
            b2: vec![0.0; n_classes],
        },
        units,
        dim,
        n_classes,
        seed,
    })
}

struct Activations {
    z1: Vec<f64>,
    h: Vec<f64>,
    logits: Vec<f64>,
}

impl MLPModel {
    fn activations(&self, x: &FeatureVector) -> Activations {
        let p = &self.params;
        let mut z1 = p.b1.clone();
        for (u, z) in z1.iter_mut().enumerate() {
            let row = &p.w1[u * self.dim..(u + 1) * self.dim];
            for &(k, c) in x.entries() {
                *z += row[k] * f64::from(c);
            }
        }
        let h: Vec<f64> = z1.iter().map(|&z| elu(z)).collect();
        let logits = (0..self.n_classes)
            .map(|j| {
                let row = &p.w2[j * self.units..(j + 1) * self.units];
                p.b2[j] + row.iter().zip(&h).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        Activations { z1, h, logits }
    }

    /// Mean categorical cross-entropy over `batch`.
    pub fn loss(&self, batch: &[LabeledVector]) -> Result<f64> {
        let mut total = 0.0;
        for ex in batch {
            ex.features.check_dim(self.dim)?;
            total -= log_softmax(&self.activations(&ex.features).logits)[ex.label];
        }
        Ok(total / batch.len() as f64)
    }

    /// Loss and its exact gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, batch: &[LabeledVector]) -> Result<(f64, Params)> {
        if batch.is_empty() {
            return Err(Error::InvalidParams("empty minibatch".into()));
        }
        let p = &self.params;
        let mut g = Params::zeros_like(p);
        let mut loss = 0.0;
        let mut dh = vec![0.0; self.units];
        for ex in batch {
            ex.features.check_dim(self.dim)?;
            if ex.label >= self.n_classes {
                return Err(Error::InvalidParams(format!("label {} out of range", ex.label)));
            }
            let a = self.activations(&ex.features);
            let logp = log_softmax(&a.logits);
            loss -= logp[ex.label];

            dh.iter_mut().for_each(|d| *d = 0.0);
            for (j, lp) in logp.iter().enumerate() {
                let dz2 = lp.exp() - f64::from(u8::from(j == ex.label));
                g.b2[j] += dz2;
                let w_row = &p.w2[j * self.units..(j + 1) * self.units];
                let g_row = &mut g.w2[j * self.units..(j + 1) * self.units];
                for u in 0..self.units {
                    g_row[u] += dz2 * a.h[u];
                    dh[u] += dz2 * w_row[u];
                }
            }
            for (u, d) in dh.iter().enumerate() {
                let dz1 = d * if a.z1[u] >= 0.0 { 1.0 } else { a.h[u] + 1.0 };
                g.b1[u] += dz1;
                let g_row = &mut g.w1[u * self.dim..(u + 1) * self.dim];
                for &(k, c) in ex.features.entries() {
                    g_row[k] += dz1 * f64::from(c);
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        for block in g.blocks_mut() {
            block.iter_mut().for_each(|x| *x *= scale);
        }
        Ok((loss * scale, g))
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|z| z - lse).collect()
}

/// `softmax(W2 · ELU(W1 · x + b1) + b2)`.
pub fn forward(model: &MLPModel, x: &FeatureVector) -> Result<ClassProbabilities> {
    x.check_dim(model.dim)?;
    Ok(ClassProbabilities::from_log_scores(
        &model.activations(x).logits,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Params,
    pub v: Params,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(model: &MLPModel, config: AdamConfig) -> Self {
        Self {
            m: Params::zeros_like(&model.params),
            v: Params::zeros_like(&model.params),
            t: 0,
            config,
        }
    }
}

/// One Adam update on the mean cross-entropy of `batch`. Returns the batch
/// loss measured before the update.
pub fn train_step_adam(
    model: &mut MLPModel,
    adam: &mut AdamState,
    batch: &[LabeledVector],
) -> Result<f64> {
    let (loss, grad) = model.loss_and_gradient(batch)?;
    adam.t += 1;
    let AdamConfig {
        learning_rate: lr,
        beta1,
        beta2,
        epsilon,
    } = adam.config;
    let bc1 = 1.0 - beta1.powf(adam.t as f64);
    let bc2 = 1.0 - beta2.powf(adam.t as f64);
    let blocks = model
        .params
        .blocks_mut()
        .into_iter()
        .zip(adam.m.blocks_mut())
        .zip(adam.v.blocks_mut())
        .zip(grad.blocks());
    for (((theta, m), v), g) in blocks {
        for i in 0..theta.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingMasterConfig {
    pub worker_count: usize,
    /// Minibatches each worker runs between averaging barriers.
    pub averaging_frequency: usize,
    pub batch_size_per_worker: usize,
}

impl Default for TrainingMasterConfig {
    fn default() -> Self {
        Self {
            worker_count: 4,
            averaging_frequency: 5,
            batch_size_per_worker: 32,
        }
    }
}

impl TrainingMasterConfig {
    fn validate(&self) -> Result<()> {
        if self.worker_count == 0 || self.averaging_frequency == 0 || self.batch_size_per_worker == 0 {
            return Err(Error::InvalidParams(
                "workers, averaging frequency and batch size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetParams {
    pub units: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
}

impl Default for NetParams {
    fn default() -> Self {
        Self {
            units: 128,
            epochs: 1,
            adam: AdamConfig::default(),
        }
    }
}

/// A model replica with its private optimizer state.
#[derive(Debug, Clone)]
struct Worker {
    model: MLPModel,
    adam: AdamState,
}

/// Visiting order of a corpus of `n` examples during `epoch`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn run_epoch(
    engine: &Engine,
    workers: &mut [Worker],
    shards: &[Vec<LabeledVector>],
    cfg: &TrainingMasterConfig,
) -> Result<()> {
    let batches: Vec<Vec<&[LabeledVector]>> = shards
        .iter()
        .map(|s| s.chunks(cfg.batch_size_per_worker).collect())
        .collect();
    let longest = batches.iter().map(Vec::len).max().unwrap_or(0);
    let rounds = longest.div_ceil(cfg.averaging_frequency);
    for r in 0..rounds {
        let lo = r * cfg.averaging_frequency;
        let results: Vec<Result<()>> = engine.install(|| {
            workers
                .par_iter_mut()
                .zip(&batches)
                .map(|(w, mine)| {
                    let hi = (lo + cfg.averaging_frequency).min(mine.len());
                    for batch in mine.get(lo..hi).unwrap_or(&[]) {
                        train_step_adam(&mut w.model, &mut w.adam, batch)?;
                    }
                    Ok(())
                })
                .collect()
        });
        results.into_iter().collect::<Result<Vec<()>>>()?;
        if workers.len() > 1 {
            let avg = Params::mean(workers.iter().map(|w| &w.model.params)).expect("workers");
            for w in workers.iter_mut() {
                w.model.params = avg.clone();
            }
        }
    }
    Ok(())
}

/// One epoch of parameter-averaged training where worker `i` iterates
/// `shards[i]` in order, starting from `init` with fresh optimizer state.
pub fn train_on_shards(
    engine: &Engine,
    init: &MLPModel,
    shards: &[Vec<LabeledVector>],
    cfg: &TrainingMasterConfig,
    adam: AdamConfig,
) -> Result<MLPModel> {
    cfg.validate()?;
    if shards.len() != cfg.worker_count {
        return Err(Error::InvalidParams(format!(
            "{} shards for {} workers",
            shards.len(),
            cfg.worker_count
        )));
    }
    let mut workers = vec![
        Worker {
            model: init.clone(),
            adam: AdamState::new(init, adam),
        };
        cfg.worker_count
    ];
    run_epoch(engine, &mut workers, shards, cfg)?;
    Ok(workers.swap_remove(0).model)
}

/// Shuffles the corpus each epoch, deals it into contiguous worker shards
/// and trains one replica per worker, averaging parameters every
/// `averaging_frequency` minibatches and at the end of each epoch.
pub fn train_parameter_averaging(
    engine: &Engine,
    corpus: &PartitionedDataset<LabeledVector>,
    n_classes: usize,
    cfg: &TrainingMasterConfig,
    net: &NetParams,
    seed: u64,
) -> Result<MLPModel> {
    cfg.validate()?;
    let dim = check_corpus(corpus, n_classes)?;
    if net.epochs == 0 {
        return Err(Error::InvalidParams("epochs must be >= 1".into()));
    }
    let data: Vec<&LabeledVector> = corpus.iter().collect();
    let init = init_mlp(dim, net.units, n_classes, seed)?;
    let mut workers = vec![
        Worker {
            adam: AdamState::new(&init, net.adam),
            model: init,
        };
        cfg.worker_count
    ];
    for epoch in 0..net.epochs {
        let shuffled: Vec<LabeledVector> = epoch_order(data.len(), seed, epoch)
            .into_iter()
            .map(|i| data[i].clone())
            .collect();
        let shards = PartitionedDataset::partition(shuffled, cfg.worker_count)?;
        run_epoch(engine, &mut workers, shards.partitions(), cfg)?;
    }
    Ok(workers.swap_remove(0).model)
}
