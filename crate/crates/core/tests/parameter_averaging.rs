use phrasal::engine::{Engine, PartitionedDataset};
use phrasal::mlp::{
    epoch_order, init_mlp, train_on_shards, train_parameter_averaging, train_step_adam, AdamConfig, AdamState,
    MLPModel, NetParams, Params, TrainingMasterConfig,
};
use phrasal::{FeatureVector, LabeledVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize) -> Vec<LabeledVector> {
    (0..n)
        .map(|_| {
            let dense: Vec<u32> = (0..dim).map(|_| if rng.gen_bool(0.5) { rng.gen_range(1..4) } else { 0 }).collect();
            LabeledVector {
                label: rng.gen_range(0..classes),
                features: FeatureVector::from_dense(&dense),
            }
        })
        .collect()
}

fn random_net(rng: &mut ChaCha8Rng) -> MLPModel {
    let dim = rng.gen_range(1..7);
    let units = rng.gen_range(1..7);
    let classes = rng.gen_range(2..5);
    let mut m = init_mlp(dim, units, classes, rng.gen()).unwrap();
    for block in m.params.blocks_mut() {
        block.iter_mut().for_each(|w| *w = rng.gen_range(-1.5..1.5));
    }
    m
}

#[test]
fn backprop_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let delta = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let net = random_net(&mut rng);
        let n = rng.gen_range(1..5);
        let batch = random_batch(&mut rng, n, net.dim, net.n_classes);
        let (_, grad) = net.loss_and_gradient(&batch).unwrap();
        for (b, block) in grad.blocks().iter().enumerate() {
            for i in 0..block.len() {
                let mut plus = net.clone();
                plus.params.blocks_mut()[b][i] += delta;
                let mut minus = net.clone();
                minus.params.blocks_mut()[b][i] -= delta;
                let numeric = (plus.loss(&batch).unwrap() - minus.loss(&batch).unwrap()) / (2.0 * delta);
                let err = (block[i] - numeric).abs() / block[i].abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

fn toy_corpus(n: usize) -> Vec<LabeledVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    random_batch(&mut rng, n, 6, 3)
}

#[test]
fn single_worker_equals_sequential_adam() {
    let engine = Engine::new(4).unwrap();
    let data = toy_corpus(75);
    let cfg = TrainingMasterConfig {
        worker_count: 1,
        averaging_frequency: 3,
        batch_size_per_worker: 8,
    };
    let net = NetParams {
        units: 5,
        epochs: 2,
        adam: AdamConfig::default(),
    };
    let pd = PartitionedDataset::partition(data.clone(), 3).unwrap();
    let got = train_parameter_averaging(&engine, &pd, 3, &cfg, &net, 11).unwrap();

    let mut model = init_mlp(6, 5, 3, 11).unwrap();
    let mut adam = AdamState::new(&model, net.adam);
    for epoch in 0..2 {
        let order: Vec<LabeledVector> = epoch_order(data.len(), 11, epoch).into_iter().map(|i| data[i].clone()).collect();
        for batch in order.chunks(8) {
            train_step_adam(&mut model, &mut adam, batch).unwrap();
        }
    }
    assert_eq!(got, model);
}

#[test]
fn identical_shards_match_one_worker() {
    let engine = Engine::new(4).unwrap();
    let shard = toy_corpus(40);
    let init = init_mlp(6, 4, 3, 3).unwrap();
    let one = TrainingMasterConfig {
        worker_count: 1,
        averaging_frequency: 2,
        batch_size_per_worker: 4,
    };
    let four = TrainingMasterConfig { worker_count: 4, ..one };
    let a = train_on_shards(&engine, &init, std::slice::from_ref(&shard), &one, AdamConfig::default()).unwrap();
    let b = train_on_shards(&engine, &init, &vec![shard; 4], &four, AdamConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn two_workers_one_step_average_their_updates() {
    let engine = Engine::new(2).unwrap();
    let data = toy_corpus(8);
    let (s0, s1) = data.split_at(4);
    let init = init_mlp(6, 4, 3, 9).unwrap();
    let cfg = TrainingMasterConfig {
        worker_count: 2,
        averaging_frequency: 1,
        batch_size_per_worker: 4,
    };
    let got = train_on_shards(&engine, &init, &[s0.to_vec(), s1.to_vec()], &cfg, AdamConfig::default()).unwrap();
    let step = |shard: &[LabeledVector]| {
        let mut m = init.clone();
        let mut adam = AdamState::new(&m, AdamConfig::default());
        train_step_adam(&mut m, &mut adam, shard).unwrap();
        m.params
    };
    let (p0, p1) = (step(s0), step(s1));
    let expected = Params::mean([&p0, &p1].into_iter()).unwrap();
    for (g, e) in got.params.blocks().iter().zip(expected.blocks()) {
        for (x, y) in g.iter().zip(e) {
            assert!((x - y).abs() <= 1e-15);
        }
    }
    assert_ne!(p0, p1);
}

#[test]
fn training_is_independent_of_thread_count() {
    let data = toy_corpus(60);
    let pd = PartitionedDataset::partition(data, 4).unwrap();
    let cfg = TrainingMasterConfig {
        worker_count: 3,
        averaging_frequency: 2,
        batch_size_per_worker: 5,
    };
    let net = NetParams {
        units: 6,
        ..Default::default()
    };
    let a = train_parameter_averaging(&Engine::new(1).unwrap(), &pd, 3, &cfg, &net, 5).unwrap();
    let b = train_parameter_averaging(&Engine::new(8).unwrap(), &pd, 3, &cfg, &net, 5).unwrap();
    assert_eq!(a, b);
}
