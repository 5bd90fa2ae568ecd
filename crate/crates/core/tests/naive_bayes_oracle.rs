use phrasal::engine::{Engine, PartitionedDataset};
use phrasal::naive_bayes::{predict_nb, train_nb};
use phrasal::{FeatureVector, LabeledVector};
use proptest::prelude::*;

/// Every bag over `dim` terms with per-term counts in `0..=max`.
fn all_bags(dim: usize, max: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|b| {
                (0..=max).map(move |c| {
                    let mut b = b.clone();
                    b.push(c);
                    b
                })
            })
            .collect();
    }
    out
}

/// Unnormalized posterior `p(c) * prod_k p(x_k|c)^n_k`, computed with plain
/// products straight from the raw counts.
fn oracle_scores(corpus: &[(usize, Vec<u32>)], query: &[u32], n_classes: usize, alpha: f64) -> Vec<f64> {
    let dim = query.len();
    (0..n_classes)
        .map(|c| {
            let docs = corpus.iter().filter(|(l, _)| *l == c).count();
            let mut term = vec![0u32; dim];
            for (_, bag) in corpus.iter().filter(|(l, _)| *l == c) {
                for (t, &n) in term.iter_mut().zip(bag) {
                    *t += n;
                }
            }
            let total: u32 = term.iter().sum();
            let mut p = docs as f64 / corpus.len() as f64;
            for k in 0..dim {
                let lik = (f64::from(term[k]) + alpha) / (f64::from(total) + alpha * dim as f64);
                for _ in 0..query[k] {
                    p *= lik;
                }
            }
            p
        })
        .collect()
}

fn to_dataset(corpus: &[(usize, Vec<u32>)], p: usize) -> PartitionedDataset<LabeledVector> {
    let v = corpus
        .iter()
        .map(|(l, b)| LabeledVector {
            label: *l,
            features: FeatureVector::from_dense(b),
        })
        .collect();
    PartitionedDataset::partition(v, p).unwrap()
}

/// Multisets of `size` items drawn from `0..n`, as non-decreasing index lists.
fn multisets(n: usize, size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in multisets(n, size - 1) {
        let lo = rest.last().copied().unwrap_or(0);
        for i in lo..n {
            let mut r = rest.clone();
            r.push(i);
            out.push(r);
        }
    }
    out
}

#[test]
fn argmax_matches_product_oracle_exhaustively() {
    let engine = Engine::new(1).unwrap();
    let mut checked = 0usize;
    for dim in 1..=3 {
        let bags = all_bags(dim, 2);
        let phrases: Vec<(usize, Vec<u32>)> = (0..2)
            .flat_map(|l| bags.iter().map(move |b| (l, b.clone())))
            .collect();
        for size in 1..=4 {
            for pick in multisets(phrases.len(), size) {
                let corpus: Vec<(usize, Vec<u32>)> = pick.iter().map(|&i| phrases[i].clone()).collect();
                let model = train_nb(&engine, &to_dataset(&corpus, 1), 2, 1.0).unwrap();
                for q in &bags {
                    let got = predict_nb(&model, &FeatureVector::from_dense(q)).unwrap().argmax();
                    let s = oracle_scores(&corpus, q, 2, 1.0);
                    let tie = (s[0] - s[1]).abs() <= 1e-12 * s[0].max(s[1]);
                    let want = usize::from(s[1] > s[0]);
                    assert!(tie || got == want, "corpus {corpus:?} query {q:?}: {got} vs {s:?}");
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 1_000_000);
}

#[test]
fn three_phrase_posterior_matches_oracle() {
    let engine = Engine::new(2).unwrap();
    let corpus = vec![(0, vec![2, 1, 0]), (1, vec![0, 1, 3]), (0, vec![1, 0, 1])];
    let model = train_nb(&engine, &to_dataset(&corpus, 2), 2, 1.0).unwrap();
    for (_, q) in &corpus {
        let s = oracle_scores(&corpus, q, 2, 1.0);
        let z: f64 = s.iter().sum();
        let got = predict_nb(&model, &FeatureVector::from_dense(q)).unwrap();
        for c in 0..2 {
            assert!((got[c] - s[c] / z).abs() < 1e-12);
        }
    }
}

#[test]
fn partition_count_does_not_change_model() {
    let engine = Engine::new(4).unwrap();
    let corpus: Vec<(usize, Vec<u32>)> = (0..40u32)
        .map(|i| ((i % 3) as usize, vec![i % 4, (i * 7) % 5, (i * i) % 3, i % 2]))
        .collect();
    let base = train_nb(&engine, &to_dataset(&corpus, 1), 3, 0.5).unwrap();
    for p in [2, 4, 8, 40] {
        assert_eq!(train_nb(&engine, &to_dataset(&corpus, p), 3, 0.5).unwrap(), base);
    }
}

#[test]
fn duplicating_data_without_rescaling_alpha_moves_the_posterior() {
    let engine = Engine::new(1).unwrap();
    let corpus = vec![(0, vec![2, 0]), (1, vec![0, 1])];
    let doubled: Vec<_> = corpus.iter().chain(&corpus).cloned().collect();
    let q = FeatureVector::from_dense(&[1, 0]);
    let a = predict_nb(&train_nb(&engine, &to_dataset(&corpus, 1), 2, 1.0).unwrap(), &q).unwrap();
    let b = predict_nb(&train_nb(&engine, &to_dataset(&doubled, 1), 2, 1.0).unwrap(), &q).unwrap();
    assert!((a[0] - b[0]).abs() > 1e-3);
}

fn small_corpus() -> impl Strategy<Value = Vec<(usize, Vec<u32>)>> {
    prop::collection::vec((0usize..3, prop::collection::vec(0u32..4, 5)), 1..12)
}

proptest! {
    #[test]
    fn duplication_with_scaled_alpha_is_invariant(
        corpus in small_corpus(),
        m in 2usize..5,
        alpha in 0.1f64..3.0,
        q in prop::collection::vec(0u32..4, 5),
    ) {
        let engine = Engine::new(2).unwrap();
        let dup: Vec<_> = (0..m).flat_map(|_| corpus.iter().cloned()).collect();
        let x = FeatureVector::from_dense(&q);
        let a = predict_nb(&train_nb(&engine, &to_dataset(&corpus, 2), 3, alpha).unwrap(), &x).unwrap();
        let b = predict_nb(&train_nb(&engine, &to_dataset(&dup, 3), 3, alpha * m as f64).unwrap(), &x).unwrap();
        for c in 0..3 {
            prop_assert!((a[c] - b[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_ignores_entry_order(
        corpus in small_corpus(),
        q in prop::collection::vec((0usize..5, 1u32..4), 0..8),
    ) {
        let engine = Engine::new(1).unwrap();
        let model = train_nb(&engine, &to_dataset(&corpus, 1), 3, 1.0).unwrap();
        let fwd = FeatureVector::from_pairs(5, q.clone()).unwrap();
        let rev = FeatureVector::from_pairs(5, q.into_iter().rev()).unwrap();
        prop_assert_eq!(predict_nb(&model, &fwd).unwrap(), predict_nb(&model, &rev).unwrap());
    }

    #[test]
    fn model_rows_are_distributions(corpus in small_corpus(), alpha in 0.01f64..5.0) {
        let engine = Engine::new(2).unwrap();
        let m = train_nb(&engine, &to_dataset(&corpus, 3), 3, alpha).unwrap();
        let priors: f64 = m.log_priors.iter().map(|x| x.exp()).sum();
        prop_assert!((priors - 1.0).abs() < 1e-9);
        for row in &m.log_likelihoods {
            prop_assert!((row.iter().map(|x| x.exp()).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
