//! In-process data-parallel execution: contiguous partitioning, parallel
//! map, deterministic reductions and a keyed minimum.
//!
//! Partition contents are processed concurrently on a worker pool, but
//! every merge happens in partition-index order, so results never depend on
//! scheduling.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// An ordered sequence split into `P >= 1` contiguous partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedDataset<T> {
    partitions: Vec<Vec<T>>,
}

impl<T> PartitionedDataset<T> {
    /// Splits `data` into `p` contiguous blocks. The first `len % p` blocks
    /// hold one extra element.
    pub fn partition(data: Vec<T>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidPartitionCount);
        }
        let len = data.len();
        let (base, extra) = (len / p, len % p);
        let mut partitions = Vec::with_capacity(p);
        let mut iter = data.into_iter();
        for i in 0..p {
            let size = base + usize::from(i < extra);
            partitions.push(iter.by_ref().take(size).collect());
        }
        Ok(Self { partitions })
    }

    pub fn from_partitions(partitions: Vec<Vec<T>>) -> Result<Self> {
        if partitions.is_empty() {
            return Err(Error::InvalidPartitionCount);
        }
        Ok(Self { partitions })
    }

    pub fn partitions(&self) -> &[Vec<T>] {
        &self.partitions
    }

    pub fn num_partitions(&self) -> usize {
        self.partitions.len()
    }

    pub fn partition_sizes(&self) -> Vec<usize> {
        self.partitions.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.partitions.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.partitions.iter().flatten()
    }

    /// Concatenates the partitions back into one sequence.
    pub fn collect(self) -> Vec<T> {
        self.partitions.into_iter().flatten().collect()
    }

    /// Same elements, re-split into `p` partitions.
    pub fn repartition(self, p: usize) -> Result<Self> {
        Self::partition(self.collect(), p)
    }
}

/// Handle to the worker pool that executes partition tasks.
#[derive(Clone)]
pub struct Engine {
    pool: Arc<rayon::ThreadPool>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("threads", &self.threads())
            .finish()
    }
}

impl Default for Engine {
    fn default() -> Self {
        let n = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        Self::new(n).expect("thread pool")
    }
}

impl Engine {
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(Error::InvalidPartitionCount);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidParams(e.to_string()))?;
        Ok(Self {
            pool: Arc::new(pool),
        })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Runs `f` on the pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    /// Applies `f` to every partition as a whole, in parallel. Output order
    /// matches partition order.
    pub fn map_partitions<T, U, F>(&self, pd: &PartitionedDataset<T>, f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(usize, &[T]) -> U + Sync + Send,
    {
        self.pool.install(|| {
            pd.partitions
                .par_iter()
                .enumerate()
                .map(|(i, p)| f(i, p))
                .collect()
        })
    }

    pub fn par_map<T, U, F>(&self, pd: &PartitionedDataset<T>, f: F) -> PartitionedDataset<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        let partitions = self.map_partitions(pd, |_, part| part.iter().map(&f).collect());
        PartitionedDataset { partitions }
    }

    /// Fallible element-wise map. On failure returns the first error in
    /// partition order, then element order.
    pub fn try_par_map<T, U, E, F>(
        &self,
        pd: &PartitionedDataset<T>,
        f: F,
    ) -> std::result::Result<PartitionedDataset<U>, E>
    where
        T: Sync,
        U: Send,
        E: Send,
        F: Fn(&T) -> std::result::Result<U, E> + Sync + Send,
    {
        let results = self.map_partitions(pd, |_, part| {
            part.iter().map(&f).collect::<std::result::Result<Vec<U>, E>>()
        });
        let partitions = results.into_iter().collect::<std::result::Result<_, E>>()?;
        Ok(PartitionedDataset { partitions })
    }

    /// Folds each partition sequentially from `identity`, then combines the
    /// partial results left to right in partition-index order.
    pub fn par_reduce<T, F>(&self, pd: &PartitionedDataset<T>, identity: T, op: F) -> T
    where
        T: Clone + Send + Sync,
        F: Fn(T, T) -> T + Sync + Send,
    {
        self.aggregate(pd, identity, |acc, x| op(acc, x.clone()), &op)
    }

    /// Generalized reduction: `fold` accumulates elements of one partition
    /// into an accumulator, `combine` merges accumulators in partition order.
    pub fn aggregate<T, A, F, C>(&self, pd: &PartitionedDataset<T>, zero: A, fold: F, combine: C) -> A
    where
        T: Sync,
        A: Clone + Send + Sync,
        F: Fn(A, &T) -> A + Sync + Send,
        C: Fn(A, A) -> A,
    {
        let partials = self.map_partitions(pd, |_, part| part.iter().fold(zero.clone(), &fold));
        partials.into_iter().fold(zero, combine)
    }

    /// Minimum value per key across all partitions, keys in sorted order.
    /// NaN values are ignored.
    pub fn group_min_by_key<K>(&self, pd: &PartitionedDataset<(K, f64)>) -> BTreeMap<K, f64>
    where
        K: Ord + Clone + Send + Sync,
    {
        let partials = self.map_partitions(pd, |_, part| {
            let mut m = BTreeMap::new();
            for (k, v) in part {
                merge_min(&mut m, k.clone(), *v);
            }
            m
        });
        let mut out = BTreeMap::new();
        for partial in partials {
            for (k, v) in partial {
                merge_min(&mut out, k, v);
            }
        }
        out
    }
}

fn merge_min<K: Ord>(m: &mut BTreeMap<K, f64>, k: K, v: f64) {
    if v.is_nan() {
        return;
    }
    m.entry(k)
        .and_modify(|cur| {
            if v < *cur {
                *cur = v;
            }
        })
        .or_insert(v);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn engine() -> Engine {
        Engine::new(4).unwrap()
    }

    #[test]
    fn partition_sizes_follow_block_rule() {
        let pd = PartitionedDataset::partition((0..10).collect(), 3).unwrap();
        assert_eq!(pd.partition_sizes(), vec![4, 3, 3]);
        let pd = PartitionedDataset::partition(vec![1, 2], 5).unwrap();
        assert_eq!(pd.partition_sizes(), vec![1, 1, 0, 0, 0]);
        let pd = PartitionedDataset::partition(vec![7, 8, 9], 1).unwrap();
        assert_eq!(pd.partitions(), &[vec![7, 8, 9]]);
        assert!(matches!(
            PartitionedDataset::partition(vec![1], 0),
            Err(Error::InvalidPartitionCount)
        ));
    }

    #[test]
    fn par_map_examples() {
        let e = engine();
        let pd = PartitionedDataset::from_partitions(vec![vec![1, 2], vec![3]]).unwrap();
        assert_eq!(e.par_map(&pd, |x| *x), pd);
        let inc = e.par_map(&pd, |x| x + 1);
        assert_eq!(inc.partitions(), &[vec![2, 3], vec![4]]);
    }

    #[test]
    fn try_par_map_reports_first_error_in_order() {
        let e = engine();
        let pd = PartitionedDataset::from_partitions(vec![
            vec![0, 1, 2, 3, 4],
            vec![5, 6, 7],
        ])
        .unwrap();
        for _ in 0..20 {
            let r = e.try_par_map(&pd, |&x| if x == 3 || x == 6 { Err(x) } else { Ok(x) });
            assert_eq!(r, Err(3));
        }
    }

    #[test]
    fn par_reduce_examples() {
        let e = engine();
        let pd = PartitionedDataset::from_partitions(vec![vec![1, 2], vec![3]]).unwrap();
        assert_eq!(e.par_reduce(&pd, 0, |a, b| a + b), 6);
        let empty = PartitionedDataset::<i64>::partition(vec![], 3).unwrap();
        assert_eq!(e.par_reduce(&empty, 0, |a, b| a + b), 0);
        let pd = PartitionedDataset::from_partitions(vec![vec![5], vec![2, 9]]).unwrap();
        assert_eq!(e.par_reduce(&pd, i64::MAX, i64::min), 2);
    }

    #[test]
    fn group_min_examples() {
        let e = engine();
        let data = vec![("A", 0.2), ("A", 0.5), ("B", 0.1)];
        let pd = PartitionedDataset::partition(data.clone(), 2).unwrap();
        let m = e.group_min_by_key(&pd);
        assert_eq!(m.into_iter().collect::<Vec<_>>(), vec![("A", 0.2), ("B", 0.1)]);

        let pd = PartitionedDataset::partition(vec![("A", 0.0)], 1).unwrap();
        assert_eq!(e.group_min_by_key(&pd).get("A"), Some(&0.0));

        let one = e.group_min_by_key(&PartitionedDataset::partition(data.clone(), 1).unwrap());
        let four = e.group_min_by_key(&PartitionedDataset::partition(data, 4).unwrap());
        assert_eq!(one, four);
    }

    #[test]
    fn single_thread_pool_matches() {
        let one = Engine::new(1).unwrap();
        let many = engine();
        let pd = PartitionedDataset::partition((0..1000u64).collect(), 7).unwrap();
        let f = |x: &u64| x * x % 13;
        assert_eq!(one.par_map(&pd, f), many.par_map(&pd, f));
        assert_eq!(
            one.par_reduce(&pd, 0, |a, b| a + b),
            many.par_reduce(&pd, 0, |a, b| a + b)
        );
    }

    proptest! {
        #[test]
        fn partition_concatenation_roundtrips(data in prop::collection::vec(any::<i32>(), 0..200), p in 1usize..20) {
            let pd = PartitionedDataset::partition(data.clone(), p).unwrap();
            prop_assert_eq!(pd.num_partitions(), p);
            prop_assert_eq!(pd.len(), data.len());
            let sizes = pd.partition_sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert_eq!(pd.collect(), data);
        }

        #[test]
        fn integer_reduce_is_partition_invariant(data in prop::collection::vec(-1000i64..1000, 0..300), p in 1usize..16, q in 1usize..16) {
            let e = engine();
            let a = e.par_reduce(&PartitionedDataset::partition(data.clone(), p).unwrap(), 0, |a, b| a + b);
            let b = e.par_reduce(&PartitionedDataset::partition(data.clone(), q).unwrap(), 0, |a, b| a + b);
            prop_assert_eq!(a, b);
            prop_assert_eq!(a, data.iter().sum::<i64>());
        }

        #[test]
        fn float_reduce_within_tolerance_across_partitions(data in prop::collection::vec(-1e3f64..1e3, 1..300), p in 1usize..16, q in 1usize..16) {
            let e = engine();
            let a = e.par_reduce(&PartitionedDataset::partition(data.clone(), p).unwrap(), 0.0, |a, b| a + b);
            let b = e.par_reduce(&PartitionedDataset::partition(data.clone(), q).unwrap(), 0.0, |a, b| a + b);
            let scale = data.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
            prop_assert!((a - b).abs() <= 1e-9 * scale);
        }

        #[test]
        fn par_map_commutes_with_partition(data in prop::collection::vec(any::<i32>(), 0..200), p in 1usize..12) {
            let e = engine();
            let f = |x: &i32| x.wrapping_mul(3) ^ 5;
            let mapped: Vec<i32> = data.iter().map(f).collect();
            let lhs = PartitionedDataset::partition(mapped, p).unwrap();
            let rhs = e.par_map(&PartitionedDataset::partition(data, p).unwrap(), f);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn group_min_partition_invariant(data in prop::collection::vec((0u8..5, -10.0f64..10.0), 0..100), p in 1usize..10, q in 1usize..10) {
            let e = engine();
            let a = e.group_min_by_key(&PartitionedDataset::partition(data.clone(), p).unwrap());
            let b = e.group_min_by_key(&PartitionedDataset::partition(data, q).unwrap());
            prop_assert_eq!(a, b);
        }
    }
}
