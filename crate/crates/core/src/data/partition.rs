use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

/// Smallest shard `partition_nonuniform` will produce.
pub const NONUNIFORM_MIN_SHARD: usize = 8;

// Width of the uniform jitter added to labels before the sort that orders
// samples for non-uniform cutting. Values above 1 let adjacent classes mix.
const LABEL_SKEW_WIDTH: f64 = 3.0;

/// Disjoint per-worker sample indices into a [`Dataset`], optionally split
/// into local train and test parts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    shards: Vec<Vec<usize>>,
    splits: Option<Vec<TrainTest>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrainTest {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Partition {
    pub fn from_shards(shards: Vec<Vec<usize>>) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::Partition("no workers".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for (k, shard) in shards.iter().enumerate() {
            if shard.is_empty() {
                return Err(Error::Partition(format!("worker {k} has an empty shard")));
            }
            if let Some(dup) = shard.iter().find(|&&i| !seen.insert(i)) {
                return Err(Error::Partition(format!("sample {dup} assigned twice")));
            }
        }
        Ok(Self { shards, splits: None })
    }

    pub fn n_workers(&self) -> usize {
        self.shards.len()
    }

    pub fn shard(&self, k: usize) -> &[usize] {
        &self.shards[k]
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }

    pub fn is_split(&self) -> bool {
        self.splits.is_some()
    }

    /// Training indices of worker `k`; the whole shard if unsplit.
    pub fn train(&self, k: usize) -> &[usize] {
        match &self.splits {
            Some(s) => &s[k].train,
            None => &self.shards[k],
        }
    }

    /// Test indices of worker `k`; empty if unsplit.
    pub fn test(&self, k: usize) -> &[usize] {
        match &self.splits {
            Some(s) => &s[k].test,
            None => &[],
        }
    }

    pub fn summary(&self, ds: &Dataset) -> PartitionSummary {
        PartitionSummary {
            workers: (0..self.n_workers())
                .map(|k| WorkerSummary {
                    worker: k,
                    size: self.shards[k].len(),
                    train: self.train(k).len(),
                    test: self.test(k).len(),
                    label_histogram: ds.label_histogram(&self.shards[k]),
                })
                .collect(),
        }
    }
}

/// Per-worker shard sizes and label histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub workers: Vec<WorkerSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerSummary {
    pub worker: usize,
    pub size: usize,
    pub train: usize,
    pub test: usize,
    pub label_histogram: Vec<usize>,
}

/// Shuffles and cuts into equal shards; the remainder is dropped.
pub fn partition_iid(ds: &Dataset, n_workers: usize, seed: u64) -> Result<Partition> {
    if n_workers == 0 {
        return Err(Error::Partition("n_workers must be positive".into()));
    }
    let size = ds.len() / n_workers;
    if size == 0 {
        return Err(Error::Partition(format!(
            "{} samples cannot fill {n_workers} shards",
            ds.len()
        )));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut stream(seed, Domain::Partition, 0));
    Partition::from_shards(idx.chunks_exact(size).take(n_workers).map(<[usize]>::to_vec).collect())
}

/// Pathological non-iid split: sort by label, cut into
/// `n_workers * shards_per_worker` equal contiguous shards (dropping the
/// remainder), and hand each worker `shards_per_worker` random shards.
pub fn partition_label_shards(
    ds: &Dataset,
    n_workers: usize,
    shards_per_worker: usize,
    seed: u64,
) -> Result<Partition> {
    if n_workers == 0 || shards_per_worker == 0 {
        return Err(Error::Partition(
            "n_workers and shards_per_worker must be positive".into(),
        ));
    }
    let total = n_workers * shards_per_worker;
    let shard_size = ds.len() / total;
    if shard_size == 0 {
        return Err(Error::Partition(format!(
            "{} samples cannot fill {total} shards",
            ds.len()
        )));
    }
    let mut sorted: Vec<usize> = (0..ds.len()).collect();
    sorted.sort_by_key(|&i| (ds.label(i), i));
    let pieces: Vec<&[usize]> = sorted.chunks_exact(shard_size).take(total).collect();

    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut stream(seed, Domain::Partition, 1));
    let shards = order
        .chunks_exact(shards_per_worker)
        .map(|ids| ids.iter().flat_map(|&s| pieces[s].iter().copied()).collect())
        .collect();
    Partition::from_shards(shards)
}

/// One worker per distinct subject id (ascending), rows routed by id.
pub fn partition_by_subject(ds: &Dataset, subject_ids: &[i64]) -> Result<Partition> {
    if subject_ids.len() != ds.len() {
        return Err(Error::Partition(format!(
            "{} subject ids for {} rows",
            subject_ids.len(),
            ds.len()
        )));
    }
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &s) in subject_ids.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    if let Some((s, rows)) = groups.iter().find(|(_, rows)| rows.len() < 4) {
        return Err(Error::Partition(format!(
            "subject {s} has {} samples, at least 4 are needed",
            rows.len()
        )));
    }
    Partition::from_shards(groups.into_values().collect())
}

/// Unequal shards with varying label mix.
///
/// Shard sizes are proportional to seeded weights in `[0.5, 1.5)`, at least
/// [`NONUNIFORM_MIN_SHARD`] each; samples are ordered by label plus a seeded
/// jitter and cut contiguously, so label proportions drift across workers.
/// For binary data every shard is then repaired to contain both classes.
pub fn partition_nonuniform(ds: &Dataset, n_workers: usize, seed: u64) -> Result<Partition> {
    if n_workers == 0 {
        return Err(Error::Partition("n_workers must be positive".into()));
    }
    if n_workers == 1 {
        return Partition::from_shards(vec![(0..ds.len()).collect()]);
    }
    let n = ds.len();
    if n < NONUNIFORM_MIN_SHARD * n_workers {
        return Err(Error::Partition(format!(
            "{n} samples cannot give {n_workers} workers {NONUNIFORM_MIN_SHARD} each"
        )));
    }
    let binary = ds.class_count() == 2;
    let all: Vec<usize> = (0..n).collect();
    let hist = ds.label_histogram(&all);
    if binary && hist.iter().any(|&c| c < n_workers) {
        return Err(Error::Partition(format!(
            "class counts {hist:?} cannot place both classes on {n_workers} workers"
        )));
    }

    let mut rng = stream(seed, Domain::Partition, 2);
    let weights: Vec<f64> = (0..n_workers).map(|_| rng.random_range(0.5..1.5)).collect();
    let total_w: f64 = weights.iter().sum();
    let mut sizes: Vec<usize> = weights
        .iter()
        .map(|w| ((n as f64 * w / total_w).floor() as usize).max(NONUNIFORM_MIN_SHARD))
        .collect();
    while sizes.iter().sum::<usize>() > n {
        let (k, _) = sizes
            .iter()
            .enumerate()
            .max_by_key(|&(k, &s)| (s, std::cmp::Reverse(k)))
            .expect("non-empty");
        sizes[k] -= 1;
    }

    let mut keyed: Vec<(f64, usize)> = all
        .iter()
        .map(|&i| (ds.label(i) as f64 + rng.random_range(0.0..LABEL_SKEW_WIDTH), i))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut order: Vec<usize> = (0..n_workers).collect();
    order.shuffle(&mut rng);

    let mut shards = vec![Vec::new(); n_workers];
    let mut cursor = 0;
    for &k in &order {
        shards[k] = keyed[cursor..cursor + sizes[k]].iter().map(|&(_, i)| i).collect();
        cursor += sizes[k];
    }
    if binary {
        ensure_both_classes(ds, &mut shards);
    }
    Partition::from_shards(shards)
}

// Swaps samples between shards until every shard holds both classes. The
// donor always has at least two samples of the missing class, so it keeps
// both classes after the swap.
fn ensure_both_classes(ds: &Dataset, shards: &mut [Vec<usize>]) {
    for k in 0..shards.len() {
        for class in 0..2 {
            if shards[k].iter().any(|&i| ds.label(i) == class) {
                continue;
            }
            let count = |s: &Vec<usize>| s.iter().filter(|&&i| ds.label(i) == class).count();
            let donor = (0..shards.len())
                .filter(|&j| j != k)
                .max_by_key(|&j| (count(&shards[j]), std::cmp::Reverse(j)))
                .expect("at least two shards");
            debug_assert!(count(&shards[donor]) >= 2);
            let give = shards[donor]
                .iter()
                .rposition(|&i| ds.label(i) == class)
                .expect("donor holds the class");
            let take = 0; // shard k holds only the other class
            let a = shards[donor][give];
            let b = shards[k][take];
            shards[donor][give] = b;
            shards[k][take] = a;
        }
    }
}

/// Per-worker seeded shuffle, then the first `floor(train_fraction * n)`
/// samples train and the rest test.
pub fn split_train_test(p: &Partition, train_fraction: f64, seed: u64) -> Result<Partition> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Partition(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let splits = p
        .shards
        .iter()
        .enumerate()
        .map(|(k, shard)| {
            let n = shard.len();
            let n_train = (train_fraction * n as f64 + 1e-9).floor() as usize;
            if n_train == 0 || n_train >= n {
                return Err(Error::Partition(format!(
                    "worker {k}: {n} samples leave an empty split at fraction {train_fraction}"
                )));
            }
            let mut idx = shard.clone();
            idx.shuffle(&mut stream(seed, Domain::Split, k as u64));
            let test = idx.split_off(n_train);
            Ok(TrainTest { train: idx, test })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition {
        shards: p.shards.clone(),
        splits: Some(splits),
    })
}

/// Seeded split of `0..n` into (kept, held-out) index lists.
pub fn holdout_split(n: usize, holdout_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::Partition(format!(
            "holdout fraction must lie in (0, 1), got {holdout_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, Domain::Holdout, 0));
    let n_hold = (holdout_fraction * n as f64).round() as usize;
    if n_hold == 0 || n_hold >= n {
        return Err(Error::Partition(format!("holdout of {n_hold} from {n} samples")));
    }
    let held = idx.split_off(n - n_hold);
    idx.sort_unstable();
    let mut held = held;
    held.sort_unstable();
    Ok((idx, held))
}
