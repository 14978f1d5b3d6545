//! Feature-table datasets: CSV ingestion, synthetic blobs, and per-worker
//! partitioning.

mod partition;

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

pub use partition::{
    holdout_split, partition_by_subject, partition_iid, partition_label_shards,
    partition_nonuniform, split_train_test, Partition, PartitionSummary, TrainTest,
    WorkerSummary, NONUNIFORM_MIN_SHARD,
};

/// Labelled samples stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<usize>,
    class_count: usize,
}

/// A borrowed set of samples, the unit models evaluate on.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub features: Vec<&'a [f64]>,
    pub labels: Vec<usize>,
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != n_features) {
            return Err(Error::InvalidDataset(format!(
                "row {i} has {} features, expected {n_features}",
                rows[i].len()
            )));
        }
        Self::from_flat(rows.concat(), n_features, labels, class_count)
    }

    pub fn from_flat(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidDataset("samples need at least one feature".into()));
        }
        if class_count < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 classes, got {class_count}"
            )));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::InvalidDataset(format!(
                "{} feature values do not fill {} rows of width {n_features}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::InvalidDataset(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            n_features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn batch(&self, indices: &[usize]) -> Batch<'_> {
        Batch {
            features: indices.iter().map(|&i| self.row(i)).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn all(&self) -> Batch<'_> {
        Batch {
            features: self.features.chunks_exact(self.n_features).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Copies the selected rows, in the given order, into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n_features: self.n_features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    pub fn label_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut hist = vec![0; self.class_count];
        for &i in indices {
            hist[self.labels[i]] += 1;
        }
        hist
    }
}

/// How to read a CSV table.
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    pub label_column: usize,
    pub subject_column: Option<usize>,
    pub has_header: bool,
}

/// A parsed CSV table.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    /// Per-row subject ids when a subject column was requested.
    pub subjects: Option<Vec<i64>>,
    /// Original label values, indexed by the dense label they map to.
    pub label_values: Vec<i64>,
}

/// Reads a numeric CSV table. Labels are remapped to `0..C` in ascending
/// order of their original values; rows keep file order.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<LoadedCsv> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Ingestion {
                row: 0,
                message: format!("{other:?}"),
            },
        })?;

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    let mut subjects = opts.subject_column.map(|_| Vec::new());
    let mut width = None;

    for record in reader.records() {
        let record = record.map_err(|e| Error::Ingestion {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(0, |p| p.line());
        let ingest = |message: String| Error::Ingestion { row, message };

        if opts.label_column >= record.len() {
            return Err(ingest(format!(
                "label column {} out of range for {} columns",
                opts.label_column,
                record.len()
            )));
        }
        if let Some(s) = opts.subject_column {
            if s >= record.len() || s == opts.label_column {
                return Err(ingest(format!("invalid subject column {s}")));
            }
        }

        let mut n = 0;
        for (col, cell) in record.iter().enumerate() {
            if col == opts.label_column {
                raw_labels.push(parse_integer(cell).map_err(|m| ingest(format!("column {col}: {m}")))?);
            } else if Some(col) == opts.subject_column {
                let id = parse_integer(cell).map_err(|m| ingest(format!("column {col}: {m}")))?;
                subjects.as_mut().expect("subject column requested").push(id);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| ingest(format!("column {col}: `{cell}` is not numeric")))?;
                if !v.is_finite() {
                    return Err(ingest(format!("column {col}: non-finite value")));
                }
                features.push(v);
                n += 1;
            }
        }
        match width {
            None => width = Some(n),
            Some(w) if w != n => {
                return Err(ingest(format!("expected {w} feature columns, found {n}")))
            }
            _ => {}
        }
    }

    let n_features = width.ok_or_else(|| Error::InvalidDataset("file has no rows".into()))?;
    let label_values: Vec<i64> = raw_labels
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if label_values.len() < 2 {
        return Err(Error::InvalidDataset(format!(
            "{} contains a single class",
            path.display()
        )));
    }
    let dense: BTreeMap<i64, usize> = label_values.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let labels = raw_labels.iter().map(|v| dense[v]).collect();
    let dataset = Dataset::from_flat(features, n_features, labels, label_values.len())?;
    Ok(LoadedCsv {
        dataset,
        subjects,
        label_values,
    })
}

fn parse_integer(cell: &str) -> std::result::Result<i64, String> {
    if let Ok(v) = cell.parse::<i64>() {
        return Ok(v);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        Ok(_) => Err(format!("`{cell}` is not an integer")),
        Err(_) => Err(format!("`{cell}` is not numeric")),
    }
}

/// Isotropic Gaussian clusters, one per class, with unit-norm means.
///
/// Class `c < d_x` sits on `+e_c`, class `d_x <= c < 2 d_x` on `-e_{c-d_x}`;
/// further classes get seeded random unit directions. Samples are stored
/// class-major.
pub fn synth_blobs(
    n_per_class: usize,
    class_count: usize,
    d_x: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class < 2 {
        return Err(Error::InvalidDataset("n_per_class must be at least 2".into()));
    }
    if class_count < 2 {
        return Err(Error::InvalidDataset("class_count must be at least 2".into()));
    }
    if d_x == 0 {
        return Err(Error::InvalidDataset("d_x must be at least 1".into()));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::InvalidDataset(format!("spread must be positive, got {spread}")));
    }

    let mut dir_rng = stream(seed, Domain::Data, 1);
    let means: Vec<Vec<f64>> = (0..class_count)
        .map(|c| {
            let mut m = vec![0.0; d_x];
            if c < 2 * d_x {
                m[c % d_x] = if c < d_x { 1.0 } else { -1.0 };
            } else {
                loop {
                    for v in m.iter_mut() {
                        *v = dir_rng.sample(StandardNormal);
                    }
                    let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 1e-6 {
                        m.iter_mut().for_each(|v| *v /= norm);
                        break;
                    }
                }
            }
            m
        })
        .collect();

    let mut rng = stream(seed, Domain::Data, 0);
    let mut features = Vec::with_capacity(n_per_class * class_count * d_x);
    let mut labels = Vec::with_capacity(n_per_class * class_count);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..n_per_class {
            for &mu in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push(mu + spread * z);
            }
            labels.push(c);
        }
    }
    Dataset::from_flat(features, d_x, labels, class_count)
}

/// Per-column z-score parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fits population mean and standard deviation per column. Constant
    /// columns get scale 1.
    pub fn fit(ds: &Dataset) -> Self {
        let d = ds.n_features();
        let n = ds.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for i in 0..ds.len() {
            for (m, v) in mean.iter_mut().zip(ds.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..ds.len() {
            for ((s, v), m) in var.iter_mut().zip(ds.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, ds: &mut Dataset) {
        let d = ds.n_features;
        for row in ds.features.chunks_exact_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
    }
}
