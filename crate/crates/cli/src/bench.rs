//! Wall-clock cost of one adaptive aggregation as a function of model size
//! and neighbourhood size.

use std::hint::black_box;
use std::time::Instant;

use resilient_p2p::aggregation::{adaptive_weights_filtered, combine, ReceivedSet};
use resilient_p2p::data::synth_blobs;
use resilient_p2p::model::{init_params_with, risk, ModelSpec, ParamVector};
use resilient_p2p::rng::{stream, Domain};
use resilient_p2p::{Dataset, Result};
use serde::Serialize;

pub const INPUT_DIM: usize = 7;
pub const CLASSES: usize = 2;
pub const BATCH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    /// Actual parameter count of the benchmarked model.
    pub d: usize,
    pub nk: usize,
    pub mean_ns: f64,
}

/// A `[7, h, 2]` MLP whose parameter count `10 h + 2` is closest to `d`.
pub fn model_for_dim(d: usize) -> Result<ModelSpec> {
    let per_unit = INPUT_DIM + 1 + CLASSES;
    let h = ((d.saturating_sub(CLASSES) as f64 / per_unit as f64).round() as usize).max(1);
    ModelSpec::new(vec![INPUT_DIM, h, CLASSES])
}

/// Fixed inputs for one grid cell.
pub struct Fixture {
    pub spec: ModelSpec,
    pub data: Dataset,
    pub params: Vec<ParamVector>,
}

impl Fixture {
    pub fn new(d: usize, nk: usize, seed: u64) -> Result<Self> {
        let spec = model_for_dim(d)?;
        let data = synth_blobs(BATCH / CLASSES, CLASSES, INPUT_DIM, 0.5, seed)?;
        let params = (0..nk)
            .map(|i| init_params_with(&spec, &mut stream(seed, Domain::Verification, i as u64), 1.0))
            .collect::<Result<_>>()?;
        Ok(Self { spec, data, params })
    }

    /// Scores every received vector on the batch, computes the filtered
    /// inverse-risk weights and combines.
    pub fn aggregate_once(&self) -> Result<ParamVector> {
        let batch = self.data.all();
        let views: Vec<&[f64]> = self.params.iter().map(ParamVector::as_slice).collect();
        let risks = views
            .iter()
            .map(|p| risk(&self.spec, p, &batch))
            .collect::<Result<Vec<_>>>()?;
        let rs = ReceivedSet::new(0, (0..views.len()).collect(), views)?.with_risks(risks)?;
        combine(&rs, &adaptive_weights_filtered(&rs)?)
    }
}

/// Mean wall time of [`Fixture::aggregate_once`] over `repeats` runs,
/// after a short warm-up.
pub fn time_cell(d: usize, nk: usize, repeats: usize) -> Result<BenchRow> {
    let fx = Fixture::new(d, nk, 0)?;
    for _ in 0..(repeats / 10).max(1) {
        black_box(fx.aggregate_once()?);
    }
    let start = Instant::now();
    for _ in 0..repeats.max(1) {
        black_box(fx.aggregate_once()?);
    }
    Ok(BenchRow {
        d: fx.spec.dim(),
        nk,
        mean_ns: start.elapsed().as_nanos() as f64 / repeats.max(1) as f64,
    })
}

/// Every `(d, nk)` combination, `d`-major.
pub fn grid(d_values: &[usize], nk_values: &[usize], repeats: usize) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(d_values.len() * nk_values.len());
    for &d in d_values {
        for &nk in nk_values {
            rows.push(time_cell(d, nk, repeats)?);
        }
    }
    Ok(rows)
}
