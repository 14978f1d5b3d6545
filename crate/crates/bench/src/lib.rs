//! Shared fixtures for the criterion benchmarks.

use resilient_p2p::model::{init_params_with, ModelSpec, ParamVector};
use resilient_p2p::rng::{stream, Domain};
use resilient_p2p::{Result, SimConfig};

/// `nk` random parameter vectors for `spec`.
pub fn random_params(spec: &ModelSpec, nk: usize, seed: u64) -> Result<Vec<ParamVector>> {
    (0..nk)
        .map(|i| init_params_with(spec, &mut stream(seed, Domain::Verification, i as u64), 1.0))
        .collect()
}

/// A small blob run with `n_workers` workers, used for epoch timings.
pub fn epoch_config(n_workers: usize, rule: &str) -> Result<SimConfig> {
    SimConfig::from_json(
        &serde_json::json!({
            "seed": 0,
            "epochs": 1,
            "data": {"source": "blobs", "n_per_class": 50 * n_workers, "d_x": 8},
            "partition": {"kind": "iid", "n_workers": n_workers},
            "model": {"layers": [32]},
            "aggregation": {"rule": rule},
        })
        .to_string(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let spec = ModelSpec::new(vec![4, 3, 2]).unwrap();
        assert_eq!(random_params(&spec, 5, 1).unwrap().len(), 5);
        epoch_config(4, "adaptive").unwrap().build().unwrap();
    }
}
