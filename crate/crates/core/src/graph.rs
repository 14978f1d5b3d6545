//! Static undirected communication graphs and closed neighbourhoods.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of Erdős–Rényi draws before giving up on connectivity.
pub const CONNECTIVITY_RETRIES: u32 = 1000;

/// Connected undirected graph over workers `0..n`.
///
/// Neighbourhoods are closed: `neighbors(k)` always contains `k` and is
/// sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    adjacency: Vec<Vec<bool>>,
    neighborhoods: Vec<Vec<usize>>,
}

impl Topology {
    /// Every pair of distinct workers is adjacent.
    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidTopology(format!(
                "complete graph needs at least 2 workers, got {n}"
            )));
        }
        let adjacency = (0..n)
            .map(|i| (0..n).map(|j| i != j).collect())
            .collect();
        Self::from_adjacency(adjacency)
    }

    /// Worker `i` is adjacent to `i ± 1, ..., i ± k_hops` (mod n).
    pub fn ring(n: usize, k_hops: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidTopology(format!(
                "ring needs at least 3 workers, got {n}"
            )));
        }
        let max_hops = (n - 1) / 2;
        if k_hops == 0 || k_hops > max_hops {
            return Err(Error::InvalidTopology(format!(
                "k_hops must lie in 1..={max_hops} for n = {n}, got {k_hops}"
            )));
        }
        let mut adjacency = vec![vec![false; n]; n];
        for i in 0..n {
            for h in 1..=k_hops {
                let j = (i + h) % n;
                adjacency[i][j] = true;
                adjacency[j][i] = true;
            }
        }
        Self::from_adjacency(adjacency)
    }

    /// Erdős–Rényi graph with edge probability `p`, redrawn with an
    /// incremented seed until connected.
    pub fn random_connected(n: usize, p: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidTopology(format!(
                "random graph needs at least 2 workers, got {n}"
            )));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidTopology(format!(
                "edge probability must lie in (0, 1], got {p}"
            )));
        }
        for attempt in 0..CONNECTIVITY_RETRIES {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
            let mut adjacency = vec![vec![false; n]; n];
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < p {
                        adjacency[i][j] = true;
                        adjacency[j][i] = true;
                    }
                }
            }
            if is_connected(&adjacency) {
                return Self::from_adjacency(adjacency);
            }
        }
        Err(Error::ConnectivityFailure {
            attempts: CONNECTIVITY_RETRIES,
        })
    }

    /// A network of one worker, whose neighbourhood is itself.
    pub fn singleton() -> Self {
        Self {
            adjacency: vec![vec![false]],
            neighborhoods: vec![vec![0]],
        }
    }

    /// Builds a topology from an explicit adjacency matrix. Self-loops are
    /// ignored; the matrix must be symmetric and the graph connected.
    pub fn from_adjacency(mut adjacency: Vec<Vec<bool>>) -> Result<Self> {
        let n = adjacency.len();
        if n == 0 {
            return Err(Error::InvalidTopology("empty graph".into()));
        }
        for (i, row) in adjacency.iter_mut().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidTopology(format!(
                    "adjacency row {i} has length {}, expected {n}",
                    row.len()
                )));
            }
            row[i] = false;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if adjacency[i][j] != adjacency[j][i] {
                    return Err(Error::InvalidTopology(format!(
                        "adjacency is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if !is_connected(&adjacency) {
            return Err(Error::InvalidTopology("graph is not connected".into()));
        }
        let neighborhoods = (0..n)
            .map(|k| (0..n).filter(|&j| j == k || adjacency[k][j]).collect())
            .collect();
        Ok(Self {
            adjacency,
            neighborhoods,
        })
    }

    /// Subgraph induced by `keep` (positions in ascending order of `keep`).
    pub fn induced(&self, keep: &[usize]) -> Result<Self> {
        if keep.len() == 1 {
            return Ok(Self::singleton());
        }
        let adjacency = keep
            .iter()
            .map(|&i| keep.iter().map(|&j| self.adjacency[i][j]).collect())
            .collect();
        Self::from_adjacency(adjacency)
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Closed neighbourhood of `k`, sorted ascending.
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighborhoods[k]
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i][j]
    }

    pub fn edge_count(&self) -> usize {
        self.neighborhoods.iter().map(|n| n.len() - 1).sum::<usize>() / 2
    }
}

fn is_connected(adjacency: &[Vec<bool>]) -> bool {
    let n = adjacency.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if adjacency[i][j] && !seen[j] {
                seen[j] = true;
                reached += 1;
                queue.push_back(j);
            }
        }
    }
    reached == n
}

/// Topology selection as it appears in run configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    #[default]
    Complete,
    Ring { k_hops: usize },
    Random { p: f64 },
}

impl TopologySpec {
    /// Builds the graph for `n` workers. A single worker always yields the
    /// singleton network.
    pub fn build(&self, n: usize, seed: u64) -> Result<Topology> {
        if n == 1 {
            return Ok(Topology::singleton());
        }
        match *self {
            TopologySpec::Complete => Topology::complete(n),
            TopologySpec::Ring { k_hops } => Topology::ring(n, k_hops),
            TopologySpec::Random { p } => Topology::random_connected(n, p, seed),
        }
    }
}
