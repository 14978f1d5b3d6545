//! Resilient peer-to-peer learning with loss-based adaptive aggregation.
//!
//! Workers on a static graph take local SGD steps, exchange parameters with
//! their neighbours and aggregate them with weights inversely proportional
//! to the risk each received model attains on the receiver's own data.
//! Neighbours that do worse than the receiver's own model are dropped.
//!
//! The crate also ships the baseline robust aggregators, the attacks used to
//! stress them, a deterministic simulator and empirical checks of the
//! method's convergence properties on quadratic problems.

// Symmetric pairwise loops read better with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod aggregation;
pub mod attacks;
pub mod data;
pub mod error;
pub mod graph;
pub mod model;
pub mod rng;
pub mod simulator;
pub mod verification;

pub use aggregation::{aggregate, AggregationConfig, AggregationRule, ReceivedSet, RuleKind, WeightVector};
pub use attacks::{Adversaries, AttackKind, AttackSpec};
pub use data::{Dataset, Partition, PartitionSummary};
pub use error::{Error, Result};
pub use graph::{Topology, TopologySpec};
pub use model::{ModelSpec, OptimizerConfig, OptimizerKind, ParamVector};
pub use simulator::{MetricsLog, SimConfig, Simulation};
pub use verification::CheckReport;
