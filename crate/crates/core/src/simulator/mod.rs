//! Barrier-synchronous peer-to-peer training.
//!
//! Each epoch runs four phases, each parallel across workers:
//!
//! 1. local step on a sampled mini-batch, giving the intermediate `ŵ_k`;
//! 2. exchange, where adversaries replace their outgoing copy with the
//!    attack output (the same copy for every receiver);
//! 3. aggregation over the closed neighbourhood, scoring received
//!    parameters on a separately sampled risk batch when the rule needs it.
//!    Adversaries follow the protocol internally and aggregate the
//!    uncorrupted parameters;
//! 4. metrics on full training shards and test sets.
//!
//! Results are combined in worker order, so a run is bit-identical for any
//! thread count.

mod config;
mod metrics;

pub use config::{
    DataConfig, ModelConfig, OutputConfig, PartitionConfig, PartitionKind, Setup, SimConfig, TestKind,
    TrainConfig, WorkerSetup,
};
pub use metrics::{fmt_sig9, EpochSummary, MetricsLog, Role, WorkerRecord, SUMMARY_HEADER, WORKER_HEADER};

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aggregation::{aggregate, AggregationRule, ReceivedSet};
use crate::attacks::{corrupt, AttackOracle};
use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::model::{accuracy, grad, init_params_with, local_step, risk, OptimizerState, ParamVector};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone)]
struct Worker {
    id: usize,
    adversarial: bool,
    params: ParamVector,
    opt: OptimizerState,
    rng: ChaCha8Rng,
    attack_rng: ChaCha8Rng,
    train: Vec<usize>,
    test: Vec<usize>,
    rule: AggregationRule,
}

/// What every worker transmitted in one epoch.
#[derive(Debug, Clone)]
pub struct Exchange {
    honest: Vec<ParamVector>,
    sent: Vec<Option<ParamVector>>,
}

impl Exchange {
    /// `honest[k]` is worker `k`'s intermediate parameters; `sent[k]` its
    /// corrupted transmission, if adversarial.
    pub fn new(honest: Vec<ParamVector>, sent: Vec<Option<ParamVector>>) -> Result<Self> {
        if honest.len() != sent.len() {
            return Err(Error::Contract("one transmission per worker expected".into()));
        }
        Ok(Self { honest, sent })
    }

    /// Parameters receiver `k` holds for each member of its neighbourhood,
    /// in neighbourhood order. A worker always sees its own honest copy.
    pub fn view(&self, topology: &Topology, k: usize) -> Vec<&[f64]> {
        topology
            .neighbors(k)
            .iter()
            .map(|&l| match &self.sent[l] {
                Some(corrupted) if l != k => corrupted.as_slice(),
                _ => self.honest[l].as_slice(),
            })
            .collect()
    }

    /// Uncorrupted parameters of `k`'s neighbourhood. Adversaries aggregate
    /// these, so an attack never feeds back into any adversary's state.
    pub fn honest_view(&self, topology: &Topology, k: usize) -> Vec<&[f64]> {
        topology.neighbors(k).iter().map(|&l| self.honest[l].as_slice()).collect()
    }
}

/// A running simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    setup: Setup,
    workers: Vec<Worker>,
    epoch: usize,
    log: MetricsLog,
}

impl Simulation {
    pub fn new(setup: Setup) -> Result<Self> {
        let n = setup.workers.len();
        if setup.topology.len() != n {
            return Err(Error::Contract(format!(
                "topology has {} nodes for {n} workers",
                setup.topology.len()
            )));
        }
        if setup.workers.iter().all(|w| w.adversarial) {
            return Err(Error::config("attack.adversaries", "at least one worker must be normal"));
        }
        if let Some(w) = setup.workers.iter().find(|w| w.train.is_empty() || w.test.is_empty()) {
            return Err(Error::Partition(format!("worker {} has an empty train or test set", w.id)));
        }
        let f = setup.adversary_count();
        let shared = setup
            .shared_init
            .then(|| init_params_with(&setup.spec, &mut stream(setup.seed, Domain::Init, 0), setup.init_scale))
            .transpose()?;
        let mut workers = Vec::with_capacity(n);
        for (k, w) in setup.workers.iter().enumerate() {
            let size = setup.topology.neighbors(k).len();
            let rule = setup.aggregation.resolve(size, f);
            check_feasible(&rule, size).map_err(|e| e.at(0, w.id))?;
            let params = match &shared {
                Some(p) => p.clone(),
                None => init_params_with(
                    &setup.spec,
                    &mut stream(setup.seed, Domain::Init, w.id as u64 + 1),
                    setup.init_scale,
                )?,
            };
            workers.push(Worker {
                id: w.id,
                adversarial: w.adversarial,
                params,
                opt: OptimizerState::new(setup.optimizer, setup.spec.dim())?,
                rng: stream(setup.seed, Domain::Worker, w.id as u64),
                attack_rng: stream(setup.seed, Domain::Attack, w.id as u64),
                train: w.train.clone(),
                test: w.test.clone(),
                rule,
            });
        }
        Ok(Self {
            setup,
            workers,
            epoch: 0,
            log: MetricsLog::default(),
        })
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        Self::new(cfg.build()?)
    }

    pub fn setup(&self) -> &Setup {
        &self.setup
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }

    /// Current parameters of the worker at position `k`.
    pub fn params(&self, k: usize) -> &ParamVector {
        &self.workers[k].params
    }

    pub fn worker_id(&self, k: usize) -> usize {
        self.workers[k].id
    }

    pub fn rule(&self, k: usize) -> AggregationRule {
        self.workers[k].rule
    }

    pub fn metrics(&self) -> &MetricsLog {
        &self.log
    }

    /// Runs the remaining epochs and returns the log.
    pub fn run(mut self) -> Result<MetricsLog> {
        while self.epoch < self.setup.epochs {
            self.step()?;
        }
        Ok(self.log)
    }

    /// Advances one epoch.
    pub fn step(&mut self) -> Result<()> {
        let t = self.epoch + 1;
        let setup = &self.setup;
        let (ds, spec) = (&setup.dataset, &setup.spec);
        let needs_risks = self.workers.iter().any(|w| w.rule.needs_risks());

        // local step
        let locals: Vec<(ParamVector, Vec<usize>)> = self
            .workers
            .par_iter_mut()
            .map(|w| {
                let batch = sample(&mut w.rng, &w.train, setup.batch_size);
                let g = grad(spec, &w.params, &ds.batch(&batch)).map_err(|e| e.at(t, w.id))?;
                let hat = local_step(&mut w.opt, &w.params, &g).map_err(|e| e.at(t, w.id))?;
                let risk_batch = if needs_risks {
                    sample(&mut w.rng, &w.train, setup.risk_batch_size)
                } else {
                    Vec::new()
                };
                Ok((hat, risk_batch))
            })
            .collect::<Result<_>>()?;
        let (honest, risk_batches): (Vec<ParamVector>, Vec<Vec<usize>>) = locals.into_iter().unzip();

        // exchange
        let normals: Vec<&[f64]> = self
            .workers
            .iter()
            .zip(&honest)
            .filter(|(w, _)| !w.adversarial)
            .map(|(_, p)| p.as_slice())
            .collect();
        let oracle = AttackOracle::new(&normals);
        let sent = self
            .workers
            .iter_mut()
            .zip(&honest)
            .map(|(w, own)| {
                w.adversarial
                    .then(|| corrupt(&setup.attack, own, &oracle, &mut w.attack_rng).map_err(|e| e.at(t, w.id)))
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        let exchange = Exchange::new(honest, sent)?;

        // aggregation
        let workers = &self.workers;
        let topology = &setup.topology;
        let outcomes: Vec<(ParamVector, usize)> = (0..workers.len())
            .into_par_iter()
            .map(|k| {
                let w = &workers[k];
                let nbrs = topology.neighbors(k);
                let view = if w.adversarial {
                    exchange.honest_view(topology, k)
                } else {
                    exchange.view(topology, k)
                };
                let ids = nbrs.iter().map(|&l| workers[l].id).collect();
                let mut rs = ReceivedSet::new(w.id, ids, view.clone()).map_err(|e| e.at(t, w.id))?;
                if w.rule.needs_risks() {
                    let batch = ds.batch(&risk_batches[k]);
                    let risks = nbrs
                        .iter()
                        .zip(&view)
                        .map(|(&l, p)| match risk(spec, p, &batch) {
                            Ok(r) => Ok(r),
                            // unevaluable transmissions are excluded, not fatal
                            Err(Error::Numeric(_)) if l != k => Ok(f64::INFINITY),
                            Err(e) => Err(e.at(t, w.id)),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    rs = rs.with_risks(risks).map_err(|e| e.at(t, w.id))?;
                }
                let next = aggregate(&w.rule, &rs).map_err(|e| e.at(t, w.id))?;
                let admitted = if w.adversarial {
                    0
                } else {
                    match w.rule.weights(&rs).map_err(|e| e.at(t, w.id))? {
                        Some(c) => nbrs
                            .iter()
                            .zip(c.weights())
                            .filter(|&(&l, &c)| workers[l].adversarial && c > 0.0)
                            .count(),
                        None => 0,
                    }
                };
                Ok((next, admitted))
            })
            .collect::<Result<_>>()?;
        let mut admissions = 0;
        for (w, (next, admitted)) in self.workers.iter_mut().zip(outcomes) {
            w.params = next;
            admissions += admitted;
        }

        // metrics
        let records: Vec<WorkerRecord> = self
            .workers
            .par_iter()
            .map(|w| {
                let train_risk = match risk(spec, &w.params, &ds.batch(&w.train)) {
                    Ok(r) => r,
                    Err(Error::Numeric(_)) => f64::INFINITY,
                    Err(e) => return Err(e.at(t, w.id)),
                };
                let test_acc = accuracy(spec, &w.params, &ds.batch(&w.test)).map_err(|e| e.at(t, w.id))?;
                Ok(WorkerRecord {
                    epoch: t,
                    worker: w.id,
                    role: if w.adversarial { Role::Adversarial } else { Role::Normal },
                    train_risk,
                    test_acc,
                })
            })
            .collect::<Result<_>>()?;
        self.log.push_epoch(records, admissions);
        self.epoch = t;
        Ok(())
    }
}

/// Runs a configuration to completion.
pub fn run(cfg: &SimConfig) -> Result<MetricsLog> {
    Simulation::from_config(cfg)?.run()
}

/// Mean full-shard training risk over all workers of `sim`.
pub fn global_objective(sim: &Simulation) -> Result<f64> {
    let setup = sim.setup();
    let total = (0..sim.len())
        .map(|k| risk(&setup.spec, sim.params(k), &setup.dataset.batch(&setup.workers[k].train)))
        .sum::<Result<f64>>()?;
    Ok(total / sim.len() as f64)
}

fn check_feasible(rule: &AggregationRule, size: usize) -> Result<()> {
    match *rule {
        AggregationRule::TrimmedMean { b } if size <= 2 * b => Err(Error::RuleInfeasible(format!(
            "trimmed mean with b = {b} needs more than {} senders, neighbourhood has {size}",
            2 * b
        ))),
        AggregationRule::Krum { f } if size < 2 * f + 3 => Err(Error::RuleInfeasible(format!(
            "Krum with f = {f} needs at least {} senders, neighbourhood has {size}",
            2 * f + 3
        ))),
        _ => Ok(()),
    }
}

// Up to `amount` distinct entries of `pool`.
fn sample(rng: &mut ChaCha8Rng, pool: &[usize], amount: usize) -> Vec<usize> {
    index::sample(rng, pool.len(), amount.min(pool.len()))
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::RuleKind;
    use crate::attacks::{Adversaries, AttackKind, AttackSpec};
    use crate::graph::TopologySpec;

    fn small(json: &str) -> SimConfig {
        let mut cfg = SimConfig::from_json(
            r#"{"epochs": 5, "data": {"source": "blobs", "n_per_class": 60},
                "partition": {"n_workers": 4}, "model": {"layers": [4]},
                "optimizer": {"lr": 0.1, "batch_size": 8}}"#,
        )
        .unwrap();
        let patch: serde_json::Value = serde_json::from_str(json).unwrap();
        let mut base = serde_json::to_value(&cfg).unwrap();
        merge(&mut base, patch);
        cfg = serde_json::from_value(base).unwrap();
        cfg
    }

    fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
        match (base, patch) {
            (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
                for (k, v) in p {
                    merge(b.entry(k).or_insert(serde_json::Value::Null), v);
                }
            }
            (b, p) => *b = p,
        }
    }

    #[test]
    fn exchange_broadcasts_one_corrupted_copy() {
        let topo = Topology::complete(3).unwrap();
        let honest: Vec<ParamVector> = (0..3).map(|i| ParamVector::new(vec![i as f64 + 1.0])).collect();
        let sent = vec![None, None, Some(ParamVector::new(vec![-3.0]))];
        let ex = Exchange::new(honest, sent).unwrap();
        assert_eq!(ex.view(&topo, 0), vec![&[1.0][..], &[2.0], &[-3.0]]);
        assert_eq!(ex.view(&topo, 1)[2], &[-3.0]);
        assert_eq!(ex.view(&topo, 2)[2], &[3.0]);
    }

    #[test]
    fn ring_view_order() {
        let topo = Topology::ring(5, 1).unwrap();
        let honest: Vec<ParamVector> = (0..5).map(|i| ParamVector::new(vec![i as f64])).collect();
        let ex = Exchange::new(honest, vec![None; 5]).unwrap();
        assert_eq!(topo.neighbors(0), &[0, 1, 4]);
        assert_eq!(ex.view(&topo, 0), vec![&[0.0][..], &[1.0], &[4.0]]);
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = small(r#"{"attack": {"kind": "arbitrary", "adversaries": 1}}"#);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.summaries.len(), 5);
        assert_eq!(a.workers.len(), 20);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = small(r#"{"attack": {"kind": "alie", "adversaries": 1}}"#);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run(&cfg)).unwrap();
        let b = four.install(|| run(&cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_worker_is_plain_sgd() {
        let cfg = small(r#"{"partition": {"n_workers": 1}, "epochs": 6}"#);
        let setup = cfg.build().unwrap();
        let mut sim = Simulation::new(setup.clone()).unwrap();
        let spec = &setup.spec;
        let w0 = &setup.workers[0];
        let mut w = init_params_with(spec, &mut stream(cfg.seed, Domain::Init, 1), 1.0).unwrap();
        let mut opt = OptimizerState::new(setup.optimizer, spec.dim()).unwrap();
        let mut rng = stream(cfg.seed, Domain::Worker, 0);
        for _ in 0..6 {
            let b = sample(&mut rng, &w0.train, setup.batch_size);
            let g = grad(spec, &w, &setup.dataset.batch(&b)).unwrap();
            w = local_step(&mut opt, &w, &g).unwrap();
            sample(&mut rng, &w0.train, setup.risk_batch_size);
            sim.step().unwrap();
            assert_eq!(sim.params(0), &w);
        }
    }

    #[test]
    fn zero_learning_rate_with_shared_init_is_a_fixed_point() {
        for rule in ["mean", "adaptive"] {
            let cfg = small(&format!(
                r#"{{"optimizer": {{"lr": 0.0}}, "model": {{"shared_init": true}},
                    "aggregation": {{"rule": "{rule}"}}}}"#
            ));
            let mut sim = Simulation::from_config(&cfg).unwrap();
            let start = sim.params(0).clone();
            for _ in 0..5 {
                sim.step().unwrap();
            }
            for k in 0..sim.len() {
                assert_eq!(sim.params(k), &start, "{rule}, worker {k}");
            }
        }
    }

    #[test]
    fn summary_matches_worker_records() {
        let cfg = small(r#"{"attack": {"kind": "sign_flip", "adversaries": 2}}"#);
        let sim = Simulation::from_config(&cfg).unwrap();
        let log = sim.clone().run().unwrap();
        for s in &log.summaries {
            let rows: Vec<_> = log.workers.iter().filter(|r| r.epoch == s.epoch).collect();
            let worst = rows
                .iter()
                .filter(|r| r.role == Role::Normal)
                .map(|r| r.test_acc)
                .fold(1.0, f64::min);
            assert_eq!(s.worst_normal_acc, worst);
            let mean = rows.iter().map(|r| r.train_risk).sum::<f64>() / rows.len() as f64;
            assert_eq!(s.global_objective, mean);
        }
    }

    #[test]
    fn global_objective_is_mean_of_worker_risks() {
        let cfg = small("{}");
        let mut sim = Simulation::from_config(&cfg).unwrap();
        sim.step().unwrap();
        let g = global_objective(&sim).unwrap();
        assert!((g - sim.metrics().last().unwrap().global_objective).abs() < 1e-15);
        // zero parameters score ln C everywhere
        for w in &mut sim.workers {
            w.params = ParamVector::zeros(sim.setup.spec.dim());
        }
        assert!((global_objective(&sim).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn infeasible_krum_is_rejected_up_front() {
        let mut cfg = small("{}");
        cfg.aggregation.rule = RuleKind::Krum;
        cfg.attack = AttackSpec::new(AttackKind::SignFlip, Adversaries::Count(1));
        assert!(matches!(
            Simulation::from_config(&cfg),
            Err(Error::Simulation { source, .. }) if matches!(*source, Error::RuleInfeasible(_))
        ));
    }

    #[test]
    fn large_sign_flip_is_never_admitted() {
        // Linear model from a near-zero start: the flipped copy's logits are
        // the honest ones negated and magnified, and the honest model is
        // right on most samples from the first step on.
        let mut cfg = small(r#"{"epochs": 8, "model": {"layers": [], "shared_init": true, "init_scale": 1e-3}}"#);
        cfg.topology = TopologySpec::Ring { k_hops: 1 };
        cfg.attack = AttackSpec {
            sigma_sf: 1e6,
            ..AttackSpec::new(AttackKind::SignFlip, Adversaries::List(vec![2]))
        };
        let full = cfg.build().unwrap();
        let attacked = Simulation::new(full.clone()).unwrap().run().unwrap();
        assert_eq!(attacked.total_adversarial_admissions(), 0);
        let clean = Simulation::new(full.without_adversaries().unwrap()).unwrap().run().unwrap();
        for id in [0, 1, 3] {
            let a: Vec<_> = attacked.worker(id).collect();
            let b: Vec<_> = clean.worker(id).collect();
            assert_eq!(a, b, "worker {id}");
        }
    }
}
