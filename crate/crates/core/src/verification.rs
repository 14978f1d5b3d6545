//! Empirical checks of the adaptive rule's theory on quadratic problems.
//!
//! * Lemma check: the inverse-risk aggregate's excess risk never exceeds
//!   the neighbours' mean excess risk.
//! * Weight optimality: inverse-risk weights minimise `sum_l c_l^2 r_l / 2`
//!   over the probability simplex.
//! * Steady-state check: constant-step SGD with gradient noise of variance
//!   `M` settles at mean excess risk at most `mu L M / (2 m)`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{adaptive_weights, adaptive_weights_filtered, combine, ReceivedSet};
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

pub const LEMMA1_TOLERANCE: f64 = 1e-10;
pub const WEIGHT_TOLERANCE: f64 = 1e-6;
pub const OBJECTIVE_SLACK: f64 = 1e-9;
/// Relative slack on the steady-state bound, absorbing Monte Carlo noise.
pub const THEOREM1_SLACK: f64 = 0.25;

/// `r(w) = r* + 1/2 (w - w*)^T diag(h) (w - w*)`, with additive isotropic
/// gradient noise of total variance `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticOracle {
    pub minimizer: Vec<f64>,
    pub curvature: Vec<f64>,
    pub noise: f64,
    pub offset: f64,
}

impl QuadraticOracle {
    pub fn isotropic(d: usize, m: f64, noise: f64, offset: f64) -> Result<Self> {
        Self::new(vec![0.0; d], vec![m; d], noise, offset)
    }

    pub fn new(minimizer: Vec<f64>, curvature: Vec<f64>, noise: f64, offset: f64) -> Result<Self> {
        if minimizer.is_empty() || minimizer.len() != curvature.len() {
            return Err(Error::Contract("minimizer and curvature must share a positive length".into()));
        }
        if curvature.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Contract("curvature must be positive".into()));
        }
        if !(noise >= 0.0 && offset >= 0.0) {
            return Err(Error::Contract("noise and offset must be non-negative".into()));
        }
        Ok(Self {
            minimizer,
            curvature,
            noise,
            offset,
        })
    }

    pub fn dim(&self) -> usize {
        self.minimizer.len()
    }

    /// Strong-convexity constant.
    pub fn m(&self) -> f64 {
        self.curvature.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Gradient Lipschitz constant.
    pub fn l(&self) -> f64 {
        self.curvature.iter().cloned().fold(0.0, f64::max)
    }

    pub fn excess(&self, w: &[f64]) -> f64 {
        w.iter()
            .zip(&self.minimizer)
            .zip(&self.curvature)
            .map(|((w, s), h)| 0.5 * h * (w - s) * (w - s))
            .sum()
    }

    pub fn risk(&self, w: &[f64]) -> f64 {
        self.offset + self.excess(w)
    }

    /// Gradient plus a fresh noise draw.
    pub fn noisy_grad<R: Rng + ?Sized>(&self, w: &[f64], rng: &mut R) -> Vec<f64> {
        let sd = (self.noise / self.dim() as f64).sqrt();
        w.iter()
            .zip(&self.minimizer)
            .zip(&self.curvature)
            .map(|((w, s), h)| {
                let z: f64 = StandardNormal.sample(rng);
                h * (w - s) + sd * z
            })
            .collect()
    }
}

/// Outcome of a verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub suite: String,
    pub trials: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub details: BTreeMap<String, f64>,
}

impl CheckReport {
    fn new(suite: &str, trials: usize, max_violation: f64, tolerance: f64) -> Self {
        Self {
            suite: suite.into(),
            trials,
            max_violation,
            tolerance,
            pass: max_violation <= tolerance,
            details: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.into(), value);
        self
    }

    /// `Err(CheckFailed)` unless the report passed.
    pub fn into_result(self) -> Result<Self> {
        if self.pass {
            Ok(self)
        } else {
            Err(Error::CheckFailed {
                suite: self.suite.clone(),
                detail: format!("max violation {:e} exceeds {:e}", self.max_violation, self.tolerance),
            })
        }
    }
}

/// Both sides of the lemma for one set of neighbour parameters:
/// `(r(w_agg) - r*, mean_l (r(w_l) - r*))`.
pub fn lemma1_sides(oracle: &QuadraticOracle, neighbors: &[Vec<f64>], filtered: bool) -> Result<(f64, f64)> {
    let params: Vec<&[f64]> = neighbors.iter().map(Vec::as_slice).collect();
    let risks: Vec<f64> = params.iter().map(|p| oracle.risk(p)).collect();
    let rs = ReceivedSet::new(0, (0..params.len()).collect(), params)?.with_risks(risks)?;
    let weights = if filtered {
        adaptive_weights_filtered(&rs)?
    } else {
        adaptive_weights(&rs)?
    };
    let agg = combine(&rs, &weights)?;
    let lhs = oracle.excess(&agg);
    let rhs = neighbors.iter().map(|w| oracle.excess(w)).sum::<f64>() / neighbors.len() as f64;
    Ok((lhs, rhs))
}

/// Largest `lhs - rhs` over `trials` draws of `n_neighbors` points in the
/// unit ball around the minimiser of `oracle`.
pub fn check_lemma1(oracle: &QuadraticOracle, n_neighbors: usize, trials: usize, seed: u64) -> Result<CheckReport> {
    if trials == 0 || n_neighbors == 0 {
        return Err(Error::Contract("need at least one trial and one neighbour".into()));
    }
    let worst = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, Domain::Verification, t as u64);
            let neighbors: Vec<Vec<f64>> = (0..n_neighbors)
                .map(|_| point_in_ball(&oracle.minimizer, 1.0, &mut rng))
                .collect();
            let mut worst = f64::NEG_INFINITY;
            for filtered in [false, true] {
                let (lhs, rhs) = lemma1_sides(oracle, &neighbors, filtered)?;
                worst = worst.max(lhs - rhs);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(CheckReport::new("lemma1", trials, worst.max(0.0), LEMMA1_TOLERANCE)
        .with("neighbors", n_neighbors as f64)
        .with("dim", oracle.dim() as f64)
        .with("max_signed_gap", worst))
}

/// Lemma suite over randomly drawn oracles: dimension 1-10, 1-8
/// neighbours, diagonal curvature in `[0.2, 5]`, offset in `[0, 2]`.
pub fn lemma1_suite(trials: usize, seed: u64) -> Result<CheckReport> {
    if trials == 0 {
        return Err(Error::Contract("need at least one trial".into()));
    }
    let worst = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, Domain::Verification, t as u64);
            let d = rng.random_range(1..=10);
            let n = rng.random_range(1..=8);
            let oracle = QuadraticOracle::new(
                (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
                (0..d).map(|_| rng.random_range(0.2..5.0)).collect(),
                0.0,
                if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..2.0) },
            )?;
            let radius = rng.random_range(0.01..2.0);
            let neighbors: Vec<Vec<f64>> = (0..n)
                .map(|_| point_in_ball(&oracle.minimizer, radius, &mut rng))
                .collect();
            let mut worst = f64::NEG_INFINITY;
            for filtered in [false, true] {
                let (lhs, rhs) = lemma1_sides(&oracle, &neighbors, filtered)?;
                worst = worst.max(lhs - rhs);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(CheckReport::new("lemma1", trials, worst.max(0.0), LEMMA1_TOLERANCE).with("max_signed_gap", worst))
}

fn point_in_ball<R: Rng + ?Sized>(center: &[f64], radius: f64, rng: &mut R) -> Vec<f64> {
    let dir: Vec<f64> = center.iter().map(|_| StandardNormal.sample(rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let r = radius * rng.random::<f64>().powf(1.0 / center.len() as f64);
    center.iter().zip(&dir).map(|(c, v)| c + r * v / norm).collect()
}

/// `sum_l c_l^2 r_l / 2`.
pub fn weight_objective(risks: &[f64], weights: &[f64]) -> f64 {
    risks.iter().zip(weights).map(|(r, c)| 0.5 * c * c * r).sum()
}

/// Inverse-risk weights in closed form.
pub fn closed_form_weights(risks: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = risks.iter().map(|r| 1.0 / r).collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|v| v / total).collect()
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Minimises [`weight_objective`] over the simplex by projected gradient
/// descent with step `1 / max(r)`, without using the closed form.
pub fn projected_gradient_weights(risks: &[f64]) -> Vec<f64> {
    let n = risks.len();
    let step = 1.0 / risks.iter().cloned().fold(0.0, f64::max);
    let mut c = vec![1.0 / n as f64; n];
    for _ in 0..1_000_000 {
        let next = project_simplex(&c.iter().zip(risks).map(|(c, r)| c - step * c * r).collect::<Vec<_>>());
        let moved = next.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        c = next;
        if moved < 1e-15 {
            break;
        }
    }
    c
}

/// Smallest objective over a grid on the simplex with spacing `1 / steps`.
/// Only sensible for two or three senders.
pub fn grid_min_objective(risks: &[f64], steps: usize) -> f64 {
    let h = 1.0 / steps as f64;
    match risks.len() {
        1 => weight_objective(risks, &[1.0]),
        2 => (0..=steps)
            .map(|i| weight_objective(risks, &[i as f64 * h, (steps - i) as f64 * h]))
            .fold(f64::INFINITY, f64::min),
        3 => (0..=steps)
            .flat_map(|i| (0..=steps - i).map(move |j| (i, j)))
            .map(|(i, j)| weight_objective(risks, &[i as f64 * h, j as f64 * h, (steps - i - j) as f64 * h]))
            .fold(f64::INFINITY, f64::min),
        _ => f64::INFINITY,
    }
}

/// For one risk vector: `(max per-weight discrepancy, objective excess)` of
/// the closed form against the numerical minimisers. The excess is positive
/// only if an oracle candidate beats the closed form.
pub fn check_weight_optimality(risks: &[f64]) -> Result<(f64, f64)> {
    if risks.is_empty() || risks.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::Contract("risks must be positive and finite".into()));
    }
    let closed = closed_form_weights(risks);
    let pg = projected_gradient_weights(risks);
    let discrepancy = closed.iter().zip(&pg).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let best_other = weight_objective(risks, &pg).min(match risks.len() {
        2 => grid_min_objective(risks, 10_000),
        3 => grid_min_objective(risks, 1_000),
        _ => f64::INFINITY,
    });
    Ok((discrepancy, weight_objective(risks, &closed) - best_other))
}

/// Weight-optimality suite: 1-6 senders, risks log-uniform in `[0.1, 10]`.
pub fn weights_suite(trials: usize, seed: u64) -> Result<CheckReport> {
    if trials == 0 {
        return Err(Error::Contract("need at least one trial".into()));
    }
    let results = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, Domain::Verification, t as u64);
            let n = rng.random_range(1..=6);
            let risks: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-1.0..1.0))).collect();
            check_weight_optimality(&risks)
        })
        .collect::<Result<Vec<_>>>()?;
    let discrepancy = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let excess = results.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let mut report = CheckReport::new("weights", trials, discrepancy, WEIGHT_TOLERANCE)
        .with("max_objective_excess", excess);
    report.pass &= excess <= OBJECTIVE_SLACK;
    Ok(report)
}

/// Constant-step noisy SGD settings for the steady-state check.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Setup {
    pub oracle: QuadraticOracle,
    pub mu: f64,
    pub horizon: usize,
    pub burn_in: usize,
    pub trials: usize,
    /// Workers on a complete graph aggregating with the filtered adaptive
    /// rule after every step; 1 means plain SGD.
    pub workers: usize,
    pub seed: u64,
}

impl Theorem1Setup {
    /// One-dimensional unit quadratic, unit noise, `mu = 0.1`,
    /// 20 000 steps with 5 000 burn-in.
    pub fn standard(trials: usize, seed: u64) -> Self {
        Self {
            oracle: QuadraticOracle::isotropic(1, 1.0, 1.0, 0.0).expect("valid oracle"),
            mu: 0.1,
            horizon: 20_000,
            burn_in: 5_000,
            trials,
            workers: 1,
            seed,
        }
    }

    /// `mu L M / (2 m)`.
    pub fn bound(&self) -> f64 {
        self.mu * self.oracle.l() * self.oracle.noise / (2.0 * self.oracle.m())
    }
}

/// Stationary mean excess risk of plain SGD on an isotropic quadratic with
/// curvature `m`: `mu M / (2 (2 - mu m))`.
pub fn stationary_excess(mu: f64, m: f64, noise: f64) -> f64 {
    mu * noise / (2.0 * (2.0 - mu * m))
}

/// Mean post-burn-in excess risk and its standard error over trials.
pub fn steady_state_excess(setup: &Theorem1Setup) -> Result<(f64, f64)> {
    let o = &setup.oracle;
    if !(setup.mu > 0.0 && setup.mu <= 1.0 / o.l()) {
        return Err(Error::Contract(format!(
            "step size must lie in (0, 1/L] = (0, {}], got {}",
            1.0 / o.l(),
            setup.mu
        )));
    }
    if setup.trials == 0 || setup.workers == 0 || setup.burn_in >= setup.horizon {
        return Err(Error::Contract("need trials, workers and a horizon beyond the burn-in".into()));
    }
    let means = (0..setup.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(setup.seed, Domain::Verification, t as u64);
            let start = Normal::new(0.0, 1.0).expect("valid normal");
            let mut ws: Vec<Vec<f64>> = (0..setup.workers)
                .map(|_| o.minimizer.iter().map(|s| s + start.sample(&mut rng)).collect())
                .collect();
            let mut sum = 0.0;
            for step in 0..setup.horizon {
                for w in &mut ws {
                    let g = o.noisy_grad(w, &mut rng);
                    w.iter_mut().zip(&g).for_each(|(w, g)| *w -= setup.mu * g);
                }
                if setup.workers > 1 {
                    ws = aggregate_all(o, &ws)?;
                }
                if step >= setup.burn_in {
                    sum += ws.iter().map(|w| o.excess(w)).sum::<f64>() / ws.len() as f64;
                }
            }
            Ok(sum / (setup.horizon - setup.burn_in) as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

// Every worker applies the filtered adaptive rule to all others.
fn aggregate_all(o: &QuadraticOracle, ws: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let params: Vec<&[f64]> = ws.iter().map(Vec::as_slice).collect();
    let risks: Vec<f64> = params.iter().map(|p| o.risk(p)).collect();
    (0..ws.len())
        .map(|k| {
            let rs = ReceivedSet::new(k, (0..ws.len()).collect(), params.clone())?.with_risks(risks.clone())?;
            Ok(combine(&rs, &adaptive_weights_filtered(&rs)?)?.into_inner())
        })
        .collect()
}

/// Steady-state check: passes if the measured mean excess risk is at most
/// `(1 + 0.25)` times the bound.
pub fn check_theorem1(setup: &Theorem1Setup) -> Result<CheckReport> {
    let (measured, stderr) = steady_state_excess(setup)?;
    let bound = setup.bound();
    let limit = bound * (1.0 + THEOREM1_SLACK);
    let mut report = CheckReport::new("theorem1", setup.trials, (measured - bound).max(0.0), bound * THEOREM1_SLACK)
        .with("measured", measured)
        .with("stderr", stderr)
        .with("bound", bound)
        .with("limit", limit)
        .with("workers", setup.workers as f64);
    if setup.workers == 1 && setup.oracle.m() == setup.oracle.l() {
        report = report.with("stationary_closed_form", stationary_excess(setup.mu, setup.oracle.m(), setup.oracle.noise));
    }
    report.pass = measured <= limit;
    Ok(report)
}

/// Noiseless SGD on an isotropic quadratic from distance 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Contraction {
    pub steps: usize,
    pub final_excess: f64,
    /// Geometric-mean per-step factor of the distance to the minimiser.
    pub distance_factor: f64,
    /// Geometric-mean per-step factor of the excess risk.
    pub excess_factor: f64,
    /// `1 - mu m`.
    pub predicted: f64,
}

pub fn noiseless_contraction(d: usize, m: f64, mu: f64, steps: usize) -> Result<Contraction> {
    let o = QuadraticOracle::isotropic(d, m, 0.0, 0.0)?;
    if !(mu > 0.0 && mu <= 1.0 / m) || steps == 0 {
        return Err(Error::Contract("need mu in (0, 1/m] and at least one step".into()));
    }
    let mut w = vec![1.0 / (d as f64).sqrt(); d];
    let e0 = o.excess(&w);
    let mut rng = stream(0, Domain::Verification, 0);
    for _ in 0..steps {
        let g = o.noisy_grad(&w, &mut rng);
        w.iter_mut().zip(&g).for_each(|(w, g)| *w -= mu * g);
    }
    let e = o.excess(&w);
    let excess_factor = (e / e0).powf(1.0 / steps as f64);
    Ok(Contraction {
        steps,
        final_excess: e,
        distance_factor: excess_factor.sqrt(),
        excess_factor,
        predicted: 1.0 - mu * m,
    })
}

/// Contraction check: final excess below `1e-12`, distance factor within
/// 1% of `1 - mu m`, excess factor no worse than `1 - mu m`.
pub fn check_contraction(mu: f64, steps: usize) -> Result<CheckReport> {
    let c = noiseless_contraction(1, 1.0, mu, steps)?;
    let rel = (c.distance_factor - c.predicted).abs() / c.predicted;
    let mut report = CheckReport::new("contraction", 1, rel, 0.01)
        .with("final_excess", c.final_excess)
        .with("distance_factor", c.distance_factor)
        .with("excess_factor", c.excess_factor)
        .with("predicted", c.predicted);
    report.pass &= c.final_excess < 1e-12 && c.excess_factor <= c.predicted;
    Ok(report)
}

/// Steady-state bound plus the noiseless contraction.
pub fn theorem1_suite(trials: usize, seed: u64) -> Result<CheckReport> {
    let noisy = check_theorem1(&Theorem1Setup::standard(trials, seed))?;
    let clean = check_contraction(0.1, 1_000)?;
    let mut report = noisy.clone();
    report.pass = noisy.pass && clean.pass;
    for (k, v) in clean.details {
        report.details.insert(format!("noiseless_{k}"), v);
    }
    report.details.insert("noiseless_rel_error".into(), clean.max_violation);
    Ok(report)
}
