//! Aggregation rules applied by a receiver to the parameters of its closed
//! neighbourhood.
//!
//! The adaptive rules weight each sender by the inverse of the risk the
//! receiver measures for that sender's parameters on its own data. The
//! filtered variant additionally drops every sender that does worse than the
//! receiver's own intermediate model. The baselines (mean, trimmed mean,
//! coordinate-wise median, Krum, medoid) ignore risks.


use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamVector;

/// Risks are clamped to at least this value before inversion.
pub const RISK_FLOOR: f64 = 1e-12;

/// Parameters one receiver holds for an epoch: one vector per member of its
/// closed neighbourhood, plus (for the adaptive rules) the receiver-side
/// risk of each.
#[derive(Debug, Clone)]
pub struct ReceivedSet<'a> {
    receiver: usize,
    senders: Vec<usize>,
    params: Vec<&'a [f64]>,
    risks: Option<Vec<f64>>,
}

impl<'a> ReceivedSet<'a> {
    pub fn new(receiver: usize, senders: Vec<usize>, params: Vec<&'a [f64]>) -> Result<Self> {
        if senders.len() != params.len() {
            return Err(Error::Contract(format!(
                "{} senders but {} parameter vectors",
                senders.len(),
                params.len()
            )));
        }
        if senders.iter().filter(|&&s| s == receiver).count() != 1 {
            return Err(Error::Contract(format!(
                "receiver {receiver} must appear exactly once among the senders"
            )));
        }
        let mut sorted = senders.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Contract("duplicate sender id".into()));
        }
        let dim = params[0].len();
        if let Some(p) = params.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        Ok(Self {
            receiver,
            senders,
            params,
            risks: None,
        })
    }

    /// Attaches receiver-side risks, one per sender.
    ///
    /// `+inf` marks parameters the receiver could not evaluate (overflowing
    /// forward pass); such senders get weight zero from the adaptive rules.
    /// The receiver's own risk must be finite.
    pub fn with_risks(mut self, risks: Vec<f64>) -> Result<Self> {
        if risks.len() != self.senders.len() {
            return Err(Error::Contract(format!(
                "{} risks for {} senders",
                risks.len(),
                self.senders.len()
            )));
        }
        if let Some(r) = risks.iter().find(|r| r.is_nan() || **r < 0.0) {
            return Err(Error::Contract(format!("invalid risk {r}")));
        }
        let own = risks[self.own_index()];
        if !own.is_finite() {
            return Err(Error::Numeric(format!("receiver's own risk is {own}")));
        }
        self.risks = Some(risks.into_iter().map(|r| r.max(RISK_FLOOR)).collect());
        Ok(self)
    }

    pub fn receiver(&self) -> usize {
        self.receiver
    }

    pub fn senders(&self) -> &[usize] {
        &self.senders
    }

    pub fn params(&self) -> &[&'a [f64]] {
        &self.params
    }

    /// Clamped risks, if attached.
    pub fn risks(&self) -> Option<&[f64]> {
        self.risks.as_deref()
    }

    pub fn len(&self) -> usize {
        self.senders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senders.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.params[0].len()
    }

    pub fn own_index(&self) -> usize {
        self.senders
            .iter()
            .position(|&s| s == self.receiver)
            .expect("validated at construction")
    }

    fn require_risks(&self) -> Result<&[f64]> {
        self.risks
            .as_deref()
            .ok_or_else(|| Error::Contract("adaptive aggregation needs receiver-side risks".into()))
    }
}

/// Convex combination weights, aligned with the senders of a [`ReceivedSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    senders: Vec<usize>,
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn senders(&self) -> &[usize] {
        &self.senders
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight of `sender`; zero for ids outside the neighbourhood.
    pub fn get(&self, sender: usize) -> f64 {
        self.senders
            .iter()
            .position(|&s| s == sender)
            .map_or(0.0, |i| self.weights[i])
    }

    /// Senders with non-zero weight, in sender order.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.senders
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w != 0.0)
            .map(|(&s, _)| s)
    }
}

fn inverse_risk_weights(rs: &ReceivedSet<'_>, risks: &[f64], keep: impl Fn(f64) -> bool) -> WeightVector {
    let inv: Vec<f64> = risks
        .iter()
        .map(|&r| if keep(r) { 1.0 / r } else { 0.0 })
        .collect();
    let total: f64 = inv.iter().filter(|&&v| v != 0.0).sum();
    WeightVector {
        senders: rs.senders.clone(),
        weights: inv.iter().map(|&v| if v == 0.0 { 0.0 } else { v / total }).collect(),
    }
}

/// Inverse-risk weights over the whole neighbourhood.
pub fn adaptive_weights(rs: &ReceivedSet<'_>) -> Result<WeightVector> {
    let risks = rs.require_risks()?;
    Ok(inverse_risk_weights(rs, risks, |_| true))
}

/// Inverse-risk weights over the senders whose risk does not exceed the
/// receiver's own; everyone else gets exactly zero. The receiver is always
/// selected, so the support is never empty.
pub fn adaptive_weights_filtered(rs: &ReceivedSet<'_>) -> Result<WeightVector> {
    let risks = rs.require_risks()?;
    let own = risks[rs.own_index()];
    Ok(inverse_risk_weights(rs, risks, |r| r <= own))
}

/// `sum_l c_l * w_l`, skipping zero-weight senders entirely.
pub fn combine(rs: &ReceivedSet<'_>, weights: &WeightVector) -> Result<ParamVector> {
    if weights.senders != rs.senders {
        return Err(Error::Contract("weights are not aligned with the received set".into()));
    }
    let mut out = vec![0.0; rs.dim()];
    for (&c, p) in weights.weights.iter().zip(&rs.params) {
        if c == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(p.iter()) {
            *o += c * v;
        }
    }
    Ok(ParamVector::new(out))
}

/// Unweighted coordinate-wise mean.
pub fn mean_rule(rs: &ReceivedSet<'_>) -> ParamVector {
    let n = rs.len() as f64;
    let mut out = vec![0.0; rs.dim()];
    for p in &rs.params {
        for (o, v) in out.iter_mut().zip(p.iter()) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= n);
    ParamVector::new(out)
}

fn column(rs: &ReceivedSet<'_>, i: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(rs.params.iter().map(|p| p[i]));
    buf.sort_unstable_by(f64::total_cmp);
}

/// Per coordinate: drop the `b` smallest and `b` largest values, average
/// the rest.
pub fn trimmed_mean_rule(rs: &ReceivedSet<'_>, b: usize) -> Result<ParamVector> {
    let n = rs.len();
    if n <= 2 * b {
        return Err(Error::RuleInfeasible(format!(
            "trimmed mean with b = {b} needs more than {} senders, got {n}",
            2 * b
        )));
    }
    let kept = (n - 2 * b) as f64;
    let mut buf = Vec::with_capacity(n);
    let out = (0..rs.dim())
        .map(|i| {
            column(rs, i, &mut buf);
            buf[b..n - b].iter().sum::<f64>() / kept
        })
        .collect();
    Ok(ParamVector::new(out))
}

/// Per-coordinate median; even counts average the two middle values.
pub fn coordinate_median_rule(rs: &ReceivedSet<'_>) -> ParamVector {
    let n = rs.len();
    let mut buf = Vec::with_capacity(n);
    let out = (0..rs.dim())
        .map(|i| {
            column(rs, i, &mut buf);
            if n % 2 == 1 {
                buf[n / 2]
            } else {
                (buf[n / 2 - 1] + buf[n / 2]) / 2.0
            }
        })
        .collect();
    ParamVector::new(out)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// Index of the smallest score; ties go to the lowest sender id.
fn select_min(rs: &ReceivedSet<'_>, scores: &[f64]) -> usize {
    (0..scores.len())
        .min_by(|&a, &b| {
            scores[a]
                .total_cmp(&scores[b])
                .then_with(|| rs.senders[a].cmp(&rs.senders[b]))
        })
        .expect("non-empty received set")
}

/// Krum: the sender minimising the summed squared distance to its
/// `n - f - 2` nearest other senders.
pub fn krum_rule(rs: &ReceivedSet<'_>, f: usize) -> Result<ParamVector> {
    let n = rs.len();
    if n < 2 * f + 3 {
        return Err(Error::RuleInfeasible(format!(
            "Krum with f = {f} needs at least {} senders, got {n}",
            2 * f + 3
        )));
    }
    let nearest = n - f - 2;
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = squared_distance(rs.params[i], rs.params[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            let mut others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist[i][j]).collect();
            others.sort_unstable_by(f64::total_cmp);
            others[..nearest].iter().sum()
        })
        .collect();
    Ok(ParamVector::new(rs.params[select_min(rs, &scores)].to_vec()))
}

/// The received vector with the smallest summed Euclidean distance to all
/// others.
pub fn medoid_rule(rs: &ReceivedSet<'_>) -> ParamVector {
    let n = rs.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = squared_distance(rs.params[i], rs.params[j]).sqrt();
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let scores: Vec<f64> = dist.iter().map(|row| row.iter().sum()).collect();
    ParamVector::new(rs.params[select_min(rs, &scores)].to_vec())
}

/// A fully parameterised aggregation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationRule {
    Adaptive,
    AdaptiveUnfiltered,
    Mean,
    TrimmedMean { b: usize },
    CoordMedian,
    Krum { f: usize },
    Medoid,
}

impl AggregationRule {
    pub fn needs_risks(&self) -> bool {
        matches!(self, Self::Adaptive | Self::AdaptiveUnfiltered)
    }

    /// Weights for the weight-based rules; `None` for selection rules.
    pub fn weights(&self, rs: &ReceivedSet<'_>) -> Result<Option<WeightVector>> {
        Ok(match self {
            Self::Adaptive => Some(adaptive_weights_filtered(rs)?),
            Self::AdaptiveUnfiltered => Some(adaptive_weights(rs)?),
            Self::Mean => {
                let n = rs.len() as f64;
                Some(WeightVector {
                    senders: rs.senders.clone(),
                    weights: vec![1.0 / n; rs.len()],
                })
            }
            _ => None,
        })
    }
}

/// Applies `rule` to `rs`. Fails if the result is not finite.
pub fn aggregate(rule: &AggregationRule, rs: &ReceivedSet<'_>) -> Result<ParamVector> {
    let out = match *rule {
        AggregationRule::Adaptive => combine(rs, &adaptive_weights_filtered(rs)?)?,
        AggregationRule::AdaptiveUnfiltered => combine(rs, &adaptive_weights(rs)?)?,
        AggregationRule::Mean => mean_rule(rs),
        AggregationRule::TrimmedMean { b } => trimmed_mean_rule(rs, b)?,
        AggregationRule::CoordMedian => coordinate_median_rule(rs),
        AggregationRule::Krum { f } => krum_rule(rs, f)?,
        AggregationRule::Medoid => medoid_rule(rs),
    };
    out.ensure_finite("aggregate")?;
    Ok(out)
}

/// Rule names as they appear in configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    #[default]
    Adaptive,
    AdaptiveUnfiltered,
    Mean,
    TrimmedMean,
    CoordMedian,
    Krum,
    Medoid,
}

/// Rule selection plus optional overrides for its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationConfig {
    pub rule: RuleKind,
    /// Values trimmed per side; defaults to the adversary count under
    /// attack, else `ceil(0.1 * |N_k|)`.
    pub trim_b: Option<usize>,
    /// Adversary count assumed by Krum; defaults to the configured count.
    pub krum_f: Option<usize>,
}

impl AggregationConfig {
    /// Concrete rule for a receiver with `neighborhood` senders when
    /// `adversaries` workers are configured as adversarial.
    pub fn resolve(&self, neighborhood: usize, adversaries: usize) -> AggregationRule {
        match self.rule {
            RuleKind::Adaptive => AggregationRule::Adaptive,
            RuleKind::AdaptiveUnfiltered => AggregationRule::AdaptiveUnfiltered,
            RuleKind::Mean => AggregationRule::Mean,
            RuleKind::TrimmedMean => AggregationRule::TrimmedMean {
                b: self.trim_b.unwrap_or(if adversaries > 0 {
                    adversaries
                } else {
                    (neighborhood as f64 * 0.1).ceil() as usize
                }),
            },
            RuleKind::CoordMedian => AggregationRule::CoordMedian,
            RuleKind::Krum => AggregationRule::Krum {
                f: self.krum_f.unwrap_or(adversaries),
            },
            RuleKind::Medoid => AggregationRule::Medoid,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set<'a>(params: &'a [Vec<f64>], receiver: usize) -> ReceivedSet<'a> {
        ReceivedSet::new(
            receiver,
            (0..params.len()).collect(),
            params.iter().map(Vec::as_slice).collect(),
        )
        .unwrap()
    }

    fn scalars(values: &[f64]) -> Vec<Vec<f64>> {
        values.iter().map(|&v| vec![v]).collect()
    }

    #[test]
    fn inverse_risk_weights_examples() {
        let p = scalars(&[0.0, 0.0, 0.0]);
        let rs = set(&p, 0).with_risks(vec![1.0, 2.0, 2.0]).unwrap();
        assert_eq!(adaptive_weights(&rs).unwrap().weights(), &[0.5, 0.25, 0.25]);

        let p = scalars(&[0.0; 4]);
        let rs = set(&p, 2).with_risks(vec![0.7; 4]).unwrap();
        assert_eq!(adaptive_weights(&rs).unwrap().weights(), &[0.25; 4]);
    }

    #[test]
    fn filtered_weights_example() {
        // own risk 1.5, a = 1.0, b = 2.0
        let p = scalars(&[0.0; 3]);
        let rs = set(&p, 0).with_risks(vec![1.5, 1.0, 2.0]).unwrap();
        let w = adaptive_weights_filtered(&rs).unwrap();
        assert!((w.get(0) - 0.4).abs() < 1e-15);
        assert!((w.get(1) - 0.6).abs() < 1e-15);
        assert_eq!(w.get(2), 0.0);
        assert_eq!(w.get(42), 0.0);
        assert_eq!(w.support().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn all_worse_neighbours_leave_self_only() {
        let p = scalars(&[3.0, 1.0, 2.0]);
        let rs = set(&p, 0).with_risks(vec![0.1, 0.5, 0.9]).unwrap();
        let w = adaptive_weights_filtered(&rs).unwrap();
        assert_eq!(w.weights(), &[1.0, 0.0, 0.0]);
        assert_eq!(aggregate(&AggregationRule::Adaptive, &rs).unwrap().as_slice(), &[3.0]);
    }

    #[test]
    fn equal_risk_neighbour_is_included() {
        let p = scalars(&[0.0, 1.0]);
        let rs = set(&p, 0).with_risks(vec![0.8, 0.8]).unwrap();
        assert_eq!(adaptive_weights_filtered(&rs).unwrap().weights(), &[0.5, 0.5]);
    }

    #[test]
    fn zero_and_infinite_risks() {
        let p = scalars(&[1.0, 2.0, 3.0]);
        let rs = set(&p, 0).with_risks(vec![0.5, 0.0, f64::INFINITY]).unwrap();
        let w = adaptive_weights(&rs).unwrap();
        assert!(w.get(1) > 0.999_999_999);
        assert_eq!(w.get(2), 0.0);
        assert!(set(&p, 0).with_risks(vec![f64::INFINITY, 1.0, 1.0]).is_err());
        assert!(set(&p, 0).with_risks(vec![1.0, f64::NAN, 1.0]).is_err());
        assert!(set(&p, 0).with_risks(vec![1.0, -1.0, 1.0]).is_err());
    }

    #[test]
    fn adaptive_needs_risks() {
        let p = scalars(&[1.0, 2.0]);
        assert!(matches!(
            aggregate(&AggregationRule::Adaptive, &set(&p, 0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn combine_examples() {
        let p = vec![vec![1.0, 1.0], vec![3.0, 3.0]];
        let rs = set(&p, 0).with_risks(vec![1.0, 1.0]).unwrap();
        let w = adaptive_weights(&rs).unwrap();
        assert_eq!(combine(&rs, &w).unwrap().as_slice(), &[2.0, 2.0]);
        let rs = set(&p, 1).with_risks(vec![5.0, 1.0]).unwrap();
        let w = adaptive_weights_filtered(&rs).unwrap();
        assert_eq!(combine(&rs, &w).unwrap().as_slice(), &[3.0, 3.0]);
    }

    #[test]
    fn received_set_validation() {
        let p = scalars(&[1.0, 2.0]);
        let slices: Vec<&[f64]> = p.iter().map(Vec::as_slice).collect();
        assert!(ReceivedSet::new(5, vec![0, 1], slices.clone()).is_err());
        assert!(ReceivedSet::new(0, vec![0, 0], slices.clone()).is_err());
        assert!(ReceivedSet::new(0, vec![0], slices.clone()).is_err());
        let ragged = [vec![1.0], vec![1.0, 2.0]];
        assert!(matches!(
            ReceivedSet::new(0, vec![0, 1], ragged.iter().map(Vec::as_slice).collect()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean_rule(&set(&scalars(&[0.0, 2.0, 4.0]), 0)).as_slice(), &[2.0]);
        assert_eq!(mean_rule(&set(&scalars(&[7.5]), 0)).as_slice(), &[7.5]);
        let m = mean_rule(&set(&scalars(&[0.0, 0.0, 1e9]), 0));
        assert!((m[0] - 1e9 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn trimmed_mean_examples() {
        let p = scalars(&[1.0, 2.0, 3.0, 4.0, 100.0]);
        assert_eq!(trimmed_mean_rule(&set(&p, 0), 1).unwrap().as_slice(), &[3.0]);
        assert_eq!(trimmed_mean_rule(&set(&p, 0), 0).unwrap(), mean_rule(&set(&p, 0)));
        assert!(matches!(
            trimmed_mean_rule(&set(&scalars(&[1.0, 2.0, 3.0, 4.0]), 0), 2),
            Err(Error::RuleInfeasible(_))
        ));
    }

    #[test]
    fn trimmed_mean_survives_f_outliers() {
        // F adversaries at +-1e9 among 2F+1 honest values in [0, 1]
        for f in 1..5 {
            let honest: Vec<f64> = (0..(2 * f + 1)).map(|i| i as f64 / (2 * f) as f64).collect();
            let mut vals = honest.clone();
            vals.extend((0..f).map(|i| if i % 2 == 0 { 1e9 } else { -1e9 }));
            let out = trimmed_mean_rule(&set(&scalars(&vals), 0), f).unwrap();
            assert!((0.0..=1.0).contains(&out[0]), "f = {f}: {}", out[0]);
        }
    }

    #[test]
    fn median_examples() {
        assert_eq!(coordinate_median_rule(&set(&scalars(&[1.0, 2.0, 100.0]), 0)).as_slice(), &[2.0]);
        assert_eq!(coordinate_median_rule(&set(&scalars(&[1.0, 3.0]), 0)).as_slice(), &[2.0]);
        assert_eq!(
            coordinate_median_rule(&set(&scalars(&[100.0, 1.0, 2.0]), 2)).as_slice(),
            &[2.0]
        );
    }

    #[test]
    fn krum_picks_cluster_member() {
        let p = vec![
            vec![0.0, 0.1],
            vec![0.1, 0.0],
            vec![10.0, 10.0],
            vec![-0.1, 0.0],
            vec![0.0, -0.1],
        ];
        let out = krum_rule(&set(&p, 0), 1).unwrap();
        assert!(out.iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn krum_identical_and_infeasible() {
        let p = vec![vec![1.0, 2.0]; 5];
        assert_eq!(krum_rule(&set(&p, 3), 1).unwrap().as_slice(), &[1.0, 2.0]);
        let p = vec![vec![0.0]; 4];
        assert!(matches!(krum_rule(&set(&p, 0), 1), Err(Error::RuleInfeasible(_))));
    }

    #[test]
    fn medoid_examples() {
        assert_eq!(medoid_rule(&set(&scalars(&[0.0, 0.1, 10.0]), 0)).as_slice(), &[0.1]);
        // tie between two senders goes to the lower id
        let p = scalars(&[5.0, -5.0]);
        let slices: Vec<&[f64]> = p.iter().map(Vec::as_slice).collect();
        let rs = ReceivedSet::new(4, vec![4, 2], slices).unwrap();
        assert_eq!(medoid_rule(&rs).as_slice(), &[-5.0]);
    }

    #[test]
    fn resolve_defaults() {
        let cfg = AggregationConfig { rule: RuleKind::TrimmedMean, ..Default::default() };
        assert_eq!(cfg.resolve(10, 3), AggregationRule::TrimmedMean { b: 3 });
        assert_eq!(cfg.resolve(10, 0), AggregationRule::TrimmedMean { b: 1 });
        assert_eq!(cfg.resolve(30, 0), AggregationRule::TrimmedMean { b: 3 });
        let cfg = AggregationConfig { rule: RuleKind::Krum, krum_f: Some(2), ..Default::default() };
        assert_eq!(cfg.resolve(10, 3), AggregationRule::Krum { f: 2 });
    }

    fn arb_received() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, usize)> {
        (1usize..15).prop_flat_map(|n| {
            (
                proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 3), n),
                proptest::collection::vec(1e-6f64..1e3, n),
                0..n,
            )
        })
    }

    proptest! {
        #[test]
        fn filtered_weights_simplex_and_exclusion((p, risks, me) in arb_received()) {
            let rs = set(&p, me).with_risks(risks.clone()).unwrap();
            let w = adaptive_weights_filtered(&rs).unwrap();
            let sum: f64 = w.weights().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            for (l, &c) in w.weights().iter().enumerate() {
                prop_assert!(c >= 0.0);
                if risks[l] > risks[me] {
                    prop_assert_eq!(c, 0.0);
                }
            }
            prop_assert!(w.get(me) > 0.0);
        }

        #[test]
        fn weights_decrease_with_risk((p, risks, me) in arb_received()) {
            let rs = set(&p, me).with_risks(risks.clone()).unwrap();
            let w = adaptive_weights_filtered(&rs).unwrap();
            for a in 0..p.len() {
                for b in 0..p.len() {
                    if w.weights()[a] > 0.0 && w.weights()[b] > 0.0 && risks[a] < risks[b] {
                        prop_assert!(w.weights()[a] > w.weights()[b]);
                    }
                }
            }
        }

        #[test]
        fn adaptive_aggregate_in_hull((p, risks, me) in arb_received()) {
            let rs = set(&p, me).with_risks(risks).unwrap();
            let out = aggregate(&AggregationRule::Adaptive, &rs).unwrap();
            let w = adaptive_weights_filtered(&rs).unwrap();
            for i in 0..3 {
                let lo = w.support().map(|s| p[s][i]).fold(f64::INFINITY, f64::min);
                let hi = w.support().map(|s| p[s][i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out[i] >= lo - 1e-9 && out[i] <= hi + 1e-9);
            }
        }

        #[test]
        fn median_is_permutation_invariant(vals in proptest::collection::vec(-1e3f64..1e3, 1..12), rot in 0usize..12) {
            let mut shifted = vals.clone();
            let k = rot % vals.len();
            shifted.rotate_left(k);
            let a = coordinate_median_rule(&set(&scalars(&vals), 0));
            let b = coordinate_median_rule(&set(&scalars(&shifted), 0));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn medoid_is_a_received_vector(p in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 2), 1..9)) {
            let m = medoid_rule(&set(&p, 0));
            prop_assert!(p.iter().any(|v| v.as_slice() == m.as_slice()));
        }
    }
}
