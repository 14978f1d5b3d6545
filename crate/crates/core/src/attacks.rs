//! Model-poisoning transforms applied to the outgoing parameters of
//! adversarial workers.
//!
//! Attacks only corrupt the transmitted copy. An adversary's own state, and
//! the copy it keeps for itself, stay honest.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[default]
    None,
    SignFlip,
    Arbitrary,
    Foe,
    Alie,
}

/// Which workers are adversarial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Adversaries {
    /// The first `F` worker ids.
    Count(usize),
    List(Vec<usize>),
}

impl Default for Adversaries {
    fn default() -> Self {
        Adversaries::Count(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub sigma_sf: f64,
    pub half_width: f64,
    pub eps_foe: f64,
    pub z_alie: f64,
    pub adversaries: Adversaries,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            sigma_sf: 1.0,
            half_width: 0.5,
            eps_foe: 1.0,
            z_alie: 0.3,
            adversaries: Adversaries::Count(0),
        }
    }
}

impl AttackSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(kind: AttackKind, adversaries: Adversaries) -> Self {
        Self {
            kind,
            adversaries,
            ..Self::default()
        }
    }

    /// Sorted adversary ids for a network of `n` workers. Empty when the
    /// attack kind is `none`.
    pub fn adversary_ids(&self, n: usize) -> Result<Vec<usize>> {
        if self.kind == AttackKind::None {
            return Ok(Vec::new());
        }
        let mut ids = match &self.adversaries {
            Adversaries::Count(f) => {
                if *f > n {
                    return Err(Error::config(
                        "attack.adversaries",
                        format!("{f} adversaries requested for {n} workers"),
                    ));
                }
                (0..*f).collect()
            }
            Adversaries::List(ids) => ids.clone(),
        };
        ids.sort_unstable();
        ids.dedup();
        if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
            return Err(Error::config(
                "attack.adversaries",
                format!("adversary id {bad} out of range for {n} workers"),
            ));
        }
        Ok(ids)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_sf > 0.0 && self.sigma_sf.is_finite()) {
            return Err(Error::config("attack.sigma_sf", "must be positive"));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::config("attack.half_width", "must be positive"));
        }
        if !(self.eps_foe > 0.0 && self.eps_foe.is_finite()) {
            return Err(Error::config("attack.eps_foe", "must be positive"));
        }
        if !(self.z_alie >= 0.0 && self.z_alie.is_finite()) {
            return Err(Error::config("attack.z_alie", "must be non-negative"));
        }
        Ok(())
    }
}

/// Read-only view of the normal workers' intermediate parameters for the
/// current epoch.
#[derive(Debug, Clone, Copy)]
pub struct AttackOracle<'a> {
    normals: &'a [&'a [f64]],
}

impl<'a> AttackOracle<'a> {
    pub fn new(normals: &'a [&'a [f64]]) -> Self {
        Self { normals }
    }

    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    fn mean(&self) -> Vec<f64> {
        let n = self.normals.len() as f64;
        let mut out = vec![0.0; self.normals[0].len()];
        for w in self.normals {
            for (o, v) in out.iter_mut().zip(w.iter()) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

/// `-sigma * w`.
pub fn sign_flip(w: &[f64], sigma: f64) -> ParamVector {
    ParamVector::new(w.iter().map(|v| -sigma * v).collect())
}

/// `w_i * u_i` with `u_i ~ U(-half_width, half_width)`.
pub fn arbitrary_byzantine<R: Rng + ?Sized>(w: &[f64], half_width: f64, rng: &mut R) -> ParamVector {
    ParamVector::new(
        w.iter()
            .map(|v| v * rng.random_range(-half_width..half_width))
            .collect(),
    )
}

/// `-eps` times the mean of the normal parameters.
pub fn foe(oracle: &AttackOracle<'_>, eps: f64) -> Result<ParamVector> {
    if oracle.is_empty() {
        return Err(Error::AttackInfeasible("FoE needs at least one normal worker".into()));
    }
    Ok(ParamVector::new(oracle.mean().into_iter().map(|m| -eps * m).collect()))
}

/// Per coordinate, the normal mean minus `z` population standard deviations.
pub fn alie(oracle: &AttackOracle<'_>, z: f64) -> Result<ParamVector> {
    if oracle.len() < 2 {
        return Err(Error::AttackInfeasible(format!(
            "ALIE needs at least two normal workers, got {}",
            oracle.len()
        )));
    }
    let mean = oracle.mean();
    let n = oracle.len() as f64;
    let mut var = vec![0.0; mean.len()];
    for w in oracle.normals {
        for ((s, v), m) in var.iter_mut().zip(w.iter()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    Ok(ParamVector::new(
        mean.iter()
            .zip(&var)
            .map(|(m, s)| m - z * (s / n).sqrt())
            .collect(),
    ))
}

/// Transmitted copy for one adversary whose honest parameters are `own`.
/// `rng` is only drawn from by the arbitrary attack.
pub fn corrupt<R: Rng + ?Sized>(
    spec: &AttackSpec,
    own: &[f64],
    oracle: &AttackOracle<'_>,
    rng: &mut R,
) -> Result<ParamVector> {
    match spec.kind {
        AttackKind::None => Ok(ParamVector::new(own.to_vec())),
        AttackKind::SignFlip => Ok(sign_flip(own, spec.sigma_sf)),
        AttackKind::Arbitrary => Ok(arbitrary_byzantine(own, spec.half_width, rng)),
        AttackKind::Foe => foe(oracle, spec.eps_foe),
        AttackKind::Alie => alie(oracle, spec.z_alie),
    }
}
