//! Per-epoch metrics and their CSV serialisation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Normal,
    Adversarial,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Normal => "normal",
            Role::Adversarial => "adversarial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkerRecord {
    pub epoch: usize,
    pub worker: usize,
    pub role: Role,
    /// Risk on the worker's full training shard; `inf` if it overflowed.
    pub train_risk: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub worst_normal_acc: f64,
    pub max_normal_risk: f64,
    /// Mean training risk over all workers.
    pub global_objective: f64,
    /// Adversarial senders that received non-zero weight from a normal
    /// receiver this epoch, summed over receivers. Zero for selection and
    /// coordinate-wise rules.
    pub adversarial_admissions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub workers: Vec<WorkerRecord>,
    pub summaries: Vec<EpochSummary>,
}

pub const WORKER_HEADER: [&str; 5] = ["epoch", "worker", "role", "train_risk", "test_acc"];
pub const SUMMARY_HEADER: [&str; 4] = ["epoch", "worst_normal_acc", "max_normal_risk", "global_objective"];

impl MetricsLog {
    /// Appends one epoch of per-worker records and derives its summary.
    pub fn push_epoch(&mut self, records: Vec<WorkerRecord>, adversarial_admissions: usize) {
        let epoch = records.first().map_or(0, |r| r.epoch);
        let normal = records.iter().filter(|r| r.role == Role::Normal);
        let worst_normal_acc = normal.clone().map(|r| r.test_acc).fold(f64::INFINITY, f64::min);
        let max_normal_risk = normal.map(|r| r.train_risk).fold(f64::NEG_INFINITY, f64::max);
        let global_objective = records.iter().map(|r| r.train_risk).sum::<f64>() / records.len() as f64;
        self.summaries.push(EpochSummary {
            epoch,
            worst_normal_acc,
            max_normal_risk,
            global_objective,
            adversarial_admissions,
        });
        self.workers.extend(records);
    }

    pub fn last(&self) -> Option<&EpochSummary> {
        self.summaries.last()
    }

    /// Records of one worker, in epoch order.
    pub fn worker(&self, id: usize) -> impl Iterator<Item = &WorkerRecord> {
        self.workers.iter().filter(move |r| r.worker == id)
    }

    pub fn total_adversarial_admissions(&self) -> usize {
        self.summaries.iter().map(|s| s.adversarial_admissions).sum()
    }

    pub fn write_worker_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(WORKER_HEADER).map_err(csv_err)?;
        for r in &self.workers {
            w.write_record([
                r.epoch.to_string(),
                r.worker.to_string(),
                r.role.as_str().to_string(),
                fmt_sig9(r.train_risk),
                fmt_sig9(r.test_acc),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
        for s in &self.summaries {
            w.write_record([
                s.epoch.to_string(),
                fmt_sig9(s.worst_normal_acc),
                fmt_sig9(s.max_normal_risk),
                fmt_sig9(s.global_objective),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => crate::error::Error::Contract(format!("csv writer: {other:?}")),
    }
}

/// Formats like C's `%.9g`: nine significant digits, trailing zeros
/// removed, exponent notation outside `[1e-4, 1e9)`.
pub fn fmt_sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let fixed = format!("{:.*}", (8 - exp) as usize, x);
        strip_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa), exp.abs())
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
