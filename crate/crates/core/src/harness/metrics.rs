//! JSON-lines metrics log.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// One logging interval. Keys serialize in a fixed order; no wall-clock time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Index of the row in the log.
    pub step: u64,
    pub env_steps: u64,
    /// Gradient steps up to and including this interval.
    pub updates: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episode: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_return: Option<Real>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_return_mean: Option<Real>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_return_std: Option<Real>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub losses: BTreeMap<String, Real>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub exploration: BTreeMap<String, Real>,
}

impl MetricsRow {
    pub fn loss(mut self, name: &str, v: Real) -> Self {
        self.losses.insert(name.into(), v);
        self
    }

    pub fn explore(mut self, name: &str, v: Real) -> Self {
        self.exploration.insert(name.into(), v);
        self
    }

    /// Name of the first non-finite field, if any.
    pub fn non_finite(&self) -> Option<String> {
        let opt = [
            ("train_return", self.train_return),
            ("eval_return_mean", self.eval_return_mean),
            ("eval_return_std", self.eval_return_std),
        ];
        for (k, v) in opt {
            if v.is_some_and(|x| !x.is_finite()) {
                return Some(k.into());
            }
        }
        self.losses
            .iter()
            .chain(&self.exploration)
            .find(|(_, v)| !v.is_finite())
            .map(|(k, _)| k.clone())
    }
}

/// Appends rows, numbering them and enforcing the log invariants.
pub struct MetricsLog<W: Write> {
    out: W,
    rows: u64,
    env_steps: u64,
    updates: u64,
}

impl<W: Write> MetricsLog<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            rows: 0,
            env_steps: 0,
            updates: 0,
        }
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    /// Writes one row; non-finite values give [`Error::TrainingDivergence`]
    /// and nothing is written.
    pub fn write(&mut self, mut row: MetricsRow) -> Result<()> {
        if let Some(param) = row.non_finite() {
            return Err(Error::TrainingDivergence { param });
        }
        if row.env_steps < self.env_steps || row.updates < self.updates {
            return Err(Error::State(format!(
                "metrics counters went backwards: env_steps {} -> {}, updates {} -> {}",
                self.env_steps, row.env_steps, self.updates, row.updates
            )));
        }
        row.step = self.rows;
        let line = serde_json::to_string(&row).map_err(|e| Error::State(format!("metrics encoding: {e}")))?;
        writeln!(self.out, "{line}")?;
        self.rows += 1;
        self.env_steps = row.env_steps;
        self.updates = row.updates;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parses a JSON-lines log.
pub fn read_metrics(text: &str) -> Result<Vec<MetricsRow>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::State(format!("metrics line {}: {e}", i + 1))))
        .collect()
}
