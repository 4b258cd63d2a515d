use super::targets::{argmax, td0_target};
use crate::error::{Error, Result};
use crate::Real;

/// Lookup-table action values trained with Q-learning.
#[derive(Debug, Clone)]
pub struct TabularQ {
    table: Vec<Vec<Real>>,
    learning_rate: Real,
}

impl TabularQ {
    pub fn new(num_states: usize, num_actions: usize, learning_rate: Real) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Config("empty q table".into()));
        }
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(Error::Config(format!("learning rate must lie in (0, 1], got {learning_rate}")));
        }
        Ok(Self {
            table: vec![vec![0.0; num_actions]; num_states],
            learning_rate,
        })
    }

    /// Restores a table, e.g. from a checkpoint.
    pub fn from_table(table: Vec<Vec<Real>>, learning_rate: Real) -> Result<Self> {
        let mut q = Self::new(table.len(), table.first().map_or(0, Vec::len), learning_rate)?;
        if table.iter().any(|row| row.len() != q.table[0].len()) {
            return Err(Error::Config("ragged q table".into()));
        }
        q.table = table;
        Ok(q)
    }

    /// Index of a one-hot observation.
    pub fn state_index(obs: &[Real]) -> usize {
        argmax(obs)
    }

    pub fn table(&self) -> &[Vec<Real>] {
        &self.table
    }

    pub fn values(&self, s: usize) -> &[Real] {
        &self.table[s]
    }

    pub fn greedy(&self, s: usize) -> usize {
        argmax(&self.table[s])
    }

    /// One Q-learning step towards the TD(0) target; returns the TD error.
    pub fn update(&mut self, s: usize, a: usize, r: Real, s_next: usize, done: bool, gamma: Real) -> Real {
        let target = td0_target(r, &self.table[s_next], done, gamma);
        let err = target - self.table[s][a];
        self.table[s][a] += self.learning_rate * err;
        err
    }

    /// Largest absolute difference to another table of the same shape.
    pub fn sup_distance(&self, other: &[Vec<Real>]) -> Real {
        self.table
            .iter()
            .zip(other)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, Real::max)
    }
}
