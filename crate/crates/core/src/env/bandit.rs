use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ActionKind, ActionValue, EnvSpec, Environment, Phase, Step};
use crate::error::{Error, Result};
use crate::Real;

/// One-step episodes over a labelled dataset: the state is a feature vector,
/// the action a class index, and the reward 1 for the correct class, else 0.
///
/// `reset(Some(seed))` reshuffles the presentation order with `seed` and
/// returns the first sample; `reset(None)` advances to the next sample,
/// reshuffling after a full pass.
#[derive(Debug, Clone)]
pub struct DatasetBandit {
    features: Vec<Vec<Real>>,
    labels: Vec<usize>,
    num_classes: usize,
    order: Vec<usize>,
    cursor: usize,
    fresh: bool,
    rng: ChaCha8Rng,
    phase: Phase,
}

impl DatasetBandit {
    pub fn new(features: Vec<Vec<Real>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Config("dataset is empty".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::Config(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features[0].len();
        if dim == 0 || features.iter().any(|f| f.len() != dim) {
            return Err(Error::Config("feature rows must share a positive width".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Config(format!("label {bad} >= class count {num_classes}")));
        }
        let n = features.len();
        Ok(Self {
            features,
            labels,
            num_classes,
            order: (0..n).collect(),
            cursor: 0,
            fresh: true,
            rng: ChaCha8Rng::seed_from_u64(0),
            phase: Phase::NeedsReset,
        })
    }

    /// Rows of `f1,...,fk,label`. A first line that does not parse is taken as a header.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: std::result::Result<Vec<Real>, _> = cells.iter().map(|c| c.parse::<Real>()).collect();
            let row = match parsed {
                Ok(r) => r,
                Err(_) if lineno == 0 => continue,
                Err(e) => return Err(Error::Config(format!("csv line {}: {e}", lineno + 1))),
            };
            if row.len() < 2 {
                return Err(Error::Config(format!("csv line {}: need features and a label", lineno + 1)));
            }
            let label = row[row.len() - 1];
            if label < 0.0 || label.fract() != 0.0 {
                return Err(Error::Config(format!("csv line {}: label {label} is not a class index", lineno + 1)));
            }
            labels.push(label as usize);
            features.push(row[..row.len() - 1].to_vec());
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(features, labels, classes)
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[Vec<Real>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Index into the dataset of the sample currently shown.
    pub fn current_index(&self) -> usize {
        self.order[self.cursor]
    }

    pub fn current_label(&self) -> usize {
        self.labels[self.current_index()]
    }

    /// Splits off the last `fraction` of the rows (after a seeded shuffle) as a second dataset.
    pub fn split(&self, fraction: Real, seed: u64) -> Result<(Self, Self)> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = ((self.len() as Real) * fraction).round() as usize;
        if n_val == 0 || n_val >= self.len() {
            return Err(Error::Config(format!("split fraction {fraction} leaves an empty side")));
        }
        let cut = self.len() - n_val;
        let pick = |ids: &[usize]| {
            Self::new(
                ids.iter().map(|&i| self.features[i].clone()).collect(),
                ids.iter().map(|&i| self.labels[i]).collect(),
                self.num_classes,
            )
        };
        Ok((pick(&idx[..cut])?, pick(&idx[cut..])?))
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.len()).collect();
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }
}

impl Environment for DatasetBandit {
    fn name(&self) -> &str {
        "bandit"
    }

    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: self.features[0].len(),
            action_kind: ActionKind::Discrete(self.num_classes),
            max_episode_steps: Some(1),
        }
    }

    fn reset(&mut self, seed: Option<u64>) -> Vec<Real> {
        match seed {
            Some(s) => {
                self.rng = ChaCha8Rng::seed_from_u64(s);
                self.reshuffle();
            }
            None if self.fresh => self.reshuffle(),
            None => {
                self.cursor += 1;
                if self.cursor == self.len() {
                    self.reshuffle();
                }
            }
        }
        self.fresh = false;
        self.phase = Phase::Running;
        self.features[self.current_index()].clone()
    }

    fn step(&mut self, action: &ActionValue) -> Result<Step> {
        self.phase.check_step("bandit")?;
        self.spec().action_kind.validate(action)?;
        let reward = if action.discrete() == Some(self.current_label()) { 1.0 } else { 0.0 };
        self.phase = Phase::Done;
        Ok(Step {
            next_state: self.features[self.current_index()].clone(),
            reward,
            done: true,
            truncated: false,
        })
    }

    fn reward_range(&self) -> (Real, Real) {
        (0.0, 1.0)
    }
}

/// `per_class` isotropic Gaussian samples around each of `classes` centres.
///
/// Centres are drawn uniformly from `[-separation, separation]^dim`.
pub fn gaussian_blobs<R: Rng>(
    per_class: usize,
    classes: usize,
    dim: usize,
    separation: Real,
    noise: Real,
    rng: &mut R,
) -> (Vec<Vec<Real>>, Vec<usize>) {
    let normal = Normal::new(0.0, noise.max(1e-12)).expect("positive std");
    let centres: Vec<Vec<Real>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.random_range(-separation..=separation)).collect())
        .collect();
    let mut xs = Vec::with_capacity(per_class * classes);
    let mut ys = Vec::with_capacity(per_class * classes);
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per_class {
            xs.push(centre.iter().map(|&m| m + normal.sample(rng)).collect());
            ys.push(c);
        }
    }
    (xs, ys)
}

/// Two interleaving half circles in the plane, labels 0 and 1.
pub fn two_moons<R: Rng>(per_class: usize, noise: Real, rng: &mut R) -> (Vec<Vec<Real>>, Vec<usize>) {
    let normal = Normal::new(0.0, noise.max(1e-12)).expect("positive std");
    let mut xs = Vec::with_capacity(2 * per_class);
    let mut ys = Vec::with_capacity(2 * per_class);
    for i in 0..per_class {
        let t = std::f64::consts::PI * i as Real / (per_class.max(2) - 1) as Real;
        xs.push(vec![t.cos() + normal.sample(rng), t.sin() + normal.sample(rng)]);
        ys.push(0);
        xs.push(vec![1.0 - t.cos() + normal.sample(rng), 0.5 - t.sin() + normal.sample(rng)]);
        ys.push(1);
    }
    (xs, ys)
}
