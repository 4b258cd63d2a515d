use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::{build_datasets, mean_std};
use crate::env::{ActionValue, DatasetBandit};
use crate::error::Result;
use crate::ndmath::{adam_step, Activation};
use crate::onpolicy::weighted_log_prob_loss;
use crate::policy::{argmax, HeadKind, PolicyHead};
use crate::seeding::{derive_indexed, stream_rng};
use crate::value::{one_hot_targets, vector_q_loss, QFunction, QMode};
use crate::{AdamState, Mlp, Real, Tensor};

/// Validation accuracies of one seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyRow {
    pub seed: u64,
    pub mse_accuracy: Real,
    pub ce_accuracy: Real,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyReport {
    pub rows: Vec<ClassifyRow>,
    pub mse_mean: Real,
    pub ce_mean: Real,
}

impl ClassifyReport {
    /// Largest per-seed accuracy gap, in accuracy points.
    pub fn max_gap_points(&self) -> Real {
        self.rows.iter().map(|r| (r.mse_accuracy - r.ce_accuracy).abs() * 100.0).fold(0.0, Real::max)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("seed,mse_accuracy,ce_accuracy\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:.4},{:.4}\n", r.seed, r.mse_accuracy, r.ce_accuracy));
        }
        s.push_str(&format!("mean,{:.4},{:.4}\n", self.mse_mean, self.ce_mean));
        s
    }
}

fn accuracy(net: &Mlp, data: &DatasetBandit) -> Result<Real> {
    let out = net.forward(&Tensor::from_rows(data.features())?)?;
    let hits = data.labels().iter().enumerate().filter(|&(i, &l)| argmax(out.row(i)) == l).count();
    Ok(hits as Real / data.len() as Real)
}

fn batch(data: &DatasetBandit, idx: &[usize]) -> Result<(Tensor, Vec<usize>)> {
    let rows: Vec<&[Real]> = idx.iter().map(|&i| data.features()[i].as_slice()).collect();
    Ok((Tensor::from_rows(&rows)?, idx.iter().map(|&i| data.labels()[i]).collect()))
}

/// Trains a vector-Q model on one-hot accuracy rewards with squared error
/// and a categorical policy with cross-entropy on the same data, once per
/// seed, and reports both validation accuracies.
///
/// Seed `k` uses master seed `derive_indexed(cfg.seed, "classify", k)` for
/// its dataset; both models start from identical weights.
pub fn run_classify_experiment(cfg: &RunConfig) -> Result<ClassifyReport> {
    cfg.validate()?;
    let c = &cfg.classify;
    let mut rows = Vec::with_capacity(c.seeds);
    for k in 0..c.seeds {
        let mut sub = cfg.clone();
        sub.seed = derive_indexed(cfg.seed, "classify", k as u64);
        let (train, val) = build_datasets(&sub)?;
        let (d, n) = (train.features()[0].len(), train.num_classes());
        let init = Mlp::with_hidden(d, &c.hidden, n, Activation::Relu, &mut stream_rng(sub.seed, "init"))?;
        let mut q = QFunction::from_net(QMode::StateToAllActions(n), d, init.clone())?;
        let mut pi = PolicyHead::from_trunk(HeadKind::Categorical(n), init)?;
        let mut q_opt = AdamState::new(c.mse_lr);
        let mut pi_opt = AdamState::new(c.ce_lr);
        let mut order: Vec<usize> = (0..train.len()).collect();
        for epoch in 0..c.epochs {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_indexed(sub.seed, "shuffle", epoch as u64)));
            for chunk in order.chunks(c.batch) {
                let (x, labels) = batch(&train, chunk)?;
                q.net_mut().zero_grad();
                vector_q_loss(&mut q, &x, &one_hot_targets(&labels, n)?)?;
                adam_step(q.net_mut(), &mut q_opt)?;
                let actions: Vec<ActionValue> = labels.iter().map(|&l| ActionValue::Discrete(l)).collect();
                pi.trunk_mut().zero_grad();
                weighted_log_prob_loss(&mut pi, &x, &actions, &vec![1.0; labels.len()])?;
                adam_step(pi.trunk_mut(), &mut pi_opt)?;
            }
        }
        rows.push(ClassifyRow {
            seed: sub.seed,
            mse_accuracy: accuracy(q.net(), &val)?,
            ce_accuracy: accuracy(pi.trunk(), &val)?,
        });
    }
    let mse: Vec<Real> = rows.iter().map(|r| r.mse_accuracy).collect();
    let ce: Vec<Real> = rows.iter().map(|r| r.ce_accuracy).collect();
    Ok(ClassifyReport {
        mse_mean: mean_std(&mse).0,
        ce_mean: mean_std(&ce).0,
        rows,
    })
}
