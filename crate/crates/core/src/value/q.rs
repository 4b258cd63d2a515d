use rand::Rng;

use crate::env::ActionValue;
use crate::error::{Error, Result};
use crate::ndmath::{mse_loss, Activation};
use crate::policy::PolicyHead;
use crate::{Mlp, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QMode {
    /// `Q(s) -> [Q(s, a_0), ..., Q(s, a_{n-1})]`.
    StateToAllActions(usize),
    /// `Q([s; a]) -> scalar` for `action_dim`-dimensional actions.
    StateActionToScalar(usize),
}

/// Action-value network.
#[derive(Debug, Clone)]
pub struct QFunction {
    net: Mlp,
    mode: QMode,
    state_dim: usize,
}

impl QFunction {
    pub fn new<R: Rng + ?Sized>(
        mode: QMode,
        state_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let (input, output) = match mode {
            QMode::StateToAllActions(n) => (state_dim, n),
            QMode::StateActionToScalar(d) => (state_dim + d, 1),
        };
        Ok(Self {
            net: Mlp::with_hidden(input, hidden, output, activation, rng)?,
            mode,
            state_dim,
        })
    }

    pub fn from_net(mode: QMode, state_dim: usize, net: Mlp) -> Result<Self> {
        let (input, output) = match mode {
            QMode::StateToAllActions(n) => (state_dim, n),
            QMode::StateActionToScalar(d) => (state_dim + d, 1),
        };
        if net.input_dim() != input || net.output_dim() != output {
            return Err(Error::dim(
                format!("{mode:?} network"),
                format!("{input} -> {output}"),
                format!("{} -> {}", net.input_dim(), net.output_dim()),
            ));
        }
        Ok(Self { net, mode, state_dim })
    }

    pub fn mode(&self) -> QMode {
        self.mode
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    fn discrete_count(&self) -> Result<usize> {
        match self.mode {
            QMode::StateToAllActions(n) => Ok(n),
            QMode::StateActionToScalar(_) => Err(Error::dim("q mode", "state-to-all-actions", "state-action-to-scalar")),
        }
    }

    fn action_dim(&self) -> Result<usize> {
        match self.mode {
            QMode::StateActionToScalar(d) => Ok(d),
            QMode::StateToAllActions(_) => Err(Error::dim("q mode", "state-action-to-scalar", "state-to-all-actions")),
        }
    }

    /// All action values for one state (discrete mode).
    pub fn values(&self, state: &[Real]) -> Result<Vec<Real>> {
        self.discrete_count()?;
        Ok(self.net.forward(&Tensor::vector(state.to_vec()))?.into_data())
    }

    /// `[B, n]` action values for `[B, state_dim]` states (discrete mode).
    pub fn values_batch(&self, states: &Tensor) -> Result<Tensor> {
        self.discrete_count()?;
        self.net.forward(states)
    }

    /// Concatenated `[B, state_dim + action_dim]` critic input.
    pub fn joint_input(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor> {
        let d = self.action_dim()?;
        if states.cols() != self.state_dim || actions.cols() != d || states.rows() != actions.rows() {
            return Err(Error::dim(
                "critic input",
                format!("[B, {}] and [B, {d}]", self.state_dim),
                format!("{:?} and {:?}", states.shape(), actions.shape()),
            ));
        }
        let b = states.rows();
        let mut data = Vec::with_capacity(b * (self.state_dim + d));
        for i in 0..b {
            data.extend_from_slice(states.row(i));
            data.extend_from_slice(actions.row(i));
        }
        Tensor::matrix(b, self.state_dim + d, data)
    }

    /// `Q(s_b, a_b)` for a batch (continuous mode).
    pub fn value_pairs(&self, states: &Tensor, actions: &Tensor) -> Result<Vec<Real>> {
        Ok(self.net.forward(&self.joint_input(states, actions)?)?.into_data())
    }

    pub fn value(&self, state: &[Real], action: &ActionValue) -> Result<Real> {
        match (self.mode, action) {
            (QMode::StateToAllActions(n), ActionValue::Discrete(i)) => {
                if *i >= n {
                    return Err(Error::Index { index: *i, len: n });
                }
                Ok(self.values(state)?[*i])
            }
            (QMode::StateActionToScalar(_), ActionValue::Continuous(a)) => {
                let s = Tensor::matrix(1, state.len(), state.to_vec())?;
                let a = Tensor::matrix(1, a.len(), a.clone())?;
                Ok(self.value_pairs(&s, &a)?[0])
            }
            _ => Err(Error::dim("q action", format!("{:?}", self.mode), format!("{action:?}"))),
        }
    }

    /// Weighted squared-error regression of `Q(s_b, a_b)` onto `targets`.
    ///
    /// Loss is `mean_b w_b (Q(s_b, a_b) - y_b)^2`; gradients accumulate into
    /// the network. Returns the loss and the per-row errors `Q - y`.
    pub fn regress(
        &mut self,
        states: &Tensor,
        actions: &[ActionValue],
        targets: &[Real],
        weights: Option<&[Real]>,
    ) -> Result<(Real, Vec<Real>)> {
        let b = states.rows();
        if actions.len() != b || targets.len() != b || weights.is_some_and(|w| w.len() != b) {
            return Err(Error::dim("q regression batch", b, format!("{} actions, {} targets", actions.len(), targets.len())));
        }
        let w = |i: usize| weights.map_or(1.0, |w| w[i]);
        match self.mode {
            QMode::StateToAllActions(n) => {
                let idx = actions
                    .iter()
                    .map(|a| match a {
                        ActionValue::Discrete(i) if *i < n => Ok(*i),
                        other => Err(Error::dim("discrete q action", format!("index < {n}"), format!("{other:?}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let out = self.net.forward_train(states)?;
                let mut grad = Tensor::zeros(&[b, n]);
                let mut loss = 0.0;
                let mut errs = Vec::with_capacity(b);
                for i in 0..b {
                    let e = out.row(i)[idx[i]] - targets[i];
                    loss += w(i) * e * e;
                    grad.row_mut(i)[idx[i]] = 2.0 * w(i) * e / b as Real;
                    errs.push(e);
                }
                self.net.backward(&grad)?;
                Ok((loss / b as Real, errs))
            }
            QMode::StateActionToScalar(d) => {
                let rows = actions
                    .iter()
                    .map(|a| match a {
                        ActionValue::Continuous(v) if v.len() == d => Ok(v.clone()),
                        other => Err(Error::dim("continuous q action", d, format!("{other:?}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let acts = Tensor::from_rows(&rows)?;
                self.regress_pairs(states, &acts, targets, weights)
            }
        }
    }

    /// [`QFunction::regress`] with actions already stacked as `[B, action_dim]`.
    pub fn regress_pairs(
        &mut self,
        states: &Tensor,
        actions: &Tensor,
        targets: &[Real],
        weights: Option<&[Real]>,
    ) -> Result<(Real, Vec<Real>)> {
        let x = self.joint_input(states, actions)?;
        let b = x.rows();
        if targets.len() != b {
            return Err(Error::dim("q targets", b, targets.len()));
        }
        let out = self.net.forward_train(&x)?;
        let mut grad = Tensor::zeros(&[b, 1]);
        let mut loss = 0.0;
        let mut errs = Vec::with_capacity(b);
        for i in 0..b {
            let w = weights.map_or(1.0, |w| w[i]);
            let e = out.data()[i] - targets[i];
            loss += w * e * e;
            grad.data_mut()[i] = 2.0 * w * e / b as Real;
            errs.push(e);
        }
        self.net.backward(&grad)?;
        Ok((loss / b as Real, errs))
    }
}

/// Critic that reports `Q(s, a)` and `dQ/da` for a batch.
pub trait ActionCritic {
    /// `states` is `[B, state_dim]`, `actions` `[B, action_dim]`; returns the
    /// `B` values and the `[B, action_dim]` action gradient.
    fn q_and_action_grad(&mut self, states: &Tensor, actions: &Tensor) -> Result<(Vec<Real>, Tensor)>;
}

impl ActionCritic for QFunction {
    /// Leaves the critic's parameter gradients untouched.
    fn q_and_action_grad(&mut self, states: &Tensor, actions: &Tensor) -> Result<(Vec<Real>, Tensor)> {
        let x = self.joint_input(states, actions)?;
        let b = x.rows();
        let q = self.net.forward_train(&x)?.into_data();
        let gx = self.net.backward_input(&Tensor::from_f64(&[b, 1], &vec![1.0; b])?)?;
        self.net.clear_cache();
        let (sd, d) = (self.state_dim, actions.cols());
        let mut ga = Vec::with_capacity(b * d);
        for i in 0..b {
            ga.extend_from_slice(&gx.row(i)[sd..sd + d]);
        }
        Ok((q, Tensor::matrix(b, d, ga)?))
    }
}

/// Mean squared error of `Q(s, a)` against the one-step rewards.
pub fn one_step_q_loss(q: &mut QFunction, states: &Tensor, actions: &[ActionValue], rewards: &[Real]) -> Result<Real> {
    Ok(q.regress(states, actions, rewards, None)?.0)
}

/// Vector form: MSE of all action values against a full reward vector per row.
pub fn vector_q_loss(q: &mut QFunction, states: &Tensor, reward_vectors: &Tensor) -> Result<Real> {
    let n = q.discrete_count()?;
    if reward_vectors.cols() != n || reward_vectors.rows() != states.rows() {
        return Err(Error::dim("reward vectors", format!("[{}, {n}]", states.rows()), format!("{:?}", reward_vectors.shape())));
    }
    let out = q.net.forward_train(states)?;
    let (loss, grad) = mse_loss(&out, reward_vectors)?;
    q.net.backward(&grad)?;
    Ok(loss)
}

/// Accuracy reward vectors: row `i` is one-hot at `labels[i]`.
pub fn one_hot_targets(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Index { index: l, len: classes });
        }
        t.row_mut(i)[l] = 1.0;
    }
    Ok(t)
}

/// `-mean_b Q(s_b, π(s_b))`; gradients flow through the action into `pi` only.
pub fn deterministic_pg_loss<C: ActionCritic + ?Sized>(critic: &mut C, pi: &mut PolicyHead, states: &Tensor) -> Result<Real> {
    if pi.kind().is_stochastic() {
        return Err(Error::Config(format!(
            "{:?} head has no deterministic action path",
            pi.kind()
        )));
    }
    let states = if states.rank() == 1 {
        &states.clone().reshape(vec![1, states.len()])?
    } else {
        states
    };
    let b = states.rows();
    let actions = pi.trunk_mut().forward_train(states)?;
    let (q, mut g) = critic.q_and_action_grad(states, &actions)?;
    g.scale(-1.0 / b as Real);
    pi.trunk_mut().backward(&g)?;
    Ok(-q.iter().sum::<Real>() / b as Real)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetUpdate {
    /// Copy every `k`-th call.
    HardCopy(u64),
    /// `θ' <- τ θ' + (1 - τ) θ` on every call.
    Polyak(Real),
}

/// Frozen copy of a network that changes only through [`TargetNetwork::update`].
#[derive(Debug, Clone)]
pub struct TargetNetwork {
    net: Mlp,
    mode: TargetUpdate,
    calls: u64,
}

impl TargetNetwork {
    pub fn new(online: &Mlp, mode: TargetUpdate) -> Result<Self> {
        match mode {
            TargetUpdate::HardCopy(0) => return Err(Error::Config("hard-copy period must be >= 1".into())),
            TargetUpdate::Polyak(t) if !(0.0..=1.0).contains(&t) => {
                return Err(Error::Config(format!("polyak tau must lie in [0, 1], got {t}")))
            }
            _ => {}
        }
        let mut net = online.clone();
        net.clear_cache();
        net.zero_grad();
        Ok(Self { net, mode, calls: 0 })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn mode(&self) -> TargetUpdate {
        self.mode
    }

    /// Returns whether the parameters changed.
    pub fn update(&mut self, online: &Mlp) -> Result<bool> {
        self.calls += 1;
        match self.mode {
            TargetUpdate::HardCopy(k) => {
                if self.calls.is_multiple_of(k) {
                    self.net.copy_params_from(online)?;
                    return Ok(true);
                }
                Ok(false)
            }
            TargetUpdate::Polyak(tau) => {
                self.net.polyak_from(online, tau)?;
                Ok(tau < 1.0)
            }
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.net.forward(input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::Layer;
    use crate::policy::HeadKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_net(w: Real) -> Mlp {
        let w = Tensor::from_f64(&[1, 1], &[w]).unwrap();
        Mlp::from_layers(vec![Layer::new(w, Tensor::zeros(&[1]), Activation::Identity).unwrap()]).unwrap()
    }

    #[test]
    fn polyak_twice_from_zero() {
        let mut tgt = TargetNetwork::new(&scalar_net(0.0), TargetUpdate::Polyak(0.995)).unwrap();
        let online = scalar_net(1.0);
        tgt.update(&online).unwrap();
        tgt.update(&online).unwrap();
        assert!((tgt.net().params_flat()[0] - 0.009975).abs() < 1e-15);
    }

    #[test]
    fn hard_copy_period() {
        let mut tgt = TargetNetwork::new(&scalar_net(0.0), TargetUpdate::HardCopy(3)).unwrap();
        let online = scalar_net(2.0);
        assert!(!tgt.update(&online).unwrap());
        assert!(!tgt.update(&online).unwrap());
        assert!(tgt.update(&online).unwrap());
        assert_eq!(tgt.net().params_flat()[0], 2.0);
    }

    #[test]
    fn shape_mismatch_is_checkpoint_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tgt = TargetNetwork::new(&scalar_net(0.0), TargetUpdate::Polyak(0.5)).unwrap();
        let other = Mlp::with_hidden(2, &[], 1, Activation::Tanh, &mut rng).unwrap();
        assert!(matches!(tgt.update(&other), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn exact_fit_has_zero_loss() {
        // Q(s) = [s, 2s]
        let w = Tensor::from_f64(&[2, 1], &[1.0, 2.0]).unwrap();
        let net = Mlp::from_layers(vec![Layer::new(w, Tensor::zeros(&[2]), Activation::Identity).unwrap()]).unwrap();
        let mut q = QFunction::from_net(QMode::StateToAllActions(2), 1, net).unwrap();
        let s = Tensor::from_f64(&[2, 1], &[1.0, 3.0]).unwrap();
        let acts = [ActionValue::Discrete(1), ActionValue::Discrete(0)];
        assert_eq!(one_step_q_loss(&mut q, &s, &acts, &[2.0, 3.0]).unwrap(), 0.0);
        assert!(q.net().grads_flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn one_hot_accuracy_targets() {
        let t = one_hot_targets(&[2], 5).unwrap();
        assert_eq!(t.data(), &[0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(one_hot_targets(&[5], 5).is_err());
    }

    #[test]
    fn mode_mismatch_is_dimension_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut q = QFunction::new(QMode::StateToAllActions(2), 1, &[4], Activation::Tanh, &mut rng).unwrap();
        let s = Tensor::from_f64(&[1, 1], &[0.0]).unwrap();
        let err = q.regress(&s, &[ActionValue::Continuous(vec![0.0])], &[1.0], None).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn stochastic_head_rejected_by_dpg() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut pi = PolicyHead::new(HeadKind::TanhGaussian(1), 1, &[4], Activation::Tanh, &mut rng).unwrap();
        let mut q = QFunction::new(QMode::StateActionToScalar(1), 1, &[4], Activation::Tanh, &mut rng).unwrap();
        let s = Tensor::from_f64(&[1, 1], &[0.0]).unwrap();
        assert!(matches!(deterministic_pg_loss(&mut q, &mut pi, &s), Err(Error::Config(_))));
    }
}
