//! Policy heads over an MLP trunk and exploration schedules.

mod dist;
mod explore;

pub use dist::{argmax, reparam_sample, Entropy, HeadKind, LOG_STD_MAX, LOG_STD_MIN, SQUASH_EPS};
pub use explore::{Decay, ExplorationKind, ExplorationSchedule};

use rand::Rng;

use crate::env::ActionValue;
use crate::error::{Error, Result};
use crate::ndmath::Activation;
use crate::{Mlp, Real, Tensor};

/// A distribution over actions parameterised by an MLP.
#[derive(Debug, Clone)]
pub struct PolicyHead {
    kind: HeadKind,
    trunk: Mlp,
}

impl PolicyHead {
    pub fn new<R: Rng + ?Sized>(
        kind: HeadKind,
        state_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let trunk = Mlp::with_hidden(state_dim, hidden, kind.output_width(), activation, rng)?;
        Ok(Self { kind, trunk })
    }

    pub fn from_trunk(kind: HeadKind, trunk: Mlp) -> Result<Self> {
        if trunk.output_dim() != kind.output_width() {
            return Err(Error::dim(format!("{kind:?} trunk output"), kind.output_width(), trunk.output_dim()));
        }
        Ok(Self { kind, trunk })
    }

    pub fn kind(&self) -> HeadKind {
        self.kind
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp {
        &mut self.trunk
    }

    /// Raw trunk output for one state.
    pub fn params(&self, state: &[Real]) -> Result<Vec<Real>> {
        Ok(self.trunk.forward(&Tensor::vector(state.to_vec()))?.into_data())
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: &[Real], rng: &mut R) -> Result<(ActionValue, Real)> {
        if !self.kind.is_stochastic() {
            return Err(Error::Unsupported("sample on a deterministic head; use act_greedy".into()));
        }
        self.kind.sample(&self.params(state)?, rng)
    }

    /// Sample with injected standard-normal noise (Gaussian heads) or uniform `u` (categorical).
    pub fn sample_with(&self, state: &[Real], xi: &[Real], u: Real) -> Result<(ActionValue, Real)> {
        self.kind.sample_with(&self.params(state)?, xi, u)
    }

    pub fn log_prob(&self, state: &[Real], action: &ActionValue) -> Result<Real> {
        self.kind.log_prob(&self.params(state)?, action)
    }

    pub fn entropy<R: Rng + ?Sized>(&self, state: &[Real], rng: &mut R) -> Result<Entropy> {
        self.kind.entropy(&self.params(state)?, rng)
    }

    pub fn act_greedy(&self, state: &[Real]) -> Result<ActionValue> {
        self.kind.greedy(&self.params(state)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::Layer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LN2: Real = std::f64::consts::LN_2;

    #[test]
    fn degenerate_categorical() {
        let out = [0.0, -1e4];
        let k = HeadKind::Categorical(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let (a, lp) = k.sample(&out, &mut rng).unwrap();
            assert_eq!(a, ActionValue::Discrete(0));
            assert_eq!(lp, 0.0);
        }
        assert_eq!(k.entropy_exact(&out).unwrap(), 0.0);
    }

    #[test]
    fn categorical_closed_forms() {
        let k = HeadKind::Categorical(4);
        assert!((k.log_prob(&[0.3; 4], &ActionValue::Discrete(2)).unwrap() + (4.0 as Real).ln()).abs() < 1e-12);
        let k2 = HeadKind::Categorical(2);
        assert!((k2.entropy_exact(&[1.0, 1.0]).unwrap() - LN2).abs() < 1e-12);
    }

    #[test]
    fn greedy_rules() {
        let k = HeadKind::Categorical(3);
        let logits: Vec<Real> = [0.2, 0.5, 0.3].iter().map(|p: &Real| p.ln()).collect();
        assert_eq!(k.greedy(&logits).unwrap(), ActionValue::Discrete(1));
        assert_eq!(HeadKind::Categorical(2).greedy(&[0.0, 0.0]).unwrap(), ActionValue::Discrete(0));
        assert_eq!(HeadKind::TanhGaussian(1).greedy(&[0.0, 0.3]).unwrap(), ActionValue::Continuous(vec![0.0]));
    }

    #[test]
    fn gaussian_closed_forms() {
        let k = HeadKind::DiagonalGaussian(1);
        let (a, _) = k.sample_with(&[0.0, 0.0], &[0.5], 0.0).unwrap();
        assert_eq!(a, ActionValue::Continuous(vec![0.5]));
        let lp = k.log_prob(&[0.0, 0.0], &ActionValue::Continuous(vec![0.0])).unwrap();
        assert!((lp + 0.918_938_533_204_672_8).abs() < 1e-12);
        let h = k.entropy_exact(&[0.0, 0.0]).unwrap();
        assert!((h - 1.418_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn log_std_is_clamped() {
        let k = HeadKind::DiagonalGaussian(1);
        let (_, ls) = k.gaussian_params(&[0.0, 9.0]).unwrap();
        assert_eq!(ls, vec![LOG_STD_MAX]);
        let (_, ls) = k.gaussian_params(&[0.0, -9.0]).unwrap();
        assert_eq!(ls, vec![LOG_STD_MIN]);
        let (_, g) = k.log_prob_grad(&[0.0, 9.0], &ActionValue::Continuous(vec![1.0])).unwrap();
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn tanh_domain_and_bounds() {
        let k = HeadKind::TanhGaussian(1);
        assert!(matches!(
            k.log_prob(&[0.0, 0.0], &ActionValue::Continuous(vec![1.0])),
            Err(Error::Domain(_))
        ));
        let (a, _) = k.sample_with(&[30.0, 0.0], &[3.0], 0.0).unwrap();
        let v = a.continuous().unwrap()[0];
        assert!(v < 1.0 && v > -1.0);
    }

    #[test]
    fn sample_log_prob_coherent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [HeadKind::Categorical(3), HeadKind::DiagonalGaussian(2), HeadKind::TanhGaussian(2)] {
            let out: Vec<Real> = (0..kind.output_width()).map(|i| 0.3 * i as Real - 0.4).collect();
            for _ in 0..50 {
                let (a, lp) = kind.sample(&out, &mut rng).unwrap();
                assert!((kind.log_prob(&out, &a).unwrap() - lp).abs() < 1e-10, "{kind:?}");
            }
        }
    }

    #[test]
    fn deterministic_head_rejects_stochastic_ops() {
        let w = Tensor::from_f64(&[1, 1], &[2.0]).unwrap();
        let trunk = Mlp::from_layers(vec![Layer::new(w, Tensor::zeros(&[1]), Activation::Identity).unwrap()]).unwrap();
        let head = PolicyHead::from_trunk(HeadKind::Deterministic(1), trunk).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(head.sample(&[1.0], &mut rng), Err(Error::Unsupported(_))));
        assert!(matches!(head.entropy(&[1.0], &mut rng), Err(Error::Unsupported(_))));
        assert_eq!(head.act_greedy(&[1.5]).unwrap(), ActionValue::Continuous(vec![3.0]));
    }
}
