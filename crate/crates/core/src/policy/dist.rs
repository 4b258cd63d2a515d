//! Distribution math on raw head outputs.
//!
//! A head's trunk emits one row per state: logits for `Categorical(n)`,
//! `[mean; log_std]` (length `2 * dim`) for the Gaussian kinds, and the action
//! itself for `Deterministic(dim)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{ActionKind, ActionValue};
use crate::error::{Error, Result};
use crate::ndmath::{log_softmax, softmax};
use crate::Real;

pub const LOG_STD_MIN: Real = -5.0;
pub const LOG_STD_MAX: Real = 2.0;
/// Added inside the log of the tanh squash correction.
pub const SQUASH_EPS: Real = 1e-6;
/// Largest magnitude of a squashed sample.
const TANH_LIMIT: Real = 1.0 - 1e-12;

const HALF_LN_2PI: Real = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    Categorical(usize),
    DiagonalGaussian(usize),
    TanhGaussian(usize),
    Deterministic(usize),
}

/// Entropy value; `is_estimate` marks single-sample estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entropy {
    pub value: Real,
    pub is_estimate: bool,
}

fn clamp_log_std(raw: Real) -> (Real, Real) {
    if raw < LOG_STD_MIN {
        (LOG_STD_MIN, 0.0)
    } else if raw > LOG_STD_MAX {
        (LOG_STD_MAX, 0.0)
    } else {
        (raw, 1.0)
    }
}

fn normal_log_pdf(x: Real, mean: Real, log_std: Real) -> Real {
    let z = (x - mean) * (-log_std).exp();
    -0.5 * z * z - log_std - HALF_LN_2PI
}

impl HeadKind {
    /// Width of the trunk output this kind expects.
    pub fn output_width(self) -> usize {
        match self {
            HeadKind::Categorical(n) => n,
            HeadKind::DiagonalGaussian(d) | HeadKind::TanhGaussian(d) => 2 * d,
            HeadKind::Deterministic(d) => d,
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            HeadKind::Categorical(_) => 1,
            HeadKind::DiagonalGaussian(d) | HeadKind::TanhGaussian(d) | HeadKind::Deterministic(d) => d,
        }
    }

    pub fn is_stochastic(self) -> bool {
        !matches!(self, HeadKind::Deterministic(_))
    }

    /// The natural head for an action space: categorical or tanh-Gaussian.
    pub fn for_action_kind(kind: &ActionKind) -> Self {
        match kind {
            ActionKind::Discrete(n) => HeadKind::Categorical(*n),
            ActionKind::Continuous { dim, .. } => HeadKind::TanhGaussian(*dim),
        }
    }

    fn check(self, out: &[Real]) -> Result<()> {
        if out.len() != self.output_width() {
            return Err(Error::dim(format!("{self:?} head output"), self.output_width(), out.len()));
        }
        Ok(())
    }

    fn unsupported(self, op: &str) -> Error {
        Error::Unsupported(format!("{op} on a {self:?} head"))
    }

    /// Mean and clamped log-std of a Gaussian row.
    pub fn gaussian_params(self, out: &[Real]) -> Result<(Vec<Real>, Vec<Real>)> {
        self.check(out)?;
        let d = self.action_dim();
        Ok((out[..d].to_vec(), out[d..].iter().map(|&s| clamp_log_std(s).0).collect()))
    }

    pub fn probabilities(self, out: &[Real]) -> Result<Vec<Real>> {
        self.check(out)?;
        match self {
            HeadKind::Categorical(_) => Ok(softmax(out)),
            _ => Err(self.unsupported("probabilities")),
        }
    }

    /// Draws an action with standard-normal noise `xi` (ignored by categorical heads,
    /// which use `u` for inverse-CDF sampling).
    pub fn sample_with(self, out: &[Real], xi: &[Real], u: Real) -> Result<(ActionValue, Real)> {
        self.check(out)?;
        match self {
            HeadKind::Categorical(n) => {
                let p = softmax(out);
                let mut acc = 0.0;
                let mut idx = n - 1;
                for (k, &pk) in p.iter().enumerate() {
                    acc += pk;
                    if u < acc {
                        idx = k;
                        break;
                    }
                }
                while p[idx] == 0.0 && idx > 0 {
                    idx -= 1;
                }
                Ok((ActionValue::Discrete(idx), log_softmax(out)[idx]))
            }
            HeadKind::DiagonalGaussian(d) | HeadKind::TanhGaussian(d) => {
                if xi.len() != d {
                    return Err(Error::dim("gaussian noise", d, xi.len()));
                }
                let (mean, log_std) = self.gaussian_params(out)?;
                let u: Vec<Real> = (0..d).map(|i| mean[i] + log_std[i].exp() * xi[i]).collect();
                let mut lp: Real = (0..d).map(|i| normal_log_pdf(u[i], mean[i], log_std[i])).sum();
                if self == HeadKind::DiagonalGaussian(d) {
                    return Ok((ActionValue::Continuous(u), lp));
                }
                let a: Vec<Real> = u.iter().map(|&x| x.tanh().clamp(-TANH_LIMIT, TANH_LIMIT)).collect();
                lp -= u.iter().map(|&x| (1.0 - x.tanh().powi(2) + SQUASH_EPS).ln()).sum::<Real>();
                Ok((ActionValue::Continuous(a), lp))
            }
            HeadKind::Deterministic(_) => Err(self.unsupported("sample")),
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, out: &[Real], rng: &mut R) -> Result<(ActionValue, Real)> {
        let d = match self {
            HeadKind::DiagonalGaussian(d) | HeadKind::TanhGaussian(d) => d,
            _ => 0,
        };
        let xi: Vec<Real> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let u = if d == 0 { rng.random::<Real>() } else { 0.0 };
        self.sample_with(out, &xi, u)
    }

    pub fn log_prob(self, out: &[Real], action: &ActionValue) -> Result<Real> {
        Ok(self.log_prob_grad(out, action)?.0)
    }

    /// Log-density and its gradient with respect to the raw output row.
    pub fn log_prob_grad(self, out: &[Real], action: &ActionValue) -> Result<(Real, Vec<Real>)> {
        self.check(out)?;
        match (self, action) {
            (HeadKind::Categorical(n), ActionValue::Discrete(i)) => {
                if *i >= n {
                    return Err(Error::Index { index: *i, len: n });
                }
                let p = softmax(out);
                let mut g: Vec<Real> = p.iter().map(|&x| -x).collect();
                g[*i] += 1.0;
                Ok((log_softmax(out)[*i], g))
            }
            (HeadKind::DiagonalGaussian(d) | HeadKind::TanhGaussian(d), ActionValue::Continuous(a)) => {
                if a.len() != d {
                    return Err(Error::dim("action", d, a.len()));
                }
                let squashed = matches!(self, HeadKind::TanhGaussian(_));
                if squashed {
                    if let Some(bad) = a.iter().find(|x| x.abs() >= 1.0 || !x.is_finite()) {
                        return Err(Error::Domain(format!("tanh-squashed action {bad} outside (-1, 1)")));
                    }
                }
                let mut lp = 0.0;
                let mut g = vec![0.0; 2 * d];
                for i in 0..d {
                    let (ls, mask) = clamp_log_std(out[d + i]);
                    let x = if squashed { a[i].atanh() } else { a[i] };
                    let inv = (-ls).exp();
                    let z = (x - out[i]) * inv;
                    lp += -0.5 * z * z - ls - HALF_LN_2PI;
                    if squashed {
                        lp -= (1.0 - a[i] * a[i] + SQUASH_EPS).ln();
                    }
                    g[i] = z * inv;
                    g[d + i] = mask * (z * z - 1.0);
                }
                Ok((lp, g))
            }
            (HeadKind::Deterministic(_), _) => Err(self.unsupported("log_prob")),
            _ => Err(Error::Action(format!("{action:?} does not fit a {self:?} head"))),
        }
    }

    /// Exact entropy for categorical and diagonal Gaussian heads.
    pub fn entropy_exact(self, out: &[Real]) -> Result<Real> {
        Ok(self.entropy_grad(out)?.0)
    }

    /// Exact entropy and its gradient with respect to the raw output row.
    pub fn entropy_grad(self, out: &[Real]) -> Result<(Real, Vec<Real>)> {
        self.check(out)?;
        match self {
            HeadKind::Categorical(_) => {
                let p = softmax(out);
                let lp = log_softmax(out);
                let h: Real = -p.iter().zip(&lp).map(|(&pi, &li)| if pi > 0.0 { pi * li } else { 0.0 }).sum::<Real>();
                let g = p.iter().zip(&lp).map(|(&pi, &li)| -pi * (li + h)).collect();
                Ok((h, g))
            }
            HeadKind::DiagonalGaussian(d) => {
                let mut g = vec![0.0; 2 * d];
                let mut h = 0.0;
                for i in 0..d {
                    let (ls, mask) = clamp_log_std(out[d + i]);
                    h += 0.5 + HALF_LN_2PI + ls;
                    g[d + i] = mask;
                }
                Ok((h, g))
            }
            _ => Err(self.unsupported("closed-form entropy")),
        }
    }

    /// Entropy; tanh-Gaussian heads return a one-sample estimate `-log π(a|s)`.
    pub fn entropy<R: Rng + ?Sized>(self, out: &[Real], rng: &mut R) -> Result<Entropy> {
        match self {
            HeadKind::TanhGaussian(_) => {
                let (_, lp) = self.sample(out, rng)?;
                Ok(Entropy { value: -lp, is_estimate: true })
            }
            _ => Ok(Entropy {
                value: self.entropy_exact(out)?,
                is_estimate: false,
            }),
        }
    }

    /// Argmax (lowest index on ties), the (squashed) mean, or the deterministic output.
    pub fn greedy(self, out: &[Real]) -> Result<ActionValue> {
        self.check(out)?;
        Ok(match self {
            HeadKind::Categorical(_) => ActionValue::Discrete(argmax(out)),
            HeadKind::DiagonalGaussian(d) => ActionValue::Continuous(out[..d].to_vec()),
            HeadKind::TanhGaussian(d) => {
                ActionValue::Continuous(out[..d].iter().map(|m| m.tanh().clamp(-TANH_LIMIT, TANH_LIMIT)).collect())
            }
            HeadKind::Deterministic(_) => ActionValue::Continuous(out.to_vec()),
        })
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[Real]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// `μ + exp(log_std) ξ` elementwise.
pub fn reparam_sample(mean: &[Real], log_std: &[Real], xi: &[Real]) -> Vec<Real> {
    mean.iter()
        .zip(log_std)
        .zip(xi)
        .map(|((&m, &s), &x)| m + s.exp() * x)
        .collect()
}
