//! Bootstrapped regression targets. All targets are constants for the
//! gradient: callers evaluate target networks with a pure forward pass.

use crate::error::{Error, Result};
use crate::ndmath::Scalar;

/// Discount factor `γ ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountedHorizon<T>(T);

impl<T: Scalar> DiscountedHorizon<T> {
    pub fn new(gamma: T) -> Result<Self> {
        if !(gamma >= T::zero() && gamma <= T::one()) {
            return Err(Error::Config(format!("discount must lie in [0, 1], got {gamma}")));
        }
        Ok(Self(gamma))
    }

    pub fn gamma(self) -> T {
        self.0
    }
}

impl<T: Scalar> Default for DiscountedHorizon<T> {
    fn default() -> Self {
        Self(T::of(0.99))
    }
}

/// First index of the maximum.
pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn max<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().fold(T::neg_infinity(), T::max)
}

/// `r` if `done`, else `r + γ max_a' q_next[a']`.
pub fn td0_target<T: Scalar>(r: T, q_next: &[T], done: bool, gamma: T) -> T {
    if done {
        r
    } else {
        r + gamma * max(q_next)
    }
}

/// Action chosen by the online values, evaluated by the target values.
pub fn double_q_target<T: Scalar>(r: T, q_online_next: &[T], q_target_next: &[T], done: bool, gamma: T) -> T {
    if done {
        r
    } else {
        r + gamma * q_target_next[argmax(q_online_next)]
    }
}

/// `r + γ min(q1, q2)` for the two target critics evaluated at `(s', a')`.
pub fn twin_q_target<T: Scalar>(r: T, q1_next: T, q2_next: T, done: bool, gamma: T) -> T {
    if done {
        r
    } else {
        r + gamma * q1_next.min(q2_next)
    }
}

/// `Σ_i γ^i r_i`.
pub fn discounted_sum<T: Scalar>(rewards: &[T], gamma: T) -> T {
    let mut acc = T::zero();
    let mut g = T::one();
    for &r in rewards {
        acc += g * r;
        g *= gamma;
    }
    acc
}

/// n-step target over the rewards of a window of at most `n` steps.
///
/// `rewards.len() < n` means the episode ended inside the window. The
/// bootstrap at the state after the last reward uses double-Q selection,
/// is discounted by `γ^len`, and is dropped when `terminated`.
pub fn nstep_q_target<T: Scalar>(
    rewards: &[T],
    q_online_next: &[T],
    q_target_next: &[T],
    terminated: bool,
    gamma: T,
    n: usize,
) -> Result<T> {
    if n < 1 {
        return Err(Error::Config("n-step horizon must be >= 1".into()));
    }
    if rewards.is_empty() || rewards.len() > n {
        return Err(Error::dim("n-step rewards", format!("1..={n}"), rewards.len()));
    }
    let ret = discounted_sum(rewards, gamma);
    if terminated {
        return Ok(ret);
    }
    Ok(ret + gamma.powi(rewards.len() as i32) * q_target_next[argmax(q_online_next)])
}
