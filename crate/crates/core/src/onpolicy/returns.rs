//! Return and advantage estimators over one episode segment.
//!
//! `rewards` holds `r_0..r_{N-1}`. Where values are needed, `values` holds
//! `V(s_0)..V(s_N)`; `V(s_N)` is the bootstrap value of the state after the
//! last reward and is ignored when the segment ended in a true terminal.

use crate::error::{Error, Result};
use crate::ndmath::Scalar;

fn check_t(t: usize, len: usize) -> Result<()> {
    if t >= len {
        return Err(Error::Index { index: t, len });
    }
    Ok(())
}

fn check_values<T>(rewards: &[T], values: &[T]) -> Result<()> {
    if values.len() != rewards.len() + 1 {
        return Err(Error::dim("value estimates", rewards.len() + 1, values.len()));
    }
    Ok(())
}

fn check_unit<T: Scalar>(name: &str, x: T) -> Result<()> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::Config(format!("{name} must lie in [0, 1], got {x}")));
    }
    Ok(())
}

/// Value after the last reward: 0 for a terminal, otherwise `V(s_N)`.
fn tail<T: Scalar>(values: &[T], terminal: bool) -> T {
    if terminal {
        T::zero()
    } else {
        values[values.len() - 1]
    }
}

/// Undiscounted suffix sum `Σ_{i>=t} r_i`.
pub fn mc_return<T: Scalar>(rewards: &[T], t: usize) -> Result<T> {
    check_t(t, rewards.len())?;
    Ok(rewards[t..].iter().copied().sum())
}

/// `Σ_{i>=t} γ^{i-t} r_i`.
pub fn discounted_return<T: Scalar>(rewards: &[T], t: usize, gamma: T) -> Result<T> {
    check_t(t, rewards.len())?;
    Ok(rewards[t..]
        .iter()
        .rev()
        .fold(T::zero(), |acc, &r| r + gamma * acc))
}

/// Discounted returns for every index, bootstrapping `V(s_N)` unless terminal.
pub fn discounted_returns<T: Scalar>(rewards: &[T], bootstrap: T, gamma: T) -> Vec<T> {
    let mut out = vec![T::zero(); rewards.len()];
    let mut acc = bootstrap;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// `Σ_{i=t}^{t+n-1} γ^{i-t} r_i + γ^n V(s_{t+n})`.
///
/// Windows reaching past the end of the segment stop there; the bootstrap is
/// then `V(s_N)`, or nothing for a terminal.
pub fn nstep_return_v<T: Scalar>(rewards: &[T], values: &[T], terminal: bool, t: usize, n: usize, gamma: T) -> Result<T> {
    if n < 1 {
        return Err(Error::Config("n-step horizon must be >= 1".into()));
    }
    check_values(rewards, values)?;
    check_t(t, rewards.len())?;
    let end = (t + n).min(rewards.len());
    let mut g = T::zero();
    let mut disc = T::one();
    for &r in &rewards[t..end] {
        g += disc * r;
        disc *= gamma;
    }
    let boot = if end == rewards.len() { tail(values, terminal) } else { values[end] };
    Ok(g + disc * boot)
}

/// λ-returns for every index by the backward recursion
/// `G(t) = r_t + γ((1 - λ) V(s_{t+1}) + λ G(t+1))`.
pub fn lambda_returns<T: Scalar>(rewards: &[T], values: &[T], terminal: bool, lambda: T, gamma: T) -> Result<Vec<T>> {
    check_values(rewards, values)?;
    check_unit("lambda", lambda)?;
    check_unit("gamma", gamma)?;
    let n = rewards.len();
    let mut out = vec![T::zero(); n];
    let mut next_g = tail(values, terminal);
    for t in (0..n).rev() {
        let next_v = if t + 1 == n { tail(values, terminal) } else { values[t + 1] };
        next_g = rewards[t] + gamma * ((T::one() - lambda) * next_v + lambda * next_g);
        out[t] = next_g;
    }
    Ok(out)
}

pub fn lambda_return<T: Scalar>(rewards: &[T], values: &[T], terminal: bool, t: usize, lambda: T, gamma: T) -> Result<T> {
    check_t(t, rewards.len())?;
    Ok(lambda_returns(rewards, values, terminal, lambda, gamma)?[t])
}

/// `r_t + γ V(s_{t+1}) - V(s_t)` with the bootstrap dropped after a terminal.
pub fn advantage_td0<T: Scalar>(rewards: &[T], values: &[T], terminal: bool, t: usize, gamma: T) -> Result<T> {
    check_values(rewards, values)?;
    check_t(t, rewards.len())?;
    let next_v = if t + 1 == rewards.len() { tail(values, terminal) } else { values[t + 1] };
    Ok(rewards[t] + gamma * next_v - values[t])
}

/// Generalized advantage estimates `A_t = δ_t + γλ A_{t+1}` for every index.
pub fn gae<T: Scalar>(rewards: &[T], values: &[T], terminal: bool, lambda: T, gamma: T) -> Result<Vec<T>> {
    check_values(rewards, values)?;
    check_unit("lambda", lambda)?;
    check_unit("gamma", gamma)?;
    let n = rewards.len();
    let mut out = vec![T::zero(); n];
    let mut acc = T::zero();
    for t in (0..n).rev() {
        let next_v = if t + 1 == n { tail(values, terminal) } else { values[t + 1] };
        let delta = rewards[t] + gamma * next_v - values[t];
        acc = delta + gamma * lambda * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// Shifts and scales to zero mean and unit variance; constant inputs only centre.
pub fn normalize<T: Scalar>(xs: &mut [T]) {
    if xs.is_empty() {
        return;
    }
    let n = T::of(xs.len() as f64);
    let mean = xs.iter().copied().sum::<T>() / n;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    let std = var.sqrt();
    let scale = if std > T::of(1e-8) { T::one() / std } else { T::one() };
    for x in xs.iter_mut() {
        *x = (*x - mean) * scale;
    }
}
