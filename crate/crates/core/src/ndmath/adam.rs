use super::{ParamSet, Scalar};
use crate::error::{Error, Result};

/// Adam optimiser state for one parameter set.
///
/// Moments are allocated lazily on the first step, so they are zero while
/// `step_count == 0`. Gradients are zeroed after every successful step.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub step_count: u64,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// Global-norm gradient clipping threshold; `None` disables clipping.
    pub max_grad_norm: Option<T>,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(learning_rate: T) -> Self {
        Self {
            step_count: 0,
            learning_rate,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            max_grad_norm: Some(T::of(10.0)),
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn with_max_grad_norm(mut self, max: Option<T>) -> Self {
        self.max_grad_norm = max;
        self
    }

    pub fn first_moment(&self) -> &[Vec<T>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<T>] {
        &self.second_moment
    }
}

impl<T: Scalar> Default for AdamState<T> {
    fn default() -> Self {
        Self::new(T::of(3e-4))
    }
}

/// One bias-corrected Adam update over every parameter of `params`.
///
/// Returns the global gradient norm before clipping.
pub fn adam_step<T: Scalar, P: ParamSet<T> + ?Sized>(
    params: &mut P,
    state: &mut AdamState<T>,
) -> Result<T> {
    let mut bad: Option<String> = None;
    let mut sq = T::zero();
    let mut sizes = Vec::new();
    params.visit_params(&mut |name, _, g| {
        if bad.is_none() && g.iter().any(|x| !x.is_finite()) {
            bad = Some(name.to_string());
        }
        sq += g.iter().map(|&x| x * x).sum::<T>();
        sizes.push(g.len());
    });
    if let Some(param) = bad {
        return Err(Error::TrainingDivergence { param });
    }
    if state.first_moment.is_empty() {
        state.first_moment = sizes.iter().map(|&n| vec![T::zero(); n]).collect();
        state.second_moment = state.first_moment.clone();
    } else if state
        .first_moment
        .iter()
        .map(Vec::len)
        .ne(sizes.iter().copied())
    {
        return Err(Error::dim(
            "adam moments",
            format!("{:?}", state.first_moment.iter().map(Vec::len).collect::<Vec<_>>()),
            format!("{sizes:?}"),
        ));
    }

    let norm = sq.sqrt();
    let clip = match state.max_grad_norm {
        Some(max) if norm > max => max / norm,
        _ => T::one(),
    };
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let (lr, eps) = (state.learning_rate, state.eps);
    let (m1, m2) = (&mut state.first_moment, &mut state.second_moment);
    let mut idx = 0;
    params.visit_params(&mut |_, p, g| {
        let (m, v) = (&mut m1[idx], &mut m2[idx]);
        for i in 0..p.len() {
            let gi = g[i] * clip;
            m[i] = b1 * m[i] + (T::one() - b1) * gi;
            v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p[i] -= lr * mhat / (vhat.sqrt() + eps);
            g[i] = T::zero();
        }
        idx += 1;
    });
    Ok(norm)
}

/// A single learnable scalar, e.g. a log-temperature.
#[derive(Debug, Clone)]
pub struct ScalarParam<T> {
    pub name: String,
    pub value: T,
    pub grad: T,
}

impl<T: Scalar> ScalarParam<T> {
    pub fn new(name: impl Into<String>, value: T) -> Self {
        Self {
            name: name.into(),
            value,
            grad: T::zero(),
        }
    }
}

impl<T: Scalar> ParamSet<T> for ScalarParam<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut [T], &mut [T])) {
        f(
            &self.name,
            std::slice::from_mut(&mut self.value),
            std::slice::from_mut(&mut self.grad),
        );
    }
}
