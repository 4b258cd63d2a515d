use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ParamSet, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply<T: Scalar>(self, xs: &mut [T]) {
        match self {
            Activation::Relu => xs.iter_mut().for_each(|x| *x = x.max(T::zero())),
            Activation::Tanh => xs.iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Identity => {}
        }
    }

    /// Multiplies `grad` by the derivative, expressed through the layer output `y`.
    fn backprop<T: Scalar>(self, y: &[T], grad: &mut [T]) {
        match self {
            Activation::Relu => grad.iter_mut().zip(y).for_each(|(g, &y)| {
                if y <= T::zero() {
                    *g = T::zero();
                }
            }),
            Activation::Tanh => grad
                .iter_mut()
                .zip(y)
                .for_each(|(g, &y)| *g *= T::one() - y * y),
            Activation::Identity => {}
        }
    }
}

/// Dense layer `y = act(W x + b)` with `W` stored `[out, in]` row-major.
#[derive(Debug, Clone)]
pub struct Layer<T> {
    weight: Tensor<T>,
    bias: Tensor<T>,
    activation: Activation,
    grad_weight: Tensor<T>,
    grad_bias: Tensor<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>, activation: Activation) -> Result<Self> {
        if weight.rank() != 2 {
            return Err(Error::dim("layer weight rank", 2, weight.rank()));
        }
        let out = weight.shape()[0];
        if bias.shape() != [out] {
            return Err(Error::dim("layer bias", format!("[{out}]"), format!("{:?}", bias.shape())));
        }
        Ok(Self {
            grad_weight: Tensor::zeros(weight.shape()),
            grad_bias: Tensor::zeros(bias.shape()),
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor<T> {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut Tensor<T> {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut Tensor<T> {
        &mut self.bias
    }

    pub fn grad_weight(&self) -> &Tensor<T> {
        &self.grad_weight
    }

    pub fn grad_bias(&self) -> &Tensor<T> {
        &self.grad_bias
    }

    /// `x` is `[batch, in]`; returns `[batch, out]` post-activation.
    fn forward(&self, x: &[T], batch: usize) -> Vec<T> {
        let (din, dout) = (self.in_dim(), self.out_dim());
        let mut z = Vec::with_capacity(batch * dout);
        for _ in 0..batch {
            z.extend_from_slice(self.bias.data());
        }
        // z += x * W^T
        T::gemm(
            batch,
            din,
            dout,
            T::one(),
            x,
            din,
            1,
            self.weight.data(),
            1,
            din,
            T::one(),
            &mut z,
            dout,
            1,
        );
        self.activation.apply(&mut z);
        z
    }
}

#[derive(Debug, Clone)]
struct Cache<T> {
    batch: usize,
    input_shape: Vec<usize>,
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Vec<T>>,
}

/// Small feed-forward network with gradient storage.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
    cache: Option<Cache<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// Xavier-uniform initialised network. `activations[i]` follows layer `i`.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config("an mlp needs at least input and output sizes".into()));
        }
        if activations.len() != layer_sizes.len() - 1 {
            return Err(Error::dim(
                "mlp activations",
                layer_sizes.len() - 1,
                activations.len(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config(format!("layer sizes must be positive: {layer_sizes:?}")));
        }
        let layers = layer_sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| {
                let (din, dout) = (w[0], w[1]);
                let limit = (6.0 / (din + dout) as f64).sqrt();
                let data = (0..din * dout)
                    .map(|_| T::of(rng.random_range(-limit..limit)))
                    .collect();
                Layer::new(
                    Tensor::matrix(dout, din, data)?,
                    Tensor::zeros(&[dout]),
                    act,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, cache: None })
    }

    /// Hidden layers share `hidden_act`; the output layer is linear.
    pub fn with_hidden<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let mut acts = vec![hidden_act; hidden.len()];
        acts.push(Activation::Identity);
        Self::new(&sizes, &acts, rng)
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an mlp needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::dim("mlp layer chain", w[0].out_dim(), w[1].in_dim()));
            }
        }
        Ok(Self { layers, cache: None })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.out_dim()));
        s
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize> {
        if input.rank() == 0 || input.rank() > 2 || input.cols() != self.input_dim() {
            return Err(Error::dim(
                "mlp input",
                format!("[{}] or [batch, {}]", self.input_dim(), self.input_dim()),
                format!("{:?}", input.shape()),
            ));
        }
        Ok(input.rows())
    }

    fn output_shape(&self, input: &Tensor<T>) -> Vec<usize> {
        if input.rank() == 1 {
            vec![self.output_dim()]
        } else {
            vec![input.rows(), self.output_dim()]
        }
    }

    /// Pure inference pass. Accepts `[in]` or `[batch, in]`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = self.check_input(input)?;
        let mut x = self.layers[0].forward(input.data(), batch);
        for layer in &self.layers[1..] {
            x = layer.forward(&x, batch);
        }
        let out = Tensor::new(self.output_shape(input), x)?;
        if !out.is_finite() {
            return Err(Error::TrainingDivergence {
                param: "mlp output".into(),
            });
        }
        Ok(out)
    }

    /// Forward pass that records activations for a following [`Mlp::backward`].
    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.data().to_vec());
        for layer in &self.layers {
            let next = layer.forward(acts.last().expect("nonempty"), batch);
            acts.push(next);
        }
        let out = Tensor::new(self.output_shape(input), acts[acts.len() - 1].clone())?;
        self.cache = Some(Cache {
            batch,
            input_shape: input.shape().to_vec(),
            acts,
        });
        if !out.is_finite() {
            return Err(Error::TrainingDivergence {
                param: "mlp output".into(),
            });
        }
        Ok(out)
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Accumulates `dLoss/dParam` into the gradient buffers and returns
    /// `dLoss/dInput`. Requires a preceding [`Mlp::forward_train`].
    pub fn backward(&mut self, loss_grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.backprop(loss_grad, true)
    }

    /// Like [`Mlp::backward`] but leaves parameter gradients untouched.
    pub fn backward_input(&mut self, loss_grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.backprop(loss_grad, false)
    }

    fn backprop(&mut self, loss_grad: &Tensor<T>, accumulate: bool) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backward called without a cached forward_train".into()))?;
        let batch = cache.batch;
        let dout = self.output_dim();
        if loss_grad.len() != batch * dout {
            return Err(Error::dim(
                "loss gradient",
                format!("{batch} x {dout}"),
                format!("{:?}", loss_grad.shape()),
            ));
        }
        let mut grad = loss_grad.data().to_vec();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let (din, dout) = (layer.in_dim(), layer.out_dim());
            let x = &cache.acts[i];
            let y = &cache.acts[i + 1];
            layer.activation.backprop(y, &mut grad);
            if accumulate {
                // dW += dz^T x
                T::gemm(
                    dout,
                    batch,
                    din,
                    T::one(),
                    &grad,
                    1,
                    dout,
                    x,
                    din,
                    1,
                    T::one(),
                    layer.grad_weight.data_mut(),
                    din,
                    1,
                );
                let gb = layer.grad_bias.data_mut();
                for row in grad.chunks_exact(dout) {
                    for (g, &d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
            }
            let mut dx = vec![T::zero(); batch * din];
            T::gemm(
                batch,
                dout,
                din,
                T::one(),
                &grad,
                dout,
                1,
                layer.weight.data(),
                din,
                1,
                T::zero(),
                &mut dx,
                din,
                1,
            );
            grad = dx;
        }
        Tensor::new(cache.input_shape.clone(), grad)
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            l.grad_weight.data_mut().iter_mut().for_each(|g| *g = T::zero());
            l.grad_bias.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Parameters flattened in layer order (weight then bias).
    pub fn params_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            v.extend_from_slice(l.weight.data());
            v.extend_from_slice(l.bias.data());
        }
        v
    }

    pub fn grads_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            v.extend_from_slice(l.grad_weight.data());
            v.extend_from_slice(l.grad_bias.data());
        }
        v
    }

    pub fn set_params_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dim("flat parameters", self.num_params(), flat.len()));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weight.len();
            l.weight.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
            let n = l.bias.len();
            l.bias.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    fn check_same_topology(&self, other: &Self) -> Result<()> {
        if self.layer_sizes() != other.layer_sizes() {
            return Err(Error::Checkpoint(format!(
                "network shapes differ: {:?} vs {:?}",
                self.layer_sizes(),
                other.layer_sizes()
            )));
        }
        Ok(())
    }

    pub fn copy_params_from(&mut self, other: &Self) -> Result<()> {
        self.check_same_topology(other)?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.data_mut().copy_from_slice(b.weight.data());
            a.bias.data_mut().copy_from_slice(b.bias.data());
        }
        Ok(())
    }

    /// `self <- tau * self + (1 - tau) * online`.
    pub fn polyak_from(&mut self, online: &Self, tau: T) -> Result<()> {
        self.check_same_topology(online)?;
        let keep = T::one() - tau;
        for (a, b) in self.layers.iter_mut().zip(&online.layers) {
            for (p, &o) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *p = tau * *p + keep * o;
            }
            for (p, &o) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                *p = tau * *p + keep * o;
            }
        }
        Ok(())
    }

    /// Named parameter tensors, `{prefix}.{i}.weight` / `{prefix}.{i}.bias`.
    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), l.weight.clone()));
            out.push((format!("{prefix}.{i}.bias"), l.bias.clone()));
        }
        out
    }

    /// Rebuilds a network from named tensors written by [`Mlp::named_tensors`].
    pub fn from_named(
        prefix: &str,
        tensors: &HashMap<String, Tensor<T>>,
        activations: &[Activation],
    ) -> Result<Self> {
        let mut layers = Vec::new();
        for (i, &act) in activations.iter().enumerate() {
            let get = |what: &str| {
                let key = format!("{prefix}.{i}.{what}");
                tensors
                    .get(&key)
                    .cloned()
                    .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{key}`")))
            };
            layers.push(Layer::new(get("weight")?, get("bias")?, act)?);
        }
        Self::from_layers(layers)
    }
}

impl<T: Scalar> ParamSet<T> for Mlp<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut [T], &mut [T])) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(
                &format!("layers.{i}.weight"),
                l.weight.data_mut(),
                l.grad_weight.data_mut(),
            );
            f(
                &format!("layers.{i}.bias"),
                l.bias.data_mut(),
                l.grad_bias.data_mut(),
            );
        }
    }
}
