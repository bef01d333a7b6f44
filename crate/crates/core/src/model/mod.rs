//! Feed-forward mapping networks and the n-channel wrapper.
//!
//! A network is an ordered stack of dense layers `a ↦ act(a·Wᵀ + b)`. The
//! single identity-activation layer is the "linear network" used for the
//! synthetic and translation experiments.

mod checkpoint;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Relu),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

/// One dense layer. `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn pre_activation(&self, input: ArrayView2<f64>) -> Array2<f64> {
        let mut z = input.dot(&self.weight.t());
        z += &self.bias;
        z
    }
}

/// Parameters of the mapping network. Gradients and optimizer state reuse
/// this type since they share its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layers: Vec<Layer>,
}

impl ModelParams {
    /// Checks that consecutive layer dimensions chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a network needs at least one layer"));
        }
        for layer in &layers {
            check_dim(layer.output_dim(), layer.bias.len())?;
        }
        for pair in layers.windows(2) {
            check_dim(pair[0].output_dim(), pair[1].input_dim())?;
        }
        Ok(Self { layers })
    }

    /// Single identity-activation layer.
    pub fn linear(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        Self::from_layers(vec![Layer {
            weight,
            bias,
            activation: Activation::Identity,
        }])
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn is_linear(&self) -> bool {
        self.layers.len() == 1 && self.layers[0].activation == Activation::Identity
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Same shape and activations, all entries zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Array2::zeros(l.weight.dim()),
                    bias: Array1::zeros(l.bias.len()),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.len() == b.bias.len())
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::invalid("parameter shapes differ"));
        }
        Ok(())
    }

    /// All parameters, layer by layer, weights (row-major) before biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    /// Inverse of [`ModelParams::to_flat`] onto this shape.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        check_dim(self.num_parameters(), flat.len())?;
        let mut out = self.clone();
        let mut values = flat.iter().copied();
        for v in out.iter_mut() {
            *v = values.next().expect("length checked");
        }
        Ok(out)
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, scale: f64, other: &Self) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.iter_mut() {
            *v *= factor;
        }
    }

    pub fn zero_biases(&mut self) {
        for l in &mut self.layers {
            l.bias.fill(0.0);
        }
    }
}

/// Gaussian weights with standard deviation 1/√fan_in and zero biases.
/// Hidden layers use `hidden_activation`; the output layer is linear.
pub fn init_params(
    input_dim: usize,
    output_dim: usize,
    hidden: &[usize],
    hidden_activation: Activation,
    seed: u64,
) -> Result<ModelParams> {
    if input_dim == 0 || output_dim == 0 || hidden.contains(&0) {
        return Err(Error::invalid("network dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(hidden);
    dims.push(output_dim);
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
            let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || normal.sample(&mut rng));
            let activation = if k + 2 == dims.len() {
                Activation::Identity
            } else {
                hidden_activation
            };
            Layer {
                weight,
                bias: Array1::zeros(fan_out),
                activation,
            }
        })
        .collect();
    ModelParams::from_layers(layers)
}

/// Applies the layer stack to every row of `x`.
pub fn forward(params: &ModelParams, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_dim(params.input_dim(), x.ncols())?;
    let mut layers = params.layers.iter();
    let first = layers.next().expect("nonempty");
    let mut a = first.pre_activation(x);
    a.mapv_inplace(|z| first.activation.apply(z));
    for layer in layers {
        let mut z = layer.pre_activation(a.view());
        z.mapv_inplace(|v| layer.activation.apply(v));
        a = z;
    }
    Ok(a)
}

/// The n-channel input: one matrix per channel, all with the same width.
#[derive(Debug, Clone, Default)]
pub struct ChannelBatch {
    pub inputs: Vec<Array2<f64>>,
}

impl ChannelBatch {
    pub fn new(inputs: Vec<Array2<f64>>) -> Result<Self> {
        if let Some(first) = inputs.first() {
            for m in &inputs[1..] {
                check_dim(first.ncols(), m.ncols())?;
            }
        }
        Ok(Self { inputs })
    }

    pub fn num_channels(&self) -> usize {
        self.inputs.len()
    }
}

/// Runs the same network (tied weights) on each channel.
pub fn n_channel_forward(params: &ModelParams, batch: &ChannelBatch) -> Result<Vec<Array2<f64>>> {
    batch.inputs.iter().map(|x| forward(params, x.view())).collect()
}

/// Gradients of `sum(upstream ⊙ forward(params, x))`.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ModelParams,
    pub input: Array2<f64>,
}

/// Reverse-mode pass through the layer stack.
pub fn backward(params: &ModelParams, x: ArrayView2<f64>, upstream: ArrayView2<f64>) -> Result<Gradients> {
    check_dim(params.input_dim(), x.ncols())?;
    check_dim(params.output_dim(), upstream.ncols())?;
    check_dim(x.nrows(), upstream.nrows())?;

    // Forward, caching each layer's input and pre-activation.
    let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(params.layers.len());
    let mut pre: Vec<Array2<f64>> = Vec::with_capacity(params.layers.len());
    let mut a = x.to_owned();
    for layer in &params.layers {
        let z = layer.pre_activation(a.view());
        let next = z.mapv(|v| layer.activation.apply(v));
        inputs.push(a);
        pre.push(z);
        a = next;
    }

    let mut grads = params.zeros_like();
    let mut delta = upstream.to_owned();
    for (k, layer) in params.layers.iter().enumerate().rev() {
        if layer.activation != Activation::Identity {
            ndarray::Zip::from(&mut delta)
                .and(&pre[k])
                .for_each(|d, &z| *d *= layer.activation.derivative(z));
        }
        grads.layers[k].weight = delta.t().dot(&inputs[k]);
        grads.layers[k].bias = delta.sum_axis(Axis(0));
        delta = delta.dot(&layer.weight);
    }
    Ok(Gradients {
        params: grads,
        input: delta,
    })
}
