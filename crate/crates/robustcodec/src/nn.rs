//! Minimal dense-network engine on flat 64-bit tensors.
//!
//! Everything runs in `f64` so numeric cross-checks (central finite
//! differences, quadrature oracles) can use tight tolerances. Networks cache
//! nothing internally: a forward pass returns an explicit [`ForwardTrace`]
//! that the backward pass consumes. That keeps models usable from `&self` in
//! parallel evaluation code, and makes "backward without forward" impossible
//! by construction.
//!
//! Only what the compressor models need is provided: dense layers with four
//! activations, reverse-mode gradients for parameters and inputs, summed
//! squared error, and plain SGD.

use crate::error::{Error, Result};
use rand::Rng;

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

/// Dense row-major array of `f64` with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that the shape accounts for every element.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::invalid("tensor shape overflows usize"))?;
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid("tensor shape has a zero dimension"));
        }
        if count != data.len() {
            return Err(Error::ShapeMismatch {
                context: "Tensor::new",
                expected: shape,
                got: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    /// One-dimensional tensor over `data`.
    pub fn from_vec(data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor {
            shape: vec![n],
            data,
        }
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let count = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; count],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Same data under a different shape (element count must match).
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    /// `self += c * other`, elementwise.
    pub fn add_scaled(&mut self, other: &Tensor, c: f64) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context: "Tensor::add_scaled",
                expected: self.shape.clone(),
                got: other.shape.clone(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// Errors with `context` if any entry is NaN or infinite.
    pub fn assert_finite(&self, context: &str) -> Result<()> {
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value {} at flat index {i} during {context}",
                self.data[i]
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

/// Elementwise nonlinearity applied after each affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => {
                // Split on sign so exp never overflows.
                if v >= 0.0 {
                    1.0 / (1.0 + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Derivative as a function of the preactivation.
    ///
    /// ReLU uses the subgradient 0 at exactly 0.
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = Activation::Sigmoid.apply(pre);
                s * (1.0 - s)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Layers and networks
// ---------------------------------------------------------------------------

/// Fully connected layer `y = act(W x + b)` with `W` stored row-major
/// `[out × in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Tensor,
    bias: Tensor,
    activation: Activation,
}

impl DenseLayer {
    /// Fresh layer with uniform init on `[-a, a]`, `a = sqrt(6/(in+out))`.
    pub fn new(
        in_width: usize,
        out_width: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if in_width == 0 || out_width == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let a = (6.0 / (in_width + out_width) as f64).sqrt();
        let weights = (0..in_width * out_width)
            .map(|_| rng.random_range(-a..a))
            .collect();
        Ok(DenseLayer {
            weights: Tensor::new(vec![out_width, in_width], weights)?,
            bias: Tensor::zeros(vec![out_width]),
            activation,
        })
    }

    /// Assembles a layer from explicit parameters.
    pub fn from_parts(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::invalid("layer weights must be 2-D"));
        }
        if bias.shape() != [weights.shape()[0]] {
            return Err(Error::ShapeMismatch {
                context: "DenseLayer::from_parts",
                expected: vec![weights.shape()[0]],
                got: bias.shape().to_vec(),
            });
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_width(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_width(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    /// Mutable flat views; shapes are fixed at construction.
    pub fn weights_mut(&mut self) -> &mut [f64] {
        self.weights.data_mut()
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        self.bias.data_mut()
    }

    /// Writes preactivations and activations for `input` into the two
    /// output buffers.
    fn forward_into(&self, input: &[f64], pre: &mut Vec<f64>, out: &mut Vec<f64>) {
        let (rows, cols) = (self.out_width(), self.in_width());
        let w = self.weights.data();
        let b = self.bias.data();
        pre.clear();
        out.clear();
        for r in 0..rows {
            let row = &w[r * cols..(r + 1) * cols];
            let s: f64 = row.iter().zip(input).map(|(wi, xi)| wi * xi).sum::<f64>() + b[r];
            pre.push(s);
            out.push(self.activation.apply(s));
        }
    }
}

/// Feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

/// Per-layer inputs and preactivations recorded by [`Network::forward_traced`].
///
/// `inputs[i]` is what layer `i` consumed (`inputs[0]` is the network input);
/// the final activation vector is appended as the last entry of `inputs`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardTrace {
    /// Final layer output.
    pub fn output(&self) -> &[f64] {
        self.inputs.last().expect("trace holds at least the input")
    }

    /// Preactivations of layer `i`.
    pub fn pre(&self, i: usize) -> &[f64] {
        &self.pre[i]
    }
}

/// Parameter gradients for one layer.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub d_weights: Tensor,
    pub d_bias: Tensor,
}

/// Reverse-mode result: per-layer parameter gradients plus the gradient with
/// respect to the network input.
#[derive(Debug, Clone)]
pub struct GradientTape {
    pub layers: Vec<LayerGrads>,
    pub d_input: Tensor,
}

impl GradientTape {
    /// All-zero tape matching `net`'s parameter shapes.
    pub fn zeros_like(net: &Network) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| LayerGrads {
                d_weights: Tensor::zeros(l.weights.shape().to_vec()),
                d_bias: Tensor::zeros(l.bias.shape().to_vec()),
            })
            .collect();
        GradientTape {
            layers,
            d_input: Tensor::zeros(vec![net.input_width()]),
        }
    }

    /// `self += other`, elementwise over every stored gradient.
    pub fn accumulate(&mut self, other: &GradientTape) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::invalid("gradient tapes cover different layer counts"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.d_weights.add_scaled(&b.d_weights, 1.0)?;
            a.d_bias.add_scaled(&b.d_bias, 1.0)?;
        }
        self.d_input.add_scaled(&other.d_input, 1.0)
    }

    /// Scales every stored gradient by `c`.
    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.d_weights.scale(c);
            l.d_bias.scale(c);
        }
        self.d_input.scale(c);
    }
}

impl Network {
    /// Builds a network from consecutive widths. `widths[0]` is the input
    /// width; hidden layers use `hidden`, the final layer uses `output`.
    pub fn new(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid("a network needs at least input and output widths"));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for i in 0..widths.len() - 1 {
            let act = if i + 2 == widths.len() { output } else { hidden };
            layers.push(DenseLayer::new(widths[i], widths[i + 1], act, rng)?);
        }
        Ok(Network { layers })
    }

    /// Assembles a network from explicit layers, checking width chaining.
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(Error::ShapeMismatch {
                    context: "Network::from_layers",
                    expected: vec![pair[0].out_width()],
                    got: vec![pair[1].in_width()],
                });
            }
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("nonempty").out_width()
    }

    /// Consecutive widths, input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = vec![self.input_width()];
        w.extend(self.layers.iter().map(|l| l.out_width()));
        w
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.len() != self.input_width() {
            return Err(Error::ShapeMismatch {
                context: "Network::forward",
                expected: vec![self.input_width()],
                got: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Plain forward pass.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x.data().to_vec();
        let mut pre = Vec::new();
        let mut out = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, &mut pre, &mut out);
            std::mem::swap(&mut cur, &mut out);
        }
        Ok(Tensor::from_vec(cur))
    }

    /// Forward pass that records everything backward needs.
    pub fn forward_traced(&self, x: &Tensor) -> Result<(Tensor, ForwardTrace)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pres = Vec::with_capacity(self.layers.len());
        inputs.push(x.data().to_vec());
        for layer in &self.layers {
            let mut pre = Vec::new();
            let mut out = Vec::new();
            layer.forward_into(inputs.last().expect("nonempty"), &mut pre, &mut out);
            pres.push(pre);
            inputs.push(out);
        }
        let y = Tensor::from_vec(inputs.last().expect("nonempty").clone());
        Ok((y, ForwardTrace { inputs, pre: pres }))
    }

    /// Reverse pass. `upstream` is the loss gradient with respect to the
    /// network output recorded in `trace`.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &Tensor) -> Result<GradientTape> {
        if trace.inputs.len() != self.layers.len() + 1 {
            return Err(Error::invalid("forward trace does not match network depth"));
        }
        if upstream.len() != self.output_width() {
            return Err(Error::ShapeMismatch {
                context: "Network::backward",
                expected: vec![self.output_width()],
                got: upstream.shape().to_vec(),
            });
        }
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        let mut up = upstream.data().to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[i];
            let pre = &trace.pre[i];
            let (rows, cols) = (layer.out_width(), layer.in_width());
            // delta = upstream ⊙ act'(pre)
            let delta: Vec<f64> = up
                .iter()
                .zip(pre)
                .map(|(u, &s)| u * layer.activation.derivative(s))
                .collect();
            let mut dw = vec![0.0; rows * cols];
            for r in 0..rows {
                let d = delta[r];
                for c in 0..cols {
                    dw[r * cols + c] = d * input[c];
                }
            }
            let mut dx = vec![0.0; cols];
            let w = layer.weights.data();
            for r in 0..rows {
                let d = delta[r];
                for c in 0..cols {
                    dx[c] += w[r * cols + c] * d;
                }
            }
            grads.push(LayerGrads {
                d_weights: Tensor::new(vec![rows, cols], dw)?,
                d_bias: Tensor::from_vec(delta),
            });
            up = dx;
        }
        grads.reverse();
        Ok(GradientTape {
            layers: grads,
            d_input: Tensor::from_vec(up),
        })
    }

    /// Errors if any parameter is NaN or infinite.
    pub fn assert_finite(&self, context: &str) -> Result<()> {
        for l in &self.layers {
            l.weights.assert_finite(context)?;
            l.bias.assert_finite(context)?;
        }
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }
}

// ---------------------------------------------------------------------------
// Loss and optimizer
// ---------------------------------------------------------------------------

/// Summed squared error `Σ (a_i − b_i)²`.
pub fn squared_error(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            context: "squared_error",
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

/// Gradient of [`squared_error`] with respect to its first argument: `2(a−b)`.
pub fn squared_error_grad(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            context: "squared_error_grad",
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| 2.0 * (x - y))
        .collect();
    Ok(Tensor::new(a.shape().to_vec(), data)?)
}

/// One SGD step: `θ ← θ − lr·g` over every parameter.
///
/// A zero rate is accepted and leaves parameters unchanged; negative rates
/// are rejected.
pub fn sgd_step(net: &mut Network, tape: &GradientTape, lr: f64) -> Result<()> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::Config(format!("learning rate must be ≥ 0, got {lr}")));
    }
    if tape.layers.len() != net.layers.len() {
        return Err(Error::invalid("gradient tape does not match network depth"));
    }
    for (layer, g) in net.layers.iter_mut().zip(&tape.layers) {
        if layer.weights.shape() != g.d_weights.shape() || layer.bias.shape() != g.d_bias.shape() {
            return Err(Error::ShapeMismatch {
                context: "sgd_step",
                expected: layer.weights.shape().to_vec(),
                got: g.d_weights.shape().to_vec(),
            });
        }
        for (p, gv) in layer.weights.data_mut().iter_mut().zip(g.d_weights.data()) {
            *p -= lr * gv;
        }
        for (p, gv) in layer.bias.data_mut().iter_mut().zip(g.d_bias.data()) {
            *p -= lr * gv;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
