//! Small multilayer perceptrons with hand-written reverse-mode gradients.
//!
//! [`Mlp`] is the shared engine: a stack of fully connected [`Layer`]s with
//! one activation for the hidden layers and one for the output layer.
//! [`PolicyNet`] wraps it as a continuous-control actor with two inputs
//! (position, velocity), one tanh-bounded output and an acceleration bound ā.
//!
//! A *simplified* policy network has no biases anywhere and uses tanh in
//! every layer. Such a network is an odd function of its input, and it is the
//! only kind that the [`division`](crate::division) analysis accepts.

use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::State;

/// Default acceleration bound, m/s².
pub const DEFAULT_ACTION_BOUND: f64 = 5.0;

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("non-finite state")]
    NonFiniteState,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite weight in layer {layer}")]
    NonFiniteWeight { layer: usize },
    #[error("simplified network violation: {0}")]
    Simplified(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and the
    /// activation value `y`. The ReLU subgradient at 0 is 0.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        };
        f.write_str(name)
    }
}

/// One fully connected layer. Row `j` of `weights` is the weight vector of
/// output unit `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

impl Layer {
    pub fn new(weights: Array2<f64>, bias: Option<Array1<f64>>) -> Self {
        Layer { weights, bias }
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per entry.
    pub fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, with_bias: bool, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weights = Array2::from_shape_fn((outputs, inputs), |_| rng.gen_range(-bound..=bound));
        let bias = with_bias.then(|| Array1::from_shape_fn(outputs, |_| rng.gen_range(-bound..=bound)));
        Layer { weights, bias }
    }

    fn zeros_like(&self) -> Self {
        Layer {
            weights: Array2::zeros(self.weights.raw_dim()),
            bias: self.bias.as_ref().map(|b| Array1::zeros(b.raw_dim())),
        }
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
            && self.bias.as_ref().is_none_or(|b| b.iter().all(|w| w.is_finite()))
    }
}

/// Gradients with the same layout as the parameters of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Gradients {
            layers: mlp.layers.iter().map(Layer::zeros_like).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            layer.weights *= factor;
            if let Some(b) = layer.bias.as_mut() {
                *b *= factor;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        let mut sum = 0.0;
        for layer in &self.layers {
            sum += layer.weights.iter().map(|g| g * g).sum::<f64>();
            if let Some(b) = &layer.bias {
                sum += b.iter().map(|g| g * g).sum::<f64>();
            }
        }
        sum.sqrt()
    }

    /// Rescales so the global norm does not exceed `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let norm = self.norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
    }
}

/// Intermediate values of a batched forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `inputs[l]` is the input of layer `l`; the last entry is the output.
    activations: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("trace has at least the input")
    }
}

/// Fully connected network over row-major batches (`batch × features`).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub hidden: Activation,
    pub output: Activation,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>, hidden: Activation, output: Activation) -> Result<Self, NetError> {
        let mlp = Mlp { layers, hidden, output };
        mlp.validate_shapes()?;
        Ok(mlp)
    }

    /// Random network with the given layer widths, `widths[0]` being the input.
    pub fn random<R: Rng + ?Sized>(
        widths: &[usize],
        with_bias: bool,
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        let layers = widths
            .windows(2)
            .map(|w| Layer::random(w[0], w[1], with_bias, rng))
            .collect();
        Mlp { layers, hidden, output }
    }

    fn validate_shapes(&self) -> Result<(), NetError> {
        if self.layers.is_empty() {
            return Err(NetError::Shape("network has no layers".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.outputs() == 0 || layer.inputs() == 0 {
                return Err(NetError::Shape(format!("layer {l} has an empty weight matrix")));
            }
            if let Some(b) = &layer.bias {
                if b.len() != layer.outputs() {
                    return Err(NetError::Shape(format!(
                        "layer {l} bias has length {} but the layer has {} rows",
                        b.len(),
                        layer.outputs()
                    )));
                }
            }
            if l > 0 && self.layers[l - 1].outputs() != layer.inputs() {
                return Err(NetError::Shape(format!(
                    "layer {l} expects {} inputs but layer {} produces {}",
                    layer.inputs(),
                    l - 1,
                    self.layers[l - 1].outputs()
                )));
            }
            if !layer.is_finite() {
                return Err(NetError::NonFiniteWeight { layer: l });
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::outputs)
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    /// Single-sample forward pass.
    pub fn eval(&self, input: &[f64]) -> Vec<f64> {
        let mut z = input.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let act = self.activation_of(l);
            let w = &layer.weights;
            let mut next = Vec::with_capacity(w.nrows());
            for (j, row) in w.outer_iter().enumerate() {
                let mut acc = layer.bias.as_ref().map_or(0.0, |b| b[j]);
                for (wk, zk) in row.iter().zip(&z) {
                    acc += wk * zk;
                }
                next.push(act.apply(acc));
            }
            z = next;
        }
        z
    }

    /// Propagates an arbitrary feature vector through layers `start..`.
    pub fn eval_from(&self, start: usize, features: &[f64]) -> Vec<f64> {
        let tail = Mlp {
            layers: self.layers[start..].to_vec(),
            hidden: self.hidden,
            output: self.output,
        };
        tail.eval(features)
    }

    pub fn forward_batch(&self, input: &Array2<f64>) -> Trace {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(input.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = activations[l].dot(&layer.weights.t());
            if let Some(b) = &layer.bias {
                pre += b;
            }
            let act = self.activation_of(l);
            let post = pre.mapv(|x| act.apply(x));
            pre_activations.push(pre);
            activations.push(post);
        }
        Trace {
            activations,
            pre_activations,
        }
    }

    /// Reverse pass. `grad_output` is dL/d(output), shaped like the output.
    /// Returns parameter gradients summed over the batch and dL/d(input).
    pub fn backward(&self, trace: &Trace, grad_output: &Array2<f64>) -> (Gradients, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.clone();
        for l in (0..self.layers.len()).rev() {
            let act = self.activation_of(l);
            let pre = &trace.pre_activations[l];
            let post = &trace.activations[l + 1];
            let mut delta = upstream;
            ndarray::Zip::from(&mut delta)
                .and(pre)
                .and(post)
                .for_each(|d, &x, &y| *d *= act.derivative(x, y));
            let weights = delta.t().dot(&trace.activations[l]);
            let bias = self.layers[l].bias.as_ref().map(|_| delta.sum_axis(Axis(0)));
            upstream = delta.dot(&self.layers[l].weights);
            grads.push(Layer { weights, bias });
        }
        grads.reverse();
        (Gradients { layers: grads }, upstream)
    }

    /// `self = (1 - tau) * self + tau * other`.
    pub fn soft_update(&mut self, other: &Mlp, tau: f64) {
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weights.zip_mut_with(&src.weights, |d, &s| *d = (1.0 - tau) * *d + tau * s);
            if let (Some(db), Some(sb)) = (dst.bias.as_mut(), src.bias.as_ref()) {
                db.zip_mut_with(sb, |d, &s| *d = (1.0 - tau) * *d + tau * s);
            }
        }
    }
}

/// Deterministic continuous-control actor: `(p, v) ↦ ā · μ(p, v)`.
///
/// The output layer is always tanh, so `|μ| ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    mlp: Mlp,
    simplified: bool,
    action_bound: f64,
}

impl PolicyNet {
    pub fn new(layers: Vec<Layer>, activation: Activation, simplified: bool, action_bound: f64) -> Result<Self, NetError> {
        let mlp = Mlp::new(layers, activation, Activation::Tanh)?;
        let net = PolicyNet {
            mlp,
            simplified,
            action_bound,
        };
        net.validate()?;
        Ok(net)
    }

    /// Bias-free tanh network from plain row-major weight matrices.
    pub fn simplified(weights: Vec<Array2<f64>>, action_bound: f64) -> Result<Self, NetError> {
        let layers = weights.into_iter().map(|w| Layer::new(w, None)).collect();
        PolicyNet::new(layers, Activation::Tanh, true, action_bound)
    }

    /// Freshly initialized actor with the given hidden widths.
    pub fn random<R: Rng + ?Sized>(
        hidden: &[usize],
        activation: Activation,
        simplified: bool,
        action_bound: f64,
        rng: &mut R,
    ) -> Self {
        let activation = if simplified { Activation::Tanh } else { activation };
        let mut widths = vec![2];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mlp = Mlp::random(&widths, !simplified, activation, Activation::Tanh, rng);
        PolicyNet {
            mlp,
            simplified,
            action_bound,
        }
    }

    fn validate(&self) -> Result<(), NetError> {
        self.mlp.validate_shapes()?;
        if self.mlp.input_dim() != 2 {
            return Err(NetError::Shape(format!("input dimension {} != 2", self.mlp.input_dim())));
        }
        if self.mlp.output_dim() != 1 {
            return Err(NetError::Shape(format!("output dimension {} != 1", self.mlp.output_dim())));
        }
        if self.mlp.output != Activation::Tanh {
            return Err(NetError::Schema("policy output activation must be tanh".into()));
        }
        if !(self.action_bound.is_finite() && self.action_bound > 0.0) {
            return Err(NetError::Schema(format!("action bound {} must be positive", self.action_bound)));
        }
        if self.simplified {
            if self.mlp.hidden != Activation::Tanh {
                return Err(NetError::Simplified(format!(
                    "activation is {} but a simplified network requires tanh",
                    self.mlp.hidden
                )));
            }
            if let Some(l) = self.mlp.layers.iter().position(|layer| layer.bias.is_some()) {
                return Err(NetError::Simplified(format!("layer {l} carries a bias")));
            }
        }
        Ok(())
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub(crate) fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn layers(&self) -> &[Layer] {
        &self.mlp.layers
    }

    pub fn activation(&self) -> Activation {
        self.mlp.hidden
    }

    pub fn is_simplified(&self) -> bool {
        self.simplified
    }

    pub fn action_bound(&self) -> f64 {
        self.action_bound
    }

    /// First-layer weight matrix (`n₁ × 2`).
    pub fn first_layer(&self) -> &Array2<f64> {
        &self.mlp.layers[0].weights
    }

    /// Unscaled output μ(s) ∈ [-1, 1].
    pub fn output(&self, s: State) -> Result<f64, NetError> {
        if !s.is_finite() {
            return Err(NetError::NonFiniteState);
        }
        Ok(self.mlp.eval(&[s.p, s.v])[0])
    }

    /// Commanded acceleration ā·μ(s).
    pub fn forward(&self, s: State) -> Result<f64, NetError> {
        self.output(s).map(|mu| self.action_bound * mu)
    }

    /// Reverse-mode derivatives of the unscaled output μ at `s`.
    pub fn gradient(&self, s: State) -> Result<NetGradient, NetError> {
        if !s.is_finite() {
            return Err(NetError::NonFiniteState);
        }
        let input = Array2::from_shape_vec((1, 2), vec![s.p, s.v]).expect("1x2");
        let trace = self.mlp.forward_batch(&input);
        let (params, grad_input) = self.mlp.backward(&trace, &Array2::ones((1, 1)));
        Ok(NetGradient {
            output: trace.output()[[0, 0]],
            params,
            input: [grad_input[[0, 0]], grad_input[[0, 1]]],
        })
    }

    /// Copy of this network with the output layer negated (μ ↦ −μ).
    pub fn negated(&self) -> PolicyNet {
        let mut net = self.clone();
        let last = net.mlp.layers.last_mut().expect("non-empty");
        last.weights.mapv_inplace(|w| -w);
        if let Some(b) = last.bias.as_mut() {
            b.mapv_inplace(|w| -w);
        }
        net
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetError> {
        let text = std::fs::read_to_string(path)?;
        PolicyNet::from_text(&text)
    }

    /// Serializes to the `v1` weight document.
    pub fn to_text(&self) -> String {
        let file = PolicyFile {
            format: FORMAT_TAG.to_string(),
            version: FORMAT_VERSION.to_string(),
            activation: self.mlp.hidden,
            simplified: self.simplified,
            action_bound: self.action_bound,
            input_dim: 2,
            output_dim: 1,
            layers: self
                .mlp
                .layers
                .iter()
                .map(|layer| LayerFile {
                    rows: layer.outputs(),
                    cols: layer.inputs(),
                    weights: layer.weights.iter().copied().collect(),
                    bias: layer.bias.as_ref().map(|b| b.to_vec()),
                })
                .collect(),
        };
        crate::textio::to_json_string(&file)
    }

    pub fn from_text(text: &str) -> Result<Self, NetError> {
        let file: PolicyFile = serde_json::from_str(text)?;
        if file.format != FORMAT_TAG {
            return Err(NetError::Schema(format!("unknown format tag {:?}", file.format)));
        }
        if file.version != FORMAT_VERSION {
            return Err(NetError::Schema(format!("unsupported version {:?}", file.version)));
        }
        if file.input_dim != 2 || file.output_dim != 1 {
            return Err(NetError::Shape(format!(
                "declared dimensions {}→{} but policies map 2→1",
                file.input_dim, file.output_dim
            )));
        }
        let mut layers = Vec::with_capacity(file.layers.len());
        for (l, lf) in file.layers.into_iter().enumerate() {
            if lf.weights.len() != lf.rows * lf.cols {
                return Err(NetError::Shape(format!(
                    "layer {l} declares {}x{} but holds {} weights",
                    lf.rows,
                    lf.cols,
                    lf.weights.len()
                )));
            }
            let weights = Array2::from_shape_vec((lf.rows, lf.cols), lf.weights).expect("length checked");
            let bias = match lf.bias {
                Some(b) if file.simplified => {
                    if b.iter().any(|&x| x != 0.0) {
                        return Err(NetError::Simplified(format!("layer {l} carries a nonzero bias")));
                    }
                    None
                }
                other => other.map(Array1::from_vec),
            };
            layers.push(Layer::new(weights, bias));
        }
        PolicyNet::new(layers, file.activation, file.simplified, file.action_bound)
    }
}

/// Derivatives of the unscaled output μ.
#[derive(Debug, Clone)]
pub struct NetGradient {
    pub output: f64,
    pub params: Gradients,
    pub input: [f64; 2],
}

const FORMAT_TAG: &str = "divider.policy";
const FORMAT_VERSION: &str = "v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    format: String,
    version: String,
    activation: Activation,
    simplified: bool,
    action_bound: f64,
    input_dim: usize,
    output_dim: usize,
    layers: Vec<LayerFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Option<Vec<f64>>,
}

/// Adam optimizer state for one [`Mlp`].
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    first: Gradients,
    second: Gradients,
}

impl Adam {
    pub fn new(mlp: &Mlp, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Gradients::zeros_like(mlp),
            second: Gradients::zeros_like(mlp),
        }
    }

    /// Descent step along `grads` (which should be gradients of a loss).
    pub fn step(&mut self, mlp: &mut Mlp, grads: &Gradients) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let (lr, eps) = (self.lr, self.eps);
        let update = |param: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *param -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (l, layer) in mlp.layers.iter_mut().enumerate() {
            let g = &grads.layers[l];
            let m = &mut self.first.layers[l];
            let v = &mut self.second.layers[l];
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            if let (Some(pb), Some(gb), Some(mb), Some(vb)) =
                (layer.bias.as_mut(), g.bias.as_ref(), m.bias.as_mut(), v.bias.as_mut())
            {
                ndarray::Zip::from(pb)
                    .and(gb)
                    .and(mb)
                    .and(vb)
                    .for_each(|p, &g, m, v| update(p, g, m, v));
            }
        }
    }
}

/// The hand-constructed two-layer example network used throughout the guide:
/// first-layer rows (1/2, √3/2) and (0, 1).
pub fn constructed_example() -> PolicyNet {
    let s3 = 3f64.sqrt();
    PolicyNet::simplified(
        vec![
            ndarray::array![[0.5, s3 / 2.0], [0.0, 1.0]],
            ndarray::array![[2.0, -1.0], [2.0, 0.5]],
            ndarray::array![[-1.0, -1.0]],
        ],
        DEFAULT_ACTION_BOUND,
    )
    .expect("valid construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hand_forward_minus_ten() -> f64 {
        // z1 = tanh([-5, 0]); z2 = tanh(W2 z1); out = tanh(-(z2_1 + z2_2))
        let z1 = [(-5.0f64).tanh(), 0.0];
        let z2 = [(2.0 * z1[0] - z1[1]).tanh(), (2.0 * z1[0] + 0.5 * z1[1]).tanh()];
        (-(z2[0] + z2[1])).tanh()
    }

    #[test]
    fn constructed_origin_is_zero() {
        let net = constructed_example();
        assert_eq!(net.forward(State::new(0.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn constructed_forward_matches_hand_arithmetic() {
        let net = constructed_example();
        let mu = net.output(State::new(-10.0, 0.0)).unwrap();
        assert_relative_eq!(mu, hand_forward_minus_ten(), epsilon = 1e-15);
        assert!((mu - 0.958574).abs() < 1e-6);
        assert!((net.forward(State::new(-10.0, 0.0)).unwrap() - 4.79287).abs() < 1e-5);
        let mirrored = net.forward(State::new(10.0, 0.0)).unwrap();
        assert_eq!(mirrored, -net.forward(State::new(-10.0, 0.0)).unwrap());
    }

    #[test]
    fn non_finite_state_is_rejected() {
        let net = constructed_example();
        assert!(matches!(net.forward(State::new(f64::NAN, 0.0)), Err(NetError::NonFiniteState)));
        assert!(matches!(net.gradient(State::new(0.0, f64::INFINITY)), Err(NetError::NonFiniteState)));
    }

    #[test]
    fn input_gradient_at_origin_is_chain_product() {
        // At the origin every tanh derivative is 1, so dμ/ds = (W3 W2 W1)ᵀ.
        let net = constructed_example();
        let g = net.gradient(State::new(0.0, 0.0)).unwrap();
        let layers = net.layers();
        let chain = layers[2].weights.dot(&layers[1].weights).dot(&layers[0].weights);
        assert_relative_eq!(g.input[0], chain[[0, 0]], epsilon = 1e-14);
        assert_relative_eq!(g.input[1], chain[[0, 1]], epsilon = 1e-14);
    }

    #[test]
    fn zero_final_layer_kills_upstream_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = PolicyNet::random(&[8, 8], Activation::Tanh, true, 5.0, &mut rng);
        net.mlp.layers.last_mut().unwrap().weights.fill(0.0);
        let g = net.gradient(State::new(1.3, -0.4)).unwrap();
        for layer in &g.params.layers[..g.params.layers.len() - 1] {
            assert!(layer.weights.iter().all(|&x| x == 0.0));
        }
        assert_eq!(g.input, [0.0, 0.0]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        assert_eq!(Activation::Relu.derivative(0.0, 0.0), 0.0);
        assert_eq!(Activation::Relu.derivative(1e-300, 1e-300), 1.0);
    }

    #[test]
    fn simplified_rejects_bias_and_relu() {
        let w = || vec![Layer::new(ndarray::array![[1.0, 0.0]], None)];
        assert!(PolicyNet::new(w(), Activation::Relu, true, 5.0).is_err());
        let biased = vec![Layer::new(ndarray::array![[1.0, 0.0]], Some(ndarray::array![0.1]))];
        assert!(matches!(
            PolicyNet::new(biased, Activation::Tanh, true, 5.0),
            Err(NetError::Simplified(_))
        ));
    }

    #[test]
    fn shape_chain_is_checked() {
        let layers = vec![
            Layer::new(Array2::zeros((3, 2)), None),
            Layer::new(Array2::zeros((1, 2)), None),
        ];
        assert!(matches!(PolicyNet::new(layers, Activation::Tanh, true, 5.0), Err(NetError::Shape(_))));
        let wrong_input = vec![Layer::new(Array2::zeros((1, 3)), None)];
        assert!(matches!(
            PolicyNet::new(wrong_input, Activation::Tanh, true, 5.0),
            Err(NetError::Shape(_))
        ));
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = PolicyNet::random(&[32, 32, 32], Activation::Relu, false, 5.0, &mut rng);
        let back = PolicyNet::from_text(&net.to_text()).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn nonzero_bias_in_simplified_file_is_rejected() {
        let text = constructed_example().to_text();
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["layers"][0]["bias"] = serde_json::json!([0.0, 0.25]);
        let err = PolicyNet::from_text(&doc.to_string()).unwrap_err();
        assert!(matches!(err, NetError::Simplified(_)), "{err}");
        doc["layers"][0]["bias"] = serde_json::json!([0.0, 0.0]);
        assert!(PolicyNet::from_text(&doc.to_string()).is_ok());
    }

    #[test]
    fn schema_errors() {
        let text = constructed_example().to_text();
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["version"] = serde_json::json!("v2");
        assert!(matches!(PolicyNet::from_text(&doc.to_string()), Err(NetError::Schema(_))));
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["layers"][1]["weights"] = serde_json::json!([1.0, 2.0, 3.0]);
        assert!(matches!(PolicyNet::from_text(&doc.to_string()), Err(NetError::Shape(_))));
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["activation"] = serde_json::json!("relu");
        assert!(matches!(PolicyNet::from_text(&doc.to_string()), Err(NetError::Simplified(_))));
    }

    #[test]
    fn adam_reduces_a_quadratic() {
        let mut mlp = Mlp::new(
            vec![Layer::new(ndarray::array![[3.0, -2.0]], Some(ndarray::array![1.0]))],
            Activation::Identity,
            Activation::Identity,
        )
        .unwrap();
        let mut adam = Adam::new(&mlp, 0.05);
        let x = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        for _ in 0..500 {
            let trace = mlp.forward_batch(&x);
            let grad_out = trace.output().clone();
            let (g, _) = mlp.backward(&trace, &grad_out);
            adam.step(&mut mlp, &g);
        }
        let out = mlp.forward_batch(&x);
        assert!(out.output().iter().all(|y| y.abs() < 1e-2), "{:?}", out.output());
    }
}
