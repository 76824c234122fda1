//! Multilayer perceptrons, flat parameter vectors and the Adam optimizer.
//!
//! Every layer is `Linear -> [BatchNorm] -> activation`. A network's
//! parameters are one flat vector laid out layer by layer as
//! `(weight [in x out], bias [out])`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, GradCheckReport, Graph, NodeId};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const BN_EPS: f64 = 1e-5;
pub const INIT_STD: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetsError {
    #[error("layer {index} has input dim {found} but the previous layer outputs {expected}")]
    BrokenChain {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("layer {index} has a zero dimension")]
    ZeroDim { index: usize },
    #[error("network has no layers")]
    Empty,
    #[error("non-finite gradient {value} in {block}")]
    NonFiniteGradient { block: String, value: f64 },
    #[error("length mismatch: params {params}, grads {grads}, optimizer {state}")]
    Length {
        params: usize,
        grads: usize,
        state: usize,
    },
    #[error(transparent)]
    Graph(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, NetsError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Tanh,
    Sigmoid,
    LeakyRelu { slope: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    #[serde(default)]
    pub batchnorm: bool,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input: usize, output: usize, batchnorm: bool, activation: Activation) -> Self {
        Self {
            input,
            output,
            batchnorm,
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.input * self.output + self.output
    }
}

/// Checks that dims are positive and chain from one layer to the next.
pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(NetsError::Empty);
    }
    for (i, s) in specs.iter().enumerate() {
        if s.input == 0 || s.output == 0 {
            return Err(NetsError::ZeroDim { index: i });
        }
        if i > 0 && specs[i - 1].output != s.input {
            return Err(NetsError::BrokenChain {
                index: i,
                expected: specs[i - 1].output,
                found: s.input,
            });
        }
    }
    Ok(())
}

pub fn param_count(specs: &[LayerSpec]) -> usize {
    specs.iter().map(LayerSpec::param_count).sum()
}

/// Generator shape used throughout the experiments: every hidden layer is
/// batch-normalized and followed by a leaky ReLU, the output layer is `tanh`.
/// `dims = [noise, hidden..., out]`.
pub fn generator_specs(dims: &[usize]) -> Vec<LayerSpec> {
    let lrelu = Activation::LeakyRelu { slope: LEAKY_SLOPE };
    let last = dims.len().saturating_sub(2);
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| {
            if i == last {
                LayerSpec::new(w[0], w[1], false, Activation::Tanh)
            } else {
                LayerSpec::new(w[0], w[1], true, lrelu)
            }
        })
        .collect()
}

/// `input-512-256-1` with leaky-relu hidden layers and a sigmoid output.
pub fn discriminator_specs(input: usize) -> Vec<LayerSpec> {
    let lrelu = Activation::LeakyRelu { slope: LEAKY_SLOPE };
    vec![
        LayerSpec::new(input, 512, false, lrelu),
        LayerSpec::new(512, 256, false, lrelu),
        LayerSpec::new(256, 1, false, Activation::Sigmoid),
    ]
}

/// An MLP graph built for a fixed batch size.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub graph: Graph,
    pub input: NodeId,
    pub output: NodeId,
    pub batch: usize,
    pub specs: Vec<LayerSpec>,
}

/// Builds an MLP graph whose input node `x` has shape `[batch, in]`.
pub fn build_mlp(specs: &[LayerSpec], batch: usize) -> Result<Mlp> {
    let mut graph = Graph::new();
    let input = graph.input("x", batch, specs.first().map_or(0, |s| s.input));
    let output = append_mlp(&mut graph, specs, input, "")?;
    graph.mark_output("y", output)?;
    Ok(Mlp {
        graph,
        input,
        output,
        batch,
        specs: specs.to_vec(),
    })
}

/// Appends the MLP layers to an existing graph, reading from `input`.
/// Parameter blocks are registered in layout order with names prefixed by `prefix`.
pub fn append_mlp(
    graph: &mut Graph,
    specs: &[LayerSpec],
    input: NodeId,
    prefix: &str,
) -> Result<NodeId> {
    validate_specs(specs)?;
    let mut h = input;
    for (i, s) in specs.iter().enumerate() {
        let w = graph.param(&format!("{prefix}l{i}.w"), s.input, s.output);
        let b = graph.param(&format!("{prefix}l{i}.b"), 1, s.output);
        h = graph.matmul(h, w)?;
        h = graph.add_bias(h, b)?;
        if s.batchnorm {
            h = graph.batchnorm(h, BN_EPS)?;
        }
        h = match s.activation {
            Activation::None => h,
            Activation::Tanh => graph.tanh(h)?,
            Activation::Sigmoid => graph.sigmoid(h)?,
            Activation::LeakyRelu { slope } => graph.leaky_relu(h, slope)?,
        };
    }
    Ok(h)
}

impl Mlp {
    /// Forward pass on a `[batch, in]` tensor.
    pub fn forward(&self, x: &Tensor, params: &[f64]) -> Result<Tensor> {
        let e = self.graph.evaluate(&[("x", &x.data)], params)?;
        let out = self.specs.last().map_or(0, |s| s.output);
        Ok(Tensor::from_vec(self.batch, out, e.value(self.output).to_vec()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Where each layer's weight and bias live inside a flat vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub blocks: Vec<ParamBlock>,
}

impl ParamLayout {
    pub fn for_specs(specs: &[LayerSpec]) -> Self {
        let mut offset = 0;
        let mut blocks = Vec::with_capacity(specs.len() * 2);
        for (i, s) in specs.iter().enumerate() {
            for (suffix, rows, cols) in [("w", s.input, s.output), ("b", 1, s.output)] {
                blocks.push(ParamBlock {
                    name: format!("l{i}.{suffix}"),
                    offset,
                    rows,
                    cols,
                });
                offset += rows * cols;
            }
        }
        Self { blocks }
    }

    /// A single unnamed block of `n` values.
    pub fn flat(n: usize) -> Self {
        Self {
            blocks: vec![ParamBlock {
                name: "params".into(),
                offset: 0,
                rows: 1,
                cols: n,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(ParamBlock::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Human-readable location of flat index `i`, e.g. `l1.w[3,7]`.
    pub fn describe(&self, i: usize) -> String {
        for b in &self.blocks {
            if i >= b.offset && i < b.offset + b.len() {
                let k = i - b.offset;
                return format!("{}[{},{}]", b.name, k / b.cols, k % b.cols);
            }
        }
        format!("index {i}")
    }
}

/// Flat parameter vector plus its layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: ParamLayout,
}

impl ParamVector {
    pub fn zeros(layout: ParamLayout) -> Self {
        Self {
            values: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// One `(weight, bias)` pair per layer, copied out of the flat vector.
    pub fn unflatten(&self) -> Vec<(Tensor, Vec<f64>)> {
        self.layout
            .blocks
            .chunks(2)
            .map(|pair| {
                let (w, b) = (&pair[0], &pair[1]);
                (
                    Tensor::from_vec(
                        w.rows,
                        w.cols,
                        self.values[w.offset..w.offset + w.len()].to_vec(),
                    ),
                    self.values[b.offset..b.offset + b.len()].to_vec(),
                )
            })
            .collect()
    }

    pub fn flatten(layers: &[(Tensor, Vec<f64>)], layout: ParamLayout) -> Self {
        let mut values = Vec::with_capacity(layout.len());
        for (w, b) in layers {
            values.extend_from_slice(&w.data);
            values.extend_from_slice(b);
        }
        assert_eq!(values.len(), layout.len(), "layers do not match layout");
        Self { values, layout }
    }
}

/// Weights `N(0, 0.01^2)`, biases zero.
pub fn init_params(specs: &[LayerSpec], rng: &mut Rng) -> ParamVector {
    let layout = ParamLayout::for_specs(specs);
    let mut values = vec![0.0; layout.len()];
    for b in layout.blocks.iter().filter(|b| b.name.ends_with(".w")) {
        for v in &mut values[b.offset..b.offset + b.len()] {
            *v = INIT_STD * rng.normal();
        }
    }
    ParamVector { values, layout }
}

/// A random 2 to 4 layer MLP with widths in `1..=6`; each layer draws its
/// activation uniformly and is batch-normalized with probability 1/2.
pub fn random_specs(rng: &mut Rng) -> Vec<LayerSpec> {
    let layers = 2 + rng.below(3);
    let mut dims = vec![1 + rng.below(6)];
    dims.extend((0..layers).map(|_| 1 + rng.below(6)));
    dims.windows(2)
        .map(|w| {
            let act = match rng.below(4) {
                0 => Activation::None,
                1 => Activation::Tanh,
                2 => Activation::Sigmoid,
                _ => Activation::LeakyRelu { slope: LEAKY_SLOPE },
            };
            LayerSpec::new(w[0], w[1], rng.below(2) == 1, act)
        })
        .collect()
}

/// Central-difference check of an MLP on a random batch. The scalar checked
/// is `sum(tanh(y c))` for a random projection `c`, so every output column
/// (and every batch-norm path) feeds the loss. Draws whose leaky-relu inputs
/// come within [`KINK_MARGIN`] of the kink are redrawn, since a central
/// difference across a kink does not estimate the derivative.
pub fn mlp_grad_check(
    specs: &[LayerSpec],
    batch: usize,
    rng: &mut Rng,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let mut mlp = build_mlp(specs, batch)?;
    let out = specs[specs.len() - 1].output;
    let c = mlp.graph.input("c", out, 1);
    let proj = mlp.graph.matmul(mlp.output, c)?;
    let squashed = mlp.graph.tanh(proj)?;
    let loss = mlp.graph.sum(squashed)?;

    let mut attempt = 0;
    loop {
        let x = rng.normals(batch * specs[0].input);
        let cv = rng.normals(out);
        let params: Vec<f64> = (0..param_count(specs)).map(|_| 0.7 * rng.normal()).collect();
        let inputs = [("x", x.as_slice()), ("c", cv.as_slice())];
        let kink = mlp.graph.evaluate(&inputs, &params)?.min_kink_distance(&mlp.graph);
        attempt += 1;
        if kink >= KINK_MARGIN || attempt == MAX_REDRAWS {
            return Ok(mlp.graph.grad_check(&inputs, &params, loss, step, tolerance)?);
        }
    }
}

/// Smallest accepted distance of a leaky-relu input to its kink in [`mlp_grad_check`].
pub const KINK_MARGIN: f64 = 1e-3;
const MAX_REDRAWS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            config,
        }
    }
}

/// One bias-corrected Adam descent step. Nothing is modified if any
/// gradient entry is non-finite.
pub fn adam_step(params: &mut ParamVector, grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != grads.len() {
        return Err(NetsError::Length {
            params: params.len(),
            grads: grads.len(),
            state: state.m.len(),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(NetsError::NonFiniteGradient {
            block: params.layout.describe(i),
            value: grads[i],
        });
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (((p, &g), m), v) in params
        .values
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        if m_hat != 0.0 {
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
