//! Reverse-mode automatic differentiation over dense 2-D arrays.
//!
//! A [`Graph`] is built once with fixed shapes and then evaluated any number
//! of times. Parameters live in one flat vector: every `param` node owns a
//! contiguous block of it, in registration order, and gradients come back in
//! the same layout. Inputs are bound by name at evaluation time.
//!
//! Evaluation never mutates the graph; all forward values live in the returned
//! [`Evaluation`], so one graph may be evaluated from several threads.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::tensor::{gemm, Tensor};

pub type NodeId = usize;

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("input `{0}` is not bound")]
    UnboundInput(String),
    #[error("input `{name}` expects {expected} values, got {found}")]
    InputShape {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("parameter vector has {found} entries, graph expects {expected}")]
    ParamLength { expected: usize, found: usize },
    #[error("log of non-positive value {value} at node {node} (missing clamp?)")]
    LogDomain { node: NodeId, value: f64 },
    #[error("no forward values for this graph; evaluate it before calling backward")]
    NoForward,
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("no output named `{0}`")]
    UnknownOutput(String),
    #[error("seed has {found} entries, node {node} has {expected}")]
    SeedShape {
        node: NodeId,
        expected: usize,
        found: usize,
    },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// The closed catalogue of differentiable operations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpKind {
    /// `[m,k] x [k,n] -> [m,n]`
    MatMul,
    /// `[m,n] + [1,n]` broadcast over rows.
    AddBias,
    Tanh,
    LeakyRelu { slope: f64 },
    Sigmoid,
    /// Natural log. With `clamp = Some((lo, hi))` the input is clamped first
    /// and the derivative is zero where clamping was active.
    Log { clamp: Option<(f64, f64)> },
    /// Mean of all entries, `[1,1]` result.
    Mean,
    /// Sum of all entries, `[1,1]` result.
    Sum,
    /// `scale * x + shift`
    ScalarAffine { scale: f64, shift: f64 },
    /// Per-column normalization with the current batch statistics, no affine.
    BatchNorm { eps: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Input { name: String },
    Param { name: String, offset: usize },
    Op { op: OpKind, args: Vec<NodeId> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub rows: usize,
    pub cols: usize,
}

impl Node {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A static computation graph. Node ids are indices into insertion order,
/// which is also a valid topological order.
#[derive(Debug)]
pub struct Graph {
    id: u64,
    nodes: Vec<Node>,
    param_len: usize,
    outputs: Vec<(String, NodeId)>,
}

impl Clone for Graph {
    fn clone(&self) -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: self.nodes.clone(),
            param_len: self.param_len,
            outputs: self.outputs.clone(),
        }
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            param_len: 0,
            outputs: Vec::new(),
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id).ok_or(AutodiffError::UnknownNode(id))
    }

    /// Total length of the flat parameter vector.
    pub fn param_len(&self) -> usize {
        self.param_len
    }

    /// `(name, offset, len)` for every parameter block in layout order.
    pub fn param_blocks(&self) -> Vec<(String, usize, usize)> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Param { name, offset } => Some((name.clone(), *offset, n.len())),
                _ => None,
            })
            .collect()
    }

    pub fn input_names(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Input { name } => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }

    fn push(&mut self, kind: NodeKind, rows: usize, cols: usize) -> NodeId {
        self.nodes.push(Node { kind, rows, cols });
        self.nodes.len() - 1
    }

    fn shape(&self, id: NodeId) -> Result<(usize, usize)> {
        self.node(id).map(|n| (n.rows, n.cols))
    }

    pub fn input(&mut self, name: &str, rows: usize, cols: usize) -> NodeId {
        self.push(
            NodeKind::Input {
                name: name.to_string(),
            },
            rows,
            cols,
        )
    }

    pub fn param(&mut self, name: &str, rows: usize, cols: usize) -> NodeId {
        let offset = self.param_len;
        self.param_len += rows * cols;
        self.push(
            NodeKind::Param {
                name: name.to_string(),
                offset,
            },
            rows,
            cols,
        )
    }

    fn unary(&mut self, op: OpKind, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.shape(x)?;
        Ok(self.push(NodeKind::Op { op, args: vec![x] }, r, c))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.shape(a)?;
        let (kb, n) = self.shape(b)?;
        if k != kb {
            return Err(AutodiffError::Shape {
                op: "matmul",
                detail: format!("[{m},{k}] x [{kb},{n}]"),
            });
        }
        Ok(self.push(
            NodeKind::Op {
                op: OpKind::MatMul,
                args: vec![a, b],
            },
            m,
            n,
        ))
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = self.shape(x)?;
        let (br, bc) = self.shape(bias)?;
        if br != 1 || bc != n {
            return Err(AutodiffError::Shape {
                op: "add_bias",
                detail: format!("[{m},{n}] + [{br},{bc}]"),
            });
        }
        Ok(self.push(
            NodeKind::Op {
                op: OpKind::AddBias,
                args: vec![x, bias],
            },
            m,
            n,
        ))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(OpKind::Tanh, x)
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> Result<NodeId> {
        self.unary(OpKind::LeakyRelu { slope }, x)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(OpKind::Sigmoid, x)
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(OpKind::Log { clamp: None }, x)
    }

    pub fn log_clamped(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.unary(
            OpKind::Log {
                clamp: Some((lo, hi)),
            },
            x,
        )
    }

    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> Result<NodeId> {
        self.unary(OpKind::ScalarAffine { scale, shift }, x)
    }

    pub fn batchnorm(&mut self, x: NodeId, eps: f64) -> Result<NodeId> {
        self.unary(OpKind::BatchNorm { eps }, x)
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.shape(x)?;
        Ok(self.push(
            NodeKind::Op {
                op: OpKind::Mean,
                args: vec![x],
            },
            1,
            1,
        ))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.shape(x)?;
        Ok(self.push(
            NodeKind::Op {
                op: OpKind::Sum,
                args: vec![x],
            },
            1,
            1,
        ))
    }

    pub fn mark_output(&mut self, name: &str, node: NodeId) -> Result<()> {
        self.node(node)?;
        self.outputs.retain(|(n, _)| n != name);
        self.outputs.push((name.to_string(), node));
        Ok(())
    }

    pub fn output_id(&self, name: &str) -> Result<NodeId> {
        self.outputs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
            .ok_or_else(|| AutodiffError::UnknownOutput(name.to_string()))
    }

    /// Forward pass. `inputs` binds every input node by name; extra bindings
    /// are ignored.
    pub fn evaluate(&self, inputs: &[(&str, &[f64])], params: &[f64]) -> Result<Evaluation> {
        if params.len() != self.param_len {
            return Err(AutodiffError::ParamLength {
                expected: self.param_len,
                found: params.len(),
            });
        }
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        let mut bn_inv_std: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            let v = match &node.kind {
                NodeKind::Input { name } => {
                    let data = inputs
                        .iter()
                        .find(|(n, _)| n == name)
                        .map(|(_, d)| *d)
                        .ok_or_else(|| AutodiffError::UnboundInput(name.clone()))?;
                    if data.len() != node.len() {
                        return Err(AutodiffError::InputShape {
                            name: name.clone(),
                            expected: node.len(),
                            found: data.len(),
                        });
                    }
                    data.to_vec()
                }
                NodeKind::Param { offset, .. } => params[*offset..*offset + node.len()].to_vec(),
                NodeKind::Op { op, args } => {
                    forward_op(id, *op, args, &self.nodes, &values, &mut bn_inv_std[id])?
                }
            };
            values.push(v);
        }
        Ok(Evaluation {
            graph_id: self.id,
            values,
            bn_inv_std,
        })
    }

    /// Gradient of `seed * sum(node)` with respect to every parameter.
    pub fn backward(&self, eval: &Evaluation, node: NodeId, seed: f64) -> Result<Gradients> {
        let n = self.node(node)?.len();
        self.backward_with(eval, node, &vec![seed; n], false)
    }

    /// Vector-Jacobian product: propagates `seed` (one entry per element of
    /// `node`) back to parameters and, if `input_grads`, to input nodes.
    pub fn backward_with(
        &self,
        eval: &Evaluation,
        node: NodeId,
        seed: &[f64],
        input_grads: bool,
    ) -> Result<Gradients> {
        if eval.graph_id != self.id || eval.values.len() != self.nodes.len() {
            return Err(AutodiffError::NoForward);
        }
        let target = self.node(node)?;
        if seed.len() != target.len() {
            return Err(AutodiffError::SeedShape {
                node,
                expected: target.len(),
                found: seed.len(),
            });
        }

        // Only nodes that lead to a parameter (or an input, when asked) need adjoints.
        let mut needs = vec![false; self.nodes.len()];
        for (id, nd) in self.nodes.iter().enumerate() {
            needs[id] = match &nd.kind {
                NodeKind::Param { .. } => true,
                NodeKind::Input { .. } => input_grads,
                NodeKind::Op { args, .. } => args.iter().any(|&a| needs[a]),
            };
        }

        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[node] = Some(seed.to_vec());
        let mut params = vec![0.0; self.param_len];
        let mut inputs = Vec::new();

        for id in (0..=node).rev() {
            let Some(g) = adj[id].take() else { continue };
            let nd = &self.nodes[id];
            match &nd.kind {
                NodeKind::Param { offset, .. } => {
                    for (p, gi) in params[*offset..*offset + nd.len()].iter_mut().zip(&g) {
                        *p += gi;
                    }
                }
                NodeKind::Input { name } => {
                    if input_grads {
                        inputs.push((name.clone(), g));
                    }
                }
                NodeKind::Op { op, args } => {
                    backward_op(id, *op, args, &self.nodes, eval, &g, &needs, &mut adj);
                }
            }
        }
        inputs.reverse();
        Ok(Gradients { params, inputs })
    }

    /// Central-difference check of `d output / d params` at `params`.
    ///
    /// `output` must be a `[1,1]` node. The relative error per coordinate is
    /// `|ad - fd| / max(1, |ad|, |fd|)`.
    pub fn grad_check(
        &self,
        inputs: &[(&str, &[f64])],
        params: &[f64],
        output: NodeId,
        step: f64,
        tolerance: f64,
    ) -> Result<GradCheckReport> {
        let eval = self.evaluate(inputs, params)?;
        let ad = self.backward(&eval, output, 1.0)?.params;
        let mut probe = params.to_vec();
        let mut max_rel = 0.0f64;
        let mut worst = None;
        for i in 0..params.len() {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = self.evaluate(inputs, &probe)?.scalar(output);
            probe[i] = orig - step;
            let down = self.evaluate(inputs, &probe)?.scalar(output);
            probe[i] = orig;
            let fd = (up - down) / (2.0 * step);
            let rel = (ad[i] - fd).abs() / 1f64.max(ad[i].abs()).max(fd.abs());
            if rel > max_rel || rel.is_nan() {
                max_rel = if rel.is_nan() { f64::INFINITY } else { rel };
                worst = Some(i);
            }
        }
        Ok(GradCheckReport {
            max_rel_error: max_rel,
            worst_param: worst,
            checked: params.len(),
            pass: max_rel < tolerance,
        })
    }
}

/// Forward values of one evaluation; the input to [`Graph::backward`].
#[derive(Clone, Debug)]
pub struct Evaluation {
    graph_id: u64,
    values: Vec<Vec<f64>>,
    bn_inv_std: Vec<Option<Vec<f64>>>,
}

impl Evaluation {
    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.values[id]
    }

    /// First entry of a node's value; meant for `[1,1]` nodes.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.values[id][0]
    }

    pub fn output<'a>(&'a self, graph: &Graph, name: &str) -> Result<&'a [f64]> {
        Ok(&self.values[graph.output_id(name)?])
    }

    /// Smallest `|x|` over inputs of leaky-relu nodes. Finite-difference
    /// probes closer than their step to a kink are not meaningful.
    pub fn min_kink_distance(&self, graph: &Graph) -> f64 {
        graph
            .nodes
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Op {
                    op: OpKind::LeakyRelu { .. },
                    args,
                } => Some(args[0]),
                _ => None,
            })
            .flat_map(|a| self.values[a].iter().map(|x| x.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    /// Same layout as the flat parameter vector.
    pub params: Vec<f64>,
    /// `(input name, gradient)` for inputs, when requested.
    pub inputs: Vec<(String, Vec<f64>)>,
}

impl Gradients {
    pub fn input(&self, name: &str) -> Option<&[f64]> {
        self.inputs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, g)| g.as_slice())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: Option<usize>,
    pub checked: usize,
    pub pass: bool,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn forward_op(
    id: NodeId,
    op: OpKind,
    args: &[NodeId],
    nodes: &[Node],
    values: &[Vec<f64>],
    bn_cache: &mut Option<Vec<f64>>,
) -> Result<Vec<f64>> {
    let x = &values[args[0]];
    let out = match op {
        OpKind::MatMul => {
            let a = &nodes[args[0]];
            let b = &nodes[args[1]];
            let mut c = vec![0.0; a.rows * b.cols];
            gemm(
                x,
                a.rows,
                a.cols,
                false,
                &values[args[1]],
                b.rows,
                b.cols,
                false,
                &mut c,
                0.0,
            );
            c
        }
        OpKind::AddBias => {
            let bias = &values[args[1]];
            let cols = bias.len();
            let mut y = x.clone();
            for row in y.chunks_mut(cols) {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v += b;
                }
            }
            y
        }
        OpKind::Tanh => x.iter().map(|v| v.tanh()).collect(),
        OpKind::LeakyRelu { slope } => x
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect(),
        OpKind::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
        OpKind::Log { clamp } => {
            let mut y = Vec::with_capacity(x.len());
            for &v in x {
                let v = match clamp {
                    Some((lo, hi)) => v.clamp(lo, hi),
                    None => v,
                };
                if v <= 0.0 || v.is_nan() {
                    return Err(AutodiffError::LogDomain { node: id, value: v });
                }
                y.push(v.ln());
            }
            y
        }
        OpKind::Mean => vec![x.iter().sum::<f64>() / x.len() as f64],
        OpKind::Sum => vec![x.iter().sum::<f64>()],
        OpKind::ScalarAffine { scale, shift } => x.iter().map(|v| scale * v + shift).collect(),
        OpKind::BatchNorm { eps } => {
            let node = &nodes[args[0]];
            let (m, n) = (node.rows, node.cols);
            let mut mean = vec![0.0; n];
            for row in x.chunks(n) {
                for (mu, v) in mean.iter_mut().zip(row) {
                    *mu += v;
                }
            }
            mean.iter_mut().for_each(|mu| *mu /= m as f64);
            let mut var = vec![0.0; n];
            for row in x.chunks(n) {
                for ((s, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - mu) * (v - mu);
                }
            }
            let inv: Vec<f64> = var
                .iter()
                .map(|s| 1.0 / (s / m as f64 + eps).sqrt())
                .collect();
            let mut y = x.clone();
            for row in y.chunks_mut(n) {
                for ((v, mu), is) in row.iter_mut().zip(&mean).zip(&inv) {
                    *v = (*v - mu) * is;
                }
            }
            *bn_cache = Some(inv);
            y
        }
    };
    Ok(out)
}

fn accumulate(adj: &mut [Option<Vec<f64>>], id: NodeId, g: Vec<f64>) {
    match &mut adj[id] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

#[allow(clippy::too_many_arguments)]
fn backward_op(
    id: NodeId,
    op: OpKind,
    args: &[NodeId],
    nodes: &[Node],
    eval: &Evaluation,
    g: &[f64],
    needs: &[bool],
    adj: &mut [Option<Vec<f64>>],
) {
    let x = &eval.values[args[0]];
    let y = &eval.values[id];
    match op {
        OpKind::MatMul => {
            let a = &nodes[args[0]];
            let b = &nodes[args[1]];
            let (m, k, n) = (a.rows, a.cols, b.cols);
            if needs[args[0]] {
                // dA = dC * B^T
                let mut da = vec![0.0; m * k];
                gemm(g, m, n, false, &eval.values[args[1]], k, n, true, &mut da, 0.0);
                accumulate(adj, args[0], da);
            }
            if needs[args[1]] {
                // dB = A^T * dC
                let mut db = vec![0.0; k * n];
                gemm(x, m, k, true, g, m, n, false, &mut db, 0.0);
                accumulate(adj, args[1], db);
            }
        }
        OpKind::AddBias => {
            let n = nodes[args[1]].cols;
            if needs[args[0]] {
                accumulate(adj, args[0], g.to_vec());
            }
            if needs[args[1]] {
                let mut db = vec![0.0; n];
                for row in g.chunks(n) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                accumulate(adj, args[1], db);
            }
        }
        _ if !needs[args[0]] => {}
        OpKind::Tanh => {
            let dx = g.iter().zip(y).map(|(gi, yi)| gi * (1.0 - yi * yi)).collect();
            accumulate(adj, args[0], dx);
        }
        OpKind::LeakyRelu { slope } => {
            let dx = g
                .iter()
                .zip(x)
                .map(|(gi, &xi)| if xi > 0.0 { *gi } else { slope * gi })
                .collect();
            accumulate(adj, args[0], dx);
        }
        OpKind::Sigmoid => {
            let dx = g.iter().zip(y).map(|(gi, yi)| gi * yi * (1.0 - yi)).collect();
            accumulate(adj, args[0], dx);
        }
        OpKind::Log { clamp } => {
            let dx = g
                .iter()
                .zip(x)
                .map(|(gi, &xi)| match clamp {
                    Some((lo, hi)) if xi < lo || xi > hi => 0.0,
                    _ => gi / xi,
                })
                .collect();
            accumulate(adj, args[0], dx);
        }
        OpKind::Mean => {
            let len = x.len();
            accumulate(adj, args[0], vec![g[0] / len as f64; len]);
        }
        OpKind::Sum => accumulate(adj, args[0], vec![g[0]; x.len()]),
        OpKind::ScalarAffine { scale, .. } => {
            accumulate(adj, args[0], g.iter().map(|gi| scale * gi).collect());
        }
        OpKind::BatchNorm { .. } => {
            let node = &nodes[args[0]];
            let (m, n) = (node.rows, node.cols);
            let inv = eval.bn_inv_std[id]
                .as_ref()
                .expect("batchnorm forward cache");
            let mut mean_g = vec![0.0; n];
            let mut mean_gy = vec![0.0; n];
            for (grow, yrow) in g.chunks(n).zip(y.chunks(n)) {
                for j in 0..n {
                    mean_g[j] += grow[j];
                    mean_gy[j] += grow[j] * yrow[j];
                }
            }
            mean_g.iter_mut().for_each(|v| *v /= m as f64);
            mean_gy.iter_mut().for_each(|v| *v /= m as f64);
            let mut dx = vec![0.0; m * n];
            for ((drow, grow), yrow) in dx.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)) {
                for j in 0..n {
                    drow[j] = inv[j] * (grow[j] - mean_g[j] - yrow[j] * mean_gy[j]);
                }
            }
            accumulate(adj, args[0], dx);
        }
    }
}

/// Convenience for tests and small callers: wraps a tensor as an input binding.
pub fn bind<'a>(name: &'a str, t: &'a Tensor) -> (&'a str, &'a [f64]) {
    (name, t.data.as_slice())
}
