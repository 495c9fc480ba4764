//! Feed-forward MLP with a flattened parameter vector, forward evaluation,
//! and per-sample weight Jacobians via back-propagation.
//!
//! Flattened layout, fixed so block partitions are reproducible: layers in
//! order; within layer `k` the weight matrix `W_k` (shape `out x in`,
//! row-major) followed by the bias vector `b_k`. Hidden activations are
//! `tanh` (continuously differentiable everywhere, as the construction
//! requires); the output head is identity for regression or a sigmoid
//! squashing for binary classification.

use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::math;
use crate::objective::LossKind;

/// Layer widths, input first, single output last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    sizes: Vec<usize>,
}

impl Topology {
    pub fn new(sizes: Vec<usize>) -> Result<Topology> {
        if sizes.len() < 2 {
            return Err(Error::InvalidParameter {
                what: "topology needs at least an input and an output layer",
            });
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter {
                what: "all layer sizes must be positive",
            });
        }
        if *sizes.last().unwrap() != 1 {
            return Err(Error::InvalidParameter {
                what: "output layer must have size 1",
            });
        }
        Ok(Topology { sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    /// Number of weight layers (connections between consecutive layers).
    pub fn weight_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Total parameter count: sum over layers of (fan_in + 1) * fan_out.
    pub fn param_count(&self) -> usize {
        self.sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    /// (weight offset, bias offset, fan_in, fan_out) of weight layer `k`.
    pub(crate) fn layer_span(&self, k: usize) -> (usize, usize, usize, usize) {
        let mut off = 0;
        for j in 0..k {
            off += (self.sizes[j] + 1) * self.sizes[j + 1];
        }
        let fan_in = self.sizes[k];
        let fan_out = self.sizes[k + 1];
        (off, off + fan_in * fan_out, fan_in, fan_out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputHead {
    Identity,
    Sigmoid,
}

/// Which network output a Jacobian is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianWrt {
    /// The squashed output `f`.
    FullOutput,
    /// The last pre-squash activation `f^L` (equals `f` for identity heads).
    PreSquash,
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    topology: Topology,
    head: OutputHead,
    w: Vec<f64>,
}

impl MlpModel {
    pub fn new(topology: Topology, head: OutputHead, w: Vec<f64>) -> Result<MlpModel> {
        if w.len() != topology.param_count() {
            return Err(Error::ShapeMismatch {
                what: "weight vector",
                expected: topology.param_count(),
                actual: w.len(),
            });
        }
        Ok(MlpModel { topology, head, w })
    }

    pub fn zeroed(topology: Topology, head: OutputHead) -> MlpModel {
        let q = topology.param_count();
        MlpModel {
            topology,
            head,
            w: vec![0.0; q],
        }
    }

    pub fn glorot(topology: Topology, head: OutputHead, seed: u64) -> MlpModel {
        let w = glorot_init(&topology, seed);
        MlpModel { topology, head, w }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn head(&self) -> OutputHead {
        self.head
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn param_count(&self) -> usize {
        self.w.len()
    }

    pub fn set_weights(&mut self, w: Vec<f64>) -> Result<()> {
        if w.len() != self.topology.param_count() {
            return Err(Error::ShapeMismatch {
                what: "weight vector",
                expected: self.topology.param_count(),
                actual: w.len(),
            });
        }
        self.w = w;
        Ok(())
    }

    /// Same topology and head, different weights.
    pub fn with_weights(&self, w: Vec<f64>) -> Result<MlpModel> {
        MlpModel::new(self.topology.clone(), self.head, w)
    }

    /// Unpacks the flattened vector into per-layer `(weights, biases)`.
    pub fn layer_matrices(&self) -> Vec<(Mat, Vec<f64>)> {
        let mut out = Vec::with_capacity(self.topology.weight_layers());
        for k in 0..self.topology.weight_layers() {
            let (w_off, b_off, fan_in, fan_out) = self.topology.layer_span(k);
            let w = Mat::from_vec(fan_out, fan_in, self.w[w_off..b_off].to_vec()).unwrap();
            let b = self.w[b_off..b_off + fan_out].to_vec();
            out.push((w, b));
        }
        out
    }

    /// Packs per-layer `(weights, biases)` back into a flattened vector.
    pub fn from_layer_matrices(
        topology: Topology,
        head: OutputHead,
        layers: &[(Mat, Vec<f64>)],
    ) -> Result<MlpModel> {
        if layers.len() != topology.weight_layers() {
            return Err(Error::ShapeMismatch {
                what: "layer list",
                expected: topology.weight_layers(),
                actual: layers.len(),
            });
        }
        let mut w = Vec::with_capacity(topology.param_count());
        for (k, (wk, bk)) in layers.iter().enumerate() {
            let (_, _, fan_in, fan_out) = topology.layer_span(k);
            if wk.rows() != fan_out || wk.cols() != fan_in || bk.len() != fan_out {
                return Err(Error::ShapeMismatch {
                    what: "layer matrix",
                    expected: fan_out * fan_in,
                    actual: wk.rows() * wk.cols(),
                });
            }
            w.extend_from_slice(wk.data());
            w.extend_from_slice(bk);
        }
        MlpModel::new(topology, head, w)
    }

    /// Evaluates the network. Returns `(output, pre_squash)`; for identity
    /// heads the two coincide.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.topology.input_dim() {
            return Err(Error::ShapeMismatch {
                what: "input vector",
                expected: self.topology.input_dim(),
                actual: x.len(),
            });
        }
        let mut trace = ForwardTrace::new(&self.topology);
        self.forward_into(x, &mut trace);
        Ok((self.apply_head(trace.pre_squash), trace.pre_squash))
    }

    fn apply_head(&self, pre: f64) -> f64 {
        match self.head {
            OutputHead::Identity => pre,
            OutputHead::Sigmoid => math::sigmoid(pre),
        }
    }

    /// Forward pass storing every layer input; used by back-propagation.
    fn forward_into(&self, x: &[f64], trace: &mut ForwardTrace) {
        trace.acts[0].copy_from_slice(x);
        let kmax = self.topology.weight_layers();
        for k in 0..kmax {
            let (w_off, b_off, fan_in, fan_out) = self.topology.layer_span(k);
            let last = k == kmax - 1;
            for r in 0..fan_out {
                let row = &self.w[w_off + r * fan_in..w_off + (r + 1) * fan_in];
                let a = dot(row, &trace.acts[k]) + self.w[b_off + r];
                if last {
                    trace.pre_squash = a;
                } else {
                    trace.acts[k + 1][r] = math::tanh(a);
                }
            }
        }
    }

    /// Back-propagates a scalar seed at the pre-squash output into a
    /// gradient over all parameters: `out += seed * d(pre_squash)/dw`.
    fn backprop_into(&self, trace: &ForwardTrace, seed: f64, out: &mut [f64]) {
        let kmax = self.topology.weight_layers();
        let mut delta = vec![seed];
        for k in (0..kmax).rev() {
            let (w_off, b_off, fan_in, fan_out) = self.topology.layer_span(k);
            let acts = &trace.acts[k];
            for r in 0..fan_out {
                let dr = delta[r];
                let row = &mut out[w_off + r * fan_in..w_off + (r + 1) * fan_in];
                for c in 0..fan_in {
                    row[c] += dr * acts[c];
                }
                out[b_off + r] += dr;
            }
            if k > 0 {
                let mut prev = vec![0.0; fan_in];
                for r in 0..fan_out {
                    let dr = delta[r];
                    let row = &self.w[w_off + r * fan_in..w_off + (r + 1) * fan_in];
                    for c in 0..fan_in {
                        prev[c] += row[c] * dr;
                    }
                }
                // tanh'(a) = 1 - tanh(a)^2 and acts[k] holds tanh(a)
                for c in 0..fan_in {
                    prev[c] *= 1.0 - acts[c] * acts[c];
                }
                delta = prev;
            }
        }
    }
}

struct ForwardTrace {
    /// `acts[k]` is the input to weight layer `k` (so `acts[0]` is `x`).
    acts: Vec<Vec<f64>>,
    pre_squash: f64,
}

impl ForwardTrace {
    fn new(topology: &Topology) -> ForwardTrace {
        let kmax = topology.weight_layers();
        let acts = (0..kmax).map(|k| vec![0.0; topology.layer_sizes()[k]]).collect();
        ForwardTrace {
            acts,
            pre_squash: 0.0,
        }
    }
}

/// One mini-batch: dataset indices, an `L x d` input block, and targets.
#[derive(Debug, Clone)]
pub struct MiniBatch {
    pub indices: Vec<usize>,
    pub inputs: Mat,
    pub targets: Vec<f64>,
}

impl MiniBatch {
    pub fn new(indices: Vec<usize>, inputs: Mat, targets: Vec<f64>) -> Result<MiniBatch> {
        if indices.is_empty() {
            return Err(Error::InvalidParameter {
                what: "mini-batch must contain at least one sample",
            });
        }
        if inputs.rows() != targets.len() || inputs.rows() != indices.len() {
            return Err(Error::ShapeMismatch {
                what: "mini-batch rows",
                expected: indices.len(),
                actual: inputs.rows(),
            });
        }
        Ok(MiniBatch {
            indices,
            inputs,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Per-sample weight Jacobian: row `i` holds the gradient of the chosen
/// output for sample `i` with respect to every parameter. One
/// back-propagation sweep per sample, linear in the parameter count.
pub fn weight_jacobian(model: &MlpModel, batch: &MiniBatch, wrt: JacobianWrt) -> Result<Mat> {
    jacobian_with_outputs(model, batch, wrt).map(|(_, jac)| jac)
}

/// Jacobian plus the matching per-sample outputs (the squashed output for
/// `FullOutput`, the pre-squash value for `PreSquash`), sharing one forward
/// sweep per sample.
pub(crate) fn jacobian_with_outputs(
    model: &MlpModel,
    batch: &MiniBatch,
    wrt: JacobianWrt,
) -> Result<(Vec<f64>, Mat)> {
    if batch.inputs.cols() != model.topology.input_dim() {
        return Err(Error::ShapeMismatch {
            what: "batch input width",
            expected: model.topology.input_dim(),
            actual: batch.inputs.cols(),
        });
    }
    let q = model.param_count();
    let mut jac = Mat::zeros(batch.len(), q);
    let mut outputs = vec![0.0; batch.len()];
    let mut trace = ForwardTrace::new(&model.topology);
    for i in 0..batch.len() {
        model.forward_into(batch.inputs.row(i), &mut trace);
        let seed = match (wrt, model.head) {
            (JacobianWrt::PreSquash, _) | (JacobianWrt::FullOutput, OutputHead::Identity) => 1.0,
            (JacobianWrt::FullOutput, OutputHead::Sigmoid) => {
                let s = math::sigmoid(trace.pre_squash);
                s * (1.0 - s)
            }
        };
        outputs[i] = match wrt {
            JacobianWrt::PreSquash => trace.pre_squash,
            JacobianWrt::FullOutput => model.apply_head(trace.pre_squash),
        };
        model.backprop_into(&trace, seed, jac.row_mut(i));
    }
    Ok((outputs, jac))
}

/// Output and parameter gradient of a single input.
pub fn output_and_gradient(
    model: &MlpModel,
    x: &[f64],
    wrt: JacobianWrt,
) -> Result<(f64, Vec<f64>)> {
    if x.len() != model.topology.input_dim() {
        return Err(Error::ShapeMismatch {
            what: "input vector",
            expected: model.topology.input_dim(),
            actual: x.len(),
        });
    }
    let mut trace = ForwardTrace::new(&model.topology);
    model.forward_into(x, &mut trace);
    let seed = match (wrt, model.head) {
        (JacobianWrt::PreSquash, _) | (JacobianWrt::FullOutput, OutputHead::Identity) => 1.0,
        (JacobianWrt::FullOutput, OutputHead::Sigmoid) => {
            let s = math::sigmoid(trace.pre_squash);
            s * (1.0 - s)
        }
    };
    let out = match wrt {
        JacobianWrt::PreSquash => trace.pre_squash,
        JacobianWrt::FullOutput => model.apply_head(trace.pre_squash),
    };
    let mut grad = vec![0.0; model.param_count()];
    model.backprop_into(&trace, seed, &mut grad);
    Ok((out, grad))
}

/// Mini-batch gradient of the loss: `(1/L) sum_i grad_w l(y_i, f(w; x_i))`.
pub fn batch_gradient(model: &MlpModel, batch: &MiniBatch, loss: LossKind) -> Result<Vec<f64>> {
    loss.check_head(model.head)?;
    if batch.inputs.cols() != model.topology.input_dim() {
        return Err(Error::ShapeMismatch {
            what: "batch input width",
            expected: model.topology.input_dim(),
            actual: batch.inputs.cols(),
        });
    }
    let q = model.param_count();
    let mut grad = vec![0.0; q];
    let mut trace = ForwardTrace::new(&model.topology);
    let inv_l = 1.0 / batch.len() as f64;
    for i in 0..batch.len() {
        model.forward_into(batch.inputs.row(i), &mut trace);
        let pre = trace.pre_squash;
        let y = batch.targets[i];
        // d l / d pre_squash, folding the head into the seed
        let seed = match loss {
            LossKind::Squared => 2.0 * (pre - y),
            LossKind::CrossEntropy => math::sigmoid(pre) - y,
        };
        if !seed.is_finite() {
            return Err(Error::NonFinite {
                what: "loss derivative",
                sample: batch.indices[i],
            });
        }
        model.backprop_into(&trace, seed * inv_l, &mut grad);
    }
    if let Some(pos) = grad.iter().position(|g| !g.is_finite()) {
        let _ = pos;
        return Err(Error::NonFinite {
            what: "batch gradient",
            sample: batch.indices[0],
        });
    }
    Ok(grad)
}

/// Normalized uniform initialization: layer weights drawn uniformly in
/// `+-sqrt(6 / (fan_in + fan_out))`, biases zero. Deterministic per seed.
pub fn glorot_init(topology: &Topology, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut w = vec![0.0; topology.param_count()];
    for k in 0..topology.weight_layers() {
        let (w_off, b_off, fan_in, fan_out) = topology.layer_span(k);
        let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
        for v in &mut w[w_off..b_off] {
            *v = rng.gen_range(-bound..bound);
        }
        // biases stay zero
    }
    w
}

/// Neuron-wise weight groups: for every non-output neuron, the set of
/// weights leaving it (one column of the next layer's weight matrix); each
/// layer's bias vector forms its own group. The groups partition the
/// flattened parameter vector.
pub fn neuron_groups(topology: &Topology) -> Vec<Vec<usize>> {
    let mut groups = Vec::new();
    for k in 0..topology.weight_layers() {
        let (w_off, b_off, fan_in, fan_out) = topology.layer_span(k);
        for p in 0..fan_in {
            groups.push((0..fan_out).map(|r| w_off + r * fan_in + p).collect());
        }
        groups.push((0..fan_out).map(|r| b_off + r).collect());
    }
    groups
}
