//! Minimal dense feedforward network engine: layer-chain networks with
//! reverse-mode gradients, deterministic seeded initialization, and
//! explicit batch-norm running-stat updates.
//!
//! Networks are plain chains of layers; a forward pass is pure and
//! returns a [`Trace`] holding everything backward needs. Running
//! statistics are only mutated by an explicit call to
//! [`Network::update_running_stats`], which keeps eval-mode forwards
//! trivially side-effect free.

mod adam;
mod grad_check;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use grad_check::grad_check;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LayerKind {
    Affine,
    Relu,
    LeakyRelu { slope: f64 },
    Sigmoid,
    Tanh,
    BatchNorm,
}

impl LayerKind {
    pub fn is_activation(&self) -> bool {
        matches!(
            self,
            LayerKind::Relu | LayerKind::LeakyRelu { .. } | LayerKind::Sigmoid | LayerKind::Tanh
        )
    }

    fn is_relu_family(&self) -> bool {
        matches!(self, LayerKind::Relu | LayerKind::LeakyRelu { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LayerSpec {
    pub fn affine(in_dim: usize, out_dim: usize) -> Self {
        LayerSpec { kind: LayerKind::Affine, in_dim, out_dim }
    }

    pub fn relu(dim: usize) -> Self {
        LayerSpec { kind: LayerKind::Relu, in_dim: dim, out_dim: dim }
    }

    pub fn leaky_relu(dim: usize, slope: f64) -> Self {
        LayerSpec { kind: LayerKind::LeakyRelu { slope }, in_dim: dim, out_dim: dim }
    }

    pub fn sigmoid(dim: usize) -> Self {
        LayerSpec { kind: LayerKind::Sigmoid, in_dim: dim, out_dim: dim }
    }

    pub fn tanh(dim: usize) -> Self {
        LayerSpec { kind: LayerKind::Tanh, in_dim: dim, out_dim: dim }
    }

    pub fn batch_norm(dim: usize) -> Self {
        LayerSpec { kind: LayerKind::BatchNorm, in_dim: dim, out_dim: dim }
    }

    fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Config("layer dims must be positive".into()));
        }
        match self.kind {
            LayerKind::Affine => {}
            LayerKind::LeakyRelu { slope } => {
                if !(slope > 0.0 && slope < 1.0) {
                    return Err(Error::Config(format!(
                        "leaky-relu slope must be in (0,1), got {slope}"
                    )));
                }
                if self.in_dim != self.out_dim {
                    return Err(Error::Config("activation layer needs in_dim == out_dim".into()));
                }
            }
            _ => {
                if self.in_dim != self.out_dim {
                    return Err(Error::Config(format!(
                        "{:?} layer needs in_dim == out_dim, got {}->{}",
                        self.kind, self.in_dim, self.out_dim
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parameters attached to a layer. Activations carry none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerParams {
    None,
    Affine {
        /// out_dim x in_dim, row-major.
        weight: Matrix,
        bias: Vec<f64>,
    },
    BatchNorm {
        scale: Vec<f64>,
        shift: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    pub params: LayerParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-batch-norm-layer statistics captured during a train-mode forward.
#[derive(Debug, Clone)]
pub struct BnBatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Activations recorded by [`Network::forward`]; everything backward needs.
pub struct Trace {
    mode: Mode,
    /// layer_io[i] is the input of layer i; layer_io.last() is the output.
    layer_io: Vec<Matrix>,
    bn_stats: Vec<Option<BnBatchStats>>,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        self.layer_io.last().expect("trace has at least the input")
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Gradients for every parameter plus the input batch.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    pub input: Matrix,
}

#[derive(Debug, Clone)]
pub enum LayerGrads {
    None,
    Affine { weight: Matrix, bias: Vec<f64> },
    BatchNorm { scale: Vec<f64>, shift: Vec<f64> },
}

impl Gradients {
    /// Elementwise sum of two gradient sets for the same network.
    pub fn add(mut self, other: &Gradients) -> Gradients {
        assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (LayerGrads::None, LayerGrads::None) => {}
                (
                    LayerGrads::Affine { weight: wa, bias: ba },
                    LayerGrads::Affine { weight: wb, bias: bb },
                ) => {
                    *wa = wa.add(wb);
                    for (x, y) in ba.iter_mut().zip(bb) {
                        *x += y;
                    }
                }
                (
                    LayerGrads::BatchNorm { scale: sa, shift: ha },
                    LayerGrads::BatchNorm { scale: sb, shift: hb },
                ) => {
                    for (x, y) in sa.iter_mut().zip(sb) {
                        *x += y;
                    }
                    for (x, y) in ha.iter_mut().zip(hb) {
                        *x += y;
                    }
                }
                _ => panic!("gradient structure mismatch"),
            }
        }
        self
    }

    /// Flatten parameter gradients in the same order as [`Network::param_vec`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for lg in &self.layers {
            match lg {
                LayerGrads::None => {}
                LayerGrads::Affine { weight, bias } => {
                    out.extend_from_slice(weight.data());
                    out.extend_from_slice(bias);
                }
                LayerGrads::BatchNorm { scale, shift } => {
                    out.extend_from_slice(scale);
                    out.extend_from_slice(shift);
                }
            }
        }
        out
    }
}

/// Build a network from layer specs with seeded fan-in initialization.
///
/// Affine weights feeding a ReLU-family activation use std sqrt(2/in_dim),
/// all others sqrt(1/in_dim); biases start at zero, batch-norm at
/// scale 1 / shift 0.
pub fn init_network(specs: &[LayerSpec], seed: u64) -> Result<Network> {
    if specs.is_empty() {
        return Err(Error::Config("network needs at least one layer".into()));
    }
    for spec in specs {
        spec.validate()?;
    }
    for w in specs.windows(2) {
        if w[0].out_dim != w[1].in_dim {
            return Err(Error::Config(format!(
                "layer chain mismatch: {:?} out_dim {} vs {:?} in_dim {}",
                w[0].kind, w[0].out_dim, w[1].kind, w[1].in_dim
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let params = match spec.kind {
            LayerKind::Affine => {
                // Look past batch-norm to find the activation this layer feeds.
                let next_act = specs[i + 1..]
                    .iter()
                    .find(|s| s.kind != LayerKind::BatchNorm)
                    .map(|s| s.kind);
                let std = if next_act.is_some_and(|k| k.is_relu_family()) {
                    (2.0 / spec.in_dim as f64).sqrt()
                } else {
                    (1.0 / spec.in_dim as f64).sqrt()
                };
                let mut weight = Matrix::zeros(spec.out_dim, spec.in_dim);
                for v in weight.data_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = z * std;
                }
                LayerParams::Affine { weight, bias: vec![0.0; spec.out_dim] }
            }
            LayerKind::BatchNorm => LayerParams::BatchNorm {
                scale: vec![1.0; spec.out_dim],
                shift: vec![0.0; spec.out_dim],
                running_mean: vec![0.0; spec.out_dim],
                running_var: vec![1.0; spec.out_dim],
            },
            _ => LayerParams::None,
        };
        layers.push(Layer { spec: *spec, params });
    }
    Ok(Network { layers, seed })
}

impl Network {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().spec.out_dim
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| l.spec.kind == LayerKind::BatchNorm)
    }

    pub fn forward(&self, batch: &Matrix, mode: Mode) -> Result<Trace> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Config(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        if batch.rows() == 0 {
            return Err(Error::Data("empty batch".into()));
        }
        if !batch.is_finite() {
            return Err(Error::Numeric("non-finite input batch".into()));
        }

        let mut layer_io = Vec::with_capacity(self.layers.len() + 1);
        let mut bn_stats = Vec::with_capacity(self.layers.len());
        layer_io.push(batch.clone());

        for layer in &self.layers {
            let x = layer_io.last().unwrap();
            let (y, stats) = layer_forward(layer, x, mode);
            layer_io.push(y);
            bn_stats.push(stats);
        }
        Ok(Trace { mode, layer_io, bn_stats })
    }

    /// Convenience: eval-mode forward returning just the output.
    pub fn apply(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward(batch, Mode::Eval)?.output().clone())
    }

    /// Fold the batch statistics of a train-mode trace into the running
    /// statistics (momentum 0.9). No-op for networks without batch-norm.
    pub fn update_running_stats(&mut self, trace: &Trace) {
        debug_assert_eq!(trace.mode, Mode::Train);
        for (layer, stats) in self.layers.iter_mut().zip(&trace.bn_stats) {
            if let (
                LayerParams::BatchNorm { running_mean, running_var, .. },
                Some(BnBatchStats { mean, var }),
            ) = (&mut layer.params, stats)
            {
                for (r, m) in running_mean.iter_mut().zip(mean) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
                }
                for (r, v) in running_var.iter_mut().zip(var) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
                }
            }
        }
    }

    /// Reverse pass: gradients for every parameter and for the input batch.
    pub fn backward(&self, trace: &Trace, output_grad: &Matrix) -> Result<Gradients> {
        if trace.layer_io.len() != self.layers.len() + 1 {
            return Err(Error::Internal("trace does not match network".into()));
        }
        let out = trace.output();
        if output_grad.rows() != out.rows() || output_grad.cols() != out.cols() {
            return Err(Error::Internal("output_grad shape mismatch".into()));
        }

        let mut grad = output_grad.clone();
        let mut layer_grads = vec![LayerGrads::None; self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.layer_io[i];
            let y = &trace.layer_io[i + 1];
            let (gin, lg) = layer_backward(layer, x, y, &grad, trace.mode, &trace.bn_stats[i]);
            layer_grads[i] = lg;
            grad = gin;
        }
        Ok(Gradients { layers: layer_grads, input: grad })
    }

    /// Trainable parameters flattened to a single vector
    /// (running statistics excluded).
    pub fn param_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match &layer.params {
                LayerParams::None => {}
                LayerParams::Affine { weight, bias } => {
                    out.extend_from_slice(weight.data());
                    out.extend_from_slice(bias);
                }
                LayerParams::BatchNorm { scale, shift, .. } => {
                    out.extend_from_slice(scale);
                    out.extend_from_slice(shift);
                }
            }
        }
        out
    }

    pub fn set_param_vec(&mut self, params: &[f64]) {
        let mut it = params.iter();
        for layer in &mut self.layers {
            match &mut layer.params {
                LayerParams::None => {}
                LayerParams::Affine { weight, bias } => {
                    for v in weight.data_mut() {
                        *v = *it.next().expect("param vector too short");
                    }
                    for v in bias.iter_mut() {
                        *v = *it.next().expect("param vector too short");
                    }
                }
                LayerParams::BatchNorm { scale, shift, .. } => {
                    for v in scale.iter_mut() {
                        *v = *it.next().expect("param vector too short");
                    }
                    for v in shift.iter_mut() {
                        *v = *it.next().expect("param vector too short");
                    }
                }
            }
        }
        assert!(it.next().is_none(), "param vector too long");
    }

    pub fn param_count(&self) -> usize {
        self.param_vec().len()
    }

    /// Hash over all state: parameters and running statistics.
    pub fn state_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for layer in &self.layers {
            match &layer.params {
                LayerParams::None => {}
                LayerParams::Affine { weight, bias } => {
                    for v in weight.data() {
                        v.to_bits().hash(&mut h);
                    }
                    for v in bias {
                        v.to_bits().hash(&mut h);
                    }
                }
                LayerParams::BatchNorm { scale, shift, running_mean, running_var } => {
                    for v in scale.iter().chain(shift).chain(running_mean).chain(running_var) {
                        v.to_bits().hash(&mut h);
                    }
                }
            }
        }
        h.finish()
    }
}

fn layer_forward(layer: &Layer, x: &Matrix, mode: Mode) -> (Matrix, Option<BnBatchStats>) {
    match (&layer.spec.kind, &layer.params) {
        (LayerKind::Affine, LayerParams::Affine { weight, bias }) => {
            let mut y = x.matmul_transpose(weight);
            y.add_row_vector(bias);
            (y, None)
        }
        (LayerKind::Relu, _) => (x.map(|v| v.max(0.0)), None),
        (LayerKind::LeakyRelu { slope }, _) => {
            let s = *slope;
            (x.map(move |v| if v > 0.0 { v } else { s * v }), None)
        }
        (LayerKind::Sigmoid, _) => (x.map(|v| 1.0 / (1.0 + (-v).exp())), None),
        (LayerKind::Tanh, _) => (x.map(f64::tanh), None),
        (
            LayerKind::BatchNorm,
            LayerParams::BatchNorm { scale, shift, running_mean, running_var },
        ) => {
            let n = x.rows() as f64;
            let dim = x.cols();
            match mode {
                Mode::Eval => {
                    let mut y = Matrix::zeros(x.rows(), dim);
                    for r in 0..x.rows() {
                        for c in 0..dim {
                            let xhat =
                                (x.get(r, c) - running_mean[c]) / (running_var[c] + BN_EPS).sqrt();
                            y.set(r, c, scale[c] * xhat + shift[c]);
                        }
                    }
                    (y, None)
                }
                Mode::Train => {
                    let mut mean = vec![0.0; dim];
                    let mut var = vec![0.0; dim];
                    for c in 0..dim {
                        let mut s = 0.0;
                        for r in 0..x.rows() {
                            s += x.get(r, c);
                        }
                        mean[c] = s / n;
                        let mut v = 0.0;
                        for r in 0..x.rows() {
                            let d = x.get(r, c) - mean[c];
                            v += d * d;
                        }
                        var[c] = v / n;
                    }
                    let mut y = Matrix::zeros(x.rows(), dim);
                    for r in 0..x.rows() {
                        for c in 0..dim {
                            let xhat = (x.get(r, c) - mean[c]) / (var[c] + BN_EPS).sqrt();
                            y.set(r, c, scale[c] * xhat + shift[c]);
                        }
                    }
                    (y, Some(BnBatchStats { mean, var }))
                }
            }
        }
        _ => unreachable!("layer params inconsistent with kind"),
    }
}

fn layer_backward(
    layer: &Layer,
    x: &Matrix,
    y: &Matrix,
    gout: &Matrix,
    mode: Mode,
    bn_stats: &Option<BnBatchStats>,
) -> (Matrix, LayerGrads) {
    match (&layer.spec.kind, &layer.params) {
        (LayerKind::Affine, LayerParams::Affine { weight, .. }) => {
            let gin = gout.matmul(weight);
            let gw = gout.transpose_matmul(x);
            let gb = gout.column_sums();
            (gin, LayerGrads::Affine { weight: gw, bias: gb })
        }
        (LayerKind::Relu, _) => {
            let mut gin = gout.clone();
            for (g, &xv) in gin.data_mut().iter_mut().zip(x.data()) {
                if xv <= 0.0 {
                    *g = 0.0;
                }
            }
            (gin, LayerGrads::None)
        }
        (LayerKind::LeakyRelu { slope }, _) => {
            let mut gin = gout.clone();
            for (g, &xv) in gin.data_mut().iter_mut().zip(x.data()) {
                if xv <= 0.0 {
                    *g *= slope;
                }
            }
            (gin, LayerGrads::None)
        }
        (LayerKind::Sigmoid, _) => {
            let mut gin = gout.clone();
            for (g, &yv) in gin.data_mut().iter_mut().zip(y.data()) {
                *g *= yv * (1.0 - yv);
            }
            (gin, LayerGrads::None)
        }
        (LayerKind::Tanh, _) => {
            let mut gin = gout.clone();
            for (g, &yv) in gin.data_mut().iter_mut().zip(y.data()) {
                *g *= 1.0 - yv * yv;
            }
            (gin, LayerGrads::None)
        }
        (
            LayerKind::BatchNorm,
            LayerParams::BatchNorm { scale, running_mean, running_var, .. },
        ) => {
            let dim = x.cols();
            let n = x.rows() as f64;
            match mode {
                Mode::Eval => {
                    // Running stats are constants here: an affine map per feature.
                    let mut gin = gout.clone();
                    let mut gscale = vec![0.0; dim];
                    let mut gshift = vec![0.0; dim];
                    for r in 0..x.rows() {
                        for c in 0..dim {
                            let inv_std = 1.0 / (running_var[c] + BN_EPS).sqrt();
                            let xhat = (x.get(r, c) - running_mean[c]) * inv_std;
                            let g = gout.get(r, c);
                            gscale[c] += g * xhat;
                            gshift[c] += g;
                            gin.set(r, c, g * scale[c] * inv_std);
                        }
                    }
                    (gin, LayerGrads::BatchNorm { scale: gscale, shift: gshift })
                }
                Mode::Train => {
                    let BnBatchStats { mean, var } =
                        bn_stats.as_ref().expect("train trace has bn stats");
                    let mut gin = Matrix::zeros(x.rows(), dim);
                    let mut gscale = vec![0.0; dim];
                    let mut gshift = vec![0.0; dim];
                    for c in 0..dim {
                        let inv_std = 1.0 / (var[c] + BN_EPS).sqrt();
                        let mut sum_gxhat = 0.0;
                        let mut sum_g = 0.0;
                        for r in 0..x.rows() {
                            let xhat = (x.get(r, c) - mean[c]) * inv_std;
                            let g = gout.get(r, c);
                            gscale[c] += g * xhat;
                            gshift[c] += g;
                            sum_gxhat += g * xhat;
                            sum_g += g;
                        }
                        for r in 0..x.rows() {
                            let xhat = (x.get(r, c) - mean[c]) * inv_std;
                            let g = gout.get(r, c);
                            let v = scale[c] * inv_std
                                * (g - sum_g / n - xhat * sum_gxhat / n);
                            gin.set(r, c, v);
                        }
                    }
                    (gin, LayerGrads::BatchNorm { scale: gscale, shift: gshift })
                }
            }
        }
        _ => unreachable!("layer params inconsistent with kind"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple_specs() -> Vec<LayerSpec> {
        vec![LayerSpec::affine(2, 3), LayerSpec::relu(3)]
    }

    #[test]
    fn same_seed_identical_parameters() {
        let a = init_network(&simple_specs(), 42).unwrap();
        let b = init_network(&simple_specs(), 42).unwrap();
        assert_eq!(a.param_vec(), b.param_vec());
        assert_eq!(a.state_hash(), b.state_hash());
        let c = init_network(&simple_specs(), 43).unwrap();
        assert_ne!(a.param_vec(), c.param_vec());
    }

    #[test]
    fn affine_weight_shape() {
        let net = init_network(&simple_specs(), 0).unwrap();
        match &net.layers()[0].params {
            LayerParams::Affine { weight, bias } => {
                assert_eq!((weight.rows(), weight.cols()), (3, 2));
                assert!(bias.iter().all(|&b| b == 0.0));
            }
            _ => panic!("expected affine params"),
        }
    }

    #[test]
    fn chain_mismatch_is_config_error() {
        let specs = vec![LayerSpec::affine(2, 3), LayerSpec::relu(4)];
        assert!(matches!(init_network(&specs, 0), Err(Error::Config(_))));
    }

    #[test]
    fn zero_weight_affine_maps_to_zero() {
        let mut net = init_network(&[LayerSpec::affine(1, 1)], 0).unwrap();
        net.set_param_vec(&[0.0, 0.0]);
        let out = net.apply(&Matrix::from_vec(1, 1, vec![5.0])).unwrap();
        assert_eq!(out.get(0, 0), 0.0);
    }

    #[test]
    fn relu_and_sigmoid_values() {
        let net = init_network(&[LayerSpec::relu(3)], 0).unwrap();
        let out = net.apply(&Matrix::from_vec(1, 3, vec![-1.0, 0.0, 2.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 2.0]);

        let net = init_network(&[LayerSpec::sigmoid(1)], 0).unwrap();
        let out = net.apply(&Matrix::from_vec(1, 1, vec![0.0])).unwrap();
        assert_eq!(out.get(0, 0), 0.5);
    }

    #[test]
    fn non_finite_input_rejected() {
        let net = init_network(&simple_specs(), 0).unwrap();
        let bad = Matrix::from_vec(1, 2, vec![f64::NAN, 0.0]);
        assert!(matches!(net.forward(&bad, Mode::Eval), Err(Error::Numeric(_))));
    }

    #[test]
    fn identity_affine_passes_gradient_through() {
        let mut net = init_network(&[LayerSpec::affine(2, 2)], 0).unwrap();
        net.set_param_vec(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let x = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let trace = net.forward(&x, Mode::Train).unwrap();
        let g = Matrix::from_vec(2, 2, vec![0.1, 0.2, 0.3, 0.4]);
        let grads = net.backward(&trace, &g).unwrap();
        assert_eq!(grads.input, g);
    }

    #[test]
    fn sigmoid_of_linear_hand_gradient() {
        // f(x) = sigmoid(w x), w = 0: d/dw with output grad 1 is 0.25 * x.
        let mut net =
            init_network(&[LayerSpec::affine(1, 1), LayerSpec::sigmoid(1)], 0).unwrap();
        net.set_param_vec(&[0.0, 0.0]);
        let x = Matrix::from_vec(1, 1, vec![3.0]);
        let trace = net.forward(&x, Mode::Train).unwrap();
        let grads = net.backward(&trace, &Matrix::from_vec(1, 1, vec![1.0])).unwrap();
        let flat = grads.flatten();
        assert!((flat[0] - 0.25 * 3.0).abs() < 1e-12, "dw = {}", flat[0]);
    }

    #[test]
    fn eval_forward_is_pure_with_batch_norm() {
        let specs = vec![
            LayerSpec::affine(2, 4),
            LayerSpec::batch_norm(4),
            LayerSpec::leaky_relu(4, 0.2),
            LayerSpec::affine(4, 1),
            LayerSpec::sigmoid(1),
        ];
        let net = init_network(&specs, 7).unwrap();
        let x = Matrix::from_vec(3, 2, vec![0.1, -0.5, 1.0, 0.3, -0.2, 0.8]);
        let before = net.state_hash();
        let _ = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(net.state_hash(), before);
    }

    #[test]
    fn train_stats_update_only_when_requested() {
        let specs = vec![LayerSpec::affine(2, 4), LayerSpec::batch_norm(4)];
        let mut net = init_network(&specs, 7).unwrap();
        let x = Matrix::from_vec(3, 2, vec![0.1, -0.5, 1.0, 0.3, -0.2, 0.8]);
        let before = net.state_hash();
        let trace = net.forward(&x, Mode::Train).unwrap();
        assert_eq!(net.state_hash(), before);
        net.update_running_stats(&trace);
        assert_ne!(net.state_hash(), before);
    }
}
