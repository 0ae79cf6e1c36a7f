//! The four role-specific networks: classifier `c`, two-input comparator
//! `h`, and the encoder-decoder negative-point generators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::{init_network, LayerSpec, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Classifier,
    Comparator,
    Generator,
}

/// Output activation for generators: tanh suits standardized bounded
/// data, identity suits unbounded tabular data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorOutput {
    #[default]
    Tanh,
    Identity,
}

const LEAKY_SLOPE: f64 = 0.2;

/// Build one of the role networks over d-dimensional inputs.
///
/// Classifier/comparator: blocks of affine (+ optional batch-norm) +
/// leaky-relu down the hidden chain, then affine to 1 and sigmoid. The
/// comparator sees the concatenation of its two inputs, so its first
/// layer takes 2d. Generators are encoder-decoders whose decoder mirrors
/// the hidden chain back up to d.
pub fn build_model(
    role: Role,
    d: usize,
    hidden: &[usize],
    use_batch_norm: bool,
    seed: u64,
) -> Result<Network> {
    build_model_with_output(role, d, hidden, use_batch_norm, GeneratorOutput::Tanh, seed)
}

pub fn build_model_with_output(
    role: Role,
    d: usize,
    hidden: &[usize],
    use_batch_norm: bool,
    generator_output: GeneratorOutput,
    seed: u64,
) -> Result<Network> {
    if d == 0 {
        return Err(Error::Config("input dim must be >= 1".into()));
    }
    if hidden.is_empty() {
        return Err(Error::Config("hidden layer list must be nonempty".into()));
    }

    let mut specs = Vec::new();
    let push_block = |specs: &mut Vec<LayerSpec>, from: usize, to: usize| {
        specs.push(LayerSpec::affine(from, to));
        if use_batch_norm {
            specs.push(LayerSpec::batch_norm(to));
        }
        specs.push(LayerSpec::leaky_relu(to, LEAKY_SLOPE));
    };

    match role {
        Role::Classifier | Role::Comparator => {
            let mut cur = if role == Role::Comparator { 2 * d } else { d };
            for &hdim in hidden {
                push_block(&mut specs, cur, hdim);
                cur = hdim;
            }
            specs.push(LayerSpec::affine(cur, 1));
            specs.push(LayerSpec::sigmoid(1));
        }
        Role::Generator => {
            let mut cur = d;
            for &hdim in hidden {
                push_block(&mut specs, cur, hdim);
                cur = hdim;
            }
            // Mirrored decoder.
            for &hdim in hidden.iter().rev().skip(1) {
                push_block(&mut specs, cur, hdim);
                cur = hdim;
            }
            specs.push(LayerSpec::affine(cur, d));
            match generator_output {
                GeneratorOutput::Tanh => specs.push(LayerSpec::tanh(d)),
                GeneratorOutput::Identity => {}
            }
        }
    }
    init_network(&specs, seed)
}

/// The four co-trained networks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadModel {
    pub c: Network,
    pub h: Network,
    pub g_c: Network,
    pub g_h: Network,
    pub input_dim: usize,
}

impl QuadModel {
    pub fn validate(&self) -> Result<()> {
        let d = self.input_dim;
        let checks = [
            (self.c.input_dim() == d && self.c.output_dim() == 1, "c must map d -> 1"),
            (self.h.input_dim() == 2 * d && self.h.output_dim() == 1, "h must map 2d -> 1"),
            (self.g_c.input_dim() == d && self.g_c.output_dim() == d, "G_c must map d -> d"),
            (self.g_h.input_dim() == d && self.g_h.output_dim() == d, "G_h must map d -> d"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }
}

/// h on the ordered pair (a, b): the probability that a is valued at
/// least as high as b. Nothing ties h(a,b) to h(b,a).
pub fn comparator_apply(h: &Network, a: &[f64], b: &[f64]) -> Result<f64> {
    let d2 = h.input_dim();
    if a.len() + b.len() != d2 || a.len() != b.len() {
        return Err(Error::Config(format!(
            "comparator expects two length-{} inputs, got {} and {}",
            d2 / 2,
            a.len(),
            b.len()
        )));
    }
    let mut row = Vec::with_capacity(d2);
    row.extend_from_slice(a);
    row.extend_from_slice(b);
    let out = h.apply(&Matrix::from_vec(1, d2, row))?;
    Ok(out.get(0, 0))
}

/// Unary anomaly score: h on two replicas of the point.
pub fn comparator_unary(h: &Network, x: &[f64]) -> Result<f64> {
    comparator_apply(h, x, x)
}

/// Batched comparator over row pairs: h([a_i; b_i]) for each row i.
pub fn comparator_apply_batch(h: &Network, a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    if a.cols() != b.cols() || a.rows() != b.rows() || 2 * a.cols() != h.input_dim() {
        return Err(Error::Config("comparator batch shape mismatch".into()));
    }
    let out = h.apply(&a.hcat(b))?;
    Ok(out.data().to_vec())
}
