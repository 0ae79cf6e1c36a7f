//! Adam updates over the flattened parameter vector of a network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Gradients, Network};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        // Adversarial-training convention: low beta1.
        AdamHyper { lr: 1e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub hyper: AdamHyper,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Network, hyper: AdamHyper) -> Self {
        let n = net.param_count();
        AdamState {
            hyper,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            t: 0,
        }
    }
}

/// One Adam step with bias correction. The gradient set must come from
/// the same network; non-finite gradients abort with a diagnostic.
pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let g = grads.flatten();
    let mut params = net.param_vec();
    if g.len() != params.len() || g.len() != state.first_moment.len() {
        return Err(Error::Internal(format!(
            "adam: gradient len {} vs params {} vs state {}",
            g.len(),
            params.len(),
            state.first_moment.len()
        )));
    }
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient at parameter index {i} (step {})",
            state.t
        )));
    }

    state.t += 1;
    let t = state.t as f64;
    let AdamHyper { lr, beta1, beta2, eps } = state.hyper;
    let bc1 = 1.0 - beta1.powf(t);
    let bc2 = 1.0 - beta2.powf(t);
    for i in 0..params.len() {
        let m = beta1 * state.first_moment[i] + (1.0 - beta1) * g[i];
        let v = beta2 * state.second_moment[i] + (1.0 - beta2) * g[i] * g[i];
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    net.set_param_vec(&params);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::net::{init_network, LayerSpec, Mode};

    fn tiny_net() -> Network {
        init_network(&[LayerSpec::affine(1, 1)], 0).unwrap()
    }

    fn grads_of(net: &Network, w: f64, b: f64) -> Gradients {
        let x = Matrix::from_vec(1, 1, vec![1.0]);
        let trace = net.forward(&x, Mode::Train).unwrap();
        let mut g = net.backward(&trace, &Matrix::from_vec(1, 1, vec![0.0])).unwrap();
        if let crate::net::LayerGrads::Affine { weight, bias } = &mut g.layers[0] {
            weight.set(0, 0, w);
            bias[0] = b;
        }
        g
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut net = tiny_net();
        let before = net.param_vec();
        let mut state = AdamState::new(&net, AdamHyper::default());
        let g = grads_of(&net, 0.0, 0.0);
        adam_step(&mut net, &g, &mut state).unwrap();
        assert_eq!(net.param_vec(), before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn constant_gradient_moves_opposite_sign() {
        let mut net = tiny_net();
        net.set_param_vec(&[0.0, 0.0]);
        let mut state = AdamState::new(&net, AdamHyper::default());
        for _ in 0..50 {
            let g = grads_of(&net, 1.0, -1.0);
            adam_step(&mut net, &g, &mut state).unwrap();
        }
        let p = net.param_vec();
        assert!(p[0] < 0.0, "w moved against positive gradient: {}", p[0]);
        assert!(p[1] > 0.0, "b moved against negative gradient: {}", p[1]);
    }

    #[test]
    fn first_step_magnitude_bounded_by_lr() {
        let mut net = tiny_net();
        net.set_param_vec(&[1.0, 0.0]);
        let hyper = AdamHyper { lr: 0.01, ..Default::default() };
        let mut state = AdamState::new(&net, hyper);
        let g = grads_of(&net, 0.37, 0.0);
        adam_step(&mut net, &g, &mut state).unwrap();
        let dw = (net.param_vec()[0] - 1.0).abs();
        assert!(dw <= 0.01 * 1.0001, "first-step |dw| = {dw}");
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut net = tiny_net();
        let mut state = AdamState::new(&net, AdamHyper::default());
        let g = grads_of(&net, f64::NAN, 0.0);
        assert!(adam_step(&mut net, &g, &mut state).is_err());
    }
}
