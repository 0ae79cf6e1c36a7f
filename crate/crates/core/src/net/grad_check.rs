//! Finite-difference oracle for the reverse pass.

use crate::matrix::Matrix;

use super::{Mode, Network};

const FD_STEP: f64 = 1e-5;

/// Compare analytic parameter gradients against central finite
/// differences of a scalar loss of the network output.
///
/// `loss` maps the output batch to a scalar and its gradient w.r.t. the
/// output. Returns the max over parameters of
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(net: &Network, batch: &Matrix, loss: F) -> f64
where
    F: Fn(&Matrix) -> (f64, Matrix),
{
    let trace = net.forward(batch, Mode::Train).expect("grad_check forward");
    let (_, dout) = loss(trace.output());
    let analytic = net
        .backward(&trace, &dout)
        .expect("grad_check backward")
        .flatten();

    let mut probe = net.clone();
    let base = net.param_vec();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + FD_STEP;
        probe.set_param_vec(&p);
        let (lp, _) = loss(probe.forward(batch, Mode::Train).unwrap().output());
        p[i] = base[i] - FD_STEP;
        probe.set_param_vec(&p);
        let (lm, _) = loss(probe.forward(batch, Mode::Train).unwrap().output());
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs());
        worst = worst.max(rel);
    }
    worst
}
