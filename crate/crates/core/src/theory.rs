//! Executable theory: the constructive 2m-neuron tent network, exact
//! piecewise-linear extraction for 1-D ReLU nets, piece-count
//! lower-bound checks, spectral complexity, margin empirical risk and
//! the generalization-penalty proxy.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::{init_network, LayerKind, LayerParams, LayerSpec, Network};

const COLLINEAR_TOL: f64 = 1e-9;
const PROBE_TOL: f64 = 1e-8;

/// A continuous 1-D piecewise-linear function: k sorted breakpoints and
/// k+1 (slope, intercept) pairs, piece i covering the interval left of
/// breakpoint i (the last piece is the right ray).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiecewiseLinear1D {
    pub breakpoints: Vec<f64>,
    pub slopes: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub continuous: bool,
}

impl PiecewiseLinear1D {
    pub fn piece_count(&self) -> usize {
        self.slopes.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&t| t <= x);
        self.slopes[i] * x + self.intercepts[i]
    }

    /// Adjacent pieces must agree at shared breakpoints within 1e-9.
    pub fn check(&self) -> Result<()> {
        if self.slopes.len() != self.breakpoints.len() + 1
            || self.intercepts.len() != self.slopes.len()
        {
            return Err(Error::Internal("piecewise shape mismatch".into()));
        }
        if self.breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Internal("breakpoints not strictly increasing".into()));
        }
        if self.continuous {
            for (j, &t) in self.breakpoints.iter().enumerate() {
                let left = self.slopes[j] * t + self.intercepts[j];
                let right = self.slopes[j + 1] * t + self.intercepts[j + 1];
                if (left - right).abs() >= 1e-9 {
                    return Err(Error::Numeric(format!(
                        "discontinuity {} at breakpoint {t}",
                        left - right
                    )));
                }
            }
        }
        Ok(())
    }
}

fn eval_net_1d(net: &Network, x: f64) -> f64 {
    net.apply(&Matrix::from_vec(1, 1, vec![x])).expect("1-D eval").get(0, 0)
}

/// The tent function with peaks of height 1 at every point of `s`,
/// returned both in closed piecewise form and as the equivalent
/// single-hidden-layer ReLU network with exactly 2m hidden neurons.
///
/// Left ray has slope +1 into (s_1, 1); each gap descends at slope
/// -2/gap to 0 at the midpoint and ascends at +2/gap back to 1; the
/// right ray has slope -1. The set of strict local maxima is exactly s.
pub fn construct_max_net(s: &[f64]) -> Result<(Network, PiecewiseLinear1D)> {
    let m = s.len();
    if m == 0 {
        return Err(Error::Config("construct_max_net needs at least one point".into()));
    }
    if s.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "construct_max_net points must be strictly increasing".into(),
        ));
    }

    let mut breakpoints = Vec::with_capacity(2 * m - 1);
    let mut slopes = Vec::with_capacity(2 * m);
    slopes.push(1.0);
    breakpoints.push(s[0]);
    for w in s.windows(2) {
        let gap = w[1] - w[0];
        slopes.push(-2.0 / gap);
        slopes.push(2.0 / gap);
        breakpoints.push(w[0] + gap / 2.0);
        breakpoints.push(w[1]);
    }
    slopes.push(-1.0);

    let mut intercepts = Vec::with_capacity(slopes.len());
    intercepts.push(1.0 - s[0]);
    for j in 1..slopes.len() {
        let t = breakpoints[j - 1];
        let value = slopes[j - 1] * t + intercepts[j - 1];
        intercepts.push(value - slopes[j] * t);
    }
    let pwl = PiecewiseLinear1D { breakpoints: breakpoints.clone(), slopes: slopes.clone(), intercepts, continuous: true };
    pwl.check()?;

    // f(x) = 1 - relu(s_1 - x) + sum_j c_j relu(x - t_j). The negatively
    // oriented neuron carries the left ray; it loses slope 1 at t_1, so
    // c_1 absorbs that on top of the piece-slope change.
    let n_hidden = 2 * m;
    let mut params = Vec::new();
    params.push(-1.0);
    params.extend(std::iter::repeat(1.0).take(n_hidden - 1)); // hidden weights
    params.push(s[0]);
    params.extend(breakpoints.iter().map(|&t| -t)); // hidden biases
    params.push(-1.0);
    for j in 1..slopes.len() {
        let mut c = slopes[j] - slopes[j - 1];
        if j == 1 {
            c += 1.0;
        }
        params.push(c);
    }
    params.push(1.0); // output bias

    let specs = [
        LayerSpec::affine(1, n_hidden),
        LayerSpec::relu(n_hidden),
        LayerSpec::affine(n_hidden, 1),
    ];
    let mut net = init_network(&specs, 0)?;
    net.set_param_vec(&params);

    // Probe equivalence across the whole support.
    let lo = s[0] - 2.0;
    let hi = s[m - 1] + 2.0;
    for i in 0..=2000 {
        let x = lo + (hi - lo) * i as f64 / 2000.0;
        let diff = (eval_net_1d(&net, x) - pwl.eval(x)).abs();
        if diff >= 1e-9 {
            return Err(Error::Internal(format!(
                "tent network mismatch {diff} at x = {x}"
            )));
        }
    }
    Ok((net, pwl))
}

fn check_relu_only(net: &Network) -> Result<()> {
    if net.input_dim() != 1 || net.output_dim() != 1 {
        return Err(Error::Config("piece extraction needs a 1-D to 1-D network".into()));
    }
    for layer in net.layers() {
        match layer.spec.kind {
            LayerKind::Affine | LayerKind::Relu => {}
            other => {
                return Err(Error::Config(format!(
                    "piece extraction supports ReLU only, found {other:?}"
                )))
            }
        }
    }
    Ok(())
}

/// Layer outputs of the prefix ending before layer `upto` at scalar x.
fn prefix_eval(net: &Network, upto: usize, x: f64) -> Vec<f64> {
    let mut v = vec![x];
    for layer in &net.layers()[..upto] {
        match (&layer.spec.kind, &layer.params) {
            (LayerKind::Affine, LayerParams::Affine { weight, bias }) => {
                let mut out = bias.clone();
                for (i, o) in out.iter_mut().enumerate() {
                    for (j, &vj) in v.iter().enumerate() {
                        *o += weight.get(i, j) * vj;
                    }
                }
                v = out;
            }
            (LayerKind::Relu, _) => {
                for vi in v.iter_mut() {
                    *vi = vi.max(0.0);
                }
            }
            _ => unreachable!("validated relu-only"),
        }
    }
    v
}

/// Probe coordinates inside each interval induced by sorted breakpoints,
/// rays included.
fn interval_probes(breakpoints: &[f64]) -> Vec<(f64, f64, f64, f64)> {
    // (lo, hi, p1, p2) with infinite rays encoded as NAN bounds.
    let mut out = Vec::new();
    if breakpoints.is_empty() {
        out.push((f64::NEG_INFINITY, f64::INFINITY, 0.0, 1.0));
        return out;
    }
    let first = breakpoints[0];
    out.push((f64::NEG_INFINITY, first, first - 2.0, first - 1.0));
    for w in breakpoints.windows(2) {
        let width = w[1] - w[0];
        out.push((w[0], w[1], w[0] + width / 3.0, w[0] + 2.0 * width / 3.0));
    }
    let last = *breakpoints.last().unwrap();
    out.push((last, f64::INFINITY, last + 1.0, last + 2.0));
    out
}

/// Exact piecewise-linear form of a 1-D ReLU network.
///
/// Kinks are discovered layer by layer: within any interval of the
/// already-known breakpoints, every pre-activation of the next ReLU is
/// affine, so its zero crossing is read off two probes. Collinear
/// adjacent pieces (slope difference below 1e-9) are merged, and the
/// result is verified against the network on a dense probe grid.
pub fn extract_pieces(net: &Network) -> Result<PiecewiseLinear1D> {
    check_relu_only(net)?;
    let mut breakpoints: Vec<f64> = Vec::new();

    for (li, layer) in net.layers().iter().enumerate() {
        if layer.spec.kind != LayerKind::Relu {
            continue;
        }
        let mut found = Vec::new();
        for (lo, hi, p1, p2) in interval_probes(&breakpoints) {
            let v1 = prefix_eval(net, li, p1);
            let v2 = prefix_eval(net, li, p2);
            for k in 0..v1.len() {
                let a = (v2[k] - v1[k]) / (p2 - p1);
                if a.abs() < 1e-12 {
                    continue;
                }
                let c = v1[k] - a * p1;
                let x0 = -c / a;
                let margin = 1e-10 * (1.0 + x0.abs());
                let inside = (lo.is_infinite() || x0 > lo + margin)
                    && (hi.is_infinite() || x0 < hi - margin);
                if inside {
                    found.push(x0);
                }
            }
        }
        for x0 in found {
            if !breakpoints.iter().any(|&t| (t - x0).abs() < 1e-9) {
                breakpoints.push(x0);
            }
        }
        breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }

    // Affine form of the full network on each interval.
    let fit = |breakpoints: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut slopes = Vec::new();
        let mut intercepts = Vec::new();
        for (_, _, p1, p2) in interval_probes(breakpoints) {
            let y1 = eval_net_1d(net, p1);
            let y2 = eval_net_1d(net, p2);
            let a = (y2 - y1) / (p2 - p1);
            slopes.push(a);
            intercepts.push(y1 - a * p1);
        }
        (slopes, intercepts)
    };

    let (mut slopes, mut intercepts) = fit(&breakpoints);
    // Merge collinear neighbors (spurious candidates from cancelling
    // neurons, or kinks with zero net slope change).
    loop {
        let Some(j) = (0..breakpoints.len())
            .find(|&j| (slopes[j] - slopes[j + 1]).abs() < COLLINEAR_TOL)
        else {
            break;
        };
        breakpoints.remove(j);
        let refit = fit(&breakpoints);
        slopes = refit.0;
        intercepts = refit.1;
    }

    let pwl = PiecewiseLinear1D { breakpoints, slopes, intercepts, continuous: true };
    pwl.check()?;

    // Verify on a dense grid plus offsets straddling every breakpoint.
    let (lo, hi) = if pwl.breakpoints.is_empty() {
        (-1.0, 1.0)
    } else {
        (pwl.breakpoints[0] - 2.0, pwl.breakpoints.last().unwrap() + 2.0)
    };
    let mut probes: Vec<f64> =
        (0..=1000).map(|i| lo + (hi - lo) * i as f64 / 1000.0).collect();
    for &t in &pwl.breakpoints {
        probes.push(t - 1e-6);
        probes.push(t + 1e-6);
    }
    for x in probes {
        let diff = (pwl.eval(x) - eval_net_1d(net, x)).abs();
        if diff >= PROBE_TOL {
            return Err(Error::Internal(format!(
                "extracted pieces mismatch {diff} at x = {x}"
            )));
        }
    }
    Ok(pwl)
}

/// Outcome of one piece-count claim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClaimReport {
    pub claim: String,
    pub m: usize,
    pub pieces: usize,
    /// Whether the claim's hypothesis about the network held; a failed
    /// premise makes the claim vacuous and `passed` is omitted.
    pub premise_holds: bool,
    pub passed: Option<bool>,
}

fn grid_local_maxima(net: &Network, lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).ceil() as usize;
    let values: Vec<f64> = (0..=n).map(|i| eval_net_1d(net, lo + step * i as f64)).collect();
    let mut maxima = Vec::new();
    for i in 1..n {
        if values[i] > values[i - 1] && values[i] > values[i + 1] {
            maxima.push(lo + step * i as f64);
        }
    }
    maxima
}

/// Empirical check of the neuron lower bounds via piece counts: a net
/// whose strict local maxima are exactly `s` must have at least 2m
/// pieces, and a net approximating the +/-1 indicator of `s` must have
/// at least 3m+1. Premises are verified by grid scan and probing; a
/// failed premise reports the claim as vacuous.
pub fn count_pieces_lower_bound_check(s: &[f64], net: &Network) -> Result<Vec<ClaimReport>> {
    if s.is_empty() || s.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("point set must be nonempty and strictly increasing".into()));
    }
    let m = s.len();
    let pieces = extract_pieces(net)?.piece_count();
    let gap = s
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
        .min(1.0);
    let step = gap / 200.0;
    let lo = s[0] - gap;
    let hi = s[m - 1] + gap;

    let maxima = grid_local_maxima(net, lo, hi, step);
    let matches = maxima.len() == m
        && s.iter().all(|&x| maxima.iter().any(|&t| (t - x).abs() <= step))
        && maxima.iter().all(|&t| s.iter().any(|&x| (t - x).abs() <= step));
    let claim1 = ClaimReport {
        claim: "local_maxima_pieces_ge_2m".into(),
        m,
        pieces,
        premise_holds: matches,
        passed: matches.then(|| pieces >= 2 * m),
    };

    // Indicator premise: close to +1 on s, close to -1 at midpoints and
    // just outside the support.
    let eps = 0.5;
    let mut off_probes: Vec<f64> = s.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    off_probes.push(s[0] - gap / 2.0);
    off_probes.push(s[m - 1] + gap / 2.0);
    let on_ok = s.iter().all(|&x| (eval_net_1d(net, x) - 1.0).abs() <= eps);
    let off_ok = off_probes.iter().all(|&x| (eval_net_1d(net, x) + 1.0).abs() <= eps);
    let premise2 = on_ok && off_ok;
    let claim2 = ClaimReport {
        claim: "indicator_pieces_ge_3m_plus_1".into(),
        m,
        pieces,
        premise_holds: premise2,
        passed: premise2.then(|| pieces >= 3 * m + 1),
    };
    Ok(vec![claim1, claim2])
}

/// Largest singular value by power iteration on W^T W
/// (tolerance 1e-10, at most 1000 iterations).
pub fn spectral_norm(w: &Matrix) -> Result<f64> {
    let fro2: f64 = w.data().iter().map(|v| v * v).sum();
    if fro2 == 0.0 {
        return Err(Error::Numeric("spectral norm of zero matrix".into()));
    }
    let (rows, cols) = (w.rows(), w.cols());
    // Deterministic non-degenerate start direction.
    let mut v: Vec<f64> = (0..cols).map(|j| 1.0 + 0.1 * j as f64).collect();
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let n0 = norm(&v);
    v.iter_mut().for_each(|a| *a /= n0);

    let mut sigma = 0.0;
    for _ in 0..1000 {
        let mut u = vec![0.0; rows];
        for (i, ui) in u.iter_mut().enumerate() {
            for (j, &vj) in v.iter().enumerate() {
                *ui += w.get(i, j) * vj;
            }
        }
        let s = norm(&u);
        let mut vn = vec![0.0; cols];
        for (i, &ui) in u.iter().enumerate() {
            for (j, vj) in vn.iter_mut().enumerate() {
                *vj += w.get(i, j) * ui;
            }
        }
        let vn_norm = norm(&vn);
        if vn_norm == 0.0 {
            // Start vector landed in the null space; restart shifted.
            v = (0..cols).map(|j| 1.0 + 0.7 * (j as f64).sin()).collect();
            let n = norm(&v);
            v.iter_mut().for_each(|a| *a /= n);
            continue;
        }
        vn.iter_mut().for_each(|a| *a /= vn_norm);
        v = vn;
        if (s - sigma).abs() < 1e-10 * s.max(1.0) {
            return Ok(s);
        }
        sigma = s;
    }
    Ok(sigma)
}

/// Spectral complexity: product of squared layer spectral norms times
/// the sum of squared Frobenius-to-spectral ratios. Affine weights
/// only; biases and batch-norm are excluded.
pub fn spectral_complexity(net: &Network) -> Result<f64> {
    let mut prod = 1.0;
    let mut ratio_sum = 0.0;
    let mut count = 0;
    for layer in net.layers() {
        if let LayerParams::Affine { weight, .. } = &layer.params {
            let s2 = spectral_norm(weight)?.powi(2);
            let fro2: f64 = weight.data().iter().map(|v| v * v).sum();
            prod *= s2;
            ratio_sum += fro2 / s2;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Config("network has no affine layers".into()));
    }
    Ok(prod * ratio_sum)
}

/// Margin-loss configuration: margins, neighborhood radius, ball sample
/// count and the domain radius used by the bound proxy.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MarginRiskConfig {
    pub gamma1: f64,
    pub gamma2: f64,
    pub epsilon: f64,
    pub k: usize,
    pub b_domain: f64,
}

impl Default for MarginRiskConfig {
    fn default() -> Self {
        MarginRiskConfig { gamma1: 0.0, gamma2: 0.0, epsilon: 0.1, k: 256, b_domain: 2.0 }
    }
}

impl MarginRiskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.k < 8 {
            return Err(Error::Config("ball sample count must be >= 8".into()));
        }
        if self.gamma1 < 0.0 || self.gamma2 < 0.0 {
            return Err(Error::Config("margins must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Mean margin loss over the data: a point fails if its value drops
/// more than gamma1 below the neighborhood max (the max over K uniform
/// epsilon-ball samples plus the point itself, so attainment is
/// non-strict), or if the classifier margin f(x) - gamma2 is not
/// strictly positive.
pub fn margin_empirical_risk(
    v_net: &Network,
    f_net: &Network,
    data: &Matrix,
    cfg: &MarginRiskConfig,
    seed: u64,
) -> Result<f64> {
    cfg.validate()?;
    if data.rows() == 0 {
        return Err(Error::Data("margin risk needs nonempty data".into()));
    }
    let d = data.cols();
    if v_net.input_dim() != d || f_net.input_dim() != d {
        return Err(Error::Config("network input dim does not match data".into()));
    }

    let f_vals = f_net.apply(data)?;
    let mut failures = 0usize;
    for i in 0..data.rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut ball = Matrix::zeros(cfg.k + 1, d);
        ball.row_mut(0).copy_from_slice(data.row(i));
        for k in 1..=cfg.k {
            let mut dir: Vec<f64> =
                (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let radius = cfg.epsilon * rng.gen::<f64>().powf(1.0 / d as f64);
            for (b, v) in ball.row_mut(k).iter_mut().zip(&dir) {
                *b = v * radius / n;
            }
            for (b, x) in ball.row_mut(k).iter_mut().zip(data.row(i)) {
                *b += x;
            }
            dir.clear();
        }
        let v_vals = v_net.apply(&ball)?;
        let v_max = v_vals.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let v_fail = v_vals.get(0, 0) < v_max - cfg.gamma1;
        let c_fail = f_vals.get(i, 0) - cfg.gamma2 <= 0.0;
        if v_fail || c_fail {
            failures += 1;
        }
    }
    Ok(failures as f64 / data.rows() as f64)
}

fn shape_terms(net: &Network) -> (f64, f64) {
    // (depth r, max width q) over affine layers, input included.
    let mut r = 0usize;
    let mut q = net.input_dim();
    for layer in net.layers() {
        if layer.spec.kind == LayerKind::Affine {
            r += 1;
            q = q.max(layer.spec.out_dim);
        }
    }
    (r as f64, q as f64)
}

/// The bracket under the square root of the generalization penalty,
/// before the log(m/delta) term: B^2 [r^2 q1 log(r q1) C(v)/g1^2 +
/// s^2 q2 log(s q2) C(f)/g2^2].
pub fn bound_penalty_bracket(
    v_net: &Network,
    f_net: &Network,
    b_domain: f64,
    gamma1: f64,
    gamma2: f64,
) -> Result<f64> {
    if gamma1 <= 0.0 || gamma2 <= 0.0 {
        return Err(Error::Config("bound proxy requires positive margins".into()));
    }
    let (r, q1) = shape_terms(v_net);
    let (s, q2) = shape_terms(f_net);
    let cv = spectral_complexity(v_net)?;
    let cf = spectral_complexity(f_net)?;
    Ok(b_domain * b_domain
        * (r * r * q1 * (r * q1).ln() * cv / (gamma1 * gamma1)
            + s * s * q2 * (s * q2).ln() * cf / (gamma2 * gamma2)))
}

/// Evaluate the penalty expression with the unknown constant fixed to
/// 1: sqrt((bracket + log(m/delta)) / m). Only scaling laws are
/// meaningful, not absolute values.
pub fn bound_penalty_proxy(
    v_net: &Network,
    f_net: &Network,
    b_domain: f64,
    gamma1: f64,
    gamma2: f64,
    m: usize,
    delta: f64,
) -> Result<f64> {
    if m < 2 {
        return Err(Error::Config("bound proxy requires m >= 2".into()));
    }
    if delta <= 0.0 || delta >= 1.0 {
        return Err(Error::Config("delta must be in (0, 1)".into()));
    }
    let bracket = bound_penalty_bracket(v_net, f_net, b_domain, gamma1, gamma2)?;
    Ok(((bracket + (m as f64 / delta).ln()) / m as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1-hidden-layer ReLU net from explicit weights: f(x) = out_b +
    /// sum_j out_w[j] relu(w[j] x + b[j]).
    fn relu_net(w: &[f64], b: &[f64], out_w: &[f64], out_b: f64) -> Network {
        let n = w.len();
        let specs = [
            LayerSpec::affine(1, n),
            LayerSpec::relu(n),
            LayerSpec::affine(n, 1),
        ];
        let mut net = init_network(&specs, 0).unwrap();
        let mut params = Vec::new();
        params.extend_from_slice(w);
        params.extend_from_slice(b);
        params.extend_from_slice(out_w);
        params.push(out_b);
        net.set_param_vec(&params);
        net
    }

    fn affine_scalar_net(w: f64, b: f64) -> Network {
        let mut net = init_network(&[LayerSpec::affine(1, 1)], 0).unwrap();
        net.set_param_vec(&[w, b]);
        net
    }

    #[test]
    fn tent_single_point_is_one_minus_abs() {
        let (net, pwl) = construct_max_net(&[0.0]).unwrap();
        assert_eq!(pwl.piece_count(), 2);
        for x in [-1.5, -0.3, 0.0, 0.7, 2.0] {
            assert!((pwl.eval(x) - (1.0 - x.abs())).abs() < 1e-12);
            assert!((eval_net_1d(&net, x) - (1.0 - x.abs())).abs() < 1e-12);
        }
    }

    #[test]
    fn tent_two_points_hand_values() {
        let (net, pwl) = construct_max_net(&[0.0, 1.0]).unwrap();
        assert_eq!(pwl.breakpoints, vec![0.0, 0.5, 1.0]);
        assert_eq!(pwl.piece_count(), 4);
        for (x, want) in [(0.0, 1.0), (0.5, 0.0), (1.0, 1.0), (-1.0, 0.0), (2.0, 0.0)] {
            assert!((pwl.eval(x) - want).abs() < 1e-12, "x = {x}");
            assert!((eval_net_1d(&net, x) - want).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn tent_network_has_2m_hidden_neurons() {
        let (net, _) = construct_max_net(&[-1.0, 0.2, 0.9]).unwrap();
        assert_eq!(net.layers()[0].spec.out_dim, 6);
    }

    #[test]
    fn tent_local_maxima_match_points() {
        let s = [-2.0, -0.5, 0.1, 1.4];
        let (net, _) = construct_max_net(&s).unwrap();
        let step = 0.6 / 200.0;
        let maxima = grid_local_maxima(&net, -3.0, 2.4, step);
        assert_eq!(maxima.len(), s.len());
        for (m, x) in maxima.iter().zip(&s) {
            assert!((m - x).abs() <= step);
        }
    }

    #[test]
    fn tent_rejects_unsorted_or_duplicate() {
        assert!(construct_max_net(&[]).is_err());
        assert!(construct_max_net(&[0.0, 0.0]).is_err());
        assert!(construct_max_net(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn extract_matches_constructed_tent() {
        let (net, pwl) = construct_max_net(&[0.0, 1.0]).unwrap();
        let extracted = extract_pieces(&net).unwrap();
        assert_eq!(extracted.piece_count(), 4);
        for i in 0..=100 {
            let x = -1.0 + 3.0 * i as f64 / 100.0;
            assert!((extracted.eval(x) - pwl.eval(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn extract_constant_net_single_piece() {
        let net = relu_net(&[0.0, 0.0], &[0.0, 0.0], &[1.0, 1.0], 0.7);
        let pwl = extract_pieces(&net).unwrap();
        assert_eq!(pwl.piece_count(), 1);
        assert!((pwl.eval(3.0) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn extract_random_hidden_five_at_most_six_pieces() {
        for seed in 0..5 {
            let specs = [
                LayerSpec::affine(1, 5),
                LayerSpec::relu(5),
                LayerSpec::affine(5, 1),
            ];
            let net = init_network(&specs, seed).unwrap();
            let pwl = extract_pieces(&net).unwrap();
            assert!(pwl.piece_count() <= 6, "seed {seed}: {}", pwl.piece_count());
        }
    }

    #[test]
    fn extract_rejects_non_relu() {
        let specs = [
            LayerSpec::affine(1, 4),
            LayerSpec::sigmoid(4),
            LayerSpec::affine(4, 1),
        ];
        let net = init_network(&specs, 0).unwrap();
        assert!(extract_pieces(&net).is_err());
    }

    #[test]
    fn extract_two_hidden_layers() {
        // relu(relu(x) - 1) has kinks at 0 and 1, the one at 0 invisible
        // in the output; pieces merge back to 2.
        let specs = [
            LayerSpec::affine(1, 1),
            LayerSpec::relu(1),
            LayerSpec::affine(1, 1),
            LayerSpec::relu(1),
            LayerSpec::affine(1, 1),
        ];
        let mut net = init_network(&specs, 0).unwrap();
        net.set_param_vec(&[1.0, 0.0, 1.0, -1.0, 1.0, 0.0]);
        let pwl = extract_pieces(&net).unwrap();
        assert_eq!(pwl.piece_count(), 2);
        assert!((pwl.eval(3.0) - 2.0).abs() < 1e-9);
        assert!((pwl.eval(-5.0) - 0.0).abs() < 1e-9);
    }

    #[test]
    fn lower_bound_check_on_constructed_net() {
        let s = [-1.0, 0.5, 2.0];
        let (net, _) = construct_max_net(&s).unwrap();
        let reports = count_pieces_lower_bound_check(&s, &net).unwrap();
        assert_eq!(reports[0].pieces, 6);
        assert!(reports[0].premise_holds);
        assert_eq!(reports[0].passed, Some(true));
        // The tent is 0 at midpoints, not -1: indicator premise fails.
        assert!(!reports[1].premise_holds);
        assert_eq!(reports[1].passed, None);
    }

    #[test]
    fn lower_bound_check_constant_net_vacuous() {
        let net = relu_net(&[0.0], &[0.0], &[0.0], 0.3);
        let reports = count_pieces_lower_bound_check(&[0.0, 1.0], &net).unwrap();
        assert!(!reports[0].premise_holds);
        assert_eq!(reports[0].passed, None);
    }

    #[test]
    fn lower_bound_check_bump_indicator() {
        // Bump for m=1 at 0 with half-width 0.25: -1 outside, peak +1.
        let w = 0.25;
        let net = relu_net(
            &[1.0, 1.0, 1.0],
            &[w, 0.0, -w],
            &[2.0 / w, -4.0 / w, 2.0 / w],
            -1.0,
        );
        let reports = count_pieces_lower_bound_check(&[0.0], &net).unwrap();
        assert_eq!(reports[1].pieces, 4);
        assert!(reports[1].premise_holds);
        assert_eq!(reports[1].passed, Some(true));
    }

    #[test]
    fn spectral_identity_closed_form() {
        let mut net = init_network(&[LayerSpec::affine(2, 2)], 0).unwrap();
        net.set_param_vec(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!((spectral_complexity(&net).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_two_scaled_identities() {
        let specs = [
            LayerSpec::affine(2, 2),
            LayerSpec::relu(2),
            LayerSpec::affine(2, 2),
        ];
        let mut net = init_network(&specs, 0).unwrap();
        net.set_param_vec(&[
            2.0, 0.0, 0.0, 2.0, 0.0, 0.0, // first layer
            2.0, 0.0, 0.0, 2.0, 0.0, 0.0, // second layer
        ]);
        assert!((spectral_complexity(&net).unwrap() - 64.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_scaling_homogeneity() {
        let specs = [
            LayerSpec::affine(3, 4),
            LayerSpec::relu(4),
            LayerSpec::affine(4, 1),
        ];
        let net = init_network(&specs, 7).unwrap();
        let c = spectral_complexity(&net).unwrap();
        for alpha in [0.5, 2.0, 10.0] {
            let mut scaled = net.clone();
            let p: Vec<f64> = net.param_vec().iter().map(|v| v * alpha).collect();
            scaled.set_param_vec(&p);
            // Biases scale too but are excluded from C; 2 layers -> alpha^4.
            let want = c * alpha.powi(4);
            let got = spectral_complexity(&scaled).unwrap();
            assert!((got - want).abs() < 1e-10 * want, "alpha {alpha}");
        }
    }

    #[test]
    fn spectral_zero_matrix_errors() {
        let mut net = init_network(&[LayerSpec::affine(2, 2)], 0).unwrap();
        net.set_param_vec(&[0.0; 6]);
        assert!(spectral_complexity(&net).is_err());
    }

    #[test]
    fn spectral_norm_matches_svd_oracle() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for (rows, cols) in [(3, 5), (8, 8), (6, 2), (1, 7)] {
            let mut w = Matrix::zeros(rows, cols);
            for v in w.data_mut() {
                *v = rng.gen_range(-2.0..2.0);
            }
            let got = spectral_norm(&w).unwrap();
            let dm = nalgebra::DMatrix::from_fn(rows, cols, |i, j| w.get(i, j));
            let want = dm.svd(false, false).singular_values[0];
            assert!(
                (got - want).abs() < 1e-8 * want.max(1.0),
                "{rows}x{cols}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn margin_risk_constant_v_positive_f_zero() {
        let v = affine_scalar_net(0.0, 0.0);
        let f = affine_scalar_net(0.0, 1.0);
        let data = Matrix::from_vec(4, 1, vec![-1.0, 0.0, 0.5, 2.0]);
        let cfg = MarginRiskConfig::default();
        assert_eq!(margin_empirical_risk(&v, &f, &data, &cfg, 0).unwrap(), 0.0);
    }

    #[test]
    fn margin_risk_negative_f_is_one() {
        let v = affine_scalar_net(1.0, 0.0);
        let f = affine_scalar_net(0.0, -1.0);
        let data = Matrix::from_vec(3, 1, vec![-1.0, 0.0, 1.0]);
        let cfg = MarginRiskConfig::default();
        assert_eq!(margin_empirical_risk(&v, &f, &data, &cfg, 0).unwrap(), 1.0);
    }

    #[test]
    fn margin_risk_tent_maxima_zero() {
        let s = [0.0, 1.0, 2.5];
        let (v, _) = construct_max_net(&s).unwrap();
        let f = affine_scalar_net(0.0, 1.0);
        let data = Matrix::from_vec(3, 1, s.to_vec());
        let cfg = MarginRiskConfig { epsilon: 0.4, ..Default::default() };
        assert_eq!(margin_empirical_risk(&v, &f, &data, &cfg, 3).unwrap(), 0.0);
    }

    #[test]
    fn margin_risk_monotonicity() {
        let specs = [
            LayerSpec::affine(1, 6),
            LayerSpec::relu(6),
            LayerSpec::affine(6, 1),
        ];
        let v = init_network(&specs, 11).unwrap();
        let f = init_network(&specs, 12).unwrap();
        let data = Matrix::from_vec(8, 1, vec![-1.5, -1.0, -0.3, 0.0, 0.2, 0.8, 1.1, 1.9]);
        let base = MarginRiskConfig { epsilon: 0.3, ..Default::default() };
        // The v-margin is forgiving as gamma1 grows; the classifier
        // margin is stricter as gamma2 grows.
        let mut prev = f64::INFINITY;
        for g1 in [0.0, 0.05, 0.2, 1.0] {
            let cfg = MarginRiskConfig { gamma1: g1, ..base };
            let r = margin_empirical_risk(&v, &f, &data, &cfg, 5).unwrap();
            assert!(r <= prev, "gamma1 {g1}");
            prev = r;
        }
        let mut prev = -1.0;
        for g2 in [0.0, 0.05, 0.2, 1.0] {
            let cfg = MarginRiskConfig { gamma2: g2, ..base };
            let r = margin_empirical_risk(&v, &f, &data, &cfg, 5).unwrap();
            assert!(r >= prev, "gamma2 {g2}");
            prev = r;
        }
    }

    #[test]
    fn margin_risk_rejects_bad_config() {
        let v = affine_scalar_net(1.0, 0.0);
        let cfg = MarginRiskConfig { epsilon: 0.0, ..Default::default() };
        let data = Matrix::from_vec(1, 1, vec![0.0]);
        assert!(margin_empirical_risk(&v, &v, &data, &cfg, 0).is_err());
        let cfg = MarginRiskConfig { k: 4, ..Default::default() };
        assert!(margin_empirical_risk(&v, &v, &data, &cfg, 0).is_err());
    }

    fn proxy_nets() -> (Network, Network) {
        let specs = [
            LayerSpec::affine(2, 8),
            LayerSpec::relu(8),
            LayerSpec::affine(8, 1),
        ];
        (init_network(&specs, 1).unwrap(), init_network(&specs, 2).unwrap())
    }

    #[test]
    fn proxy_quadrupling_m_halves() {
        let (v, f) = proxy_nets();
        // Large B makes the bracket dominate the log term.
        let p1 = bound_penalty_proxy(&v, &f, 100.0, 0.1, 0.1, 1000, 0.05).unwrap();
        let p4 = bound_penalty_proxy(&v, &f, 100.0, 0.1, 0.1, 4000, 0.05).unwrap();
        let ratio = p4 / p1;
        assert!((0.5..=0.52).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn proxy_margin_homogeneity_exact() {
        let (v, f) = proxy_nets();
        let b1 = bound_penalty_bracket(&v, &f, 2.0, 0.1, 0.2).unwrap();
        let b2 = bound_penalty_bracket(&v, &f, 2.0, 0.2, 0.4).unwrap();
        assert!((b2 - b1 / 4.0).abs() < 1e-12 * b1);
    }

    #[test]
    fn proxy_rejects_degenerate_inputs() {
        let (v, f) = proxy_nets();
        assert!(bound_penalty_proxy(&v, &f, 2.0, 0.0, 0.1, 100, 0.05).is_err());
        assert!(bound_penalty_proxy(&v, &f, 2.0, 0.1, 0.1, 1, 0.05).is_err());
        assert!(bound_penalty_proxy(&v, &f, 2.0, 0.1, 0.1, 100, 1.5).is_err());
    }
}
