//! The co-training losses and their gradients, routed per trained player.
//!
//! Each training phase updates exactly one of the four networks. The
//! `*_phase_grads` functions run the trained player's forwards in train
//! mode and the frozen players in eval mode; generators receive their
//! gradients through the frozen classifier and comparator via input
//! gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::QuadModel;
use crate::net::{Gradients, Mode, Network, Trace};

pub const PROB_CLAMP: f64 = 1e-7;

/// Binary cross entropy for labels in {-1, +1}, with probability
/// clamping so the product-of-losses terms stay finite.
pub fn bce(p: f64, y: i8) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    match y {
        1 => -p.ln(),
        -1 => -(1.0 - p).ln(),
        _ => panic!("bce label must be -1 or +1"),
    }
}

/// d bce / dp; zero in the clamped region.
fn bce_dp(p: f64, y: i8) -> f64 {
    if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
        return 0.0;
    }
    match y {
        1 => -1.0 / p,
        -1 => 1.0 / (1.0 - p),
        _ => panic!("bce label must be -1 or +1"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub positive_term: f64,
    pub product_term: f64,
    pub distance_term: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for x in v {
        s += x;
        n += 1;
    }
    s / n as f64
}

/// L_C from per-sample probabilities: classifier on positives, classifier
/// on generated points, comparator on (generated, source) pairs.
pub fn loss_c_from_probs(pc_x: &[f64], pc_xp: &[f64], ph_xp_x: &[f64]) -> LossBreakdown {
    assert!(!pc_x.is_empty());
    assert_eq!(pc_xp.len(), ph_xp_x.len());
    let positive = mean(pc_x.iter().map(|&p| bce(p, 1)));
    let product = mean(
        pc_xp
            .iter()
            .zip(ph_xp_x)
            .map(|(&pc, &ph)| bce(pc, -1) * bce(ph, -1)),
    );
    LossBreakdown {
        total: positive + product,
        positive_term: positive,
        product_term: product,
        distance_term: 0.0,
    }
}

/// L_H from per-sample probabilities. The symmetric variant adds the
/// reversed-pair product term.
pub fn loss_h_from_probs(
    ph_xx: &[f64],
    pc_xpp: &[f64],
    ph_xpp_x: &[f64],
    ph_x_xpp: Option<&[f64]>,
) -> LossBreakdown {
    let positive = mean(ph_xx.iter().map(|&p| bce(p, 1)));
    let mut product = mean(
        pc_xpp
            .iter()
            .zip(ph_xpp_x)
            .map(|(&pc, &ph)| bce(pc, -1) * bce(ph, -1)),
    );
    if let Some(rev) = ph_x_xpp {
        product += mean(
            pc_xpp
                .iter()
                .zip(rev)
                .map(|(&pc, &ph)| bce(pc, -1) * bce(ph, 1)),
        );
    }
    LossBreakdown {
        total: positive + product,
        positive_term: positive,
        product_term: product,
        distance_term: 0.0,
    }
}

fn check_batch(model: &QuadModel, batch: &Matrix) -> Result<()> {
    if batch.rows() == 0 {
        return Err(Error::Data("empty batch".into()));
    }
    if batch.cols() != model.input_dim {
        return Err(Error::Config(format!(
            "batch dim {} vs model dim {}",
            batch.cols(),
            model.input_dim
        )));
    }
    Ok(())
}

/// Classifier loss value on a batch, all-frozen (eval-mode) forwards.
pub fn loss_c(model: &QuadModel, batch: &Matrix) -> Result<LossBreakdown> {
    check_batch(model, batch)?;
    let xp = model.g_c.apply(batch)?;
    let pc_x = model.c.apply(batch)?;
    let pc_xp = model.c.apply(&xp)?;
    let ph = model.h.apply(&xp.hcat(batch))?;
    Ok(loss_c_from_probs(pc_x.data(), pc_xp.data(), ph.data()))
}

/// Comparator loss value on a batch, all-frozen forwards.
pub fn loss_h(model: &QuadModel, batch: &Matrix, symmetric: bool) -> Result<LossBreakdown> {
    check_batch(model, batch)?;
    let xpp = model.g_h.apply(batch)?;
    let ph_xx = model.h.apply(&batch.hcat(batch))?;
    let pc = model.c.apply(&xpp)?;
    let ph_fwd = model.h.apply(&xpp.hcat(batch))?;
    let ph_rev = if symmetric {
        Some(model.h.apply(&batch.hcat(&xpp))?)
    } else {
        None
    };
    Ok(loss_h_from_probs(
        ph_xx.data(),
        pc.data(),
        ph_fwd.data(),
        ph_rev.as_ref().map(|m| m.data()),
    ))
}

/// G_c's objective value: minus the product term of the classifier loss.
pub fn loss_gc(model: &QuadModel, batch: &Matrix) -> Result<f64> {
    Ok(-loss_c(model, batch)?.product_term)
}

/// G_h's objective value: mean reconstruction distance (scaled by
/// lambda) minus the G_h-dependent part of L_H.
pub fn loss_gh(
    model: &QuadModel,
    batch: &Matrix,
    lambda: f64,
    symmetric: bool,
) -> Result<LossBreakdown> {
    check_batch(model, batch)?;
    let xpp = model.g_h.apply(batch)?;
    let dist = mean_row_distance(batch, &xpp);
    let lh = loss_h(model, batch, symmetric)?;
    let distance = lambda * dist;
    Ok(LossBreakdown {
        total: distance - lh.product_term,
        positive_term: 0.0,
        product_term: lh.product_term,
        distance_term: distance,
    })
}

fn mean_row_distance(a: &Matrix, b: &Matrix) -> f64 {
    mean((0..a.rows()).map(|r| {
        a.row(r)
            .iter()
            .zip(b.row(r))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }))
}

/// Gradients for one player plus the loss value and the train-mode
/// traces needed to fold batch-norm statistics into the trained network.
pub struct PhaseGrads {
    pub grads: Gradients,
    pub breakdown: LossBreakdown,
    pub traces: Vec<Trace>,
}

/// Gradients of L_C w.r.t. c's parameters. The generator and h are
/// frozen; the h-factor acts as a per-sample weight on the
/// generated-point loss. The c_only ablation replaces that factor by 1.
pub fn c_phase_grads(
    c: &Network,
    h: &Network,
    generator: &Network,
    batch: &Matrix,
    use_h_factor: bool,
) -> Result<PhaseGrads> {
    let n = batch.rows() as f64;
    let xp = generator.apply(batch)?;
    let lh: Vec<f64> = if use_h_factor {
        h.apply(&xp.hcat(batch))?
            .data()
            .iter()
            .map(|&p| bce(p, -1))
            .collect()
    } else {
        vec![1.0; batch.rows()]
    };

    let trace_pos = c.forward(batch, Mode::Train)?;
    let trace_gen = c.forward(&xp, Mode::Train)?;
    let p_pos = trace_pos.output().clone();
    let p_gen = trace_gen.output().clone();

    let positive = mean(p_pos.data().iter().map(|&p| bce(p, 1)));
    let product = mean(
        p_gen
            .data()
            .iter()
            .zip(&lh)
            .map(|(&p, &w)| bce(p, -1) * w),
    );
    let breakdown = LossBreakdown {
        total: positive + product,
        positive_term: positive,
        product_term: product,
        distance_term: 0.0,
    };

    let g_pos = p_pos.map(|p| bce_dp(p, 1) / n);
    let mut g_gen = p_gen.clone();
    for (i, v) in g_gen.data_mut().iter_mut().enumerate() {
        *v = lh[i] * bce_dp(p_gen.data()[i], -1) / n;
    }

    let grads = c
        .backward(&trace_pos, &g_pos)?
        .add(&c.backward(&trace_gen, &g_gen)?);
    Ok(PhaseGrads { grads, breakdown, traces: vec![trace_pos, trace_gen] })
}

/// Gradients of L_H w.r.t. h's parameters. The generator and c are
/// frozen; the h_only ablation replaces the c-factor by 1.
pub fn h_phase_grads(
    h: &Network,
    c: &Network,
    generator: &Network,
    batch: &Matrix,
    symmetric: bool,
    use_c_factor: bool,
) -> Result<PhaseGrads> {
    let n = batch.rows() as f64;
    let xpp = generator.apply(batch)?;
    let lc: Vec<f64> = if use_c_factor {
        c.apply(&xpp)?.data().iter().map(|&p| bce(p, -1)).collect()
    } else {
        vec![1.0; batch.rows()]
    };

    let trace_same = h.forward(&batch.hcat(batch), Mode::Train)?;
    let trace_fwd = h.forward(&xpp.hcat(batch), Mode::Train)?;
    let p_same = trace_same.output().clone();
    let p_fwd = trace_fwd.output().clone();

    let g_same = p_same.map(|p| bce_dp(p, 1) / n);
    let mut g_fwd = p_fwd.clone();
    for (i, v) in g_fwd.data_mut().iter_mut().enumerate() {
        *v = lc[i] * bce_dp(p_fwd.data()[i], -1) / n;
    }
    let mut grads = h
        .backward(&trace_same, &g_same)?
        .add(&h.backward(&trace_fwd, &g_fwd)?);

    let positive = mean(p_same.data().iter().map(|&p| bce(p, 1)));
    let mut product = mean(
        p_fwd
            .data()
            .iter()
            .zip(&lc)
            .map(|(&p, &w)| bce(p, -1) * w),
    );

    let mut traces = vec![trace_same, trace_fwd];
    if symmetric {
        let trace_rev = h.forward(&batch.hcat(&xpp), Mode::Train)?;
        let p_rev = trace_rev.output().clone();
        let mut g_rev = p_rev.clone();
        for (i, v) in g_rev.data_mut().iter_mut().enumerate() {
            *v = lc[i] * bce_dp(p_rev.data()[i], 1) / n;
        }
        grads = grads.add(&h.backward(&trace_rev, &g_rev)?);
        product += mean(
            p_rev
                .data()
                .iter()
                .zip(&lc)
                .map(|(&p, &w)| bce(p, 1) * w),
        );
        traces.push(trace_rev);
    }

    let breakdown = LossBreakdown {
        total: positive + product,
        positive_term: positive,
        product_term: product,
        distance_term: 0.0,
    };
    Ok(PhaseGrads { grads, breakdown, traces })
}

/// Gradients of -L_C w.r.t. the generator's parameters, flowing through
/// the frozen c and h via their input gradients.
pub fn gc_phase_grads(
    generator: &Network,
    c: &Network,
    h: &Network,
    batch: &Matrix,
    use_h_factor: bool,
) -> Result<PhaseGrads> {
    let n = batch.rows() as f64;
    let d = batch.cols();

    let trace_g = generator.forward(batch, Mode::Train)?;
    let xp = trace_g.output().clone();

    let trace_c = c.forward(&xp, Mode::Eval)?;
    let pc = trace_c.output().clone();
    let lc: Vec<f64> = pc.data().iter().map(|&p| bce(p, -1)).collect();

    let (lh, trace_h, ph) = if use_h_factor {
        let trace_h = h.forward(&xp.hcat(batch), Mode::Eval)?;
        let ph = trace_h.output().clone();
        let lh: Vec<f64> = ph.data().iter().map(|&p| bce(p, -1)).collect();
        (lh, Some(trace_h), Some(ph))
    } else {
        (vec![1.0; batch.rows()], None, None)
    };
    let product = mean(lc.iter().zip(&lh).map(|(a, b)| a * b));

    // d(-product)/d pc_i and /d ph_i; product rule per sample.
    let mut g_pc = pc.clone();
    for (i, v) in g_pc.data_mut().iter_mut().enumerate() {
        *v = -lh[i] * bce_dp(pc.data()[i], -1) / n;
    }
    let mut dxp = c.backward(&trace_c, &g_pc)?.input;
    if let (Some(trace_h), Some(ph)) = (&trace_h, &ph) {
        let mut g_ph = ph.clone();
        for (i, v) in g_ph.data_mut().iter_mut().enumerate() {
            *v = -lc[i] * bce_dp(ph.data()[i], -1) / n;
        }
        let gx_h = h.backward(trace_h, &g_ph)?.input.columns(0, d);
        dxp = dxp.add(&gx_h);
    }

    let grads = generator.backward(&trace_g, &dxp)?;
    let breakdown = LossBreakdown {
        total: -product,
        positive_term: 0.0,
        product_term: product,
        distance_term: 0.0,
    };
    Ok(PhaseGrads { grads, breakdown, traces: vec![trace_g] })
}

/// Gradients of the G_h objective w.r.t. the generator's parameters:
/// reconstruction distance plus minus-L_H through frozen c and h. The
/// h_only ablation replaces the c-factor by 1.
pub fn gh_phase_grads(
    generator: &Network,
    c: &Network,
    h: &Network,
    batch: &Matrix,
    lambda: f64,
    symmetric: bool,
    use_c_factor: bool,
) -> Result<PhaseGrads> {
    let n = batch.rows() as f64;
    let d = batch.cols();

    let trace_g = generator.forward(batch, Mode::Train)?;
    let xpp = trace_g.output().clone();

    let trace_h = h.forward(&xpp.hcat(batch), Mode::Eval)?;
    let ph = trace_h.output().clone();
    let lh: Vec<f64> = ph.data().iter().map(|&p| bce(p, -1)).collect();
    let (lc, trace_c, pc) = if use_c_factor {
        let trace_c = c.forward(&xpp, Mode::Eval)?;
        let pc = trace_c.output().clone();
        let lc: Vec<f64> = pc.data().iter().map(|&p| bce(p, -1)).collect();
        (lc, Some(trace_c), Some(pc))
    } else {
        (vec![1.0; batch.rows()], None, None)
    };
    let mut product = mean(lc.iter().zip(&lh).map(|(a, b)| a * b));

    // Distance term and its gradient w.r.t. the generated points.
    let mut dxpp = Matrix::zeros(batch.rows(), d);
    let mut dist_sum = 0.0;
    for r in 0..batch.rows() {
        let mut sq = 0.0;
        for c in 0..d {
            let diff = xpp.get(r, c) - batch.get(r, c);
            sq += diff * diff;
        }
        let dist = sq.sqrt();
        dist_sum += dist;
        if dist > 1e-12 {
            for c in 0..d {
                let diff = xpp.get(r, c) - batch.get(r, c);
                dxpp.set(r, c, lambda * diff / (dist * n));
            }
        }
    }
    let distance = lambda * dist_sum / n;

    // Minus-product gradients through frozen c and h (first argument).
    let mut g_pc = pc.as_ref().map(|pc| {
        let mut g = pc.clone();
        for (i, v) in g.data_mut().iter_mut().enumerate() {
            *v = -lh[i] * bce_dp(pc.data()[i], -1) / n;
        }
        g
    });
    let mut g_ph = ph.clone();
    for (i, v) in g_ph.data_mut().iter_mut().enumerate() {
        *v = -lc[i] * bce_dp(ph.data()[i], -1) / n;
    }

    if symmetric {
        let trace_rev = h.forward(&batch.hcat(&xpp), Mode::Eval)?;
        let p_rev = trace_rev.output().clone();
        let l_rev: Vec<f64> = p_rev.data().iter().map(|&p| bce(p, 1)).collect();
        product += mean(lc.iter().zip(&l_rev).map(|(a, b)| a * b));
        // lc appears in both products.
        if let (Some(g_pc), Some(pc)) = (g_pc.as_mut(), pc.as_ref()) {
            for (i, v) in g_pc.data_mut().iter_mut().enumerate() {
                *v += -l_rev[i] * bce_dp(pc.data()[i], -1) / n;
            }
        }
        let mut g_rev = p_rev.clone();
        for (i, v) in g_rev.data_mut().iter_mut().enumerate() {
            *v = -lc[i] * bce_dp(p_rev.data()[i], 1) / n;
        }
        // Generated points enter the reversed pair as the second argument.
        let gx_rev = h.backward(&trace_rev, &g_rev)?.input.columns(d, 2 * d);
        dxpp = dxpp.add(&gx_rev);
    }

    if let (Some(trace_c), Some(g_pc)) = (&trace_c, &g_pc) {
        let gx_c = c.backward(trace_c, g_pc)?.input;
        dxpp = dxpp.add(&gx_c);
    }
    let gx_h = h.backward(&trace_h, &g_ph)?.input.columns(0, d);
    dxpp = dxpp.add(&gx_h);

    let grads = generator.backward(&trace_g, &dxpp)?;
    let breakdown = LossBreakdown {
        total: distance - product,
        positive_term: 0.0,
        product_term: product,
        distance_term: distance,
    };
    Ok(PhaseGrads { grads, breakdown, traces: vec![trace_g] })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn bce_symmetry_point() {
        assert!((bce(0.5, 1) - LN2).abs() < 1e-12);
        assert!((bce(0.5, -1) - LN2).abs() < 1e-12);
    }

    #[test]
    fn bce_point_nine() {
        assert!((bce(0.9, 1) - 0.105360515657826).abs() < 1e-12);
    }

    #[test]
    fn bce_clamped_stays_finite() {
        assert!(bce(0.0, 1).is_finite());
        assert!(bce(1.0, -1).is_finite());
    }

    #[test]
    fn loss_c_all_half() {
        let b = loss_c_from_probs(&[0.5, 0.5], &[0.5, 0.5], &[0.5, 0.5]);
        assert!((b.total - (LN2 + LN2 * LN2)).abs() < 1e-12);
        assert!((b.total - 1.1736001944781467).abs() < 1e-9);
    }

    #[test]
    fn loss_c_vanishes_at_optimum() {
        let b = loss_c_from_probs(&[1.0 - 1e-9], &[1e-9], &[0.5]);
        assert!(b.total < 1e-6, "total = {}", b.total);
    }

    #[test]
    fn loss_c_two_sample_hand_oracle() {
        // m=2: c(x) = {0.8, 0.6}, c(x') = {0.3, 0.4}, h(x',x) = {0.7, 0.2}.
        // positive = (-ln 0.8 - ln 0.6)/2
        // product = ((-ln 0.7)(-ln 0.7'?)) -- per-sample: bce(c(x'),-1)*bce(h,-1)
        //         = ((-ln(1-0.3))*(-ln(1-0.7)) + (-ln(1-0.4))*(-ln(1-0.2)))/2
        let b = loss_c_from_probs(&[0.8, 0.6], &[0.3, 0.4], &[0.7, 0.2]);
        let positive = (-(0.8f64).ln() - (0.6f64).ln()) / 2.0;
        let product = ((-(0.7f64).ln()) * (-(0.3f64).ln())
            + (-(0.6f64).ln()) * (-(0.8f64).ln()))
            / 2.0;
        assert!((b.positive_term - positive).abs() < 1e-12);
        assert!((b.product_term - product).abs() < 1e-12);
        assert!((b.total - (positive + product)).abs() < 1e-12);
    }

    #[test]
    fn loss_h_all_half_asymmetric_and_symmetric() {
        let half = [0.5, 0.5, 0.5];
        let asym = loss_h_from_probs(&half, &half, &half, None);
        assert!((asym.total - (LN2 + LN2 * LN2)).abs() < 1e-12);
        let sym = loss_h_from_probs(&half, &half, &half, Some(&half));
        assert!((sym.total - (LN2 + 2.0 * LN2 * LN2)).abs() < 1e-12);
    }

    #[test]
    fn loss_h_vanishes_at_optimum() {
        let b = loss_h_from_probs(&[1.0 - 1e-9], &[1e-9], &[1e-9], None);
        assert!(b.total < 1e-6);
    }

    #[test]
    fn breakdown_parts_sum() {
        let b = loss_c_from_probs(&[0.7, 0.2], &[0.4, 0.9], &[0.3, 0.6]);
        assert!((b.total - (b.positive_term + b.product_term)).abs() < 1e-12);
    }
}
