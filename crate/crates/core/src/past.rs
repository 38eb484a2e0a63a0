//! Past reasoning: cross-frame and cross-object attention over track
//! queries, then box refinement from the refined features.

use querytrack_nn::{
    mha_forward, positional_encoding_3d, sigmoid, sinusoidal_pe, softplus, AttentionParams,
    FlopCounter, SeededInit, Tensor2D, PE_BASE,
};

use crate::error::Result;
use crate::model::{ModelParams, REG_OUTPUTS};
use crate::types::{normalize_yaw, Box3D, Query, QueryQueue, TrackerConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementOutput {
    pub residual: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
    pub velocity: [f64; 2],
    pub score: f64,
}

/// Encoding of a relative frame offset.
pub fn time_pe(offset: i64, dim: usize) -> Vec<f64> {
    sinusoidal_pe(offset as f64, dim, PE_BASE).expect("model dim is even")
}

/// Keys for attention over a track's history: `τ_h` queue slots (zeros where
/// absent) followed by the current query, with time encodings and mask.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryInputs {
    pub memory: Tensor2D,
    pub memory_pe: Tensor2D,
    pub mask: Vec<bool>,
}

pub fn history_inputs(
    queue: &QueryQueue,
    current: &Query,
    config: &TrackerConfig,
) -> HistoryInputs {
    let d = config.d;
    let slots = queue.slots(current.timestamp);
    let tau_h = slots.len();
    let mut memory = Tensor2D::zeros(tau_h + 1, d);
    let mut memory_pe = Tensor2D::zeros(tau_h + 1, d);
    let mut mask = Vec::with_capacity(tau_h + 1);
    for (j, slot) in slots.iter().enumerate() {
        if let Some(q) = slot {
            memory.row_mut(j).copy_from_slice(&q.feature);
        }
        mask.push(slot.is_some());
        let offset = j as i64 - tau_h as i64;
        memory_pe.row_mut(j).copy_from_slice(&time_pe(offset, d));
    }
    memory.row_mut(tau_h).copy_from_slice(&current.feature);
    memory_pe.row_mut(tau_h).copy_from_slice(&time_pe(0, d));
    mask.push(true);
    HistoryInputs {
        memory,
        memory_pe,
        mask,
    }
}

/// Replaces the feature of `current` by attention over its own history and
/// itself; the center is untouched.
pub fn cross_frame_refine(
    queue: &QueryQueue,
    current: &Query,
    params: &ModelParams,
    config: &TrackerConfig,
    flops: Option<&mut FlopCounter>,
) -> Result<Query> {
    let h = history_inputs(queue, current, config);
    let q = Tensor2D::row_vector(&current.feature);
    let q_pe = Tensor2D::row_vector(&time_pe(0, config.d));
    let (out, _) =
        params
            .cross_frame
            .forward_cross(&q, &q_pe, &h.memory, &h.memory_pe, &h.mask, flops)?;
    Ok(Query {
        feature: out.into_data(),
        ..current.clone()
    })
}

/// Raw 3D encodings of query centers, one row each, plus the number of
/// centers that fell outside the region and were clamped.
pub fn object_pe(queries: &[Query], config: &TrackerConfig) -> Result<(Tensor2D, usize)> {
    let dim = config.pe3d_dim();
    let region = config.region();
    let mut pe = Tensor2D::zeros(queries.len(), dim);
    let mut clamped = 0;
    for (i, q) in queries.iter().enumerate() {
        let (row, c) = positional_encoding_3d(q.center, &region, dim)?;
        pe.row_mut(i).copy_from_slice(&row);
        clamped += usize::from(c);
    }
    Ok((pe, clamped))
}

/// Self-attention across all queries of one frame, guided by their 3D
/// positions. Output order follows input order.
pub fn cross_object_refine(
    queries: &[Query],
    params: &ModelParams,
    config: &TrackerConfig,
    flops: Option<&mut FlopCounter>,
) -> Result<Vec<Query>> {
    if queries.is_empty() {
        return Ok(Vec::new());
    }
    let d = config.d;
    let mut tokens = Tensor2D::zeros(queries.len(), d);
    for (i, q) in queries.iter().enumerate() {
        tokens.row_mut(i).copy_from_slice(&q.feature);
    }
    let (pe, clamped) = object_pe(queries, config)?;
    if clamped > 0 {
        log::debug!(
            "frame {}: {clamped} query centers outside the region were clamped for positional encoding",
            queries[0].timestamp
        );
    }
    let (out, _) = params.cross_object.forward_self(&tokens, &pe, flops)?;
    Ok(queries
        .iter()
        .enumerate()
        .map(|(i, q)| Query {
            feature: out.row(i).to_vec(),
            ..q.clone()
        })
        .collect())
}

/// Maps raw head outputs to box quantities.
pub fn decode_refinement(reg: &[f64], cls_logit: f64) -> RefinementOutput {
    debug_assert_eq!(reg.len(), REG_OUTPUTS);
    let (s, c) = (reg[6], reg[7]);
    let yaw = if s == 0.0 && c == 0.0 {
        0.0
    } else {
        normalize_yaw(s.atan2(c)).unwrap_or(0.0)
    };
    RefinementOutput {
        residual: [reg[0], reg[1], reg[2]],
        size: [softplus(reg[3]), softplus(reg[4]), softplus(reg[5])],
        yaw,
        velocity: [reg[8], reg[9]],
        score: sigmoid(cls_logit),
    }
}

/// Refined box: center shifted by the predicted residual, all other
/// quantities replaced by the head outputs.
pub fn refine_track(
    query: &Query,
    box_d: &Box3D,
    params: &ModelParams,
) -> Result<(Box3D, RefinementOutput)> {
    let reg = params.reg_head.forward(&query.feature)?;
    let cls = params.cls_head.forward(&query.feature)?;
    let r = decode_refinement(&reg, cls[0]);
    let b = apply_refinement(box_d, &r);
    Ok((b, r))
}

pub fn apply_refinement(box_d: &Box3D, r: &RefinementOutput) -> Box3D {
    Box3D {
        center: [
            box_d.center[0] + r.residual[0],
            box_d.center[1] + r.residual[1],
            box_d.center[2] + r.residual[2],
        ],
        size: r.size.map(|v| v.max(1e-6)),
        yaw: r.yaw,
        velocity: r.velocity,
        score: r.score,
        class: box_d.class,
    }
}

/// Attention multiply-adds (scores plus mixing) of one global attention over
/// `n·τ` tokens and of the decoupled cross-frame plus cross-object pair.
pub fn flop_closed_form(n: usize, tau: usize, d: usize) -> (u64, u64) {
    let (n, tau, d) = (n as u64, tau as u64, d as u64);
    let global = 2 * (n * tau) * (n * tau) * d;
    let decoupled = 2 * n * tau * d + 2 * n * n * d;
    (global, decoupled)
}

/// Measures both attention layouts by running single attention layers of
/// width `d` on random inputs with a [`FlopCounter`] attached.
pub fn flop_compare(n: usize, tau: usize, d: usize) -> Result<(FlopCounter, FlopCounter)> {
    let heads = if d % 4 == 0 { 4 } else { 1 };
    let mut init = SeededInit::new(0x5eed);
    let params = AttentionParams::seeded(d, heads, &mut init)?;
    let tokens = init.uniform(n * tau, d, 1);
    let zeros = |r: usize| Tensor2D::zeros(r, d);

    let mut global = FlopCounter::new();
    mha_forward(
        &tokens,
        &tokens,
        &tokens,
        &zeros(n * tau),
        &zeros(n * tau),
        &vec![true; n * tau],
        &params,
        Some(&mut global),
    )?;

    let mut decoupled = FlopCounter::new();
    let current = tokens.slice_rows(0, n);
    for i in 0..n {
        let q = current.slice_rows(i, i + 1);
        let hist = tokens.slice_rows(i * tau, (i + 1) * tau);
        mha_forward(
            &q,
            &hist,
            &hist,
            &zeros(1),
            &zeros(tau),
            &vec![true; tau],
            &params,
            Some(&mut decoupled),
        )?;
    }
    mha_forward(
        &current,
        &current,
        &current,
        &zeros(n),
        &zeros(n),
        &vec![true; n],
        &params,
        Some(&mut decoupled),
    )?;
    Ok((global, decoupled))
}
