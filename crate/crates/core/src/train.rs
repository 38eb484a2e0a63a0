//! Toy training of the refinement and motion heads on simulator ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use querytrack_nn::{
    flatten, focal_loss, focal_loss_grad_logit, sigmoid, softplus, zeros_like, Params, Tensor2D,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::future::{decode_inputs, motion_queries, predict_motion_from};
use crate::io::{group_frames, TrackRecord};
use crate::metrics::{ade_fde, AdeFde};
use crate::model::{ModelParams, REG_OUTPUTS};
use crate::modes::Weights;
use crate::par;
use crate::past::{history_inputs, object_pe, time_pe, HistoryInputs};
use crate::sim::Simulation;
use crate::tracker::{step_traced, EventKind, PipelineOptions, Propagation, TrackerState};
use crate::types::{Box3D, LossConfig, Query, QueryQueue, TrackerConfig, TrajectoryForecast};

/// Positive-match radius between tracker outputs and ground truth.
pub const TRAIN_MATCH_DIST: f64 = 2.0;
/// Gradient work is split into this many fixed chunks, summed in order.
const GRAD_CHUNKS: usize = 8;
/// Gradient-norm ceiling used by the default schedule.
pub const GRAD_CLIP: f64 = 5.0;

/// Motion-head sample: the history a forecast was made from and the true
/// future movements.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub history: HistoryInputs,
    pub target: Vec<[f64; 2]>,
    pub origin: u64,
    /// Track centers over the consecutive recent frames ending at `origin`.
    pub centers: Vec<[f64; 2]>,
}

/// Inputs and targets of past reasoning for one track at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineTrack {
    pub history: HistoryInputs,
    pub query: Vec<f64>,
    pub center: [f64; 3],
    pub box_d: Box3D,
    /// Matched ground-truth box; `None` marks a negative.
    pub target: Option<Box3D>,
}

/// All existing tracks of one frame (cross-object attention couples them).
#[derive(Debug, Clone, PartialEq)]
pub struct RefineFrame {
    pub tracks: Vec<RefineTrack>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub motion: Vec<TrainSample>,
    pub refine: Vec<RefineFrame>,
}

fn nearest_gt<'a>(gt: &'a [TrackRecord], b: &Box3D) -> Option<&'a TrackRecord> {
    gt.iter()
        .filter(|g| g.class == b.class)
        .map(|g| (g, (g.x - b.center[0]).hypot(g.y - b.center[1])))
        .filter(|(_, d)| *d < TRAIN_MATCH_DIST)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.id.cmp(&b.0.id)))
        .map(|(g, _)| g)
}

/// Number of consecutive frames ending at `frame` (inclusive) for which the
/// queue holds a query, counting the current frame.
fn recent_run(queue: &QueryQueue, frame: u64) -> usize {
    let slots = queue.slots(frame);
    1 + slots.iter().rev().take_while(|s| s.is_some()).count()
}

fn collect_one(
    sim: &Simulation,
    params: &ModelParams,
    config: &TrackerConfig,
    options: &PipelineOptions,
    min_history: usize,
) -> Result<Dataset> {
    let frames = group_frames(
        &sim.detections,
        Some(sim.gt.iter().map(|g| g.frame + 1).max().unwrap_or(0)),
    );
    let mut gt_by_frame: BTreeMap<u64, Vec<TrackRecord>> = BTreeMap::new();
    for g in &sim.gt {
        gt_by_frame.entry(g.frame).or_default().push(g.clone());
    }
    let gt_pos: BTreeMap<(u64, u64), [f64; 2]> = sim
        .gt
        .iter()
        .map(|g| ((g.frame, g.id), [g.x, g.y]))
        .collect();
    let empty = Vec::new();
    let mut state = TrackerState::new();
    let mut data = Dataset::default();
    for det in &frames {
        let t = det.frame;
        let gt = gt_by_frame.get(&t).unwrap_or(&empty);
        let queues_before = state.queues.clone();
        let (out, trace) = step_traced(&mut state, det, params, config, options)?;

        if !trace.propagated.is_empty() {
            let tracks = trace
                .propagated
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let q = &trace.stub.track_queries[i];
                    let b = trace.stub.track_boxes[i];
                    let target = trace.stub.assignment[i]
                        .and_then(|_| nearest_gt(gt, &b))
                        .map(|g| g.to_box());
                    RefineTrack {
                        history: history_inputs(&queues_before[&p.id], q, config),
                        query: q.feature.clone(),
                        center: q.center,
                        box_d: b,
                        target,
                    }
                })
                .collect();
            data.refine.push(RefineFrame { tracks });
        }

        for e in out
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Born | EventKind::Updated))
        {
            let track = state
                .tracks
                .iter()
                .find(|s| s.id == e.id)
                .expect("live track");
            let queue = &state.queues[&e.id];
            let run = recent_run(queue, t);
            if run < min_history {
                continue;
            }
            let Some(g) = nearest_gt(gt, &track.last_box) else {
                continue;
            };
            let future: Option<Vec<[f64; 2]>> = (0..config.tau_f as u64)
                .map(|k| {
                    let a = gt_pos.get(&(t + k, g.id))?;
                    let b = gt_pos.get(&(t + k + 1, g.id))?;
                    Some([b[0] - a[0], b[1] - a[1]])
                })
                .collect();
            let Some(target) = future else {
                continue;
            };
            let slots = queue.slots(t);
            let mut centers: Vec<[f64; 2]> = slots[slots.len() + 1 - run..]
                .iter()
                .map(|s| {
                    let c = s.expect("inside run").center;
                    [c[0], c[1]]
                })
                .collect();
            centers.push([track.query.center[0], track.query.center[1]]);
            data.motion.push(TrainSample {
                history: history_inputs(queue, &track.query, config),
                target,
                origin: t,
                centers,
            });
        }
    }
    Ok(data)
}

/// Runs the tracker over every simulation and collects refinement frames
/// and motion samples matched to ground truth within 2 m. A motion sample
/// needs `min_history` consecutive confident frames (current included) and
/// a full `τ_f`-step ground-truth future.
pub fn collect_dataset(
    sims: &[Simulation],
    params: &ModelParams,
    config: &TrackerConfig,
    options: &PipelineOptions,
    min_history: usize,
) -> Result<Dataset> {
    let parts = par::map(sims, |s| {
        collect_one(s, params, config, options, min_history)
    });
    let mut all = Dataset::default();
    for p in parts {
        let p = p?;
        all.motion.extend(p.motion);
        all.refine.extend(p.refine);
    }
    Ok(all)
}

pub fn build_dataset(
    sims: &[Simulation],
    params: &ModelParams,
    config: &TrackerConfig,
    options: &PipelineOptions,
    min_history: usize,
) -> Result<Vec<TrainSample>> {
    Ok(collect_dataset(sims, params, config, options, min_history)?.motion)
}

/// Repeats the last observed per-frame displacement.
pub fn velocity_forecast_baseline(
    centers: &[[f64; 2]],
    horizon: usize,
) -> Result<TrajectoryForecast> {
    let n = centers.len();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 history centers, got {n}"
        )));
    }
    let step = [
        centers[n - 1][0] - centers[n - 2][0],
        centers[n - 1][1] - centers[n - 2][1],
    ];
    Ok(TrajectoryForecast {
        origin: 0,
        movements: vec![step; horizon],
    })
}

fn add_into(dst: &mut ModelParams, src: &ModelParams) {
    let mut srcs: Vec<Vec<f64>> = Vec::new();
    src.visit("", &mut |_, t| srcs.push(t.data().to_vec()));
    let mut i = 0;
    dst.visit_mut("", &mut |_, t| {
        for (a, b) in t.data_mut().iter_mut().zip(&srcs[i]) {
            *a += b;
        }
        i += 1;
    });
}

fn scale_params(p: &mut ModelParams, s: f64) {
    p.visit_mut("", &mut |_, t| t.scale(s));
}

/// Mean loss and gradient over `items`, computed in fixed chunks.
fn batch_grad<T: Sync>(
    params: &ModelParams,
    items: &[&T],
    per_item: impl Fn(&T, &mut ModelParams) -> Result<f64> + Sync + Send,
) -> Result<(f64, ModelParams)> {
    let chunk = items.len().div_ceil(GRAD_CHUNKS).max(1);
    let chunks: Vec<&[&T]> = items.chunks(chunk).collect();
    let parts = par::map(&chunks, |c| -> Result<(f64, ModelParams)> {
        let mut g = zeros_like(params);
        let mut loss = 0.0;
        for item in c.iter() {
            loss += per_item(item, &mut g)?;
        }
        Ok((loss, g))
    });
    let mut total = zeros_like(params);
    let mut loss = 0.0;
    for p in parts {
        let (l, g) = p?;
        loss += l;
        add_into(&mut total, &g);
    }
    let n = items.len().max(1) as f64;
    scale_params(&mut total, 1.0 / n);
    Ok((loss / n, total))
}

/// Motion loss `λ_f · L1` (summed over steps and axes) of one sample; accumulates its gradient.
pub fn motion_sample_grad(
    params: &ModelParams,
    s: &TrainSample,
    config: &TrackerConfig,
    lc: &LossConfig,
    grads: &mut ModelParams,
) -> Result<f64> {
    let h = &s.history;
    let (mf, pe) = motion_queries(config);
    let (emb, attn_cache) =
        params
            .motion_attn
            .forward_cross(&mf, &pe, &h.memory, &h.memory_pe, &h.mask, None)?;
    let x = decode_inputs(&emb, &pe);
    let (out, dec_cache) = params.decode_head.forward_cached(&x, None)?;
    let mut loss = 0.0;
    let mut g = Tensor2D::zeros(config.tau_f, 2);
    for k in 0..config.tau_f {
        for c in 0..2 {
            let r = out.get(k, c) - s.target[k][c];
            loss += r.abs();
            g.set(k, c, lc.motion * r.signum());
        }
    }
    let dx = params
        .decode_head
        .backward(&dec_cache, &g, &mut grads.decode_head)?;
    let d_emb = dx.slice_cols(0, config.d);
    params
        .motion_attn
        .backward_into(&attn_cache, &d_emb, &mut grads.motion_attn)?;
    Ok(lc.motion * loss)
}

/// Regression targets in head-output space and the matching predictions.
fn box_terms(reg: &[f64], box_d: &Box3D, gt: &Box3D) -> ([f64; REG_OUTPUTS], [f64; REG_OUTPUTS]) {
    let pred = [
        reg[0],
        reg[1],
        reg[2],
        softplus(reg[3]),
        softplus(reg[4]),
        softplus(reg[5]),
        reg[6],
        reg[7],
        reg[8],
        reg[9],
    ];
    let target = [
        gt.center[0] - box_d.center[0],
        gt.center[1] - box_d.center[1],
        gt.center[2] - box_d.center[2],
        gt.size[0],
        gt.size[1],
        gt.size[2],
        gt.yaw.sin(),
        gt.yaw.cos(),
        gt.velocity[0],
        gt.velocity[1],
    ];
    (pred, target)
}

/// Refinement loss of one frame, `Σ (λ_box · L1 + λ_cls · focal) / N` with
/// the L1 summed over the ten regressed quantities;
/// accumulates gradients of the past-reasoning blocks and heads.
pub fn refine_frame_grad(
    params: &ModelParams,
    frame: &RefineFrame,
    config: &TrackerConfig,
    lc: &LossConfig,
    grads: &mut ModelParams,
) -> Result<f64> {
    let n = frame.tracks.len();
    if n == 0 {
        return Ok(0.0);
    }
    let d = config.d;
    let q_pe = Tensor2D::row_vector(&time_pe(0, d));
    let mut cf_caches = Vec::with_capacity(n);
    let mut tokens = Tensor2D::zeros(n, d);
    for (i, t) in frame.tracks.iter().enumerate() {
        let h = &t.history;
        let (y, c) = params.cross_frame.forward_cross(
            &Tensor2D::row_vector(&t.query),
            &q_pe,
            &h.memory,
            &h.memory_pe,
            &h.mask,
            None,
        )?;
        tokens.row_mut(i).copy_from_slice(y.row(0));
        cf_caches.push(c);
    }
    let queries: Vec<Query> = frame
        .tracks
        .iter()
        .map(|t| Query {
            track_ref: None,
            feature: Vec::new(),
            center: t.center,
            timestamp: 0,
        })
        .collect();
    let (pe, _) = object_pe(&queries, config)?;
    let (co, co_cache) = params.cross_object.forward_self(&tokens, &pe, None)?;
    let (reg, reg_cache) = params.reg_head.forward_cached(&co, None)?;
    let (cls, cls_cache) = params.cls_head.forward_cached(&co, None)?;

    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut d_reg = Tensor2D::zeros(n, REG_OUTPUTS);
    let mut d_cls = Tensor2D::zeros(n, 1);
    for (i, t) in frame.tracks.iter().enumerate() {
        let z = cls.get(i, 0);
        let label = u8::from(t.target.is_some());
        loss += lc.cls_r * focal_loss(sigmoid(z), label, lc.focal_alpha, lc.focal_gamma) * inv_n;
        d_cls.set(
            i,
            0,
            lc.cls_r * focal_loss_grad_logit(z, label, lc.focal_alpha, lc.focal_gamma) * inv_n,
        );
        if let Some(gt) = &t.target {
            let row = reg.row(i);
            let (pred, target) = box_terms(row, &t.box_d, gt);
            for k in 0..REG_OUTPUTS {
                let r = pred[k] - target[k];
                loss += lc.box_r * r.abs() * inv_n;
                let mut g = lc.box_r * r.signum() * inv_n;
                if (3..6).contains(&k) {
                    g *= sigmoid(row[k]);
                }
                d_reg.set(i, k, g);
            }
        }
    }

    let mut d_co = params
        .reg_head
        .backward(&reg_cache, &d_reg, &mut grads.reg_head)?;
    d_co.add_assign(
        &params
            .cls_head
            .backward(&cls_cache, &d_cls, &mut grads.cls_head)?,
    )?;
    let (d_tokens, _) =
        params
            .cross_object
            .backward_into(&co_cache, &d_co, &mut grads.cross_object)?;
    for (i, c) in cf_caches.iter().enumerate() {
        let g = d_tokens.slice_rows(i, i + 1);
        params
            .cross_frame
            .backward_into(c, &g, &mut grads.cross_frame)?;
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Final learning rate as a fraction of `lr`, reached by cosine decay;
    /// 1.0 keeps the rate constant.
    pub final_lr_frac: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 600,
            batch: 32,
            lr: 1e-2,
            momentum: 0.9,
            final_lr_frac: 1.0,
            clip_norm: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("steps", "must be ≥ 1"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch", "must be ≥ 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.final_lr_frac) {
            return Err(Error::config("final_lr_frac", "must be in [0, 1]"));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::config("clip_norm", "must be > 0"));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize) -> f64 {
        let frac = if self.steps <= 1 {
            0.0
        } else {
            step as f64 / (self.steps - 1) as f64
        };
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
        self.lr * (self.final_lr_frac + (1.0 - self.final_lr_frac) * cos)
    }
}

/// Mean training loss per step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossCurve {
    pub losses: Vec<f64>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            let _ = writeln!(s, "{i},{l:.10e}");
        }
        s
    }
}

fn momentum_step(
    params: &mut ModelParams,
    velocity: &mut ModelParams,
    grad: &ModelParams,
    lr: f64,
    mu: f64,
) {
    let mut gs: Vec<Vec<f64>> = Vec::new();
    grad.visit("", &mut |_, t| gs.push(t.data().to_vec()));
    let mut i = 0;
    velocity.visit_mut("", &mut |_, v| {
        for (vv, g) in v.data_mut().iter_mut().zip(&gs[i]) {
            *vv = mu * *vv + g;
        }
        i += 1;
    });
    let mut vs: Vec<Vec<f64>> = Vec::new();
    velocity.visit("", &mut |_, t| vs.push(t.data().to_vec()));
    let mut i = 0;
    params.visit_mut("", &mut |_, p| {
        for (pp, v) in p.data_mut().iter_mut().zip(&vs[i]) {
            *pp -= lr * v;
        }
        i += 1;
    });
}

fn optimize<T: Sync>(
    params: &ModelParams,
    data: &[T],
    tc: &TrainConfig,
    per_item: impl Fn(&ModelParams, &T, &mut ModelParams) -> Result<f64> + Sync + Send,
) -> Result<(ModelParams, LossCurve)> {
    tc.validate()?;
    if data.is_empty() {
        return Err(Error::Invalid("training dataset is empty".into()));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut p = params.clone();
    let mut velocity = zeros_like(params);
    let mut curve = LossCurve::default();
    for step in 0..tc.steps {
        let mut batch: Vec<&T> = Vec::with_capacity(tc.batch.min(data.len()));
        while batch.len() < tc.batch.min(data.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&data[order[cursor]]);
            cursor += 1;
        }
        let (loss, mut grad) = batch_grad(&p, &batch, |item, g| per_item(&p, item, g))?;
        if !loss.is_finite() {
            return Err(Error::Invalid(format!("training diverged at step {step}")));
        }
        if let Some(c) = tc.clip_norm {
            let norm = flatten(&grad).iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > c {
                scale_params(&mut grad, c / norm);
            }
        }
        curve.losses.push(loss);
        momentum_step(&mut p, &mut velocity, &grad, tc.lr_at(step), tc.momentum);
    }
    Ok((p, curve))
}

/// Trains the motion attention and decode head on the L1 movement loss.
pub fn train_motion_head(
    dataset: &[TrainSample],
    params: &ModelParams,
    config: &TrackerConfig,
    lc: &LossConfig,
    tc: &TrainConfig,
) -> Result<(ModelParams, LossCurve)> {
    optimize(params, dataset, tc, |p, s, g| {
        motion_sample_grad(p, s, config, lc, g)
    })
}

/// Trains both past-reasoning blocks and the refinement heads jointly.
pub fn train_refinement(
    frames: &[RefineFrame],
    params: &ModelParams,
    config: &TrackerConfig,
    lc: &LossConfig,
    tc: &TrainConfig,
) -> Result<(ModelParams, LossCurve)> {
    optimize(params, frames, tc, |p, f, g| {
        refine_frame_grad(p, f, config, lc, g)
    })
}

/// Mean motion loss over a dataset.
pub fn motion_loss(
    dataset: &[TrainSample],
    params: &ModelParams,
    config: &TrackerConfig,
    lc: &LossConfig,
) -> Result<f64> {
    let refs: Vec<&TrainSample> = dataset.iter().collect();
    Ok(batch_grad(params, &refs, |s, g| {
        motion_sample_grad(params, s, config, lc, g)
    })?
    .0)
}

pub fn refine_loss(
    frames: &[RefineFrame],
    params: &ModelParams,
    config: &TrackerConfig,
    lc: &LossConfig,
) -> Result<f64> {
    let refs: Vec<&RefineFrame> = frames.iter().collect();
    Ok(batch_grad(params, &refs, |f, g| {
        refine_frame_grad(params, f, config, lc, g)
    })?
    .0)
}

/// ADE/FDE of the learned forecasts and of the constant-velocity baseline
/// over the samples that have at least two history centers.
pub fn compare_forecasts(
    dataset: &[TrainSample],
    params: &ModelParams,
    config: &TrackerConfig,
    horizon: usize,
) -> Result<(AdeFde, AdeFde)> {
    let usable: Vec<&TrainSample> = dataset.iter().filter(|s| s.centers.len() >= 2).collect();
    let learned: Vec<TrajectoryForecast> = par::map(&usable, |s| {
        predict_motion_from(&s.history, s.origin, params, config, None)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let cv: Vec<TrajectoryForecast> = usable
        .iter()
        .map(|s| velocity_forecast_baseline(&s.centers, horizon))
        .collect::<Result<_>>()?;
    let gt: Vec<Vec<[f64; 2]>> = usable
        .iter()
        .map(|s| {
            let f = TrajectoryForecast {
                origin: s.origin,
                movements: s.target.clone(),
            };
            f.positions()
        })
        .collect();
    Ok((
        ade_fde(&learned, &gt, horizon)?,
        ade_fde(&cv, &gt, horizon)?,
    ))
}

fn refine_on() -> bool {
    true
}

/// Step counts and seeds of the alternating training schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub init_seed: u64,
    /// Collect-then-train rounds; each round re-runs the tracker with the
    /// current weights so recurrent inputs match what those weights produce.
    pub rounds: usize,
    /// Train the past-reasoning blocks and refinement heads; when off they
    /// keep their seeded values and only the motion head learns.
    #[serde(default = "refine_on")]
    pub refine_heads: bool,
    /// Per-round refinement training.
    pub refine: TrainConfig,
    /// Per-round motion-head training.
    pub motion: TrainConfig,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            init_seed: 0,
            rounds: 4,
            refine_heads: true,
            refine: TrainConfig {
                steps: 400,
                batch: 8,
                seed: 1,
                final_lr_frac: 0.0,
                clip_norm: Some(GRAD_CLIP),
                ..TrainConfig::default()
            },
            motion: TrainConfig {
                steps: 600,
                batch: 32,
                seed: 2,
                final_lr_frac: 0.0,
                clip_norm: Some(GRAD_CLIP),
                ..TrainConfig::default()
            },
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::config("schedule.rounds", "must be ≥ 1"));
        }
        self.refine.validate()?;
        self.motion.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub weights: Weights,
    pub refine_curve: LossCurve,
    pub motion_curve: LossCurve,
    pub no_past_curve: LossCurve,
}

fn round_config(tc: &TrainConfig, round: usize) -> TrainConfig {
    TrainConfig {
        seed: tc.seed.wrapping_add(1000 * round as u64),
        ..*tc
    }
}

/// Round 0 collects with velocity propagation and unrefined boxes; later
/// rounds run the full pipeline with the current weights. Each round trains
/// the past-reasoning blocks and heads, re-collects, then trains the motion
/// head. A second model without past reasoning gets its own motion head.
pub fn train_all(
    sims: &[Simulation],
    config: &TrackerConfig,
    lc: &LossConfig,
    schedule: &Schedule,
) -> Result<Trained> {
    config.validate()?;
    lc.validate()?;
    schedule.validate()?;
    let init = ModelParams::seeded(config, schedule.init_seed)?;
    let options = |past: bool, round: usize| PipelineOptions {
        query_refinement: past,
        track_refinement: past && round > 0,
        propagation: if round == 0 {
            Propagation::Velocity
        } else {
            Propagation::Learned
        },
    };

    let mut full = init.clone();
    let no_past = init;
    let mut refine_curve = LossCurve::default();
    let mut motion_curve = LossCurve::default();
    for round in 0..schedule.rounds {
        let p = if schedule.refine_heads {
            let data = collect_dataset(sims, &full, config, &options(true, round), 1)?;
            let (p, c) = train_refinement(
                &data.refine,
                &full,
                config,
                lc,
                &round_config(&schedule.refine, round),
            )?;
            refine_curve.losses.extend(c.losses);
            p
        } else {
            full
        };
        let data = collect_dataset(sims, &p, config, &options(true, round.max(1)), 1)?;
        let (p, c) = train_motion_head(
            &data.motion,
            &p,
            config,
            lc,
            &round_config(&schedule.motion, round),
        )?;
        motion_curve.losses.extend(c.losses);
        full = p;
        log::info!(
            "round {round}: {} refinement frames, {} motion samples",
            data.refine.len(),
            data.motion.len()
        );
    }

    // Unrefined queries do not depend on trained weights, so one collection
    // and a single longer run suffice.
    let data = collect_dataset(sims, &no_past, config, &options(false, 0), 1)?;
    let long = TrainConfig {
        steps: schedule.motion.steps * schedule.rounds,
        ..schedule.motion
    };
    let (no_past, no_past_curve) = train_motion_head(&data.motion, &no_past, config, lc, &long)?;
    Ok(Trained {
        weights: Weights { full, no_past },
        refine_curve,
        motion_curve,
        no_past_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cv_baseline_examples() {
        let still = velocity_forecast_baseline(&[[1.0, 1.0], [1.0, 1.0]], 8).unwrap();
        assert_eq!(still.movements, vec![[0.0, 0.0]; 8]);
        let moving = velocity_forecast_baseline(&[[0.0, 0.0], [3.0, 1.0], [4.0, 1.0]], 3).unwrap();
        assert_eq!(moving.movements, vec![[1.0, 0.0]; 3]);
        assert!(velocity_forecast_baseline(&[[0.0, 0.0]], 3).is_err());
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let tc = TrainConfig {
            steps: 11,
            final_lr_frac: 0.1,
            ..TrainConfig::default()
        };
        assert!((tc.lr_at(0) - 1e-2).abs() < 1e-15);
        assert!((tc.lr_at(10) - 1e-3).abs() < 1e-15);
        let flat = TrainConfig::default();
        assert_eq!(flat.lr_at(0), flat.lr_at(599));
    }
}
