//! Future reasoning: trajectory prediction from track history, one-step
//! query propagation and track extension through low-confidence frames.

use querytrack_nn::{FlopCounter, Tensor2D};

use crate::error::Result;
use crate::model::ModelParams;
use crate::past::{history_inputs, time_pe, HistoryInputs};
use crate::types::{Box3D, Query, QueryQueue, TrackState, TrackerConfig, TrajectoryForecast};

/// Per-frame score decay applied to coasted output boxes.
pub const COAST_SCORE_DECAY: f64 = 0.9;

/// Zero motion embeddings and their time encodings for offsets `1..=τ_f`.
pub fn motion_queries(config: &TrackerConfig) -> (Tensor2D, Tensor2D) {
    let d = config.d;
    let mut pe = Tensor2D::zeros(config.tau_f, d);
    for k in 0..config.tau_f {
        pe.row_mut(k).copy_from_slice(&time_pe(k as i64 + 1, d));
    }
    (Tensor2D::zeros(config.tau_f, d), pe)
}

/// Decode-head input: each motion embedding concatenated with the raw time
/// encoding of its step.
pub fn decode_inputs(embeddings: &Tensor2D, query_pe: &Tensor2D) -> Tensor2D {
    let (rows, d) = embeddings.shape();
    let mut x = Tensor2D::zeros(rows, 2 * d);
    for r in 0..rows {
        x.row_mut(r)[..d].copy_from_slice(embeddings.row(r));
        x.row_mut(r)[d..].copy_from_slice(query_pe.row(r));
    }
    x
}

pub fn predict_motion_from(
    history: &HistoryInputs,
    origin: u64,
    params: &ModelParams,
    config: &TrackerConfig,
    mut flops: Option<&mut FlopCounter>,
) -> Result<TrajectoryForecast> {
    let (mf, pe) = motion_queries(config);
    let (emb, _) = params.motion_attn.forward_cross(
        &mf,
        &pe,
        &history.memory,
        &history.memory_pe,
        &history.mask,
        flops.as_deref_mut(),
    )?;
    let out = params
        .decode_head
        .forward_batch(&decode_inputs(&emb, &pe), flops)?;
    Ok(TrajectoryForecast {
        origin,
        movements: (0..config.tau_f)
            .map(|k| [out.get(k, 0), out.get(k, 1)])
            .collect(),
    })
}

/// Forecast of `τ_f` per-frame movements from the track's history and its
/// refined current query.
pub fn predict_motion(
    queue: &QueryQueue,
    current: &Query,
    params: &ModelParams,
    config: &TrackerConfig,
    flops: Option<&mut FlopCounter>,
) -> Result<TrajectoryForecast> {
    let h = history_inputs(queue, current, config);
    predict_motion_from(&h, current.timestamp, params, config, flops)
}

/// Constant-velocity forecast: `velocity · period` at every step.
pub fn velocity_forecast(
    velocity: [f64; 2],
    period_s: f64,
    tau_f: usize,
    origin: u64,
) -> TrajectoryForecast {
    TrajectoryForecast {
        origin,
        movements: vec![[velocity[0] * period_s, velocity[1] * period_s]; tau_f],
    }
}

/// Advances a track by one frame: the center moves by the first forecast
/// step, the forecast shifts left with its last step duplicated, and the
/// feature is carried unchanged.
pub fn propagate(track: &TrackState) -> TrackState {
    let step = track
        .forecast
        .movements
        .first()
        .copied()
        .unwrap_or([0.0; 2]);
    let c = track.query.center;
    TrackState {
        query: Query {
            center: [c[0] + step[0], c[1] + step[1], c[2]],
            timestamp: track.query.timestamp + 1,
            ..track.query.clone()
        },
        forecast: track.forecast.shifted(),
        ..track.clone()
    }
}

pub fn propagate_all(tracks: &[TrackState]) -> Vec<TrackState> {
    tracks.iter().map(propagate).collect()
}

/// Refined outputs for one track at the current frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub query: Query,
    pub box_r: Box3D,
    pub forecast: TrajectoryForecast,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Extension {
    /// Confident frame: refined outputs adopted, extension counter reset.
    Updated(TrackState),
    /// Low confidence: refined outputs discarded, track coasts on its frozen
    /// forecast.
    Coasted(TrackState),
    Terminated,
}

/// One frame of the extension rule for `prev` (the track at the previous
/// frame) given this frame's refined outputs.
pub fn extension_step(prev: &TrackState, refined: &Refined, config: &TrackerConfig) -> Extension {
    if refined.box_r.score >= config.theta_ext {
        let mut query = refined.query.clone();
        query.center = refined.box_r.center;
        query.track_ref = Some(prev.id);
        Extension::Updated(TrackState {
            id: prev.id,
            active: true,
            extension_count: 0,
            last_confident_frame: query.timestamp,
            query,
            forecast: refined.forecast.clone(),
            last_box: refined.box_r,
        })
    } else if prev.extension_count < config.tau_e {
        let mut next = propagate(prev);
        next.extension_count += 1;
        next.active = false;
        Extension::Coasted(next)
    } else {
        Extension::Terminated
    }
}

/// Score reported for a track coasted `extension_count` frames.
pub fn coasted_score(last_score: f64, extension_count: u32, theta_out: f64) -> f64 {
    (last_score * COAST_SCORE_DECAY.powi(extension_count as i32)).max(theta_out)
}

/// Output box of a track: the last confident box, moved to the current
/// center and with its score decayed while coasting.
pub fn output_box(track: &TrackState, config: &TrackerConfig) -> Box3D {
    if track.extension_count == 0 {
        return track.last_box;
    }
    Box3D {
        center: track.query.center,
        score: coasted_score(
            track.last_box.score,
            track.extension_count,
            config.theta_out,
        ),
        ..track.last_box
    }
}
