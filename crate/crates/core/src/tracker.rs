//! Frame loop: propagate, decode, past reasoning, future reasoning, life
//! cycle, output.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::future::{
    extension_step, output_box, predict_motion, propagate_all, velocity_forecast, Extension,
    Refined,
};
use crate::io::{group_frames, DetectionRecord, ForecastRecord, FrameDetections, TrackRecord};
use crate::model::ModelParams;
use crate::past::{cross_frame_refine, cross_object_refine, refine_track};
use crate::types::{
    center_distance_2d, Box3D, Query, QueryQueue, TrackState, TrackerConfig, TrajectoryForecast,
    EVIDENCE_DIMS,
};

/// Scale applied to velocities and sizes in the evidence channels.
const EVIDENCE_SCALE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagation {
    /// Learned trajectory forecast.
    Learned,
    /// Refined box velocity times the frame period.
    Velocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineOptions {
    pub query_refinement: bool,
    pub track_refinement: bool,
    pub propagation: Propagation,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            query_refinement: true,
            track_refinement: true,
            propagation: Propagation::Learned,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    /// Live tracks in id order, each at `frame`.
    pub tracks: Vec<TrackState>,
    pub queues: BTreeMap<u64, QueryQueue>,
    pub next_id: u64,
    pub frame: Option<u64>,
}

impl TrackerState {
    pub fn new() -> Self {
        Self {
            tracks: Vec::new(),
            queues: BTreeMap::new(),
            next_id: 0,
            frame: None,
        }
    }
}

impl Default for TrackerState {
    fn default() -> Self {
        Self::new()
    }
}

/// Decoder-stub result for one frame. `track_queries`/`track_boxes` align
/// with the propagated tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct StubOutput {
    pub track_queries: Vec<Query>,
    pub track_boxes: Vec<Box3D>,
    /// Detection index claimed by each track.
    pub assignment: Vec<Option<usize>>,
    pub births: Vec<(Query, Box3D)>,
}

fn write_evidence(feature: &mut [f64], b: &Box3D, offset: [f64; 2]) {
    let d = feature.len();
    let tail = &mut feature[d - EVIDENCE_DIMS..];
    tail.copy_from_slice(&[
        offset[0],
        offset[1],
        b.velocity[0] / EVIDENCE_SCALE,
        b.velocity[1] / EVIDENCE_SCALE,
        b.score,
        b.size[0] / EVIDENCE_SCALE,
        b.size[1] / EVIDENCE_SCALE,
        b.size[2] / EVIDENCE_SCALE,
        b.yaw.sin(),
        b.yaw.cos(),
    ]);
}

/// Detection indices by descending score, ties broken by position so the
/// result does not depend on log order.
fn detection_order(boxes: &[Box3D]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        let (ba, bb) = (&boxes[a], &boxes[b]);
        bb.score
            .total_cmp(&ba.score)
            .then(ba.center[0].total_cmp(&bb.center[0]))
            .then(ba.center[1].total_cmp(&bb.center[1]))
            .then(ba.center[2].total_cmp(&bb.center[2]))
    });
    order
}

/// Surrogate decoder: each detection, by descending score, claims the
/// nearest unclaimed same-class track within the gate. Matched tracks blend
/// features and take the detection box; unmatched tracks keep the propagated
/// box with score 0; unclaimed detections above `θ_init` become births.
pub fn decode_stub(
    tracks: &[TrackState],
    det: &FrameDetections,
    config: &TrackerConfig,
) -> Result<StubOutput> {
    for f in &det.features {
        if f.len() != config.d {
            return Err(Error::config(
                "detections.feature",
                format!("length {} does not match d = {}", f.len(), config.d),
            ));
        }
    }
    let mut assignment: Vec<Option<usize>> = vec![None; tracks.len()];
    let mut claimed_det = vec![false; det.len()];
    for j in detection_order(&det.boxes) {
        let b = &det.boxes[j];
        let mut best: Option<(usize, f64)> = None;
        for (i, t) in tracks.iter().enumerate() {
            if assignment[i].is_some() || t.last_box.class != b.class {
                continue;
            }
            let prop = Box3D {
                center: t.query.center,
                ..t.last_box
            };
            let dist = center_distance_2d(&prop, b);
            if dist <= config.gate && best.is_none_or(|(_, bd)| dist < bd) {
                best = Some((i, dist));
            }
        }
        if let Some((i, _)) = best {
            assignment[i] = Some(j);
            claimed_det[j] = true;
        }
    }

    let mut track_queries = Vec::with_capacity(tracks.len());
    let mut track_boxes = Vec::with_capacity(tracks.len());
    for (t, a) in tracks.iter().zip(&assignment) {
        let c = t.query.center;
        match *a {
            Some(j) => {
                let b = det.boxes[j];
                let mut feature: Vec<f64> = t
                    .query
                    .feature
                    .iter()
                    .zip(&det.features[j])
                    .map(|(p, q)| (1.0 - config.beta) * p + config.beta * q)
                    .collect();
                let offset = [
                    (b.center[0] - c[0]) / config.gate,
                    (b.center[1] - c[1]) / config.gate,
                ];
                write_evidence(&mut feature, &b, offset);
                track_queries.push(Query {
                    track_ref: Some(t.id),
                    feature,
                    center: b.center,
                    timestamp: det.frame,
                });
                track_boxes.push(b);
            }
            None => {
                let mut feature = t.query.feature.clone();
                let d = feature.len();
                feature[d - EVIDENCE_DIMS..].fill(0.0);
                track_queries.push(Query {
                    track_ref: Some(t.id),
                    feature,
                    center: c,
                    timestamp: det.frame,
                });
                track_boxes.push(Box3D {
                    center: c,
                    score: 0.0,
                    ..t.last_box
                });
            }
        }
    }

    let births = detection_order(&det.boxes)
        .into_iter()
        .filter(|&j| !claimed_det[j] && det.boxes[j].score > config.theta_init)
        .map(|j| {
            let b = det.boxes[j];
            let mut feature = det.features[j].clone();
            write_evidence(&mut feature, &b, [0.0, 0.0]);
            (
                Query {
                    track_ref: None,
                    feature,
                    center: b.center,
                    timestamp: det.frame,
                },
                b,
            )
        })
        .collect();

    Ok(StubOutput {
        track_queries,
        track_boxes,
        assignment,
        births,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Born,
    Updated,
    Coasted,
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackEvent {
    pub id: u64,
    pub kind: EventKind,
    pub extension_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub frame: u64,
    /// Emitted boxes in id order.
    pub boxes: Vec<(u64, Box3D)>,
    /// Forecasts made this frame by born or updated tracks.
    pub forecasts: Vec<(u64, TrajectoryForecast)>,
    pub events: Vec<TrackEvent>,
}

/// Intermediate per-frame quantities, exposed for training and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTrace {
    pub propagated: Vec<TrackState>,
    pub stub: StubOutput,
    /// Refined queries and boxes, aligned with `propagated`.
    pub refined_queries: Vec<Query>,
    pub refined_boxes: Vec<Box3D>,
}

fn select_output(tracks: &[TrackState], config: &TrackerConfig) -> Vec<(u64, Box3D)> {
    let mut out: Vec<(u64, Box3D)> = tracks
        .iter()
        .map(|t| (t.id, output_box(t, config)))
        .filter(|(_, b)| b.score >= config.theta_out)
        .collect();
    if out.len() > config.max_output {
        out.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)));
        out.truncate(config.max_output);
        out.sort_by_key(|(id, _)| *id);
    }
    out
}

fn forecast_for(
    queue: &QueryQueue,
    query: &Query,
    b: &Box3D,
    params: &ModelParams,
    config: &TrackerConfig,
    options: &PipelineOptions,
) -> Result<TrajectoryForecast> {
    match options.propagation {
        Propagation::Learned => predict_motion(queue, query, params, config, None),
        Propagation::Velocity => Ok(velocity_forecast(
            b.velocity,
            config.period_s,
            config.tau_f,
            query.timestamp,
        )),
    }
}

/// Propagation, decoding and past reasoning for frame `det.frame`, without
/// touching the state.
pub fn refine_frame(
    state: &TrackerState,
    det: &FrameDetections,
    params: &ModelParams,
    config: &TrackerConfig,
    options: &PipelineOptions,
) -> Result<FrameTrace> {
    let propagated = propagate_all(&state.tracks);
    let stub = decode_stub(&propagated, det, config)?;
    let refined_queries = if options.query_refinement {
        let per_track: Vec<Query> = stub
            .track_queries
            .iter()
            .map(|q| {
                let queue = &state.queues[&q.track_ref.expect("track query")];
                cross_frame_refine(queue, q, params, config, None)
            })
            .collect::<Result<_>>()?;
        cross_object_refine(&per_track, params, config, None)?
    } else {
        stub.track_queries.clone()
    };
    let refined_boxes = if options.track_refinement {
        refined_queries
            .iter()
            .zip(&stub.track_boxes)
            .map(|(q, b)| refine_track(q, b, params).map(|(r, _)| r))
            .collect::<Result<_>>()?
    } else {
        stub.track_boxes.clone()
    };
    Ok(FrameTrace {
        propagated,
        stub,
        refined_queries,
        refined_boxes,
    })
}

/// One tracker frame.
pub fn step(
    state: &mut TrackerState,
    det: &FrameDetections,
    params: &ModelParams,
    config: &TrackerConfig,
    options: &PipelineOptions,
) -> Result<StepOutput> {
    Ok(step_traced(state, det, params, config, options)?.0)
}

pub fn step_traced(
    state: &mut TrackerState,
    det: &FrameDetections,
    params: &ModelParams,
    config: &TrackerConfig,
    options: &PipelineOptions,
) -> Result<(StepOutput, FrameTrace)> {
    if let Some(prev) = state.frame {
        match det.frame.cmp(&(prev + 1)) {
            Ordering::Less => {
                return Err(Error::Invalid(format!(
                    "frame {} does not follow frame {prev}",
                    det.frame
                )));
            }
            Ordering::Greater => {
                for f in prev + 1..det.frame {
                    step_traced(state, &FrameDetections::empty(f), params, config, options)?;
                }
            }
            Ordering::Equal => {}
        }
    }
    let t = det.frame;
    let trace = refine_frame(state, det, params, config, options)?;

    let mut events = Vec::new();
    let mut forecasts = Vec::new();
    let mut next_tracks = Vec::with_capacity(state.tracks.len() + trace.stub.births.len());
    for (i, prev) in state.tracks.iter().enumerate() {
        let (q, b) = (&trace.refined_queries[i], &trace.refined_boxes[i]);
        let queue = state.queues.get_mut(&prev.id).expect("queue per track");
        let forecast = if b.score >= config.theta_ext {
            forecast_for(queue, q, b, params, config, options)?
        } else {
            TrajectoryForecast::zeros(t, config.tau_f)
        };
        let refined = Refined {
            query: q.clone(),
            box_r: *b,
            forecast,
        };
        match extension_step(prev, &refined, config) {
            Extension::Updated(next) => {
                queue.push(next.query.clone())?;
                queue.evict_before(t + 1);
                forecasts.push((next.id, next.forecast.clone()));
                events.push(TrackEvent {
                    id: next.id,
                    kind: EventKind::Updated,
                    extension_count: 0,
                });
                next_tracks.push(next);
            }
            Extension::Coasted(next) => {
                queue.evict_before(t + 1);
                events.push(TrackEvent {
                    id: next.id,
                    kind: EventKind::Coasted,
                    extension_count: next.extension_count,
                });
                next_tracks.push(next);
            }
            Extension::Terminated => {
                state.queues.remove(&prev.id);
                events.push(TrackEvent {
                    id: prev.id,
                    kind: EventKind::Terminated,
                    extension_count: prev.extension_count,
                });
            }
        }
    }

    for (q, b) in &trace.stub.births {
        let id = state.next_id;
        state.next_id += 1;
        let query = Query {
            track_ref: Some(id),
            ..q.clone()
        };
        let mut queue = QueryQueue::new(config.tau_h);
        let forecast = forecast_for(&queue, &query, b, params, config, options)?;
        queue.push(query.clone())?;
        state.queues.insert(id, queue);
        forecasts.push((id, forecast.clone()));
        events.push(TrackEvent {
            id,
            kind: EventKind::Born,
            extension_count: 0,
        });
        next_tracks.push(TrackState {
            id,
            active: true,
            extension_count: 0,
            last_confident_frame: t,
            query,
            forecast,
            last_box: *b,
        });
    }

    state.tracks = next_tracks;
    state.frame = Some(t);
    let boxes = select_output(&state.tracks, config);
    Ok((
        StepOutput {
            frame: t,
            boxes,
            forecasts,
            events,
        },
        trace,
    ))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceOutput {
    pub tracks: Vec<TrackRecord>,
    pub forecasts: Vec<ForecastRecord>,
}

/// Runs the tracker over a whole detections log.
pub fn run_sequence(
    records: &[DetectionRecord],
    params: &ModelParams,
    config: &TrackerConfig,
    options: &PipelineOptions,
) -> Result<SequenceOutput> {
    run_frames(&group_frames(records, None), params, config, options)
}

pub fn run_frames(
    frames: &[FrameDetections],
    params: &ModelParams,
    config: &TrackerConfig,
    options: &PipelineOptions,
) -> Result<SequenceOutput> {
    config.validate()?;
    params.check_config(config)?;
    let mut state = TrackerState::new();
    let mut out = SequenceOutput::default();
    for det in frames {
        let s = step(&mut state, det, params, config, options)?;
        out.tracks.extend(
            s.boxes
                .iter()
                .map(|(id, b)| TrackRecord::new(s.frame, *id, b)),
        );
        out.forecasts
            .extend(s.forecasts.into_iter().map(|(id, f)| ForecastRecord {
                frame: s.frame,
                id,
                movements: f.movements,
            }));
    }
    Ok(out)
}
