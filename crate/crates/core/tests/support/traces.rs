//! Frame-by-frame traces of the track-extension rule through the full
//! tracker step.

use querytrack::io::FrameDetections;
use querytrack::model::ModelParams;
use querytrack::sim::latent_feature;
use querytrack::tracker::{
    step, EventKind, PipelineOptions, Propagation, StepOutput, TrackerState,
};
use querytrack::types::{Box3D, TrackerConfig};

fn det(frame: u64, center: [f64; 3], score: f64, d: usize) -> FrameDetections {
    FrameDetections {
        frame,
        boxes: vec![Box3D {
            center,
            size: [4.0, 2.0, 1.6],
            yaw: 0.0,
            velocity: [2.0, 0.0],
            score,
            class: 0,
        }],
        features: vec![latent_feature(frame, d)],
    }
}

fn event(out: &StepOutput, id: u64) -> Option<(EventKind, u32)> {
    out.events
        .iter()
        .find(|e| e.id == id)
        .map(|e| (e.kind, e.extension_count))
}

fn expect(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

/// Track refinement is off so the confidence seen by the extension rule is
/// the detection score itself.
fn options() -> PipelineOptions {
    PipelineOptions {
        query_refinement: true,
        track_refinement: false,
        propagation: Propagation::Learned,
    }
}

fn go(
    state: &mut TrackerState,
    det: FrameDetections,
    params: &ModelParams,
    config: &TrackerConfig,
) -> Result<StepOutput, String> {
    step(state, &det, params, config, &options()).map_err(|e| e.to_string())
}

/// Runs the frames in `gaps` (a low detection score, or nothing) starting at
/// `start` and checks each coasted position against the prefix sums of the
/// forecast frozen at the last update.
fn coast(
    state: &mut TrackerState,
    gaps: &[Option<f64>],
    start: u64,
    params: &ModelParams,
    config: &TrackerConfig,
) -> Result<(), String> {
    let t = &state.tracks[0];
    let base = t.query.center;
    let frozen = t.forecast.movements.clone();
    let last_score = t.last_box.score;
    let (mut x, mut y) = (base[0], base[1]);
    for (k, low) in gaps.iter().enumerate() {
        let f = start + k as u64;
        x += frozen[k][0];
        y += frozen[k][1];
        let d = match low {
            Some(score) => det(f, [x + 0.05, y, 0.8], *score, config.d),
            None => FrameDetections::empty(f),
        };
        let out = go(state, d, params, config)?;
        let l = k as u32 + 1;
        expect(event(&out, 0) == Some((EventKind::Coasted, l)), || {
            format!("frame {f}: {:?}", out.events)
        })?;
        let tr = &state.tracks[0];
        expect(tr.query.center[0] == x && tr.query.center[1] == y, || {
            format!(
                "frame {f}: center {:?} is not the forecast prefix sum ({x}, {y})",
                tr.query.center
            )
        })?;
        let (_, b) = out
            .boxes
            .iter()
            .find(|(id, _)| *id == 0)
            .ok_or(format!("frame {f}: no output"))?;
        let want = (last_score * 0.9f64.powi(l as i32)).max(config.theta_out);
        expect(
            b.center == tr.query.center && (b.score - want).abs() < 1e-15,
            || format!("frame {f}: coasted box {b:?}"),
        )?;
    }
    Ok(())
}

/// Walks one object through every branch: updates, coasting on missing and
/// on low-score detections, re-acquisition that resets the counter, and
/// termination once the counter reaches `τ_e`. Returns the number of
/// checked frames.
pub fn extension_branches(seed: u64) -> Result<usize, String> {
    let config = TrackerConfig::default();
    let params = ModelParams::seeded(&config, seed).map_err(|e| e.to_string())?;
    let d = config.d;
    let mut state = TrackerState::new();

    // confident frames: born then updated, counter stays 0
    let out = go(
        &mut state,
        det(0, [0.0, 0.0, 0.8], 0.9, d),
        &params,
        &config,
    )?;
    expect(event(&out, 0) == Some((EventKind::Born, 0)), || {
        format!("frame 0: {:?}", out.events)
    })?;
    for f in 1..4u64 {
        let out = go(
            &mut state,
            det(f, [f as f64, 0.0, 0.8], 0.9, d),
            &params,
            &config,
        )?;
        expect(event(&out, 0) == Some((EventKind::Updated, 0)), || {
            format!("frame {f}: {:?}", out.events)
        })?;
    }

    // two missing frames
    coast(&mut state, &[None, None], 4, &params, &config)?;
    // re-acquired near the coasted position: same id, counter reset
    let c = state.tracks[0].query.center;
    let out = go(
        &mut state,
        det(6, [c[0] + 0.3, c[1], 0.8], 0.9, d),
        &params,
        &config,
    )?;
    expect(event(&out, 0) == Some((EventKind::Updated, 0)), || {
        format!("frame 6: {:?}", out.events)
    })?;
    expect(state.tracks.len() == 1 && state.next_id == 1, || {
        "frame 6: re-acquisition spawned a new id".into()
    })?;
    expect(state.tracks[0].query.center[0] == c[0] + 0.3, || {
        "frame 6: update did not adopt the detection".into()
    })?;
    // a matched but low-score detection coasts too, then misses up to τ_e
    let mut gaps = vec![Some(0.3)];
    gaps.extend(std::iter::repeat_n(None, config.tau_e as usize - 1));
    coast(&mut state, &gaps, 7, &params, &config)?;
    let f = 7 + config.tau_e as u64;
    let out = go(&mut state, FrameDetections::empty(f), &params, &config)?;
    expect(
        event(&out, 0) == Some((EventKind::Terminated, config.tau_e)),
        || format!("frame {f}: {:?}", out.events),
    )?;
    expect(state.tracks.is_empty() && out.boxes.is_empty(), || {
        format!("frame {f}: track survived")
    })?;
    expect(!state.queues.contains_key(&0), || {
        "terminated track kept its queue".into()
    })?;
    Ok(f as usize + 1)
}

/// Without extension a single missed frame ends the track.
pub fn no_extension_terminates(seed: u64) -> Result<(), String> {
    let config = TrackerConfig {
        tau_e: 0,
        ..TrackerConfig::default()
    };
    let params = ModelParams::seeded(&config, seed).map_err(|e| e.to_string())?;
    let mut state = TrackerState::new();
    go(
        &mut state,
        det(0, [0.0, 0.0, 0.8], 0.9, config.d),
        &params,
        &config,
    )?;
    let out = go(&mut state, FrameDetections::empty(1), &params, &config)?;
    expect(event(&out, 0) == Some((EventKind::Terminated, 0)), || {
        format!("{:?}", out.events)
    })?;
    // the object coming back is a new identity
    let out = go(
        &mut state,
        det(2, [0.0, 0.0, 0.8], 0.9, config.d),
        &params,
        &config,
    )?;
    expect(event(&out, 1) == Some((EventKind::Born, 0)), || {
        format!("{:?}", out.events)
    })
}
