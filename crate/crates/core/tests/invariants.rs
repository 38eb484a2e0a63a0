use std::f64::consts::PI;

use proptest::prelude::*;
use querytrack::baselines::TbdConfig;
use querytrack::io::{DetectionRecord, ForecastRecord, TrackRecord};
use querytrack::manifest::RunManifest;
use querytrack::model::ModelParams;
use querytrack::past::{cross_frame_refine, cross_object_refine};
use querytrack::sim::{scenario_suite, ScenarioConfig, Suite};
use querytrack::types::{
    center_distance_2d, normalize_yaw, Box3D, LossConfig, Query, QueryQueue, TrackerConfig,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// decode then encode reproduces the encoded text exactly.
fn round_trips<T: Serialize + DeserializeOwned>(value: &T) -> Result<(), TestCaseError> {
    let text = serde_json::to_string(value).unwrap();
    let back: T = serde_json::from_str(&text).unwrap();
    prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
    Ok(())
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6..1e6f64,
        any::<f64>().prop_filter("finite", |v| v.is_finite())
    ]
}

fn bx(c: [f64; 3]) -> Box3D {
    Box3D {
        center: c,
        size: [4.0, 2.0, 1.6],
        yaw: 0.0,
        velocity: [0.0; 2],
        score: 0.9,
        class: 0,
    }
}

fn query(center: [f64; 3], feature: Vec<f64>, t: u64) -> Query {
    Query {
        track_ref: Some(0),
        feature,
        center,
        timestamp: t,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn records_round_trip(v in prop::collection::vec(finite(), 12), frame in any::<u32>(), id in any::<u32>(), class in 0u32..3, feat in prop::collection::vec(finite(), 0..8)) {
        round_trips(&DetectionRecord {
            frame: frame as u64, x: v[0], y: v[1], z: v[2], l: v[3], w: v[4], h: v[5], yaw: v[6],
            vx: v[7], vy: v[8], score: v[9], class, feature: feat,
        })?;
        round_trips(&TrackRecord {
            frame: frame as u64, id: id as u64, x: v[0], y: v[1], z: v[2], l: v[3], w: v[4], h: v[5],
            yaw: v[6], vx: v[7], vy: v[8], score: v[9], class,
        })?;
        round_trips(&ForecastRecord { frame: frame as u64, id: id as u64, movements: vec![[v[10], v[11]]; 3] })?;
    }

    #[test]
    fn configs_round_trip(seed in 0u64..1000, d in 6usize..20, gate in 0.1..5.0f64, thresh in 0.0..1.0f64) {
        for suite in Suite::ALL {
            for c in scenario_suite(suite, 1, seed).unwrap() {
                round_trips::<ScenarioConfig>(&c)?;
            }
        }
        round_trips(&TrackerConfig { d: 2 * d, gate, theta_out: thresh, ..TrackerConfig::default() })?;
        round_trips(&TbdConfig { gate, score_thresh: thresh, ..TbdConfig::default() })?;
        round_trips(&LossConfig::default())?;
        round_trips(&RunManifest::new("track", vec!["--seed".into(), seed.to_string()], serde_json::json!({ "gate": gate }), Some(seed)))?;
    }

    #[test]
    fn yaw_normalization_is_idempotent(theta in -1e4..1e4f64) {
        let once = normalize_yaw(theta).unwrap();
        prop_assert!(once > -PI && once <= PI);
        prop_assert_eq!(normalize_yaw(once).unwrap(), once);
    }

    #[test]
    fn center_distance_matches_formula(a in prop::array::uniform3(-100.0..100.0f64), b in prop::array::uniform3(-100.0..100.0f64)) {
        let d = center_distance_2d(&bx(a), &bx(b));
        let expect = ((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])).sqrt();
        prop_assert!((d - expect).abs() <= 1e-12 * expect.max(1.0));
        prop_assert_eq!(d, center_distance_2d(&bx(b), &bx(a)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn query_refinement_never_moves_centers(
        seed in 0u64..1000,
        centers in prop::collection::vec(prop::array::uniform3(-60.0..60.0f64), 1..6),
        feats in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 32), 6),
    ) {
        let config = TrackerConfig::default();
        let params = ModelParams::seeded(&config, seed).unwrap();
        let qs: Vec<Query> = centers.iter().zip(&feats).map(|(c, f)| query(*c, f.clone(), 5)).collect();
        let mut queue = QueryQueue::new(config.tau_h);
        queue.push(query([0.0; 3], feats[5].clone(), 4)).unwrap();
        for q in &qs {
            let r = cross_frame_refine(&queue, q, &params, &config, None).unwrap();
            prop_assert_eq!(r.center, q.center);
        }
        for (r, q) in cross_object_refine(&qs, &params, &config, None).unwrap().iter().zip(&qs) {
            prop_assert_eq!(r.center, q.center);
            prop_assert_eq!(r.timestamp, q.timestamp);
        }
    }
}
