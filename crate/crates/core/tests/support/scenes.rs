//! Hand-built noiseless scenarios and heads that are exact for them.

#![allow(dead_code)]

use querytrack::model::ModelParams;
use querytrack::sim::{AgentSpec, MotionModel, Occlusion, ScenarioConfig, SensorSpec};
use querytrack::types::TrackerConfig;

pub const SIZE: [f64; 3] = [4.5, 1.9, 1.6];

pub fn agent(x: f64, y: f64, yaw: f64, speed: f64, feature_seed: u64) -> AgentSpec {
    AgentSpec {
        x,
        y,
        yaw,
        motion: MotionModel::ConstantVelocity,
        speed,
        turn_rate: 0.0,
        waypoints: Vec::new(),
        size: SIZE,
        class: 0,
        feature_seed,
    }
}

/// No position, score or feature noise, no dropout and no clutter.
pub fn noiseless(
    frames: u64,
    agents: Vec<AgentSpec>,
    occlusions: Vec<Occlusion>,
) -> ScenarioConfig {
    ScenarioConfig {
        frames,
        period_s: 0.5,
        agents,
        sensor: SensorSpec {
            sigma_xy: 0.0,
            sigma_z: 0.0,
            sigma_vel: 0.0,
            sigma_yaw: 0.0,
            score_spread: 0.0,
            dropout: 0.0,
            fp_rate: 0.0,
            feature_sigma: 0.0,
            occlusions,
            ..SensorSpec::default()
        },
        seed: 1,
    }
}

fn inverse_softplus(y: f64) -> f64 {
    y.exp_m1().ln()
}

/// Seeded weights whose output layers are replaced by constants: the decode
/// head always forecasts `velocity · period` per frame and the refinement
/// head returns a zero center residual, the true size, yaw 0, `velocity` and
/// a confident score. On a scenario where every agent moves with `velocity`
/// along yaw 0 this is what perfectly trained heads produce.
pub fn perfect_cv_params(config: &TrackerConfig, seed: u64, velocity: [f64; 2]) -> ModelParams {
    let mut p = ModelParams::seeded(config, seed).unwrap();
    let step = [velocity[0] * config.period_s, velocity[1] * config.period_s];
    let decode = p.decode_head.layers.last_mut().unwrap();
    decode.weight.data_mut().fill(0.0);
    decode.bias.data_mut().copy_from_slice(&step);

    let reg = p.reg_head.layers.last_mut().unwrap();
    reg.weight.data_mut().fill(0.0);
    let s = SIZE.map(inverse_softplus);
    let bias = [
        0.0,
        0.0,
        0.0,
        s[0],
        s[1],
        s[2],
        0.0,
        1.0,
        velocity[0],
        velocity[1],
    ];
    reg.bias.data_mut().copy_from_slice(&bias);

    let cls = p.cls_head.layers.last_mut().unwrap();
    cls.weight.data_mut().fill(0.0);
    cls.bias.data_mut().fill(3.0);
    p
}
