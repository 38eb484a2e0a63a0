//! Deterministic bird's-eye-view world: agent kinematics, a noisy detector
//! with occlusions, dropouts and clutter, and the standard scenario suites.

use std::f64::consts::{PI, TAU};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, Poisson};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{DetectionRecord, TrackRecord};
use crate::types::{normalize_yaw, Box3D};

pub const CAR: u32 = 0;
pub const PEDESTRIAN: u32 = 1;
const CAR_SIZE: [f64; 3] = [4.5, 1.9, 1.6];
const PED_SIZE: [f64; 3] = [0.8, 0.8, 1.8];
/// Distance at which a waypoint counts as reached.
const WAYPOINT_RADIUS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionModel {
    ConstantVelocity,
    ConstantTurnRate,
    Waypoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub motion: MotionModel,
    pub speed: f64,
    #[serde(default)]
    pub turn_rate: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub waypoints: Vec<[f64; 2]>,
    pub size: [f64; 3],
    pub class: u32,
    pub feature_seed: u64,
}

/// Inclusive frame range during which an agent produces no detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occlusion {
    pub agent: usize,
    pub start: u64,
    pub end: u64,
}

impl Occlusion {
    pub fn len(&self) -> u64 {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn covers(&self, agent: usize, frame: u64) -> bool {
        self.agent == agent && (self.start..=self.end).contains(&frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSpec {
    pub sigma_xy: f64,
    pub sigma_z: f64,
    pub sigma_vel: f64,
    pub sigma_yaw: f64,
    pub score_mean: f64,
    pub score_spread: f64,
    pub dropout: f64,
    /// Mean false positives per frame.
    pub fp_rate: f64,
    pub fp_score_min: f64,
    pub fp_score_max: f64,
    /// False positives are placed uniformly in `[−fp_extent, fp_extent]²`.
    pub fp_extent: f64,
    pub feature_sigma: f64,
    pub feature_dim: usize,
    pub occlusions: Vec<Occlusion>,
    /// Camera sectors around the origin, for hand-off bookkeeping.
    pub cameras: usize,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            sigma_xy: 0.3,
            sigma_z: 0.05,
            sigma_vel: 0.3,
            sigma_yaw: 0.05,
            score_mean: 0.75,
            score_spread: 0.1,
            dropout: 0.05,
            fp_rate: 0.5,
            fp_score_min: 0.1,
            fp_score_max: 0.5,
            fp_extent: 25.0,
            feature_sigma: 0.1,
            feature_dim: 32,
            occlusions: Vec::new(),
            cameras: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub frames: u64,
    pub period_s: f64,
    pub agents: Vec<AgentSpec>,
    pub sensor: SensorSpec,
    pub seed: u64,
}

fn nonneg(path: String, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(
            path,
            format!("must be finite and ≥ 0, got {v}"),
        ))
    }
}

fn prob(path: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be in [0, 1], got {v}")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::config("frames", "must be ≥ 1"));
        }
        if !(self.period_s > 0.0 && self.period_s.is_finite()) {
            return Err(Error::config("period_s", "must be > 0"));
        }
        for (i, a) in self.agents.iter().enumerate() {
            let p = |f: &str| format!("agents[{i}].{f}");
            for (f, v) in [
                ("x", a.x),
                ("y", a.y),
                ("yaw", a.yaw),
                ("turn_rate", a.turn_rate),
            ] {
                if !v.is_finite() {
                    return Err(Error::config(p(f), "must be finite"));
                }
            }
            nonneg(p("speed"), a.speed)?;
            if a.size.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                return Err(Error::config(p("size"), "all extents must be > 0"));
            }
            if a.motion == MotionModel::Waypoint && a.waypoints.is_empty() {
                return Err(Error::config(
                    p("waypoints"),
                    "waypoint motion needs at least one waypoint",
                ));
            }
            if a.waypoints.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::config(p("waypoints"), "must be finite"));
            }
        }
        let s = &self.sensor;
        for (f, v) in [
            ("sigma_xy", s.sigma_xy),
            ("sigma_z", s.sigma_z),
            ("sigma_vel", s.sigma_vel),
            ("sigma_yaw", s.sigma_yaw),
            ("score_spread", s.score_spread),
            ("fp_rate", s.fp_rate),
            ("fp_extent", s.fp_extent),
            ("feature_sigma", s.feature_sigma),
        ] {
            nonneg(format!("sensor.{f}"), v)?;
        }
        prob("sensor.score_mean", s.score_mean)?;
        prob("sensor.dropout", s.dropout)?;
        prob("sensor.fp_score_min", s.fp_score_min)?;
        prob("sensor.fp_score_max", s.fp_score_max)?;
        if s.fp_score_min > s.fp_score_max {
            return Err(Error::config(
                "sensor.fp_score_min",
                "must not exceed fp_score_max",
            ));
        }
        if s.feature_dim == 0 {
            return Err(Error::config("sensor.feature_dim", "must be ≥ 1"));
        }
        if s.cameras == 0 {
            return Err(Error::config("sensor.cameras", "must be ≥ 1"));
        }
        for (i, o) in s.occlusions.iter().enumerate() {
            if o.agent >= self.agents.len() {
                return Err(Error::config(
                    format!("sensor.occlusions[{i}].agent"),
                    format!("no agent {} (have {})", o.agent, self.agents.len()),
                ));
            }
            if o.end < o.start {
                return Err(Error::config(
                    format!("sensor.occlusions[{i}].end"),
                    "must be ≥ start",
                ));
            }
        }
        Ok(())
    }
}

/// Kinematic state of one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub speed: f64,
}

/// Advances one agent by `dt` seconds; `wp` is the index of the next waypoint.
fn advance(a: &AgentSpec, s: AgentState, wp: &mut usize, dt: f64) -> AgentState {
    match a.motion {
        MotionModel::ConstantVelocity => AgentState {
            x: s.x + s.speed * s.yaw.cos() * dt,
            y: s.y + s.speed * s.yaw.sin() * dt,
            ..s
        },
        MotionModel::ConstantTurnRate => {
            let w = a.turn_rate;
            if w.abs() < 1e-12 {
                return advance(
                    &AgentSpec {
                        motion: MotionModel::ConstantVelocity,
                        ..a.clone()
                    },
                    s,
                    wp,
                    dt,
                );
            }
            let yaw = s.yaw + w * dt;
            AgentState {
                x: s.x + s.speed / w * (yaw.sin() - s.yaw.sin()),
                y: s.y - s.speed / w * (yaw.cos() - s.yaw.cos()),
                yaw,
                speed: s.speed,
            }
        }
        MotionModel::Waypoint => {
            let (mut x, mut y, mut yaw) = (s.x, s.y, s.yaw);
            let mut budget = s.speed * dt;
            while budget > 0.0 && *wp < a.waypoints.len() {
                let [tx, ty] = a.waypoints[*wp];
                let (dx, dy) = (tx - x, ty - y);
                let d = dx.hypot(dy);
                if d > WAYPOINT_RADIUS {
                    yaw = dy.atan2(dx);
                }
                if d <= budget {
                    x = tx;
                    y = ty;
                    budget -= d;
                    *wp += 1;
                } else {
                    x += dx / d * budget;
                    y += dy / d * budget;
                    budget = 0.0;
                }
            }
            let moving = *wp < a.waypoints.len();
            AgentState {
                x,
                y,
                yaw,
                speed: if moving { s.speed } else { 0.0 },
            }
        }
    }
}

/// True boxes of every agent at frames `0..frames`, indexed `[frame][agent]`.
pub fn trajectories(config: &ScenarioConfig) -> Vec<Vec<Box3D>> {
    let mut states: Vec<(AgentState, usize)> = config
        .agents
        .iter()
        .map(|a| {
            (
                AgentState {
                    x: a.x,
                    y: a.y,
                    yaw: a.yaw,
                    speed: a.speed,
                },
                0,
            )
        })
        .collect();
    let mut out = Vec::with_capacity(config.frames as usize);
    for _ in 0..config.frames {
        out.push(
            config
                .agents
                .iter()
                .zip(&states)
                .map(|(a, (s, wp))| {
                    // heading toward the next waypoint is known before moving
                    let mut probe = *wp;
                    let yaw = if a.motion == MotionModel::Waypoint {
                        advance(a, *s, &mut probe, 1e-6).yaw
                    } else {
                        s.yaw
                    };
                    let speed = if a.motion == MotionModel::Waypoint && *wp >= a.waypoints.len() {
                        0.0
                    } else {
                        s.speed
                    };
                    Box3D {
                        center: [s.x, s.y, a.size[2] / 2.0],
                        size: a.size,
                        yaw: normalize_yaw(yaw).unwrap_or(0.0),
                        velocity: [speed * yaw.cos(), speed * yaw.sin()],
                        score: 1.0,
                        class: a.class,
                    }
                })
                .collect(),
        );
        for (a, (s, wp)) in config.agents.iter().zip(states.iter_mut()) {
            *s = advance(a, *s, wp, config.period_s);
        }
    }
    out
}

/// Unit-norm latent appearance vector of an agent.
pub fn latent_feature(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Camera sector containing a ground-plane point seen from the origin.
pub fn camera_of(x: f64, y: f64, cameras: usize) -> usize {
    let a = y.atan2(x).rem_euclid(TAU);
    ((a / TAU * cameras as f64) as usize).min(cameras - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handoff {
    pub frame: u64,
    pub agent: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Simulation {
    pub gt: Vec<TrackRecord>,
    pub detections: Vec<DetectionRecord>,
    pub handoffs: Vec<Handoff>,
}

fn gauss(rng: &mut Xoshiro256PlusPlus, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("sigma ≥ 0").sample(rng)
    }
}

/// Ground truth and detections for `config`, deterministic in `seed`.
pub fn simulate(config: &ScenarioConfig, seed: u64) -> Result<Simulation> {
    config.validate()?;
    let s = &config.sensor;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let latents: Vec<Vec<f64>> = config
        .agents
        .iter()
        .map(|a| latent_feature(a.feature_seed, s.feature_dim))
        .collect();
    let truth = trajectories(config);
    let mut sim = Simulation::default();
    let mut last_cam: Vec<Option<usize>> = vec![None; config.agents.len()];

    for (f, boxes) in truth.iter().enumerate() {
        let frame = f as u64;
        let mut dets = Vec::new();
        for (i, b) in boxes.iter().enumerate() {
            sim.gt.push(TrackRecord::new(frame, i as u64, b));
            let cam = camera_of(b.center[0], b.center[1], s.cameras);
            if let Some(prev) = last_cam[i].filter(|&p| p != cam) {
                sim.handoffs.push(Handoff {
                    frame,
                    agent: i,
                    from: prev,
                    to: cam,
                });
            }
            last_cam[i] = Some(cam);

            // draws happen whether or not the agent is seen, keeping streams aligned
            let dropped = rng.random::<f64>() < s.dropout;
            let noise = [
                gauss(&mut rng, s.sigma_xy),
                gauss(&mut rng, s.sigma_xy),
                gauss(&mut rng, s.sigma_z),
                gauss(&mut rng, s.sigma_yaw),
                gauss(&mut rng, s.sigma_vel),
                gauss(&mut rng, s.sigma_vel),
            ];
            let score = (s.score_mean + gauss(&mut rng, s.score_spread)).clamp(0.0, 1.0);
            let feature: Vec<f64> = latents[i]
                .iter()
                .map(|v| v + gauss(&mut rng, s.feature_sigma))
                .collect();
            let occluded = s.occlusions.iter().any(|o| o.covers(i, frame));
            if dropped || occluded {
                continue;
            }
            let d = Box3D {
                center: [
                    b.center[0] + noise[0],
                    b.center[1] + noise[1],
                    b.center[2] + noise[2],
                ],
                yaw: normalize_yaw(b.yaw + noise[3])?,
                velocity: [b.velocity[0] + noise[4], b.velocity[1] + noise[5]],
                score,
                ..*b
            };
            dets.push(DetectionRecord::new(frame, &d, feature));
        }
        let n_fp = if s.fp_rate > 0.0 {
            Poisson::new(s.fp_rate).expect("rate > 0").sample(&mut rng) as usize
        } else {
            0
        };
        for k in 0..n_fp {
            let x = rng.random_range(-s.fp_extent..=s.fp_extent);
            let y = rng.random_range(-s.fp_extent..=s.fp_extent);
            let score = rng.random_range(s.fp_score_min..=s.fp_score_max);
            let class = if rng.random::<f64>() < 0.7 {
                CAR
            } else {
                PEDESTRIAN
            };
            let size = if class == CAR { CAR_SIZE } else { PED_SIZE };
            let yaw = rng.random_range(-PI..PI);
            let fseed = seed ^ (frame << 20) ^ (k as u64) ^ 0xf00d_0000_0000;
            let d = Box3D {
                center: [x, y, size[2] / 2.0],
                size,
                yaw,
                velocity: [gauss(&mut rng, 1.0), gauss(&mut rng, 1.0)],
                score,
                class,
            };
            dets.push(DetectionRecord::new(
                frame,
                &d,
                latent_feature(fseed, s.feature_dim),
            ));
        }
        dets.shuffle(&mut rng);
        sim.detections.extend(dets);
    }
    Ok(sim)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Occlusion,
    Turning,
    Crowded,
    Handoff,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::Occlusion,
        Suite::Turning,
        Suite::Crowded,
        Suite::Handoff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Occlusion => "occlusion",
            Suite::Turning => "turning",
            Suite::Crowded => "crowded",
            Suite::Handoff => "handoff",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                Error::config(
                    "suite",
                    format!(
                        "unknown suite '{s}' (expected occlusion, turning, crowded or handoff)"
                    ),
                )
            })
    }
}

pub const SUITE_FRAMES: u64 = 30;
pub const OCCLUSION_LENGTHS: [u64; 4] = [3, 4, 5, 6];
pub const TURN_RATE_RANGE: (f64, f64) = (0.2, 0.45);

/// Places `n` start points in `[−extent, extent]²` at least `min_sep` apart.
fn spread_points(
    rng: &mut Xoshiro256PlusPlus,
    n: usize,
    extent: f64,
    min_sep: f64,
) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(n);
    let mut tries = 0;
    while pts.len() < n {
        let p = [
            rng.random_range(-extent..extent),
            rng.random_range(-extent..extent),
        ];
        tries += 1;
        if tries > 10_000
            || pts
                .iter()
                .all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= min_sep)
        {
            pts.push(p);
        }
    }
    pts
}

fn car(rng: &mut Xoshiro256PlusPlus, at: [f64; 2], speed: f64) -> AgentSpec {
    AgentSpec {
        x: at[0],
        y: at[1],
        yaw: rng.random_range(-PI..PI),
        motion: MotionModel::ConstantVelocity,
        speed,
        turn_rate: 0.0,
        waypoints: Vec::new(),
        size: CAR_SIZE,
        class: CAR,
        feature_seed: rng.random(),
    }
}

fn occlusion_windows(
    rng: &mut Xoshiro256PlusPlus,
    agents: usize,
    frames: u64,
    lengths: &[u64],
) -> Vec<Occlusion> {
    (0..agents)
        .map(|agent| {
            let len = lengths[rng.random_range(0..lengths.len())];
            let start = rng.random_range(5..frames - len - 4);
            Occlusion {
                agent,
                start,
                end: start + len - 1,
            }
        })
        .collect()
}

fn occlusion_scenario(rng: &mut Xoshiro256PlusPlus) -> ScenarioConfig {
    let n = rng.random_range(4..=6);
    let starts = spread_points(rng, n, 20.0, 8.0);
    let agents: Vec<AgentSpec> = starts
        .iter()
        .map(|&p| {
            let speed = rng.random_range(2.0..6.0);
            let mut a = car(rng, p, speed);
            if rng.random::<f64>() < 0.5 {
                a.motion = MotionModel::ConstantTurnRate;
                a.turn_rate = rng.random_range(-0.1..0.1);
            }
            a
        })
        .collect();
    let occlusions = occlusion_windows(rng, n, SUITE_FRAMES, &OCCLUSION_LENGTHS);
    ScenarioConfig {
        frames: SUITE_FRAMES,
        period_s: 0.5,
        agents,
        sensor: SensorSpec {
            occlusions,
            ..SensorSpec::default()
        },
        seed: rng.random(),
    }
}

fn turning_scenario(rng: &mut Xoshiro256PlusPlus) -> ScenarioConfig {
    let n = rng.random_range(4..=6);
    let starts = spread_points(rng, n, 20.0, 8.0);
    let agents: Vec<AgentSpec> = starts
        .iter()
        .map(|&p| {
            let speed = rng.random_range(2.0..5.0);
            let mut a = car(rng, p, speed);
            let w = rng.random_range(TURN_RATE_RANGE.0..TURN_RATE_RANGE.1);
            a.motion = MotionModel::ConstantTurnRate;
            a.turn_rate = if rng.random::<bool>() { w } else { -w };
            a
        })
        .collect();
    let occlusions = occlusion_windows(rng, n, SUITE_FRAMES, &[2, 3, 4]);
    ScenarioConfig {
        frames: SUITE_FRAMES,
        period_s: 0.5,
        agents,
        sensor: SensorSpec {
            occlusions,
            ..SensorSpec::default()
        },
        seed: rng.random(),
    }
}

fn crowded_scenario(rng: &mut Xoshiro256PlusPlus) -> ScenarioConfig {
    let n = rng.random_range(14..=18);
    let starts = spread_points(rng, n, 15.0, 2.5);
    let agents: Vec<AgentSpec> = starts
        .iter()
        .map(|&p| {
            if rng.random::<f64>() < 0.3 {
                let speed = rng.random_range(0.5..1.5);
                AgentSpec {
                    size: PED_SIZE,
                    class: PEDESTRIAN,
                    ..car(rng, p, speed)
                }
            } else {
                let speed = rng.random_range(1.0..5.0);
                let mut a = car(rng, p, speed);
                if rng.random::<f64>() < 0.4 {
                    a.motion = MotionModel::ConstantTurnRate;
                    a.turn_rate = rng.random_range(-0.2..0.2);
                }
                a
            }
        })
        .collect();
    ScenarioConfig {
        frames: SUITE_FRAMES,
        period_s: 0.5,
        agents,
        sensor: SensorSpec::default(),
        seed: rng.random(),
    }
}

fn handoff_scenario(rng: &mut Xoshiro256PlusPlus) -> ScenarioConfig {
    let n = rng.random_range(4..=6);
    let agents: Vec<AgentSpec> = (0..n)
        .map(|_| {
            let r = rng.random_range(8.0..25.0);
            let phase = rng.random_range(-PI..PI);
            let speed = rng.random_range(3.0..7.0);
            let dir = if rng.random::<bool>() { 1.0 } else { -1.0 };
            AgentSpec {
                x: r * phase.cos(),
                y: r * phase.sin(),
                yaw: phase + dir * PI / 2.0,
                motion: MotionModel::ConstantTurnRate,
                speed,
                turn_rate: dir * speed / r,
                waypoints: Vec::new(),
                size: CAR_SIZE,
                class: CAR,
                feature_seed: rng.random(),
            }
        })
        .collect();
    ScenarioConfig {
        frames: SUITE_FRAMES,
        period_s: 0.5,
        agents,
        sensor: SensorSpec::default(),
        seed: rng.random(),
    }
}

/// `count` scenarios of a named family, reproducible from `seed`.
pub fn scenario_suite(suite: Suite, count: usize, seed: u64) -> Result<Vec<ScenarioConfig>> {
    if count == 0 {
        return Err(Error::config("count", "must be ≥ 1"));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(
        seed ^ (suite as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    );
    Ok((0..count)
        .map(|_| match suite {
            Suite::Occlusion => occlusion_scenario(&mut rng),
            Suite::Turning => turning_scenario(&mut rng),
            Suite::Crowded => crowded_scenario(&mut rng),
            Suite::Handoff => handoff_scenario(&mut rng),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_agent(motion: MotionModel) -> ScenarioConfig {
        ScenarioConfig {
            frames: 6,
            period_s: 0.5,
            agents: vec![AgentSpec {
                x: 0.0,
                y: 0.0,
                yaw: 0.0,
                motion,
                speed: 1.0,
                turn_rate: 0.0,
                waypoints: vec![[1.0, 0.0], [1.0, 1.0]],
                size: CAR_SIZE,
                class: CAR,
                feature_seed: 3,
            }],
            sensor: SensorSpec {
                sigma_xy: 0.0,
                sigma_z: 0.0,
                sigma_vel: 0.0,
                sigma_yaw: 0.0,
                score_spread: 0.0,
                dropout: 0.0,
                fp_rate: 0.0,
                feature_sigma: 0.0,
                ..SensorSpec::default()
            },
            seed: 1,
        }
    }

    #[test]
    fn constant_velocity_kinematics() {
        let t = trajectories(&one_agent(MotionModel::ConstantVelocity));
        for (k, f) in t.iter().enumerate() {
            assert!((f[0].center[0] - 0.5 * k as f64).abs() < 1e-12);
            assert_eq!(f[0].center[1], 0.0);
            assert_eq!(f[0].center[2], CAR_SIZE[2] / 2.0);
        }
    }

    #[test]
    fn waypoints_are_followed_then_agent_stops() {
        let t = trajectories(&one_agent(MotionModel::Waypoint));
        let xy = |k: usize| [t[k][0].center[0], t[k][0].center[1]];
        assert_eq!(xy(2), [1.0, 0.0]);
        assert!((xy(3)[1] - 0.5).abs() < 1e-12);
        assert_eq!(xy(5), [1.0, 1.0]);
        assert_eq!(t[5][0].velocity, [0.0, 0.0]);
    }

    #[test]
    fn noiseless_detections_equal_truth() {
        let c = one_agent(MotionModel::ConstantVelocity);
        let sim = simulate(&c, 5).unwrap();
        assert_eq!(sim.detections.len(), sim.gt.len());
        for (d, g) in sim.detections.iter().zip(&sim.gt) {
            assert_eq!(
                [d.x, d.y, d.z, d.yaw, d.vx, d.vy],
                [g.x, g.y, g.z, g.yaw, g.vx, g.vy]
            );
            assert_eq!([d.l, d.w, d.h], [g.l, g.w, g.h]);
        }
    }

    #[test]
    fn occluded_frames_have_no_detection() {
        let mut c = one_agent(MotionModel::ConstantVelocity);
        c.frames = 10;
        c.sensor.occlusions = vec![Occlusion {
            agent: 0,
            start: 5,
            end: 8,
        }];
        let frames: Vec<u64> = simulate(&c, 5)
            .unwrap()
            .detections
            .iter()
            .map(|d| d.frame)
            .collect();
        assert_eq!(frames, vec![0, 1, 2, 3, 4, 9]);
    }

    #[test]
    fn invalid_config_names_the_field() {
        let mut c = one_agent(MotionModel::ConstantVelocity);
        c.sensor.dropout = 1.5;
        assert!(
            matches!(c.validate(), Err(Error::Config { path, .. }) if path == "sensor.dropout")
        );
        let mut c = one_agent(MotionModel::ConstantVelocity);
        c.agents[0].speed = -1.0;
        assert!(
            matches!(c.validate(), Err(Error::Config { path, .. }) if path == "agents[0].speed")
        );
    }

    #[test]
    fn suites_are_reproducible_and_meet_contracts() {
        let a = scenario_suite(Suite::Occlusion, 1, 7).unwrap();
        assert_eq!(a, scenario_suite(Suite::Occlusion, 1, 7).unwrap());
        for c in scenario_suite(Suite::Occlusion, 20, 1).unwrap() {
            assert!(c
                .sensor
                .occlusions
                .iter()
                .all(|o| (3..=6).contains(&o.len())));
            c.validate().unwrap();
        }
        for c in scenario_suite(Suite::Turning, 20, 1).unwrap() {
            assert!(c
                .agents
                .iter()
                .all(|a| a.turn_rate.abs() >= TURN_RATE_RANGE.0));
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn camera_sectors_partition_the_circle() {
        assert_eq!(camera_of(1.0, 0.0, 6), 0);
        assert_eq!(camera_of(-1.0, 0.0, 6), 3);
        assert_eq!(camera_of(1.0, -1e-9, 6), 5);
    }
}
