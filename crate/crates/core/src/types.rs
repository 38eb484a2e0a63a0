//! Domain types shared by the tracker, baselines, simulator and metrics.

use std::collections::VecDeque;
use std::f64::consts::PI;

use querytrack_nn::RegionBounds;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(−π, π]`.
pub fn normalize_yaw(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::Invalid(format!("yaw {theta} is not finite")));
    }
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    if t <= -PI {
        t += 2.0 * PI;
    }
    Ok(t)
}

/// Wrapped difference `a − b` in `(−π, π]`.
pub fn yaw_diff(a: f64, b: f64) -> f64 {
    normalize_yaw(a - b).unwrap_or(0.0)
}

pub fn center_distance_2d(a: &Box3D, b: &Box3D) -> f64 {
    (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub track_ref: Option<u64>,
    pub feature: Vec<f64>,
    pub center: [f64; 3],
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub center: [f64; 3],
    /// `(l, w, h)`.
    pub size: [f64; 3],
    pub yaw: f64,
    pub velocity: [f64; 2],
    pub score: f64,
    pub class: u32,
}

impl Box3D {
    pub fn validate(&self) -> Result<()> {
        if self
            .center
            .iter()
            .chain(&self.velocity)
            .any(|v| !v.is_finite())
            || !self.yaw.is_finite()
        {
            return Err(Error::Invalid("box has non-finite fields".into()));
        }
        if self.size.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Invalid(format!(
                "box size {:?} not positive",
                self.size
            )));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::Invalid(format!(
                "box score {} outside [0, 1]",
                self.score
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryForecast {
    pub origin: u64,
    /// Per-frame `(Δx, Δy)` steps in meters.
    pub movements: Vec<[f64; 2]>,
}

impl TrajectoryForecast {
    pub fn zeros(origin: u64, tau_f: usize) -> Self {
        Self {
            origin,
            movements: vec![[0.0; 2]; tau_f],
        }
    }

    /// Cumulative offsets from the origin position, one per step.
    pub fn positions(&self) -> Vec<[f64; 2]> {
        let mut acc = [0.0; 2];
        self.movements
            .iter()
            .map(|m| {
                acc[0] += m[0];
                acc[1] += m[1];
                acc
            })
            .collect()
    }

    /// Drops the first step and duplicates the last one, keeping the length.
    pub fn shifted(&self) -> Self {
        let mut movements: Vec<[f64; 2]> = self.movements.iter().skip(1).copied().collect();
        if let Some(&last) = self.movements.last() {
            movements.push(last);
        }
        Self {
            origin: self.origin + 1,
            movements,
        }
    }
}

/// Past queries of one track, keyed by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryQueue {
    capacity: usize,
    entries: VecDeque<Query>,
}

impl QueryQueue {
    pub fn new(tau_h: usize) -> Self {
        Self {
            capacity: tau_h,
            entries: VecDeque::with_capacity(tau_h + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &Query> {
        self.entries.iter()
    }

    /// Appends a query newer than every stored one, evicting the oldest
    /// entries beyond capacity.
    pub fn push(&mut self, q: Query) -> Result<()> {
        if let Some(last) = self.entries.back() {
            if q.timestamp <= last.timestamp {
                return Err(Error::Invalid(format!(
                    "queue timestamps must increase: {} after {}",
                    q.timestamp, last.timestamp
                )));
            }
        }
        self.entries.push_back(q);
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    /// Removes entries older than `frame − capacity`.
    pub fn evict_before(&mut self, frame: u64) {
        let oldest = frame.saturating_sub(self.capacity as u64);
        while self.entries.front().is_some_and(|q| q.timestamp < oldest) {
            self.entries.pop_front();
        }
    }

    /// Slot `j` holds the query at frame `frame − capacity + j`, if any.
    pub fn slots(&self, frame: u64) -> Vec<Option<&Query>> {
        let cap = self.capacity as u64;
        (0..cap)
            .map(|j| {
                let ts = (frame + j).checked_sub(cap)?;
                self.entries.iter().find(|q| q.timestamp == ts)
            })
            .collect()
    }

    pub fn mask(&self, frame: u64) -> Vec<bool> {
        self.slots(frame).iter().map(Option::is_some).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub id: u64,
    pub active: bool,
    /// Consecutive frames coasted on the frozen forecast.
    pub extension_count: u32,
    pub last_confident_frame: u64,
    /// Query at the current frame; its center is the track position.
    pub query: Query,
    pub forecast: TrajectoryForecast,
    /// Last confident output box; size, yaw and velocity are held while coasting.
    pub last_box: Box3D,
}

impl TrackState {
    pub fn frame(&self) -> u64 {
        self.query.timestamp
    }
}

fn default_heads() -> usize {
    4
}
fn default_layers() -> usize {
    2
}
fn default_gate() -> f64 {
    2.0
}
fn default_beta() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    pub d: usize,
    pub tau_h: usize,
    pub tau_f: usize,
    pub tau_e: u32,
    pub theta_init: f64,
    pub theta_out: f64,
    pub theta_ext: f64,
    pub max_output: usize,
    pub region_min: [f64; 3],
    pub region_max: [f64; 3],
    pub period_s: f64,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// Decoder-stub association radius in meters.
    #[serde(default = "default_gate")]
    pub gate: f64,
    /// Weight of the detection feature in the decoder-stub blend.
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        let region = RegionBounds::default();
        Self {
            d: 32,
            tau_h: 3,
            tau_f: 8,
            tau_e: 4,
            theta_init: 0.4,
            theta_out: 0.2,
            theta_ext: 0.4,
            max_output: 300,
            region_min: region.min,
            region_max: region.max,
            period_s: 0.5,
            heads: default_heads(),
            layers: default_layers(),
            gate: default_gate(),
            beta: default_beta(),
        }
    }
}

/// Trailing feature channels the decoder stub overwrites with box evidence.
pub const EVIDENCE_DIMS: usize = 10;

impl TrackerConfig {
    pub fn region(&self) -> RegionBounds {
        RegionBounds {
            min: self.region_min,
            max: self.region_max,
        }
    }

    /// Raw 3D positional-encoding width: the smallest multiple of 6 ≥ d.
    pub fn pe3d_dim(&self) -> usize {
        self.d.div_ceil(6) * 6
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_h < 1 {
            return Err(Error::config("tau_h", "must be ≥ 1"));
        }
        if self.tau_f < 1 {
            return Err(Error::config("tau_f", "must be ≥ 1"));
        }
        if self.tau_e as usize >= self.tau_f {
            return Err(Error::config(
                "tau_e",
                format!("must be < tau_f ({}), got {}", self.tau_f, self.tau_e),
            ));
        }
        if !(self.theta_out > 0.0 && self.theta_out <= self.theta_init && self.theta_init <= 1.0) {
            return Err(Error::config(
                "theta_out",
                format!(
                    "need 0 < theta_out ≤ theta_init ≤ 1, got {} and {}",
                    self.theta_out, self.theta_init
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.theta_ext) {
            return Err(Error::config("theta_ext", "must be in [0, 1]"));
        }
        if self.d < EVIDENCE_DIMS + 2 || self.d % 2 != 0 {
            return Err(Error::config(
                "d",
                format!("must be even and ≥ {}, got {}", EVIDENCE_DIMS + 2, self.d),
            ));
        }
        if self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::config(
                "heads",
                format!("must divide d = {}", self.d),
            ));
        }
        if self.layers == 0 {
            return Err(Error::config("layers", "must be ≥ 1"));
        }
        if self.max_output == 0 {
            return Err(Error::config("max_output", "must be ≥ 1"));
        }
        for axis in 0..3 {
            if !(self.region_min[axis] < self.region_max[axis]) {
                return Err(Error::config(
                    format!("region_min[{axis}]"),
                    "must be below region_max",
                ));
            }
        }
        if !(self.period_s > 0.0) {
            return Err(Error::config("period_s", "must be > 0"));
        }
        if !(self.gate > 0.0) {
            return Err(Error::config("gate", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::config("beta", "must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub box_d: f64,
    pub cls_d: f64,
    pub box_r: f64,
    pub cls_r: f64,
    pub motion: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            box_d: 0.25,
            cls_d: 2.0,
            box_r: 0.25,
            cls_r: 2.0,
            motion: 0.5,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("box_d", self.box_d),
            ("cls_d", self.cls_d),
            ("box_r", self.box_r),
            ("cls_r", self.cls_r),
            ("motion", self.motion),
            ("focal_gamma", self.focal_gamma),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    name,
                    format!("must be finite and ≥ 0, got {v}"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.focal_alpha) {
            return Err(Error::config("focal_alpha", "must be in [0, 1]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64, y: f64, z: f64) -> Box3D {
        Box3D {
            center: [x, y, z],
            size: [4.0, 2.0, 1.5],
            yaw: 0.0,
            velocity: [0.0; 2],
            score: 1.0,
            class: 0,
        }
    }

    #[test]
    fn yaw_examples() {
        assert_eq!(normalize_yaw(0.0).unwrap(), 0.0);
        assert!((normalize_yaw(3.0 * PI).unwrap() - PI).abs() < 1e-12);
        assert_eq!(normalize_yaw(-PI).unwrap(), PI);
        assert!(normalize_yaw(f64::NAN).is_err());
    }

    #[test]
    fn center_distance_ignores_z() {
        assert_eq!(
            center_distance_2d(&bx(1.0, 2.0, 0.0), &bx(1.0, 2.0, 0.0)),
            0.0
        );
        assert_eq!(
            center_distance_2d(&bx(0.0, 0.0, 0.0), &bx(3.0, 4.0, 9.0)),
            5.0
        );
    }

    #[test]
    fn config_rejects_extension_beyond_forecast() {
        let mut c = TrackerConfig::default();
        c.validate().unwrap();
        c.tau_e = c.tau_f as u32;
        assert!(matches!(c.validate(), Err(Error::Config { path, .. }) if path == "tau_e"));
        let c = TrackerConfig {
            theta_out: 0.5,
            ..TrackerConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrackerConfig {
            tau_h: 0,
            ..TrackerConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn pe3d_dim_rounds_up_to_multiple_of_six() {
        assert_eq!(TrackerConfig::default().pe3d_dim(), 36);
    }

    fn q(ts: u64) -> Query {
        Query {
            track_ref: Some(1),
            feature: vec![ts as f64],
            center: [0.0; 3],
            timestamp: ts,
        }
    }

    #[test]
    fn queue_keeps_last_tau_h_and_reports_slots() {
        let mut queue = QueryQueue::new(3);
        for ts in [0, 1, 3, 4] {
            queue.push(q(ts)).unwrap();
        }
        assert_eq!(queue.len(), 3);
        // at frame 5 the slots are frames 2, 3, 4
        assert_eq!(queue.mask(5), vec![false, true, true]);
        queue.evict_before(7);
        assert_eq!(
            queue.entries().map(|e| e.timestamp).collect::<Vec<_>>(),
            vec![4]
        );
        assert!(queue.push(q(4)).is_err());
    }

    #[test]
    fn forecast_shift_pads_with_last_step() {
        let f = TrajectoryForecast {
            origin: 0,
            movements: vec![[1.0, 0.0], [2.0, 0.0], [3.0, 1.0]],
        };
        let s = f.shifted();
        assert_eq!(s.movements, vec![[2.0, 0.0], [3.0, 1.0], [3.0, 1.0]]);
        assert_eq!(s.origin, 1);
        assert_eq!(f.positions(), vec![[1.0, 0.0], [3.0, 0.0], [6.0, 1.0]]);
    }
}
