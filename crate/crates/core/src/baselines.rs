//! Tracking-by-detection baselines (constant-velocity Kalman filter with
//! Hungarian or greedy association) and the velocity-propagation variant of
//! the query tracker.

use nalgebra::{SMatrix, SVector};
use querytrack_nn::Tensor2D;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{group_frames, DetectionRecord, TrackRecord};
use crate::model::ModelParams;
use crate::tracker::{run_sequence, PipelineOptions, Propagation, SequenceOutput};
use crate::types::{center_distance_2d, normalize_yaw, yaw_diff, Box3D, TrackerConfig};

pub type State = SVector<f64, 9>;
pub type Cov = SMatrix<f64, 9, 9>;
type Meas = SVector<f64, 7>;
type MeasCov = SMatrix<f64, 7, 7>;
type Obs = SMatrix<f64, 7, 9>;

/// Initial velocity variance of a new track.
const INIT_VEL_VAR: f64 = 1.0;

/// Process and measurement noise standard deviations (isotropic).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KalmanNoise {
    pub process_std: f64,
    pub measurement_std: f64,
}

impl Default for KalmanNoise {
    fn default() -> Self {
        Self {
            process_std: 0.1,
            measurement_std: 0.5,
        }
    }
}

impl KalmanNoise {
    fn q(&self) -> Cov {
        Cov::identity() * self.process_std.powi(2)
    }

    fn r(&self) -> MeasCov {
        MeasCov::identity() * self.measurement_std.powi(2)
    }
}

/// State `(x, y, z, yaw, l, w, h, vx, vy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    pub x: State,
    pub p: Cov,
    pub id: u64,
    pub class: u32,
    pub score: f64,
    pub age: u32,
    pub hits: u32,
    pub misses: u32,
}

fn measurement(b: &Box3D) -> Meas {
    Meas::from([
        b.center[0],
        b.center[1],
        b.center[2],
        b.yaw,
        b.size[0],
        b.size[1],
        b.size[2],
    ])
}

fn observation() -> Obs {
    let mut h = Obs::zeros();
    for i in 0..7 {
        h[(i, i)] = 1.0;
    }
    h
}

pub fn transition(dt: f64) -> Cov {
    let mut f = Cov::identity();
    f[(0, 7)] = dt;
    f[(1, 8)] = dt;
    f
}

impl KalmanTrack {
    pub fn new(id: u64, b: &Box3D, noise: &KalmanNoise) -> Self {
        let z = measurement(b);
        let mut x = State::zeros();
        x.fixed_rows_mut::<7>(0).copy_from(&z);
        x[7] = b.velocity[0];
        x[8] = b.velocity[1];
        let mut p = Cov::zeros();
        for i in 0..7 {
            p[(i, i)] = noise.measurement_std.powi(2);
        }
        p[(7, 7)] = INIT_VEL_VAR;
        p[(8, 8)] = INIT_VEL_VAR;
        Self {
            x,
            p,
            id,
            class: b.class,
            score: b.score,
            age: 1,
            hits: 1,
            misses: 0,
        }
    }

    pub fn to_box(&self) -> Box3D {
        let x = &self.x;
        Box3D {
            center: [x[0], x[1], x[2]],
            size: [x[4].max(1e-3), x[5].max(1e-3), x[6].max(1e-3)],
            yaw: normalize_yaw(x[3]).unwrap_or(0.0),
            velocity: [x[7], x[8]],
            score: self.score,
            class: self.class,
        }
    }
}

fn symmetrize(p: &Cov) -> Cov {
    (p + p.transpose()) * 0.5
}

pub fn kalman_predict(track: &KalmanTrack, dt: f64, noise: &KalmanNoise) -> Result<KalmanTrack> {
    if !(dt > 0.0) {
        return Err(Error::Invalid(format!("dt must be > 0, got {dt}")));
    }
    let f = transition(dt);
    Ok(KalmanTrack {
        x: f * track.x,
        p: symmetrize(&(f * track.p * f.transpose() + noise.q())),
        age: track.age + 1,
        ..track.clone()
    })
}

/// Joseph-form update with a wrapped yaw innovation.
pub fn kalman_update(track: &KalmanTrack, b: &Box3D, noise: &KalmanNoise) -> Result<KalmanTrack> {
    let h = observation();
    let mut y = measurement(b) - h * track.x;
    y[3] = yaw_diff(b.yaw, track.x[3]);
    let r = noise.r();
    let s = h * track.p * h.transpose() + r;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Invalid("innovation covariance is singular".into()))?;
    let k = track.p * h.transpose() * s_inv;
    let mut x = track.x + k * y;
    x[3] = normalize_yaw(x[3])?;
    let ikh = Cov::identity() - k * h;
    let p = ikh * track.p * ikh.transpose() + k * r * k.transpose();
    Ok(KalmanTrack {
        x,
        p: symmetrize(&p),
        score: b.score,
        hits: track.hits + 1,
        misses: 0,
        ..track.clone()
    })
}

/// Minimum-cost one-to-one assignment of rows to columns (rectangular
/// allowed; `min(rows, cols)` pairs), sorted by row.
pub fn hungarian(cost: &Tensor2D) -> Vec<(usize, usize)> {
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return Vec::new();
    }
    if n > m {
        let mut pairs: Vec<(usize, usize)> = hungarian(&cost.transpose())
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        return pairs;
    }
    // shortest augmenting paths with row/column potentials, 1-based
    let a = |i: usize, j: usize| cost.get(i - 1, j - 1);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = a(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Repeatedly takes the cheapest remaining pair; `min(rows, cols)` pairs,
/// sorted by row.
pub fn greedy(cost: &Tensor2D) -> Vec<(usize, usize)> {
    let (n, m) = cost.shape();
    let mut cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    cells.sort_by(|&(a, b), &(c, d)| {
        cost.get(a, b)
            .total_cmp(&cost.get(c, d))
            .then((a, b).cmp(&(c, d)))
    });
    let (mut row_used, mut col_used) = (vec![false; n], vec![false; m]);
    let mut pairs = Vec::new();
    for (i, j) in cells {
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

pub fn assignment_cost(cost: &Tensor2D, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| cost.get(i, j)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Association {
    Hungarian,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TbdConfig {
    pub score_thresh: f64,
    pub gate: f64,
    pub max_age: u32,
    pub min_hits: u32,
    pub period_s: f64,
    pub noise: KalmanNoise,
}

impl Default for TbdConfig {
    fn default() -> Self {
        Self {
            score_thresh: 0.2,
            gate: 2.0,
            max_age: 3,
            min_hits: 1,
            period_s: 0.5,
            noise: KalmanNoise::default(),
        }
    }
}

impl TbdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score_thresh) {
            return Err(Error::config("score_thresh", "must be in [0, 1]"));
        }
        if !(self.gate > 0.0) {
            return Err(Error::config("gate", "must be > 0"));
        }
        if !(self.period_s > 0.0) {
            return Err(Error::config("period_s", "must be > 0"));
        }
        if self.min_hits == 0 {
            return Err(Error::config("min_hits", "must be ≥ 1"));
        }
        Ok(())
    }
}

/// Kalman predict, gated association, update, birth and death per frame.
pub fn run_tbd(
    records: &[DetectionRecord],
    mode: Association,
    config: &TbdConfig,
) -> Result<Vec<TrackRecord>> {
    config.validate()?;
    let mut tracks: Vec<KalmanTrack> = Vec::new();
    let mut next_id = 0u64;
    let mut out = Vec::new();
    for frame in group_frames(records, None) {
        let dets: Vec<Box3D> = frame
            .boxes
            .iter()
            .copied()
            .filter(|b| b.score >= config.score_thresh)
            .collect();
        tracks = tracks
            .iter()
            .map(|t| kalman_predict(t, config.period_s, &config.noise))
            .collect::<Result<_>>()?;

        // gated pairs get a cost no real pair can reach
        let big = config.gate * (tracks.len().min(dets.len()) as f64 + 1.0) + 1.0;
        let mut cost = Tensor2D::zeros(tracks.len(), dets.len());
        for (i, t) in tracks.iter().enumerate() {
            let tb = t.to_box();
            for (j, d) in dets.iter().enumerate() {
                let dist = center_distance_2d(&tb, d);
                let ok = t.class == d.class && dist <= config.gate;
                cost.set(i, j, if ok { dist } else { big });
            }
        }
        let pairs = match mode {
            Association::Hungarian => hungarian(&cost),
            Association::Greedy => greedy(&cost),
        };
        let mut det_used = vec![false; dets.len()];
        let mut matched = vec![None; tracks.len()];
        for (i, j) in pairs {
            if cost.get(i, j) < big {
                matched[i] = Some(j);
                det_used[j] = true;
            }
        }
        let mut next = Vec::with_capacity(tracks.len() + dets.len());
        for (t, m) in tracks.iter().zip(&matched) {
            match m {
                Some(j) => next.push(kalman_update(t, &dets[*j], &config.noise)?),
                None if t.misses < config.max_age => next.push(KalmanTrack {
                    misses: t.misses + 1,
                    ..t.clone()
                }),
                None => {}
            }
        }
        for (j, d) in dets.iter().enumerate() {
            if !det_used[j] {
                next.push(KalmanTrack::new(next_id, d, &config.noise));
                next_id += 1;
            }
        }
        tracks = next;
        out.extend(
            tracks
                .iter()
                .filter(|t| t.misses == 0 && t.hits >= config.min_hits)
                .map(|t| TrackRecord::new(frame.frame, t.id, &t.to_box())),
        );
    }
    Ok(out)
}

/// The query tracker with velocity-based propagation and coasting.
pub fn run_velocity_variant(
    records: &[DetectionRecord],
    params: &ModelParams,
    config: &TrackerConfig,
) -> Result<SequenceOutput> {
    let options = PipelineOptions {
        propagation: Propagation::Velocity,
        ..PipelineOptions::default()
    };
    run_sequence(records, params, config, &options)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64, y: f64) -> Box3D {
        Box3D {
            center: [x, y, 0.8],
            size: [4.0, 2.0, 1.6],
            yaw: 0.2,
            velocity: [1.0, 0.0],
            score: 0.9,
            class: 0,
        }
    }

    #[test]
    fn predict_without_motion_or_noise_is_identity() {
        let noise = KalmanNoise {
            process_std: 0.0,
            measurement_std: 0.5,
        };
        let mut t = KalmanTrack::new(0, &bx(1.0, 2.0), &noise);
        t.x[7] = 0.0;
        t.x[8] = 0.0;
        let p = kalman_predict(&t, 0.5, &noise).unwrap();
        assert_eq!(p.x, t.x);
    }

    #[test]
    fn predict_advances_by_velocity() {
        let t = KalmanTrack::new(0, &bx(0.0, 0.0), &KalmanNoise::default());
        let p = kalman_predict(&t, 0.5, &KalmanNoise::default()).unwrap();
        assert!((p.x[0] - 0.5).abs() < 1e-15);
        assert!(kalman_predict(&t, 0.0, &KalmanNoise::default()).is_err());
    }

    #[test]
    fn hungarian_small_cases() {
        let c = Tensor2D::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(hungarian(&c), vec![(0, 0), (1, 1)]);
        assert_eq!(
            hungarian(&Tensor2D::from_rows(&[vec![3.0]]).unwrap()),
            vec![(0, 0)]
        );
        let wide = Tensor2D::from_rows(&[vec![5.0, 1.0, 3.0]]).unwrap();
        assert_eq!(hungarian(&wide), vec![(0, 1)]);
        let tall = wide.transpose();
        assert_eq!(hungarian(&tall), vec![(1, 0)]);
        assert!(hungarian(&Tensor2D::zeros(0, 3)).is_empty());
    }

    #[test]
    fn tbd_single_object_keeps_one_id() {
        let recs: Vec<DetectionRecord> = (0..6)
            .map(|k| DetectionRecord::new(k, &bx(0.5 * k as f64, 0.0), vec![]))
            .collect();
        for mode in [Association::Hungarian, Association::Greedy] {
            let out = run_tbd(&recs, mode, &TbdConfig::default()).unwrap();
            assert_eq!(out.len(), 6);
            assert!(out.iter().all(|r| r.id == 0));
        }
    }

    #[test]
    fn tbd_gap_longer_than_max_age_rebirths() {
        let config = TbdConfig::default();
        let recs: Vec<DetectionRecord> = (0..12u64)
            .filter(|k| !(3..3 + config.max_age as u64 + 2).contains(k))
            .map(|k| DetectionRecord::new(k, &bx(0.5 * k as f64, 0.0), vec![]))
            .collect();
        let out = run_tbd(&recs, Association::Hungarian, &config).unwrap();
        let ids: std::collections::BTreeSet<u64> = out.iter().map(|r| r.id).collect();
        assert_eq!(ids.len(), 2);
    }
}
