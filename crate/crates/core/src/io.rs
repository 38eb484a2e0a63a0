//! JSON-lines detection/track logs, weights files and atomic file writes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use querytrack_nn::{Params, Tensor2D};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Box3D;

/// One line of a detections log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub frame: u64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub score: f64,
    pub class: u32,
    pub feature: Vec<f64>,
}

/// One line of a track log (predicted or ground truth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub frame: u64,
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub score: f64,
    pub class: u32,
}

/// One line of a forecast log: the movements a track predicted at `frame`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastRecord {
    pub frame: u64,
    pub id: u64,
    pub movements: Vec<[f64; 2]>,
}

impl DetectionRecord {
    pub fn new(frame: u64, b: &Box3D, feature: Vec<f64>) -> Self {
        Self {
            frame,
            x: b.center[0],
            y: b.center[1],
            z: b.center[2],
            l: b.size[0],
            w: b.size[1],
            h: b.size[2],
            yaw: b.yaw,
            vx: b.velocity[0],
            vy: b.velocity[1],
            score: b.score,
            class: b.class,
            feature,
        }
    }

    pub fn to_box(&self) -> Box3D {
        Box3D {
            center: [self.x, self.y, self.z],
            size: [self.l, self.w, self.h],
            yaw: self.yaw,
            velocity: [self.vx, self.vy],
            score: self.score,
            class: self.class,
        }
    }
}

impl TrackRecord {
    pub fn new(frame: u64, id: u64, b: &Box3D) -> Self {
        Self {
            frame,
            id,
            x: b.center[0],
            y: b.center[1],
            z: b.center[2],
            l: b.size[0],
            w: b.size[1],
            h: b.size[2],
            yaw: b.yaw,
            vx: b.velocity[0],
            vy: b.velocity[1],
            score: b.score,
            class: b.class,
        }
    }

    pub fn to_box(&self) -> Box3D {
        Box3D {
            center: [self.x, self.y, self.z],
            size: [self.l, self.w, self.h],
            yaw: self.yaw,
            velocity: [self.vx, self.vy],
            score: self.score,
            class: self.class,
        }
    }
}

/// Detections of one frame, in log order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame: u64,
    pub boxes: Vec<Box3D>,
    pub features: Vec<Vec<f64>>,
}

impl FrameDetections {
    pub fn empty(frame: u64) -> Self {
        Self {
            frame,
            boxes: Vec::new(),
            features: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// Groups records into consecutive frames `0..frames`; frames without
/// records come out empty. `frames` defaults to one past the last frame seen.
pub fn group_frames(records: &[DetectionRecord], frames: Option<u64>) -> Vec<FrameDetections> {
    let n = frames.unwrap_or_else(|| records.iter().map(|r| r.frame + 1).max().unwrap_or(0));
    let mut out: Vec<FrameDetections> = (0..n).map(FrameDetections::empty).collect();
    for r in records {
        if let Some(f) = out.get_mut(r.frame as usize) {
            f.boxes.push(r.to_box());
            f.features.push(r.feature.clone());
        }
    }
    out
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("plain data serializes"));
        s.push('\n');
    }
    s
}

/// Parses JSON lines; blank lines are skipped, errors carry 1-based line numbers.
pub fn from_jsonl<T: for<'de> Deserialize<'de>>(text: &str, source_name: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                source_name: source_name.to_string(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    from_jsonl(&read_to_string(path)?, &path.display().to_string())
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectionRecord>> {
    let recs: Vec<DetectionRecord> = read_jsonl(path)?;
    for (i, r) in recs.iter().enumerate() {
        if !(0.0..=1.0).contains(&r.score) {
            return Err(Error::Parse {
                source_name: path.display().to_string(),
                line: i + 1,
                msg: format!("score {} outside [0, 1]", r.score),
            });
        }
    }
    Ok(recs)
}

/// Writes via a sibling temporary file and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        source_name: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub meta: serde_json::Value,
    pub entries: Vec<WeightEntry>,
}

/// Renders `params` as a weights document; every float is written with 17
/// significant digits.
pub fn weights_to_json<P: Params + ?Sized>(params: &P, meta: &serde_json::Value) -> String {
    let mut s = String::from("{\n  \"meta\": ");
    s.push_str(&serde_json::to_string(meta).expect("json value"));
    s.push_str(",\n  \"entries\": [");
    let mut first = true;
    params.visit("", &mut |name, t: &Tensor2D| {
        if !first {
            s.push(',');
        }
        first = false;
        let _ = write!(
            s,
            "\n    {{\"name\": {}, \"shape\": [{}, {}], \"data\": [",
            serde_json::to_string(name).expect("string"),
            t.rows(),
            t.cols()
        );
        for (i, v) in t.data().iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            let _ = write!(s, "{v:.16e}");
        }
        s.push_str("]}");
    });
    s.push_str("\n  ]\n}\n");
    s
}

/// Loads tensors by name into `params`; every parameter must be present with
/// a matching shape, and no unknown names are allowed.
pub fn load_weights_into<P: Params + ?Sized>(params: &mut P, file: &WeightsFile) -> Result<()> {
    use std::collections::BTreeMap;
    let mut by_name: BTreeMap<&str, &WeightEntry> = BTreeMap::new();
    for e in &file.entries {
        if by_name.insert(e.name.as_str(), e).is_some() {
            return Err(Error::config(
                format!("weights.{}", e.name),
                "duplicate entry",
            ));
        }
    }
    let mut err = None;
    let mut used = 0;
    params.visit_mut("", &mut |name, t| {
        if err.is_some() {
            return;
        }
        match by_name.get(name) {
            None => err = Some(Error::config(format!("weights.{name}"), "missing entry")),
            Some(e) => {
                if e.shape != [t.rows(), t.cols()] || e.data.len() != t.rows() * t.cols() {
                    err = Some(Error::config(
                        format!("weights.{name}"),
                        format!(
                            "shape {:?} does not match expected [{}, {}]",
                            e.shape,
                            t.rows(),
                            t.cols()
                        ),
                    ));
                } else if e.data.iter().any(|v| !v.is_finite()) {
                    err = Some(Error::config(format!("weights.{name}"), "non-finite value"));
                } else {
                    t.data_mut().copy_from_slice(&e.data);
                    used += 1;
                }
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if used != by_name.len() {
        let mut known = std::collections::BTreeSet::new();
        params.visit("", &mut |name, _| {
            known.insert(name.to_string());
        });
        let extra = by_name
            .keys()
            .find(|k| !known.contains(**k))
            .copied()
            .unwrap_or("?");
        return Err(Error::config(format!("weights.{extra}"), "unknown entry"));
    }
    Ok(())
}
