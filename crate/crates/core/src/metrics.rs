//! CLEAR-MOT tallies, AMOTA/AMOTP recall sweeps and ADE/FDE.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use querytrack_nn::Tensor2D;
use serde::{Deserialize, Serialize};

use crate::baselines::hungarian;
use crate::error::{Error, Result};
use crate::io::{ForecastRecord, TrackRecord};
use crate::par;
use crate::types::TrajectoryForecast;

pub const DEFAULT_MATCH_DIST: f64 = 2.0;
pub const DEFAULT_N_RECALL: usize = 40;
/// Above this many distinct scores the threshold search bisects instead of
/// scanning every score.
const EXHAUSTIVE_SCORES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Obj {
    id: u64,
    xy: [f64; 2],
    class: u32,
    score: f64,
}

/// Ground truth and predictions of one sequence, grouped by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSequence {
    frames: Vec<(Vec<Obj>, Vec<Obj>)>,
}

fn group(records: &[TrackRecord], what: &str) -> Result<BTreeMap<u64, Vec<Obj>>> {
    let mut out: BTreeMap<u64, Vec<Obj>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert((r.frame, r.id)) {
            return Err(Error::Invalid(format!(
                "{what} has duplicate row for frame {} id {}",
                r.frame, r.id
            )));
        }
        if !(r.score.is_finite() && (0.0..=1.0).contains(&r.score)) {
            return Err(Error::Invalid(format!(
                "{what} row frame {} id {} has no valid score",
                r.frame, r.id
            )));
        }
        out.entry(r.frame).or_default().push(Obj {
            id: r.id,
            xy: [r.x, r.y],
            class: r.class,
            score: r.score,
        });
    }
    Ok(out)
}

impl PreparedSequence {
    pub fn new(gt: &[TrackRecord], pred: &[TrackRecord]) -> Result<Self> {
        let mut g = group(gt, "ground truth")?;
        let mut p = group(pred, "predictions")?;
        let frames: BTreeSet<u64> = g.keys().chain(p.keys()).copied().collect();
        Ok(Self {
            frames: frames
                .into_iter()
                .map(|f| {
                    (
                        g.remove(&f).unwrap_or_default(),
                        p.remove(&f).unwrap_or_default(),
                    )
                })
                .collect(),
        })
    }

    fn pred_scores(&self, class: Option<u32>) -> Vec<f64> {
        self.frames
            .iter()
            .flat_map(|(_, p)| p.iter())
            .filter(|o| class.is_none_or(|c| o.class == c))
            .map(|o| o.score)
            .collect()
    }

    fn classes(&self) -> BTreeSet<u32> {
        self.frames
            .iter()
            .flat_map(|(g, _)| g.iter().map(|o| o.class))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub frame_index: usize,
    pub gt_id: u64,
    pub pred_id: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MotTally {
    pub gt: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub ids: u64,
    /// Sum of matched center distances.
    pub dist_sum: f64,
    #[serde(skip)]
    pub matches: Vec<MatchRecord>,
}

impl MotTally {
    pub fn recall(&self) -> f64 {
        if self.gt == 0 {
            0.0
        } else {
            self.tp as f64 / self.gt as f64
        }
    }

    pub fn mota(&self) -> f64 {
        if self.gt == 0 {
            return if self.fp == 0 { 1.0 } else { 0.0 };
        }
        1.0 - (self.fn_ + self.fp + self.ids) as f64 / self.gt as f64
    }

    /// Mean matched center distance, or `worst` without matches.
    pub fn motp(&self, worst: f64) -> f64 {
        if self.tp == 0 {
            worst
        } else {
            self.dist_sum / self.tp as f64
        }
    }

    /// `1 − (IDS + FP) / TP` clamped at 0: the recall-normalized accuracy at
    /// the achieved recall.
    pub fn motar(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        (1.0 - (self.ids + self.fp) as f64 / self.tp as f64).max(0.0)
    }

    pub fn merge(&mut self, other: &MotTally) {
        self.gt += other.gt;
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.ids += other.ids;
        self.dist_sum += other.dist_sum;
    }
}

fn dist(a: &Obj, b: &Obj) -> f64 {
    (a.xy[0] - b.xy[0]).hypot(a.xy[1] - b.xy[1])
}

fn tally_prepared(
    seq: &PreparedSequence,
    class: Option<u32>,
    min_score: f64,
    match_dist: f64,
    record: bool,
) -> MotTally {
    let mut t = MotTally::default();
    let mut last: HashMap<u64, u64> = HashMap::new();
    for (fi, (g_all, p_all)) in seq.frames.iter().enumerate() {
        let g: Vec<&Obj> = g_all
            .iter()
            .filter(|o| class.is_none_or(|c| o.class == c))
            .collect();
        let p: Vec<&Obj> = p_all
            .iter()
            .filter(|o| class.is_none_or(|c| o.class == c) && o.score >= min_score)
            .collect();
        let ok = |a: &Obj, b: &Obj| a.class == b.class && dist(a, b) < match_dist;
        let mut g_used = vec![false; g.len()];
        let mut p_used = vec![false; p.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        // continuity: keep last frame's pairing while still valid
        for (i, go) in g.iter().enumerate() {
            if let Some(&pid) = last.get(&go.id) {
                if let Some(j) = p.iter().position(|po| po.id == pid) {
                    if !p_used[j] && ok(go, p[j]) {
                        g_used[i] = true;
                        p_used[j] = true;
                        pairs.push((i, j));
                    }
                }
            }
        }
        let gi: Vec<usize> = (0..g.len()).filter(|&i| !g_used[i]).collect();
        let pj: Vec<usize> = (0..p.len()).filter(|&j| !p_used[j]).collect();
        if !gi.is_empty() && !pj.is_empty() {
            let big = match_dist * (gi.len().min(pj.len()) as f64 + 1.0) + 1.0;
            let mut cost = Tensor2D::zeros(gi.len(), pj.len());
            for (a, &i) in gi.iter().enumerate() {
                for (b, &j) in pj.iter().enumerate() {
                    cost.set(
                        a,
                        b,
                        if ok(g[i], p[j]) {
                            dist(g[i], p[j])
                        } else {
                            big
                        },
                    );
                }
            }
            for (a, b) in hungarian(&cost) {
                if cost.get(a, b) < big {
                    pairs.push((gi[a], pj[b]));
                }
            }
        }
        for &(i, j) in &pairs {
            let (go, po) = (g[i], p[j]);
            if last.get(&go.id).is_some_and(|&prev| prev != po.id) {
                t.ids += 1;
            }
            last.insert(go.id, po.id);
            t.dist_sum += dist(go, po);
            if record {
                t.matches.push(MatchRecord {
                    frame_index: fi,
                    gt_id: go.id,
                    pred_id: po.id,
                });
            }
        }
        t.gt += g.len() as u64;
        t.tp += pairs.len() as u64;
        t.fp += (p.len() - pairs.len()) as u64;
        t.fn_ += (g.len() - pairs.len()) as u64;
    }
    t
}

/// CLEAR-MOT over all predictions of one sequence.
pub fn clear_mot(gt: &[TrackRecord], pred: &[TrackRecord], match_dist: f64) -> Result<MotTally> {
    let seq = PreparedSequence::new(gt, pred)?;
    Ok(tally_prepared(
        &seq,
        None,
        f64::NEG_INFINITY,
        match_dist,
        true,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub target_recall: f64,
    /// Score threshold used; absent when the target is unreachable.
    pub threshold: Option<f64>,
    pub recall: f64,
    pub motar: f64,
    pub motp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmotaResult {
    pub amota: f64,
    pub amotp: f64,
    pub table: Vec<ThresholdRow>,
}

fn suite_tally(
    seqs: &[PreparedSequence],
    class: Option<u32>,
    min_score: f64,
    match_dist: f64,
) -> MotTally {
    let parts = par::map(seqs, |s| {
        tally_prepared(s, class, min_score, match_dist, false)
    });
    let mut t = MotTally::default();
    for p in &parts {
        t.merge(p);
    }
    t
}

/// AMOTA/AMOTP summed over several sequences. For each recall target
/// `k / n_recall` the threshold is the largest prediction score whose
/// achieved recall reaches the target; unreachable targets score 0.
pub fn amota_suite(
    seqs: &[PreparedSequence],
    class: Option<u32>,
    n_recall: usize,
    match_dist: f64,
) -> Result<AmotaResult> {
    if n_recall == 0 {
        return Err(Error::config("n_recall", "must be ≥ 1"));
    }
    let mut scores: Vec<f64> = seqs.iter().flat_map(|s| s.pred_scores(class)).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    scores.dedup();
    let mut memo: HashMap<usize, MotTally> = HashMap::new();
    let mut at = |i: usize| -> MotTally {
        memo.entry(i)
            .or_insert_with(|| suite_tally(seqs, class, scores[i], match_dist))
            .clone()
    };
    let exhaustive = scores.len() <= EXHAUSTIVE_SCORES;
    let recalls: Vec<f64> = if exhaustive {
        (0..scores.len()).map(|i| at(i).recall()).collect()
    } else {
        Vec::new()
    };

    let mut table = Vec::with_capacity(n_recall);
    let (mut motar_sum, mut motp_sum, mut achieved) = (0.0, 0.0, 0usize);
    for k in 1..=n_recall {
        let target = k as f64 / n_recall as f64;
        let found = if scores.is_empty() {
            None
        } else if exhaustive {
            recalls.iter().position(|&r| r >= target)
        } else {
            // recall grows as the threshold drops; find the first index reaching it
            let last = scores.len() - 1;
            if at(last).recall() < target {
                None
            } else {
                let (mut lo, mut hi) = (0usize, last);
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if at(mid).recall() >= target {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                Some(lo)
            }
        };
        match found {
            Some(i) => {
                let t = at(i);
                let motar = t.motar();
                let motp = t.motp(match_dist);
                motar_sum += motar;
                motp_sum += motp;
                achieved += 1;
                table.push(ThresholdRow {
                    target_recall: target,
                    threshold: Some(scores[i]),
                    recall: t.recall(),
                    motar,
                    motp: Some(motp),
                });
            }
            None => table.push(ThresholdRow {
                target_recall: target,
                threshold: None,
                recall: 0.0,
                motar: 0.0,
                motp: None,
            }),
        }
    }
    Ok(AmotaResult {
        amota: motar_sum / n_recall as f64,
        amotp: if achieved == 0 {
            match_dist
        } else {
            motp_sum / achieved as f64
        },
        table,
    })
}

pub fn amota(
    gt: &[TrackRecord],
    pred: &[TrackRecord],
    n_recall: usize,
    match_dist: f64,
) -> Result<AmotaResult> {
    amota_suite(
        &[PreparedSequence::new(gt, pred)?],
        None,
        n_recall,
        match_dist,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdeFde {
    pub ade: f64,
    pub fde: f64,
    pub count: usize,
}

/// Displacement errors of forecast positions (prefix sums of movements)
/// against ground-truth offsets from the origin, over `horizon` steps.
pub fn ade_fde(
    forecasts: &[TrajectoryForecast],
    gt_offsets: &[Vec<[f64; 2]>],
    horizon: usize,
) -> Result<AdeFde> {
    if forecasts.len() != gt_offsets.len() {
        return Err(Error::Invalid(
            "forecast and ground-truth counts differ".into(),
        ));
    }
    if horizon == 0 {
        return Err(Error::config("horizon", "must be ≥ 1"));
    }
    let (mut ade, mut fde) = (0.0, 0.0);
    for (f, g) in forecasts.iter().zip(gt_offsets) {
        if horizon > f.movements.len() || horizon > g.len() {
            return Err(Error::config(
                "horizon",
                format!(
                    "{horizon} exceeds forecast length {}",
                    f.movements.len().min(g.len())
                ),
            ));
        }
        let pos = f.positions();
        let errs: Vec<f64> = (0..horizon)
            .map(|k| (pos[k][0] - g[k][0]).hypot(pos[k][1] - g[k][1]))
            .collect();
        ade += errs.iter().sum::<f64>() / horizon as f64;
        fde += errs[horizon - 1];
    }
    let n = forecasts.len();
    if n == 0 {
        return Ok(AdeFde {
            ade: 0.0,
            fde: 0.0,
            count: 0,
        });
    }
    Ok(AdeFde {
        ade: ade / n as f64,
        fde: fde / n as f64,
        count: n,
    })
}

/// Pairs each forecast with the ground-truth future of the object its track
/// matched at the origin frame. Objects leaving before the horizon are skipped.
pub fn align_forecasts(
    gt: &[TrackRecord],
    pred: &[TrackRecord],
    forecasts: &[ForecastRecord],
    match_dist: f64,
    horizon: usize,
) -> Result<(Vec<TrajectoryForecast>, Vec<Vec<[f64; 2]>>)> {
    let seq = PreparedSequence::new(gt, pred)?;
    let tally = tally_prepared(&seq, None, f64::NEG_INFINITY, match_dist, true);
    let frame_ids: Vec<u64> = {
        let set: BTreeSet<u64> = gt.iter().chain(pred).map(|r| r.frame).collect();
        set.into_iter().collect()
    };
    let matched: HashMap<(u64, u64), u64> = tally
        .matches
        .iter()
        .map(|m| ((frame_ids[m.frame_index], m.pred_id), m.gt_id))
        .collect();
    let gt_pos: HashMap<(u64, u64), [f64; 2]> =
        gt.iter().map(|r| ((r.frame, r.id), [r.x, r.y])).collect();
    let (mut fs, mut gs) = (Vec::new(), Vec::new());
    for f in forecasts {
        let Some(&gid) = matched.get(&(f.frame, f.id)) else {
            continue;
        };
        let origin = gt_pos[&(f.frame, gid)];
        let future: Option<Vec<[f64; 2]>> = (1..=horizon as u64)
            .map(|k| {
                gt_pos
                    .get(&(f.frame + k, gid))
                    .map(|p| [p[0] - origin[0], p[1] - origin[1]])
            })
            .collect();
        if let Some(g) = future {
            fs.push(TrajectoryForecast {
                origin: f.frame,
                movements: f.movements.clone(),
            });
            gs.push(g);
        }
    }
    Ok((fs, gs))
}

/// Inputs of one evaluated sequence.
#[derive(Debug, Clone, Default)]
pub struct EvalSequence {
    pub gt: Vec<TrackRecord>,
    pub pred: Vec<TrackRecord>,
    pub forecasts: Vec<ForecastRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub match_dist: f64,
    pub n_recall: usize,
    pub horizon: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            match_dist: DEFAULT_MATCH_DIST,
            n_recall: DEFAULT_N_RECALL,
            horizon: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: u32,
    pub amota: f64,
    pub amotp: f64,
    pub mota: f64,
    pub motp: f64,
    pub ids: u64,
    pub recall: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub gt: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub note: String,
    pub config: EvalConfig,
    pub sequences: usize,
    pub aggregate: ClassMetrics,
    pub per_class: Vec<ClassMetrics>,
    pub ade: Option<f64>,
    pub fde: Option<f64>,
    pub forecasts_evaluated: usize,
}

const REPORT_NOTE: &str =
    "amota/amotp: mean over classes of the recall sweep; amotp is the mean over reached \
recall targets of the mean matched center distance (m); mota/ids/fp/fn use all predictions; \
ade/fde over forecasts of matched tracks with a full ground-truth future";

fn class_metrics(
    seqs: &[PreparedSequence],
    class: Option<u32>,
    config: &EvalConfig,
) -> Result<ClassMetrics> {
    let am = amota_suite(seqs, class, config.n_recall, config.match_dist)?;
    let t = suite_tally(seqs, class, f64::NEG_INFINITY, config.match_dist);
    Ok(ClassMetrics {
        class: class.unwrap_or(u32::MAX),
        amota: am.amota,
        amotp: am.amotp,
        mota: t.mota(),
        motp: t.motp(config.match_dist),
        ids: t.ids,
        recall: t.recall(),
        tp: t.tp,
        fp: t.fp,
        fn_: t.fn_,
        gt: t.gt,
    })
}

/// Full report over a suite of sequences; tallies are summed across
/// sequences before any ratio is taken.
pub fn evaluate(seqs: &[EvalSequence], config: &EvalConfig) -> Result<MetricsReport> {
    let prepared: Vec<PreparedSequence> = seqs
        .iter()
        .map(|s| PreparedSequence::new(&s.gt, &s.pred))
        .collect::<Result<_>>()?;
    let classes: BTreeSet<u32> = prepared.iter().flat_map(|s| s.classes()).collect();
    let per_class: Vec<ClassMetrics> = classes
        .iter()
        .map(|&c| class_metrics(&prepared, Some(c), config))
        .collect::<Result<_>>()?;
    let mut aggregate = class_metrics(&prepared, None, config)?;
    if !per_class.is_empty() {
        let n = per_class.len() as f64;
        aggregate.amota = per_class.iter().map(|c| c.amota).sum::<f64>() / n;
        aggregate.amotp = per_class.iter().map(|c| c.amotp).sum::<f64>() / n;
    }

    let (mut fs, mut gs) = (Vec::new(), Vec::new());
    for s in seqs {
        let (f, g) = align_forecasts(
            &s.gt,
            &s.pred,
            &s.forecasts,
            config.match_dist,
            config.horizon,
        )?;
        for (f, g) in f.into_iter().zip(g) {
            if f.movements.len() >= config.horizon {
                fs.push(f);
                gs.push(g);
            }
        }
    }
    let disp = ade_fde(&fs, &gs, config.horizon)?;
    Ok(MetricsReport {
        note: REPORT_NOTE.to_string(),
        config: *config,
        sequences: seqs.len(),
        aggregate,
        per_class,
        ade: (disp.count > 0).then_some(disp.ade),
        fde: (disp.count > 0).then_some(disp.fde),
        forecasts_evaluated: disp.count,
    })
}
