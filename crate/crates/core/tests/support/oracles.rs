//! Brute-force reference implementations of the tracking metrics, written
//! independently of the library: every per-frame assignment is enumerated
//! instead of solved.

use std::collections::{BTreeMap, HashMap};

use querytrack::io::TrackRecord;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tally {
    pub gt: u64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub ids: u64,
    pub dist_sum: f64,
}

fn dist(a: &TrackRecord, b: &TrackRecord) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// Best matching among the free pairs: most pairs first, then the smallest
/// distance sum. Exhaustive over every injective partial map.
fn best_matching(valid: &[Vec<Option<f64>>], n_pred: usize) -> Vec<(usize, usize)> {
    fn rec(
        i: usize,
        valid: &[Vec<Option<f64>>],
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        cost: f64,
        best: &mut (usize, f64, Vec<(usize, usize)>),
    ) {
        if i == valid.len() {
            if cur.len() > best.0 || (cur.len() == best.0 && cost < best.1) {
                *best = (cur.len(), cost, cur.clone());
            }
            return;
        }
        rec(i + 1, valid, used, cur, cost, best);
        for j in 0..used.len() {
            if let (false, Some(d)) = (used[j], valid[i][j]) {
                used[j] = true;
                cur.push((i, j));
                rec(i + 1, valid, used, cur, cost + d, best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, f64::INFINITY, Vec::new());
    rec(
        0,
        valid,
        &mut vec![false; n_pred],
        &mut Vec::new(),
        0.0,
        &mut best,
    );
    best.2
}

/// CLEAR-MOT with continuity: a pairing from an earlier frame is kept while
/// both ids are present and within range, in ground-truth row order.
pub fn clear_mot(gt: &[TrackRecord], pred: &[TrackRecord], match_dist: f64) -> Tally {
    let mut frames: BTreeMap<u64, (Vec<&TrackRecord>, Vec<&TrackRecord>)> = BTreeMap::new();
    for g in gt {
        frames.entry(g.frame).or_default().0.push(g);
    }
    for p in pred {
        frames.entry(p.frame).or_default().1.push(p);
    }
    let ok = |g: &TrackRecord, p: &TrackRecord| g.class == p.class && dist(g, p) < match_dist;
    let mut t = Tally::default();
    let mut last: HashMap<u64, u64> = HashMap::new();
    for (g, p) in frames.values() {
        let mut pairs = Vec::new();
        let mut g_free = vec![true; g.len()];
        let mut p_free = vec![true; p.len()];
        for (i, go) in g.iter().enumerate() {
            let Some(&pid) = last.get(&go.id) else {
                continue;
            };
            if let Some(j) = p.iter().position(|po| po.id == pid) {
                if p_free[j] && ok(go, p[j]) {
                    g_free[i] = false;
                    p_free[j] = false;
                    pairs.push((i, j));
                }
            }
        }
        let valid: Vec<Vec<Option<f64>>> = (0..g.len())
            .map(|i| {
                (0..p.len())
                    .map(|j| (g_free[i] && p_free[j] && ok(g[i], p[j])).then(|| dist(g[i], p[j])))
                    .collect()
            })
            .collect();
        pairs.extend(best_matching(&valid, p.len()));
        for &(i, j) in &pairs {
            if let Some(prev) = last.insert(g[i].id, p[j].id) {
                if prev != p[j].id {
                    t.ids += 1;
                }
            }
            t.dist_sum += dist(g[i], p[j]);
        }
        t.gt += g.len() as u64;
        t.tp += pairs.len() as u64;
        t.fp += (p.len() - pairs.len()) as u64;
        t.fn_ += (g.len() - pairs.len()) as u64;
    }
    t
}

/// AMOTA/AMOTP by scanning every distinct score as a threshold. MOTAR uses
/// the achieved recall `r = TP / P` in `1 − (IDS + FP + FN − (1 − r)P) / (rP)`.
pub fn amota(
    gt: &[TrackRecord],
    pred: &[TrackRecord],
    n_recall: usize,
    match_dist: f64,
) -> (f64, f64) {
    let mut scores: Vec<f64> = pred.iter().map(|p| p.score).collect();
    scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
    scores.dedup();
    let tallies: Vec<Tally> = scores
        .iter()
        .map(|&s| {
            let kept: Vec<TrackRecord> = pred.iter().filter(|p| p.score >= s).cloned().collect();
            clear_mot(gt, &kept, match_dist)
        })
        .collect();
    let (mut motar_sum, mut motp_sum, mut hits) = (0.0, 0.0, 0usize);
    for k in 1..=n_recall {
        let target = k as f64 / n_recall as f64;
        let Some(t) = tallies.iter().find(|t| t.tp as f64 / t.gt as f64 >= target) else {
            continue;
        };
        let p = t.gt as f64;
        let r = t.tp as f64 / p;
        let motar = 1.0 - (t.ids + t.fp + t.fn_) as f64 / (r * p) + (1.0 - r) * p / (r * p);
        motar_sum += motar.max(0.0);
        motp_sum += t.dist_sum / t.tp as f64;
        hits += 1;
    }
    let amotp = if hits == 0 {
        match_dist
    } else {
        motp_sum / hits as f64
    };
    (motar_sum / n_recall as f64, amotp)
}

pub fn record(frame: u64, id: u64, x: f64, y: f64, score: f64, class: u32) -> TrackRecord {
    TrackRecord {
        frame,
        id,
        x,
        y,
        z: 0.8,
        l: 4.0,
        w: 2.0,
        h: 1.6,
        yaw: 0.0,
        vx: 0.0,
        vy: 0.0,
        score,
        class,
    }
}

/// A random 3-frame instance with at most 4 objects per side: ground truth
/// on a loose grid, predictions scattered around it with swapped and
/// spurious ids.
pub fn random_instance(seed: u64) -> (Vec<TrackRecord>, Vec<TrackRecord>) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let n_gt = rng.random_range(1..=4usize);
    let n_pred = rng.random_range(1..=4usize);
    let classes = rng.random_range(1..=2u32);
    let gt_class: Vec<u32> = (0..n_gt).map(|_| rng.random_range(0..classes)).collect();
    let mut gt = Vec::new();
    let mut pred = Vec::new();
    for f in 0..3u64 {
        for i in 0..n_gt {
            if rng.random_bool(0.85) {
                let x = 3.0 * i as f64 + 0.4 * f as f64 + rng.random_range(-0.3..0.3);
                gt.push(record(
                    f,
                    i as u64,
                    x,
                    rng.random_range(-0.5..0.5),
                    1.0,
                    gt_class[i],
                ));
            }
        }
        for j in 0..n_pred {
            if rng.random_bool(0.8) {
                let near = rng.random_range(0..n_gt);
                let x = 3.0 * near as f64 + 0.4 * f as f64 + rng.random_range(-2.0..2.0);
                let class = if rng.random_bool(0.8) {
                    gt_class[near]
                } else {
                    rng.random_range(0..classes)
                };
                let score = (rng.random_range(1..=20u32) as f64) / 20.0;
                pred.push(record(
                    f,
                    10 + j as u64,
                    x,
                    rng.random_range(-1.0..1.0),
                    score,
                    class,
                ));
            }
        }
    }
    (gt, pred)
}
