#[path = "support/oracles.rs"]
mod oracles;

use proptest::prelude::*;
use querytrack::metrics::{amota, clear_mot, DEFAULT_MATCH_DIST};

use oracles::{random_instance, record};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn clear_mot_matches_exhaustive_assignment(seed in any::<u64>()) {
        let (gt, pred) = random_instance(seed);
        let lib = clear_mot(&gt, &pred, DEFAULT_MATCH_DIST).unwrap();
        let o = oracles::clear_mot(&gt, &pred, DEFAULT_MATCH_DIST);
        prop_assert_eq!((lib.gt, lib.tp, lib.fp, lib.fn_, lib.ids), (o.gt, o.tp, o.fp, o.fn_, o.ids));
        prop_assert!((lib.dist_sum - o.dist_sum).abs() <= 1e-12);
    }

    #[test]
    fn amota_matches_threshold_scan(seed in any::<u64>(), n_recall in 1usize..50) {
        let (gt, pred) = random_instance(seed);
        let lib = amota(&gt, &pred, n_recall, DEFAULT_MATCH_DIST).unwrap();
        let (a, p) = oracles::amota(&gt, &pred, n_recall, DEFAULT_MATCH_DIST);
        prop_assert!((lib.amota - a).abs() <= 1e-12, "amota {} vs {}", lib.amota, a);
        prop_assert!((lib.amotp - p).abs() <= 1e-12, "amotp {} vs {}", lib.amotp, p);
    }

    #[test]
    fn perfect_predictions_score_one(seed in any::<u64>()) {
        let (gt, _) = random_instance(seed);
        prop_assume!(!gt.is_empty());
        let t = clear_mot(&gt, &gt, DEFAULT_MATCH_DIST).unwrap();
        prop_assert_eq!(t.mota(), 1.0);
        prop_assert_eq!(t.ids, 0);
        let a = amota(&gt, &gt, 40, DEFAULT_MATCH_DIST).unwrap();
        prop_assert_eq!(a.amota, 1.0);
        prop_assert_eq!(a.amotp, 0.0);
    }

    #[test]
    fn relabeling_predictions_does_not_change_scores(seed in any::<u64>(), offset in 1u64..1000) {
        let (gt, pred) = random_instance(seed);
        let shifted: Vec<_> = pred.iter().map(|p| querytrack::io::TrackRecord { id: p.id + offset, ..p.clone() }).collect();
        let a = amota(&gt, &pred, 40, DEFAULT_MATCH_DIST).unwrap();
        let b = amota(&gt, &shifted, 40, DEFAULT_MATCH_DIST).unwrap();
        prop_assert_eq!(a.amota, b.amota);
    }

    #[test]
    fn amota_is_bounded_and_falls_with_injected_false_positives(seed in any::<u64>(), scores in prop::collection::vec(1u32..=20, 1..6)) {
        let (gt, pred) = random_instance(seed);
        let base = amota(&gt, &pred, 40, DEFAULT_MATCH_DIST).unwrap().amota;
        prop_assert!((0.0..=1.0).contains(&base));
        let mut more = pred.clone();
        let mut prev = base;
        for (k, s) in scores.iter().enumerate() {
            // far from everything, in a frame that already exists
            more.push(record(k as u64 % 3, 900 + k as u64, 1000.0, 1000.0, *s as f64 / 20.0, 0));
            let a = amota(&gt, &more, 40, DEFAULT_MATCH_DIST).unwrap().amota;
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(a <= prev + 1e-15, "{} after {} injected, was {}", a, k + 1, prev);
            prev = a;
        }
    }

    #[test]
    fn single_target_sweep_is_motar_at_full_recall(seed in any::<u64>()) {
        let (gt, pred) = random_instance(seed);
        prop_assume!(!gt.is_empty());
        let flat: Vec<_> = pred.iter().map(|p| querytrack::io::TrackRecord { score: 0.5, ..p.clone() }).collect();
        let a = amota(&gt, &flat, 1, DEFAULT_MATCH_DIST).unwrap().amota;
        let t = clear_mot(&gt, &flat, DEFAULT_MATCH_DIST).unwrap();
        let p = t.gt as f64;
        let r = t.tp as f64 / p;
        if t.tp == t.gt {
            let motar = 1.0 - ((t.ids + t.fp + t.fn_) as f64 - (1.0 - r) * p) / (r * p);
            prop_assert!((a - motar.max(0.0)).abs() <= 1e-15, "{} vs {}", a, motar);
        } else {
            prop_assert_eq!(a, 0.0);
        }
    }
}

#[test]
fn swap_is_one_id_switch() {
    let gt = vec![
        record(0, 1, 0.0, 0.0, 1.0, 0),
        record(1, 1, 0.5, 0.0, 1.0, 0),
    ];
    let pred = vec![
        record(0, 7, 0.1, 0.0, 0.9, 0),
        record(1, 8, 0.6, 0.0, 0.9, 0),
    ];
    let t = clear_mot(&gt, &pred, DEFAULT_MATCH_DIST).unwrap();
    assert_eq!((t.tp, t.fp, t.fn_, t.ids), (2, 0, 0, 1));
    assert!((t.mota() - 0.5).abs() < 1e-15);
}

#[test]
fn continuity_beats_a_closer_newcomer() {
    // frame 1: pred 8 is closer, but the frame-0 pairing with 7 stays valid
    let gt = vec![
        record(0, 1, 0.0, 0.0, 1.0, 0),
        record(1, 1, 0.0, 0.0, 1.0, 0),
    ];
    let pred = vec![
        record(0, 7, 0.5, 0.0, 0.9, 0),
        record(1, 7, 1.5, 0.0, 0.9, 0),
        record(1, 8, 0.1, 0.0, 0.9, 0),
    ];
    let t = clear_mot(&gt, &pred, DEFAULT_MATCH_DIST).unwrap();
    assert_eq!((t.tp, t.fp, t.ids), (2, 1, 0));
    assert!((t.dist_sum - 2.0).abs() < 1e-15);
}

#[test]
fn class_mismatch_never_matches() {
    let gt = vec![record(0, 1, 0.0, 0.0, 1.0, 0)];
    let pred = vec![record(0, 7, 0.0, 0.0, 0.9, 1)];
    let t = clear_mot(&gt, &pred, DEFAULT_MATCH_DIST).unwrap();
    assert_eq!((t.tp, t.fp, t.fn_), (0, 1, 1));
}

#[test]
fn half_recall_example() {
    // two objects, one found: targets above 0.5 are unreachable
    let gt = vec![
        record(0, 1, 0.0, 0.0, 1.0, 0),
        record(0, 2, 10.0, 0.0, 1.0, 0),
    ];
    let pred = vec![record(0, 7, 0.3, 0.4, 0.9, 0)];
    let a = amota(&gt, &pred, 4, DEFAULT_MATCH_DIST).unwrap();
    assert!((a.amota - 0.5).abs() < 1e-15);
    assert!((a.amotp - 0.5).abs() < 1e-15);
    assert_eq!(a.table.iter().filter(|r| r.threshold.is_none()).count(), 2);
}

#[test]
fn random_instances_exercise_every_error_kind() {
    let tallies: Vec<_> = (0..200)
        .map(|s| {
            let (gt, pred) = random_instance(s);
            oracles::clear_mot(&gt, &pred, DEFAULT_MATCH_DIST)
        })
        .collect();
    assert!(tallies.iter().filter(|t| t.ids > 0).count() >= 10);
    assert!(tallies.iter().filter(|t| t.fp > 0).count() >= 50);
    assert!(tallies.iter().filter(|t| t.fn_ > 0).count() >= 50);
    let partial = (0..200)
        .filter(|&s| {
            let (gt, pred) = random_instance(s);
            amota(&gt, &pred, 10, DEFAULT_MATCH_DIST)
                .unwrap()
                .table
                .iter()
                .any(|r| r.threshold.is_none())
        })
        .count();
    assert!(partial >= 50);
}
