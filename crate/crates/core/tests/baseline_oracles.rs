#[path = "support/golden.rs"]
mod golden;

use std::f64::consts::PI;

use proptest::prelude::*;
use querytrack::baselines::{
    assignment_cost, greedy, hungarian, kalman_predict, kalman_update, run_tbd, Association,
    KalmanNoise, KalmanTrack, TbdConfig,
};
use querytrack::io::to_jsonl;
use querytrack::metrics::clear_mot;
use querytrack::types::Box3D;
use querytrack_nn::Tensor2D;

type M = Vec<Vec<f64>>;

fn mat(r: usize, c: usize) -> M {
    vec![vec![0.0; c]; r]
}

fn eye(n: usize) -> M {
    let mut m = mat(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn mul(a: &M, b: &M) -> M {
    let mut out = mat(a.len(), b[0].len());
    for i in 0..a.len() {
        for j in 0..b[0].len() {
            out[i][j] = (0..b.len()).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn t(a: &M) -> M {
    let mut out = mat(a[0].len(), a.len());
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[j][i] = *v;
        }
    }
    out
}

fn add(a: &M, b: &M, s: f64) -> M {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + s * q).collect())
        .collect()
}

/// Gauss-Jordan with partial pivoting.
fn inv(a: &M) -> M {
    let n = a.len();
    let mut aug: M = a
        .iter()
        .zip(eye(n))
        .map(|(r, e)| [r.clone(), e].concat())
        .collect();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| aug[i][c].abs().total_cmp(&aug[j][c].abs()))
            .unwrap();
        aug.swap(c, p);
        let d = aug[c][c];
        aug[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != c {
                let f = aug[r][c];
                let pivot = aug[c].clone();
                aug[r].iter_mut().zip(&pivot).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Textbook constant-velocity filter on `(x, y, z, yaw, l, w, h, vx, vy)`:
/// `x ← Fx`, `P ← FPFᵀ + Q`, then `K = PHᵀ(HPHᵀ + R)⁻¹`, `x ← x + K(z − Hx)`,
/// `P ← (I − KH)P`.
struct Oracle {
    x: Vec<f64>,
    p: M,
}

impl Oracle {
    fn predict(&mut self, dt: f64, q: f64) {
        let mut f = eye(9);
        f[0][7] = dt;
        f[1][8] = dt;
        let col: M = self.x.iter().map(|v| vec![*v]).collect();
        self.x = mul(&f, &col).into_iter().map(|r| r[0]).collect();
        self.p = add(&mul(&mul(&f, &self.p), &t(&f)), &eye(9), q * q);
    }

    fn update(&mut self, z: [f64; 7], r: f64) {
        let mut h = mat(7, 9);
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let mut y: Vec<f64> = (0..7).map(|i| z[i] - self.x[i]).collect();
        y[3] = wrap(y[3]);
        let s = add(&mul(&mul(&h, &self.p), &t(&h)), &eye(7), r * r);
        let k = mul(&mul(&self.p, &t(&h)), &inv(&s));
        for i in 0..9 {
            self.x[i] += (0..7).map(|j| k[i][j] * y[j]).sum::<f64>();
        }
        self.x[3] = wrap(self.x[3]);
        self.p = mul(&add(&eye(9), &mul(&k, &h), -1.0), &self.p);
    }
}

fn bx(v: &[f64]) -> Box3D {
    Box3D {
        center: [v[0], v[1], v[2]],
        size: [v[4], v[5], v[6]],
        yaw: v[3],
        velocity: [v[7], v[8]],
        score: 0.8,
        class: 0,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kalman_cycles_match_textbook_formulas(
        init in prop::collection::vec(-2.0..2.0f64, 9),
        a in prop::collection::vec(-1.0..1.0f64, 81),
        steps in prop::collection::vec((0.05..1.0f64, prop::collection::vec(-3.0..3.0f64, 7)), 1..6),
        q in 0.01..0.5f64,
        r in 0.1..1.0f64,
    ) {
        let noise = KalmanNoise { process_std: q, measurement_std: r };
        let mut sizes = init.clone();
        for s in &mut sizes[4..7] {
            *s = s.abs() + 1.0;
        }
        let mut track = KalmanTrack::new(0, &bx(&sizes), &noise);
        // random symmetric positive definite starting covariance A·Aᵀ + I
        let am: M = a.chunks(9).map(|c| c.to_vec()).collect();
        let p0 = add(&mul(&am, &t(&am)), &eye(9), 1.0);
        for i in 0..9 {
            for j in 0..9 {
                track.p[(i, j)] = p0[i][j];
            }
        }
        let mut oracle = Oracle { x: (0..9).map(|i| track.x[i]).collect(), p: p0 };
        for (dt, z) in &steps {
            track = kalman_predict(&track, *dt, &noise).unwrap();
            oracle.predict(*dt, q);
            let mut zb = z.clone();
            zb[3] = wrap(zb[3]);
            for s in &mut zb[4..7] {
                *s = s.abs() + 1.0;
            }
            let meas = bx(&[zb.clone(), vec![0.0, 0.0]].concat());
            track = kalman_update(&track, &meas, &noise).unwrap();
            oracle.update([zb[0], zb[1], zb[2], zb[3], zb[4], zb[5], zb[6]], r);
            for i in 0..9 {
                prop_assert!(close(track.x[i], oracle.x[i]), "x[{}] {} vs {}", i, track.x[i], oracle.x[i]);
                for j in 0..9 {
                    prop_assert!(close(track.p[(i, j)], oracle.p[i][j]), "P[{},{}]", i, j);
                    prop_assert!((track.p[(i, j)] - track.p[(j, i)]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn hungarian_is_optimal_over_all_permutations(costs in prop::collection::vec(0.0..10.0f64, 25)) {
        let cost = Tensor2D::from_vec(5, 5, costs.clone()).unwrap();
        let pairs = hungarian(&cost);
        prop_assert_eq!(pairs.len(), 5);
        let mut best = f64::INFINITY;
        let mut perm: Vec<usize> = (0..5).collect();
        let mut count = 0;
        permutations(&mut perm, 0, &mut |p| {
            count += 1;
            best = best.min((0..5).map(|i| costs[i * 5 + p[i]]).sum());
        });
        prop_assert_eq!(count, 120);
        prop_assert!((assignment_cost(&cost, &pairs) - best).abs() < 1e-9);
        prop_assert!(assignment_cost(&cost, &pairs) <= assignment_cost(&cost, &greedy(&cost)) + 1e-9);
    }

    #[test]
    fn rectangular_hungarian_is_optimal(rows in 1usize..5, cols in 1usize..5, costs in prop::collection::vec(0.0..10.0f64, 16)) {
        let data: Vec<f64> = costs[..rows * cols].to_vec();
        let cost = Tensor2D::from_vec(rows, cols, data.clone()).unwrap();
        let pairs = hungarian(&cost);
        prop_assert_eq!(pairs.len(), rows.min(cols));
        // brute force over injective maps from the smaller side
        let mut best = f64::INFINITY;
        let (small, large) = (rows.min(cols), rows.max(cols));
        let mut idx: Vec<usize> = (0..large).collect();
        permutations(&mut idx, 0, &mut |p| {
            let c: f64 = (0..small)
                .map(|i| if rows <= cols { data[i * cols + p[i]] } else { data[p[i] * cols + i] })
                .sum();
            best = best.min(c);
        });
        prop_assert!((assignment_cost(&cost, &pairs) - best).abs() < 1e-9);
        prop_assert!(assignment_cost(&cost, &pairs) <= assignment_cost(&cost, &greedy(&cost)) + 1e-9);
    }
}

fn permutations(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, f);
        v.swap(k, i);
    }
}

#[test]
fn tbd_fixture_matches_golden_logs() {
    let (dets, gt) = golden::fixture();
    let config = TbdConfig::default();
    for (mode, name) in [
        (Association::Hungarian, "tbd-hungarian"),
        (Association::Greedy, "tbd-greedy"),
    ] {
        let out = run_tbd(&dets, mode, &config).unwrap();
        assert_eq!(
            to_jsonl(&out),
            to_jsonl(&run_tbd(&dets, mode, &config).unwrap())
        );
        // sanity before trusting the frozen log: it actually tracks the fixture
        let tally = clear_mot(&gt, &out, 2.0).unwrap();
        assert!(tally.tp * 10 > tally.gt * 7, "{name}: {tally:?}");
        golden::check(&format!("{name}.tracks.jsonl"), &to_jsonl(&out));
    }
}
