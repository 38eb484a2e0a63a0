use proptest::prelude::*;
use querytrack_nn::{mha_forward, AttentionBlock, AttentionParams, SeededInit, Tensor2D};

const D: usize = 8;

fn tensor(rows: usize, seed: u64) -> Tensor2D {
    let mut init = SeededInit::new(seed);
    init.uniform(rows, D, 1)
}

fn permute_rows(t: &Tensor2D, perm: &[usize]) -> Tensor2D {
    let rows: Vec<Vec<f64>> = perm.iter().map(|&i| t.row(i).to_vec()).collect();
    Tensor2D::from_rows(&rows).unwrap()
}

fn perm_from(seed: u64, n: usize) -> Vec<usize> {
    let mut init = SeededInit::new(seed);
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (init.next_f64() * (i + 1) as f64) as usize;
        p.swap(i, j);
    }
    p
}

fn mask_from(bits: u32, m: usize) -> Vec<bool> {
    let mut mask: Vec<bool> = (0..m).map(|j| bits >> j & 1 == 1).collect();
    if !mask.iter().any(|&b| b) {
        mask[0] = true;
    }
    mask
}

fn close(a: &Tensor2D, b: &Tensor2D, tol: f64) -> bool {
    a.shape() == b.shape()
        && a.data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_rows_sum_to_one_and_masked_keys_get_zero(
        seed in 0u64..10_000, n in 1usize..5, m in 1usize..7, bits in any::<u32>(), heads in prop::sample::select(vec![1usize, 2, 4]),
    ) {
        let params = AttentionParams::seeded(D, heads, &mut SeededInit::new(seed)).unwrap();
        let q = tensor(n, seed + 1);
        let k = tensor(m, seed + 2);
        let v = tensor(m, seed + 3);
        let mask = mask_from(bits, m);
        let (_, cache) = mha_forward(&q, &k, &v, &tensor(n, seed + 4), &tensor(m, seed + 5), &mask, &params, None).unwrap();
        for h in 0..cache.num_heads() {
            let a = cache.weights(h);
            for i in 0..n {
                let s: f64 = a.row(i).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                for j in 0..m {
                    prop_assert!(a.get(i, j) >= 0.0);
                    if !mask[j] {
                        prop_assert_eq!(a.get(i, j), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn masked_key_contents_do_not_affect_output(
        seed in 0u64..10_000, n in 1usize..4, m in 2usize..7, bits in any::<u32>(),
    ) {
        let params = AttentionParams::seeded(D, 2, &mut SeededInit::new(seed)).unwrap();
        let q = tensor(n, seed + 1);
        let qp = tensor(n, seed + 4);
        let mask = mask_from(bits, m);
        let (k1, v1, p1) = (tensor(m, seed + 2), tensor(m, seed + 3), tensor(m, seed + 5));
        let (mut k2, mut v2, mut p2) = (k1.clone(), v1.clone(), p1.clone());
        let junk = tensor(m, seed + 99);
        for j in (0..m).filter(|&j| !mask[j]) {
            k2.row_mut(j).copy_from_slice(junk.row(j));
            v2.row_mut(j).iter_mut().for_each(|x| *x *= -7.0);
            p2.row_mut(j).iter_mut().for_each(|x| *x += 3.0);
        }
        let (a, _) = mha_forward(&q, &k1, &v1, &qp, &p1, &mask, &params, None).unwrap();
        let (b, _) = mha_forward(&q, &k2, &v2, &qp, &p2, &mask, &params, None).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn key_permutation_invariance_is_bit_exact(seed in 0u64..10_000, n in 1usize..4, m in 1usize..7, bits in any::<u32>()) {
        let params = AttentionParams::seeded(D, 2, &mut SeededInit::new(seed)).unwrap();
        let q = tensor(n, seed + 1);
        let qp = tensor(n, seed + 4);
        let (k, v, kp) = (tensor(m, seed + 2), tensor(m, seed + 3), tensor(m, seed + 5));
        let mask = mask_from(bits, m);
        let perm = perm_from(seed, m);
        let pmask: Vec<bool> = perm.iter().map(|&j| mask[j]).collect();
        let (a, _) = mha_forward(&q, &k, &v, &qp, &kp, &mask, &params, None).unwrap();
        let (b, _) = mha_forward(&q, &permute_rows(&k, &perm), &permute_rows(&v, &perm), &qp, &permute_rows(&kp, &perm), &pmask, &params, None).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn self_attention_block_is_permutation_equivariant(seed in 0u64..10_000, n in 1usize..6) {
        let block = AttentionBlock::seeded(D, 2, 2, 6, &mut SeededInit::new(seed)).unwrap();
        let x = tensor(n, seed + 1);
        let pe = SeededInit::new(seed + 2).uniform(n, 6, 1);
        let perm = perm_from(seed, n);
        let (a, _) = block.forward_self(&x, &pe, None).unwrap();
        let (b, _) = block.forward_self(&permute_rows(&x, &perm), &permute_rows(&pe, &perm), None).unwrap();
        prop_assert!(close(&permute_rows(&a, &perm), &b, 1e-12));
    }

    #[test]
    fn cross_block_is_query_equivariant(seed in 0u64..10_000, n in 1usize..5, m in 1usize..5) {
        let block = AttentionBlock::seeded(D, 2, 2, 6, &mut SeededInit::new(seed)).unwrap();
        let x = tensor(n, seed + 1);
        let xp = SeededInit::new(seed + 2).uniform(n, 6, 1);
        let mem = tensor(m, seed + 3);
        let mp = SeededInit::new(seed + 4).uniform(m, 6, 1);
        let mask = vec![true; m];
        let perm = perm_from(seed, n);
        let (a, _) = block.forward_cross(&x, &xp, &mem, &mp, &mask, None).unwrap();
        let (b, _) = block.forward_cross(&permute_rows(&x, &perm), &permute_rows(&xp, &perm), &mem, &mp, &mask, None).unwrap();
        prop_assert!(close(&permute_rows(&a, &perm), &b, 1e-12));
    }
}

#[test]
fn identity_attention_on_single_key_returns_query_plus_value() {
    let params = AttentionParams::identity(D, 2).unwrap();
    let q = tensor(1, 1);
    let v = tensor(1, 2);
    let zero = Tensor2D::zeros(1, D);
    let (out, _) =
        mha_forward(&q, &tensor(1, 3), &v, &zero, &zero, &[true], &params, None).unwrap();
    for c in 0..D {
        assert!((out.get(0, c) - q.get(0, c) - v.get(0, c)).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn l1_matches_mean_absolute_difference(pairs in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 1..40)) {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let mut total = 0.0;
        for (a, b) in &pairs {
            total += if a > b { a - b } else { b - a };
        }
        let expect = total / pairs.len() as f64;
        let got = querytrack_nn::l1_loss(&p, &t).unwrap();
        prop_assert!((got - expect).abs() <= 1e-12 * expect.max(1.0));
    }
}
