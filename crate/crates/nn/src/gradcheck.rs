//! Central finite-difference checks of every backward pass in this crate.
//!
//! Each instance builds a small randomized problem, contracts the output with
//! a random weighting to get a scalar loss, and compares the analytic
//! gradient of every parameter and input against `(L(x+h) − L(x−h)) / 2h`.

use crate::attention::{mha_backward, mha_forward, AttentionParams};
use crate::block::AttentionBlock;
use crate::error::Result;
use crate::init::SeededInit;
use crate::loss::{focal_loss, focal_loss_grad_logit, l1_loss, l1_loss_grad, sigmoid};
use crate::mlp::MlpParams;
use crate::params::{flatten, unflatten_into, zeros_like, Params};
use crate::tensor::Tensor2D;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Magnitudes below this are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Attention,
    CrossBlock,
    SelfBlock,
    Mlp,
    Focal,
    L1,
}

impl CheckKind {
    pub const ALL: [CheckKind; 6] = [
        CheckKind::Attention,
        CheckKind::CrossBlock,
        CheckKind::SelfBlock,
        CheckKind::Mlp,
        CheckKind::Focal,
        CheckKind::L1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Attention => "attention",
            CheckKind::CrossBlock => "cross_block",
            CheckKind::SelfBlock => "self_block",
            CheckKind::Mlp => "mlp",
            CheckKind::Focal => "focal",
            CheckKind::L1 => "l1",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub kind: CheckKind,
    pub seed: u64,
    pub checked: usize,
    pub max_rel_err: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_err < REL_TOL
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Largest relative error between `analytic` and central differences of `f`
/// around `x0`.
pub fn compare(analytic: &[f64], x0: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    assert_eq!(analytic.len(), x0.len());
    let mut x = x0.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        x[i] = x0[i] + FD_STEP;
        let up = f(&x);
        x[i] = x0[i] - FD_STEP;
        let down = f(&x);
        x[i] = x0[i];
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    worst
}

fn rand_tensor(init: &mut SeededInit, rows: usize, cols: usize) -> Tensor2D {
    let data = (0..rows * cols)
        .map(|_| 2.0 * init.next_f64() - 1.0)
        .collect();
    Tensor2D::from_vec(rows, cols, data).expect("sized")
}

fn weighted_sum(y: &Tensor2D, w: &Tensor2D) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn random_mask(init: &mut SeededInit, m: usize) -> Vec<bool> {
    let mut mask: Vec<bool> = (0..m).map(|_| init.next_f64() < 0.7).collect();
    let keep = (init.next_f64() * m as f64) as usize % m;
    mask[keep] = true;
    mask
}

/// Splits `flat` into consecutive tensors with the given shapes.
fn split(flat: &[f64], shapes: &[(usize, usize)]) -> Vec<Tensor2D> {
    let mut off = 0;
    shapes
        .iter()
        .map(|&(r, c)| {
            let t = Tensor2D::from_vec(r, c, flat[off..off + r * c].to_vec()).expect("sized");
            off += r * c;
            t
        })
        .collect()
}

fn check_attention(seed: u64) -> Result<(usize, f64)> {
    let mut init = SeededInit::new(seed);
    let (d, heads) = (8, 2);
    let n = 1 + (init.next_f64() * 3.0) as usize;
    let m = 1 + (init.next_f64() * 5.0) as usize;
    let params = AttentionParams::seeded(d, heads, &mut init)?;
    let shapes = [(n, d), (m, d), (m, d), (n, d), (m, d)];
    let inputs: Vec<Tensor2D> = shapes
        .iter()
        .map(|&(r, c)| rand_tensor(&mut init, r, c))
        .collect();
    let mask = random_mask(&mut init, m);
    let w = rand_tensor(&mut init, n, d);

    let (_, cache) = mha_forward(
        &inputs[0], &inputs[1], &inputs[2], &inputs[3], &inputs[4], &mask, &params, None,
    )?;
    let g = mha_backward(&params, &cache, &w)?;
    let mut analytic = flatten(&g.params);
    for t in [&g.d_queries, &g.d_keys, &g.d_values, &g.d_q_pe, &g.d_k_pe] {
        analytic.extend_from_slice(t.data());
    }
    let np = params.num_params();
    let mut x0 = flatten(&params);
    for t in &inputs {
        x0.extend_from_slice(t.data());
    }
    let mut p = params.clone();
    let worst = compare(&analytic, &x0, |x| {
        unflatten_into(&mut p, &x[..np]);
        let t = split(&x[np..], &shapes);
        let (y, _) =
            mha_forward(&t[0], &t[1], &t[2], &t[3], &t[4], &mask, &p, None).expect("valid");
        weighted_sum(&y, &w)
    });
    Ok((analytic.len(), worst))
}

fn check_block(seed: u64, self_attention: bool) -> Result<(usize, f64)> {
    let mut init = SeededInit::new(seed);
    let (d, heads, layers, pe_dim) = (8, 2, 2, 6);
    let n = 1 + (init.next_f64() * 3.0) as usize;
    let m = if self_attention {
        n
    } else {
        1 + (init.next_f64() * 4.0) as usize
    };
    let block = AttentionBlock::seeded(d, heads, layers, pe_dim, &mut init)?;
    let query = rand_tensor(&mut init, n, d);
    let query_pe = rand_tensor(&mut init, n, pe_dim);
    let memory = rand_tensor(&mut init, m, d);
    let memory_pe = rand_tensor(&mut init, m, pe_dim);
    let mask = if self_attention {
        vec![true; n]
    } else {
        random_mask(&mut init, m)
    };
    let w = rand_tensor(&mut init, n, d);
    let run = |b: &AttentionBlock, q: &Tensor2D, mem: &Tensor2D| {
        if self_attention {
            b.forward_self(q, &query_pe, None)
        } else {
            b.forward_cross(q, &query_pe, mem, &memory_pe, &mask, None)
        }
    };

    let (_, cache) = run(&block, &query, &memory)?;
    let g = block.backward(&cache, &w)?;
    let np = block.num_params();
    let mut analytic = flatten(&g.params);
    analytic.extend_from_slice(g.d_query.data());
    let mut x0 = flatten(&block);
    x0.extend_from_slice(query.data());
    if !self_attention {
        analytic.extend_from_slice(g.d_memory.data());
        x0.extend_from_slice(memory.data());
    }
    let mut p = block.clone();
    let worst = compare(&analytic, &x0, |x| {
        unflatten_into(&mut p, &x[..np]);
        let t = if self_attention {
            split(&x[np..], &[(n, d)])
        } else {
            split(&x[np..], &[(n, d), (m, d)])
        };
        let mem = t.get(1).unwrap_or(&memory);
        let (y, _) = run(&p, &t[0], mem).expect("valid");
        weighted_sum(&y, &w)
    });
    Ok((analytic.len(), worst))
}

fn check_mlp(seed: u64) -> Result<(usize, f64)> {
    let mut init = SeededInit::new(seed);
    let in_dim = 2 + (init.next_f64() * 6.0) as usize;
    let hidden = 2 + (init.next_f64() * 10.0) as usize;
    let out = 1 + (init.next_f64() * 4.0) as usize;
    let rows = 1 + (init.next_f64() * 4.0) as usize;
    let mlp = MlpParams::two_layer(in_dim, hidden, out, &mut init);
    let x = rand_tensor(&mut init, rows, in_dim);
    let w = rand_tensor(&mut init, rows, out);
    let (_, cache) = mlp.forward_cached(&x, None)?;
    let mut grads = zeros_like(&mlp);
    let dx = mlp.backward(&cache, &w, &mut grads)?;
    let mut analytic = flatten(&grads);
    let np = analytic.len();
    analytic.extend_from_slice(dx.data());
    let mut x0 = flatten(&mlp);
    x0.extend_from_slice(x.data());
    let mut p = mlp.clone();
    let worst = compare(&analytic, &x0, |v| {
        unflatten_into(&mut p, &v[..np]);
        let xi = Tensor2D::from_vec(rows, in_dim, v[np..].to_vec()).expect("sized");
        weighted_sum(&p.forward_batch(&xi, None).expect("valid"), &w)
    });
    Ok((analytic.len(), worst))
}

fn check_focal(seed: u64) -> Result<(usize, f64)> {
    let mut init = SeededInit::new(seed);
    let alpha = 0.05 + 0.9 * init.next_f64();
    let gamma = [0.0, 1.0, 2.0, 3.0 * init.next_f64()][(init.next_f64() * 4.0) as usize % 4];
    let k = 8;
    let z0: Vec<f64> = (0..k).map(|_| 8.0 * init.next_f64() - 4.0).collect();
    let targets: Vec<u8> = (0..k).map(|_| u8::from(init.next_f64() < 0.5)).collect();
    let analytic: Vec<f64> = z0
        .iter()
        .zip(&targets)
        .map(|(&z, &t)| focal_loss_grad_logit(z, t, alpha, gamma))
        .collect();
    let worst = compare(&analytic, &z0, |z| {
        z.iter()
            .zip(&targets)
            .map(|(&zi, &t)| focal_loss(sigmoid(zi), t, alpha, gamma))
            .sum()
    });
    Ok((k, worst))
}

fn check_l1(seed: u64) -> Result<(usize, f64)> {
    let mut init = SeededInit::new(seed);
    let k = 1 + (init.next_f64() * 9.0) as usize;
    let pred: Vec<f64> = (0..k).map(|_| 4.0 * init.next_f64() - 2.0).collect();
    // keep every residual well away from the kink
    let target: Vec<f64> = pred
        .iter()
        .map(|p| {
            let off = 0.01 + init.next_f64();
            if init.next_f64() < 0.5 {
                p + off
            } else {
                p - off
            }
        })
        .collect();
    let analytic = l1_loss_grad(&pred, &target)?;
    let worst = compare(&analytic, &pred, |p| {
        l1_loss(p, &target).expect("same length")
    });
    Ok((k, worst))
}

pub fn check(kind: CheckKind, seed: u64) -> Result<CheckOutcome> {
    let (checked, max_rel_err) = match kind {
        CheckKind::Attention => check_attention(seed)?,
        CheckKind::CrossBlock => check_block(seed, false)?,
        CheckKind::SelfBlock => check_block(seed, true)?,
        CheckKind::Mlp => check_mlp(seed)?,
        CheckKind::Focal => check_focal(seed)?,
        CheckKind::L1 => check_l1(seed)?,
    };
    Ok(CheckOutcome {
        kind,
        seed,
        checked,
        max_rel_err,
    })
}

/// `instances` checks cycling through every [`CheckKind`].
pub fn run_suite(instances: usize, base_seed: u64) -> Result<Vec<CheckOutcome>> {
    (0..instances)
        .map(|i| {
            let kind = CheckKind::ALL[i % CheckKind::ALL.len()];
            check(kind, base_seed.wrapping_add(i as u64))
        })
        .collect()
}
