//! Masked multi-head attention with a residual connection.
//!
//! `out = queries + W_o · concat_h softmax((Q_h K_hᵀ)/√d_h) V_h` where
//! `Q = W_q(queries + q_pe)`, `K = W_k(keys + k_pe)`, `V = W_v(values)`.
//! Positional encodings touch queries and keys only. Keys whose mask bit is
//! `false` are skipped entirely, so they carry exactly zero weight.

use crate::error::{NnError, Result};
use crate::flops::{tally, FlopCounter};
use crate::init::SeededInit;
use crate::linear::{Linear, LinearCache};
use crate::params::{join, zeros_like, Params};
use crate::tensor::{dot, Tensor2D};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub heads: usize,
    pub w_q: Linear,
    pub w_k: Linear,
    pub w_v: Linear,
    pub w_o: Linear,
}

impl AttentionParams {
    pub fn seeded(dim: usize, heads: usize, init: &mut SeededInit) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(NnError::Invalid(format!(
                "model dim {dim} not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            heads,
            w_q: Linear::seeded(dim, dim, init),
            w_k: Linear::seeded(dim, dim, init),
            w_v: Linear::seeded(dim, dim, init),
            w_o: Linear::seeded(dim, dim, init),
        })
    }

    /// Identity projections with zero biases.
    pub fn identity(dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(NnError::Invalid(format!(
                "model dim {dim} not divisible by {heads} heads"
            )));
        }
        let id = || Linear::new(Tensor2D::identity(dim), vec![0.0; dim]).expect("square");
        Ok(Self {
            heads,
            w_q: id(),
            w_k: id(),
            w_v: id(),
            w_o: id(),
        })
    }

    pub fn dim(&self) -> usize {
        self.w_q.out_dim()
    }

    pub fn head_dim(&self) -> usize {
        self.dim() / self.heads
    }

    /// Closed-form multiply-adds for `n` query rows against `m` keys.
    pub fn flops_for(&self, n: usize, m: usize) -> FlopCounter {
        let d = self.dim();
        FlopCounter {
            dense_macs: (2 * n * d * d + 2 * m * d * d) as u64,
            attention_macs: (2 * n * m * d) as u64,
        }
    }
}

impl Params for AttentionParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D)) {
        self.w_q.visit(&join(prefix, "w_q"), f);
        self.w_k.visit(&join(prefix, "w_k"), f);
        self.w_v.visit(&join(prefix, "w_v"), f);
        self.w_o.visit(&join(prefix, "w_o"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D)) {
        self.w_q.visit_mut(&join(prefix, "w_q"), f);
        self.w_k.visit_mut(&join(prefix, "w_k"), f);
        self.w_v.visit_mut(&join(prefix, "w_v"), f);
        self.w_o.visit_mut(&join(prefix, "w_o"), f);
    }
}

/// Everything the backward pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct MhaCache {
    heads: usize,
    mask: Vec<bool>,
    q_cache: LinearCache,
    k_cache: LinearCache,
    v_cache: LinearCache,
    o_cache: LinearCache,
    q: Tensor2D,
    k: Tensor2D,
    v: Tensor2D,
    /// One `n × m` weight matrix per head.
    weights: Vec<Tensor2D>,
}

impl MhaCache {
    /// Attention weights of head `h` (`query rows × keys`).
    pub fn weights(&self, h: usize) -> &Tensor2D {
        &self.weights[h]
    }

    pub fn num_heads(&self) -> usize {
        self.heads
    }
}

#[derive(Debug, Clone)]
pub struct MhaGrads {
    pub params: AttentionParams,
    pub d_queries: Tensor2D,
    pub d_keys: Tensor2D,
    pub d_values: Tensor2D,
    pub d_q_pe: Tensor2D,
    pub d_k_pe: Tensor2D,
}

fn check_same(op: &'static str, a: &Tensor2D, b: &Tensor2D) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(NnError::shape(
            op,
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    Ok(())
}

/// Unmasked key indices sorted by the bit patterns of their projected key
/// and value rows, so reductions over keys do not depend on input order.
fn canonical_key_order(k: &Tensor2D, v: &Tensor2D, mask: &[bool]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
    order.sort_by(|&a, &b| {
        k.row(a)
            .iter()
            .chain(v.row(a))
            .zip(k.row(b).iter().chain(v.row(b)))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

#[allow(clippy::too_many_arguments)]
pub fn mha_forward(
    queries: &Tensor2D,
    keys: &Tensor2D,
    values: &Tensor2D,
    q_pe: &Tensor2D,
    k_pe: &Tensor2D,
    mask: &[bool],
    params: &AttentionParams,
    mut flops: Option<&mut FlopCounter>,
) -> Result<(Tensor2D, MhaCache)> {
    let d = params.dim();
    let n = queries.rows();
    let m = keys.rows();
    if queries.cols() != d || keys.cols() != d || values.cols() != d {
        return Err(NnError::shape(
            "mha_forward",
            format!("model dim {d}"),
            format!(
                "queries {}, keys {}, values {}",
                queries.cols(),
                keys.cols(),
                values.cols()
            ),
        ));
    }
    if values.rows() != m || mask.len() != m {
        return Err(NnError::shape(
            "mha_forward",
            format!("{m} keys"),
            format!("{} values, {} mask bits", values.rows(), mask.len()),
        ));
    }
    check_same("mha_forward q_pe", queries, q_pe)?;
    check_same("mha_forward k_pe", keys, k_pe)?;
    if n > 0 && !mask.iter().any(|&b| b) {
        return Err(NnError::AllMasked { row: 0 });
    }

    let (q, q_cache) = params
        .w_q
        .forward_cached(&queries.add(q_pe)?, flops.as_deref_mut())?;
    let (k, k_cache) = params
        .w_k
        .forward_cached(&keys.add(k_pe)?, flops.as_deref_mut())?;
    let (v, v_cache) = params.w_v.forward_cached(values, flops.as_deref_mut())?;

    let heads = params.heads;
    let dh = params.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut mixed = Tensor2D::zeros(n, d);
    let mut weights = Vec::with_capacity(heads);
    let order = canonical_key_order(&k, &v, mask);
    let mut scores = vec![0.0; m];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        let mut a = Tensor2D::zeros(n, m);
        for i in 0..n {
            let qi = &q.row(i)[cols.clone()];
            let mut max = f64::NEG_INFINITY;
            for &j in &order {
                let s = dot(qi, &k.row(j)[cols.clone()]) * scale;
                scores[j] = s;
                max = max.max(s);
            }
            let mut denom = 0.0;
            for &j in &order {
                let e = (scores[j] - max).exp();
                scores[j] = e;
                denom += e;
            }
            let a_row = a.row_mut(i);
            for &j in &order {
                a_row[j] = scores[j] / denom;
            }
            let out = &mut mixed.row_mut(i)[cols.clone()];
            for &j in &order {
                let w = a_row[j];
                for (o, vv) in out.iter_mut().zip(&v.row(j)[cols.clone()]) {
                    *o += w * vv;
                }
            }
        }
        weights.push(a);
    }
    tally(&mut flops, |c| c.add_attention(2 * n * m * d));

    let (proj, o_cache) = params.w_o.forward_cached(&mixed, flops.as_deref_mut())?;
    let out = queries.add(&proj)?;
    out.ensure_finite("mha_forward")?;
    Ok((
        out,
        MhaCache {
            heads,
            mask: mask.to_vec(),
            q_cache,
            k_cache,
            v_cache,
            o_cache,
            q,
            k,
            v,
            weights,
        },
    ))
}

/// Backward pass accumulating parameter gradients into `grads`.
///
/// Returns `(d_queries, d_keys, d_values, d_q_pe, d_k_pe)`.
pub(crate) fn mha_backward_into(
    params: &AttentionParams,
    cache: &MhaCache,
    grad_out: &Tensor2D,
    grads: &mut AttentionParams,
) -> Result<(Tensor2D, Tensor2D, Tensor2D, Tensor2D, Tensor2D)> {
    let d = params.dim();
    let n = cache.q.rows();
    let m = cache.k.rows();
    if grad_out.shape() != (n, d) || cache.heads != params.heads {
        return Err(NnError::shape(
            "mha_backward",
            format!("{n}x{d}"),
            format!("{}x{}", grad_out.rows(), grad_out.cols()),
        ));
    }
    let dh = params.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let d_mixed = params
        .w_o
        .backward(&cache.o_cache, grad_out, &mut grads.w_o)?;
    let mut dq = Tensor2D::zeros(n, d);
    let mut dk = Tensor2D::zeros(m, d);
    let mut dv = Tensor2D::zeros(m, d);
    let mut da = vec![0.0; m];
    for h in 0..params.heads {
        let cols = h * dh..(h + 1) * dh;
        let a = &cache.weights[h];
        for i in 0..n {
            let g = &d_mixed.row(i)[cols.clone()];
            let a_row = a.row(i);
            let mut weighted = 0.0;
            for j in 0..m {
                if !cache.mask[j] {
                    da[j] = 0.0;
                    continue;
                }
                da[j] = dot(g, &cache.v.row(j)[cols.clone()]);
                weighted += a_row[j] * da[j];
                let w = a_row[j];
                for (o, gg) in dv.row_mut(j)[cols.clone()].iter_mut().zip(g) {
                    *o += w * gg;
                }
            }
            for j in 0..m {
                if !cache.mask[j] {
                    continue;
                }
                let ds = a_row[j] * (da[j] - weighted) * scale;
                if ds == 0.0 {
                    continue;
                }
                let kj = &cache.k.row(j)[cols.clone()];
                for (o, kk) in dq.row_mut(i)[cols.clone()].iter_mut().zip(kj) {
                    *o += ds * kk;
                }
                let qi = &cache.q.row(i)[cols.clone()];
                for (o, qq) in dk.row_mut(j)[cols.clone()].iter_mut().zip(qi) {
                    *o += ds * qq;
                }
            }
        }
    }

    let d_qin = params.w_q.backward(&cache.q_cache, &dq, &mut grads.w_q)?;
    let d_kin = params.w_k.backward(&cache.k_cache, &dk, &mut grads.w_k)?;
    let d_values = params.w_v.backward(&cache.v_cache, &dv, &mut grads.w_v)?;
    let d_queries = grad_out.add(&d_qin)?;
    Ok((d_queries, d_kin.clone(), d_values, d_qin, d_kin))
}

pub fn mha_backward(
    params: &AttentionParams,
    cache: &MhaCache,
    grad_out: &Tensor2D,
) -> Result<MhaGrads> {
    let mut grads = zeros_like(params);
    let (d_queries, d_keys, d_values, d_q_pe, d_k_pe) =
        mha_backward_into(params, cache, grad_out, &mut grads)?;
    Ok(MhaGrads {
        params: grads,
        d_queries,
        d_keys,
        d_values,
        d_q_pe,
        d_k_pe,
    })
}
