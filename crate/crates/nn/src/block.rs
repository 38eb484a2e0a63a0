//! Stacks of transformer decoder layers (attention + feed-forward, both
//! residual) sharing one learned projection of raw positional encodings.

use crate::attention::{mha_backward_into, mha_forward, AttentionParams, MhaCache};
use crate::error::{NnError, Result};
use crate::flops::FlopCounter;
use crate::init::SeededInit;
use crate::linear::{Linear, LinearCache};
use crate::mlp::{MlpCache, MlpParams};
use crate::params::{join, zeros_like, Params};
use crate::tensor::Tensor2D;

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub attn: AttentionParams,
    pub ffn: MlpParams,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    attn: MhaCache,
    ffn: MlpCache,
}

impl LayerCache {
    pub fn attention(&self) -> &MhaCache {
        &self.attn
    }
}

impl DecoderLayer {
    pub fn seeded(
        dim: usize,
        heads: usize,
        ffn_hidden: usize,
        init: &mut SeededInit,
    ) -> Result<Self> {
        Ok(Self {
            attn: AttentionParams::seeded(dim, heads, init)?,
            ffn: MlpParams::two_layer(dim, ffn_hidden, dim, init),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn forward(
        &self,
        x: &Tensor2D,
        q_pe: &Tensor2D,
        keys: &Tensor2D,
        k_pe: &Tensor2D,
        mask: &[bool],
        mut flops: Option<&mut FlopCounter>,
    ) -> Result<(Tensor2D, LayerCache)> {
        let (h, attn) = mha_forward(
            x,
            keys,
            keys,
            q_pe,
            k_pe,
            mask,
            &self.attn,
            flops.as_deref_mut(),
        )?;
        let (f, ffn) = self.ffn.forward_cached(&h, flops)?;
        Ok((h.add(&f)?, LayerCache { attn, ffn }))
    }
}

impl Params for DecoderLayer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D)) {
        self.attn.visit(&join(prefix, "attn"), f);
        self.ffn.visit(&join(prefix, "ffn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D)) {
        self.attn.visit_mut(&join(prefix, "attn"), f);
        self.ffn.visit_mut(&join(prefix, "ffn"), f);
    }
}

/// Either cross-attention into a fixed memory, or self-attention where every
/// layer attends over its own input rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub pe_proj: Linear,
    pub layers: Vec<DecoderLayer>,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    self_attention: bool,
    q_pe_cache: LinearCache,
    k_pe_cache: Option<LinearCache>,
    layers: Vec<LayerCache>,
}

impl BlockCache {
    pub fn layer(&self, i: usize) -> &LayerCache {
        &self.layers[i]
    }
}

#[derive(Debug, Clone)]
pub struct BlockGrads {
    pub params: AttentionBlock,
    pub d_query: Tensor2D,
    /// Zero-sized for self-attention blocks.
    pub d_memory: Tensor2D,
}

impl AttentionBlock {
    pub fn seeded(
        dim: usize,
        heads: usize,
        layers: usize,
        pe_dim: usize,
        init: &mut SeededInit,
    ) -> Result<Self> {
        let pe_proj = Linear::seeded(pe_dim, dim, init);
        let layers = (0..layers)
            .map(|_| DecoderLayer::seeded(dim, heads, 4 * dim, init))
            .collect::<Result<_>>()?;
        Ok(Self { pe_proj, layers })
    }

    pub fn dim(&self) -> usize {
        self.pe_proj.out_dim()
    }

    /// Multiplies the attention output projection and the last feed-forward
    /// layer of every decoder layer by `s`; small `s` starts the block close
    /// to the identity map.
    pub fn scale_residual_branches(&mut self, s: f64) {
        for layer in &mut self.layers {
            layer.attn.w_o.weight.scale(s);
            layer.attn.w_o.bias.scale(s);
            if let Some(last) = layer.ffn.layers.last_mut() {
                last.weight.scale(s);
                last.bias.scale(s);
            }
        }
    }

    pub fn pe_dim(&self) -> usize {
        self.pe_proj.in_dim()
    }

    /// Cross-attention: `query` rows attend to `memory` rows (keys = values),
    /// memory fixed across layers. PE inputs are raw encodings, projected here.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_cross(
        &self,
        query: &Tensor2D,
        query_pe: &Tensor2D,
        memory: &Tensor2D,
        memory_pe: &Tensor2D,
        mask: &[bool],
        mut flops: Option<&mut FlopCounter>,
    ) -> Result<(Tensor2D, BlockCache)> {
        let (q_pe, q_pe_cache) = self
            .pe_proj
            .forward_cached(query_pe, flops.as_deref_mut())?;
        let (k_pe, k_pe_cache) = self
            .pe_proj
            .forward_cached(memory_pe, flops.as_deref_mut())?;
        let mut x = query.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(&x, &q_pe, memory, &k_pe, mask, flops.as_deref_mut())?;
            caches.push(c);
            x = y;
        }
        Ok((
            x,
            BlockCache {
                self_attention: false,
                q_pe_cache,
                k_pe_cache: Some(k_pe_cache),
                layers: caches,
            },
        ))
    }

    /// Self-attention over `tokens` with a shared positional encoding.
    pub fn forward_self(
        &self,
        tokens: &Tensor2D,
        pe: &Tensor2D,
        mut flops: Option<&mut FlopCounter>,
    ) -> Result<(Tensor2D, BlockCache)> {
        let (p, q_pe_cache) = self.pe_proj.forward_cached(pe, flops.as_deref_mut())?;
        let mask = vec![true; tokens.rows()];
        let mut x = tokens.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(&x, &p, &x, &p, &mask, flops.as_deref_mut())?;
            caches.push(c);
            x = y;
        }
        Ok((
            x,
            BlockCache {
                self_attention: true,
                q_pe_cache,
                k_pe_cache: None,
                layers: caches,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads.params` and writes input
    /// gradients into `grads.d_query` / `grads.d_memory`.
    pub fn backward(&self, cache: &BlockCache, grad_out: &Tensor2D) -> Result<BlockGrads> {
        let mut params = zeros_like(self);
        let (d_query, d_memory) = self.backward_into(cache, grad_out, &mut params)?;
        Ok(BlockGrads {
            params,
            d_query,
            d_memory,
        })
    }

    pub fn backward_into(
        &self,
        cache: &BlockCache,
        grad_out: &Tensor2D,
        grads: &mut AttentionBlock,
    ) -> Result<(Tensor2D, Tensor2D)> {
        if cache.layers.len() != self.layers.len() {
            return Err(NnError::shape(
                "AttentionBlock::backward",
                self.layers.len(),
                cache.layers.len(),
            ));
        }
        let mut g = grad_out.clone();
        let mut d_q_pe = Tensor2D::zeros(g.rows(), self.dim());
        let mut d_k_pe: Option<Tensor2D> = None;
        let mut d_memory: Option<Tensor2D> = None;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let lc = &cache.layers[i];
            let gl = &mut grads.layers[i];
            // x2 = h + ffn(h)
            let d_ffn_in = layer.ffn.backward(&lc.ffn, &g, &mut gl.ffn)?;
            let d_h = g.add(&d_ffn_in)?;
            let (dq, dk, dv, dqpe, dkpe) =
                mha_backward_into(&layer.attn, &lc.attn, &d_h, &mut gl.attn)?;
            if cache.self_attention {
                let mut dx = dq;
                dx.add_assign(&dk)?;
                dx.add_assign(&dv)?;
                d_q_pe.add_assign(&dqpe)?;
                d_q_pe.add_assign(&dkpe)?;
                g = dx;
            } else {
                let mut dm = dk;
                dm.add_assign(&dv)?;
                match d_memory.as_mut() {
                    Some(acc) => acc.add_assign(&dm)?,
                    None => d_memory = Some(dm),
                }
                match d_k_pe.as_mut() {
                    Some(acc) => acc.add_assign(&dkpe)?,
                    None => d_k_pe = Some(dkpe),
                }
                d_q_pe.add_assign(&dqpe)?;
                g = dq;
            }
        }
        self.pe_proj
            .backward(&cache.q_pe_cache, &d_q_pe, &mut grads.pe_proj)?;
        if let (Some(kc), Some(dk)) = (&cache.k_pe_cache, &d_k_pe) {
            self.pe_proj.backward(kc, dk, &mut grads.pe_proj)?;
        }
        Ok((
            g,
            d_memory.unwrap_or_else(|| Tensor2D::zeros(0, self.dim())),
        ))
    }
}

impl Params for AttentionBlock {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D)) {
        self.pe_proj.visit(&join(prefix, "pe_proj"), f);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("layers.{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D)) {
        self.pe_proj.visit_mut(&join(prefix, "pe_proj"), f);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("layers.{i}")), f);
        }
    }
}
