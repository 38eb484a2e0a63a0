use crate::error::{NnError, Result};
use crate::flops::FlopCounter;
use crate::init::SeededInit;
use crate::linear::{Linear, LinearCache};
use crate::params::{join, Params};
use crate::tensor::Tensor2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Chain of affine layers, each followed by its own activation.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Linear>,
    pub activations: Vec<Activation>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    linear: Vec<LinearCache>,
    pre: Vec<Tensor2D>,
}

impl MlpParams {
    pub fn new(layers: Vec<Linear>, activations: Vec<Activation>) -> Result<Self> {
        if layers.len() != activations.len() || layers.is_empty() {
            return Err(NnError::Invalid(format!(
                "{} layers but {} activations",
                layers.len(),
                activations.len()
            )));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(NnError::shape(
                    "MlpParams::new",
                    w[0].out_dim(),
                    w[1].in_dim(),
                ));
            }
        }
        Ok(Self {
            layers,
            activations,
        })
    }

    /// `in → hidden (relu) → out (identity)`.
    pub fn two_layer(in_dim: usize, hidden: usize, out_dim: usize, init: &mut SeededInit) -> Self {
        Self {
            layers: vec![
                Linear::seeded(in_dim, hidden, init),
                Linear::seeded(hidden, out_dim, init),
            ],
            activations: vec![Activation::Relu, Activation::Identity],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, Linear::out_dim)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.forward_batch(&Tensor2D::row_vector(x), None)?;
        Ok(y.into_data())
    }

    pub fn forward_batch(
        &self,
        x: &Tensor2D,
        mut flops: Option<&mut FlopCounter>,
    ) -> Result<Tensor2D> {
        let mut h = x.clone();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            h = layer.forward(&h, flops.as_deref_mut())?;
            if *act != Activation::Identity {
                h.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            }
        }
        h.ensure_finite("mlp_forward")?;
        Ok(h)
    }

    pub fn forward_cached(
        &self,
        x: &Tensor2D,
        mut flops: Option<&mut FlopCounter>,
    ) -> Result<(Tensor2D, MlpCache)> {
        let mut h = x.clone();
        let mut linear = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let (z, c) = layer.forward_cached(&h, flops.as_deref_mut())?;
            linear.push(c);
            h = z.clone();
            if *act != Activation::Identity {
                h.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            pre.push(z);
        }
        h.ensure_finite("mlp_forward")?;
        Ok((h, MlpCache { linear, pre }))
    }

    /// Accumulates parameter gradients into `grads`; returns `∂L/∂x`.
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_out: &Tensor2D,
        grads: &mut MlpParams,
    ) -> Result<Tensor2D> {
        if cache.pre.len() != self.layers.len() {
            return Err(NnError::shape(
                "mlp_backward",
                self.layers.len(),
                cache.pre.len(),
            ));
        }
        let mut g = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            let act = self.activations[i];
            if act != Activation::Identity {
                let pre = &cache.pre[i];
                if pre.shape() != g.shape() {
                    return Err(NnError::shape(
                        "mlp_backward",
                        format!("{:?}", pre.shape()),
                        format!("{:?}", g.shape()),
                    ));
                }
                for (gv, p) in g.data_mut().iter_mut().zip(pre.data()) {
                    *gv *= act.derivative(*p);
                }
            }
            g = self.layers[i].backward(&cache.linear[i], &g, &mut grads.layers[i])?;
        }
        Ok(g)
    }
}

impl Params for MlpParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("layers.{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("layers.{i}")), f);
        }
    }
}
