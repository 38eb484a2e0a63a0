use crate::error::{NnError, Result};
use crate::flops::{tally, FlopCounter};
use crate::init::SeededInit;
use crate::params::{join, Params};
use crate::tensor::Tensor2D;

/// Affine map `y = x·Wᵀ + b` applied row-wise; `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor2D,
    pub bias: Tensor2D,
}

#[derive(Debug, Clone)]
pub struct LinearCache {
    pub input: Tensor2D,
}

impl Linear {
    pub fn new(weight: Tensor2D, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(NnError::shape("Linear::new", weight.rows(), bias.len()));
        }
        Ok(Self {
            bias: Tensor2D::row_vector(&bias),
            weight,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Tensor2D::zeros(out_dim, in_dim),
            bias: Tensor2D::zeros(1, out_dim),
        }
    }

    pub fn seeded(in_dim: usize, out_dim: usize, init: &mut SeededInit) -> Self {
        Self {
            weight: init.uniform(out_dim, in_dim, in_dim),
            bias: init.uniform(1, out_dim, in_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Tensor2D, mut flops: Option<&mut FlopCounter>) -> Result<Tensor2D> {
        if x.cols() != self.in_dim() {
            return Err(NnError::shape("Linear::forward", self.in_dim(), x.cols()));
        }
        let mut y = x.matmul_t(&self.weight)?;
        let b = self.bias.data();
        for r in 0..y.rows() {
            for (v, bb) in y.row_mut(r).iter_mut().zip(b) {
                *v += bb;
            }
        }
        tally(&mut flops, |c| {
            c.add_dense(x.rows() * self.in_dim() * self.out_dim())
        });
        Ok(y)
    }

    pub fn forward_cached(
        &self,
        x: &Tensor2D,
        flops: Option<&mut FlopCounter>,
    ) -> Result<(Tensor2D, LinearCache)> {
        let y = self.forward(x, flops)?;
        Ok((y, LinearCache { input: x.clone() }))
    }

    /// Accumulates parameter gradients into `grads` and returns `∂L/∂x`.
    pub fn backward(
        &self,
        cache: &LinearCache,
        grad_out: &Tensor2D,
        grads: &mut Linear,
    ) -> Result<Tensor2D> {
        if grad_out.rows() != cache.input.rows() || grad_out.cols() != self.out_dim() {
            return Err(NnError::shape(
                "Linear::backward",
                format!("{}x{}", cache.input.rows(), self.out_dim()),
                format!("{}x{}", grad_out.rows(), grad_out.cols()),
            ));
        }
        grads.weight.add_assign(&grad_out.t_matmul(&cache.input)?)?;
        grads.bias.add_assign(&grad_out.sum_rows())?;
        grad_out.matmul(&self.weight)
    }
}

impl Params for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
