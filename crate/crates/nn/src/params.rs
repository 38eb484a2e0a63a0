use crate::tensor::Tensor2D;

/// A named collection of parameter tensors.
///
/// Visiting order is fixed per type, so flattening is stable and the same
/// struct doubles as its own gradient container.
pub trait Params {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.data().len());
        n
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn flatten<P: Params + ?Sized>(p: &P) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.num_params());
    p.visit("", &mut |_, t| out.extend_from_slice(t.data()));
    out
}

/// Overwrites every parameter from `flat`, in visiting order.
///
/// Panics if `flat` is shorter than the parameter count.
pub fn unflatten_into<P: Params + ?Sized>(p: &mut P, flat: &[f64]) {
    let mut off = 0;
    p.visit_mut("", &mut |_, t| {
        let n = t.data().len();
        t.data_mut().copy_from_slice(&flat[off..off + n]);
        off += n;
    });
}

pub fn zeros_like<P: Params + Clone>(p: &P) -> P {
    let mut z = p.clone();
    z.visit_mut("", &mut |_, t| {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0)
    });
    z
}
