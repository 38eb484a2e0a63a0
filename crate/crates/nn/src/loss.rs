use crate::error::{NnError, Result};

/// Probability clamp applied before taking logs in [`focal_loss`].
pub const FOCAL_EPS: f64 = 1e-7;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// `−α_t (1 − p_t)^γ ln p_t` with `p_t = p` for positives, `1 − p` otherwise.
pub fn focal_loss(p: f64, target: u8, alpha: f64, gamma: f64) -> f64 {
    let p = p.clamp(FOCAL_EPS, 1.0 - FOCAL_EPS);
    let (pt, at) = if target == 1 {
        (p, alpha)
    } else {
        (1.0 - p, 1.0 - alpha)
    };
    -at * (1.0 - pt).powf(gamma) * pt.ln()
}

/// Derivative of `focal_loss(sigmoid(z), ..)` with respect to the logit `z`.
pub fn focal_loss_grad_logit(z: f64, target: u8, alpha: f64, gamma: f64) -> f64 {
    let p = sigmoid(z);
    if !(FOCAL_EPS..=1.0 - FOCAL_EPS).contains(&p) {
        return 0.0;
    }
    let (pt, at, sign) = if target == 1 {
        (p, alpha, 1.0)
    } else {
        (1.0 - p, 1.0 - alpha, -1.0)
    };
    let q = 1.0 - pt;
    let mut dl_dpt = -at * q.powf(gamma) / pt;
    if gamma != 0.0 {
        dl_dpt += at * gamma * q.powf(gamma - 1.0) * pt.ln();
    }
    dl_dpt * sign * p * (1.0 - p)
}

/// Mean absolute difference.
pub fn l1_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(NnError::Invalid(format!(
            "l1_loss length mismatch: {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = pred.iter().zip(target).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / pred.len() as f64)
}

/// Subgradient of [`l1_loss`] with respect to `pred` (zero at ties).
pub fn l1_loss_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    if pred.len() != target.len() {
        return Err(NnError::Invalid(format!(
            "l1_loss length mismatch: {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len().max(1) as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(a, b)| {
            let d = a - b;
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect())
}
