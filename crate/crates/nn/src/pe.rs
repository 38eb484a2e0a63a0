use crate::error::{NnError, Result};

pub const PE_BASE: f64 = 10_000.0;

/// Interleaved `[sin(v/base^(2k/dim)), cos(v/base^(2k/dim))]`, k = 0..dim/2.
pub fn sinusoidal_pe(value: f64, dim: usize, base: f64) -> Result<Vec<f64>> {
    if dim % 2 != 0 {
        return Err(NnError::Invalid(format!(
            "positional encoding dim {dim} is odd"
        )));
    }
    if !(base > 1.0) || !value.is_finite() {
        return Err(NnError::Invalid(format!(
            "positional encoding needs finite value and base > 1 (value {value}, base {base})"
        )));
    }
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let freq = base.powf(2.0 * k as f64 / dim as f64);
        let a = value / freq;
        out.push(a.sin());
        out.push(a.cos());
    }
    Ok(out)
}

/// Axis-aligned tracking region in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for RegionBounds {
    fn default() -> Self {
        Self {
            min: [-51.2, -51.2, -5.0],
            max: [51.2, 51.2, 3.0],
        }
    }
}

impl RegionBounds {
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }
}

/// Per-axis `[0, 1]` normalization followed by a `dim / 3` sinusoidal
/// encoding of each axis, concatenated x, y, z.
///
/// Centers outside the region are clamped; the second return value reports
/// whether that happened.
pub fn positional_encoding_3d(
    center: [f64; 3],
    bounds: &RegionBounds,
    dim: usize,
) -> Result<(Vec<f64>, bool)> {
    if dim % 6 != 0 {
        return Err(NnError::Invalid(format!(
            "3d positional encoding dim {dim} is not divisible by 6"
        )));
    }
    let mut out = Vec::with_capacity(dim);
    let mut clamped = false;
    for axis in 0..3 {
        let (lo, hi) = (bounds.min[axis], bounds.max[axis]);
        let mut u = (center[axis] - lo) / (hi - lo);
        if !(0.0..=1.0).contains(&u) {
            clamped = true;
            u = u.clamp(0.0, 1.0);
        }
        out.extend(sinusoidal_pe(u, dim / 3, PE_BASE)?);
    }
    Ok((out, clamped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_value_encoding() {
        assert_eq!(
            sinusoidal_pe(0.0, 4, PE_BASE).unwrap(),
            vec![0.0, 1.0, 0.0, 1.0]
        );
    }

    #[test]
    fn unit_value_matches_formula() {
        let pe = sinusoidal_pe(1.0, 4, 10_000.0).unwrap();
        let expect = [1f64.sin(), 1f64.cos(), 0.01f64.sin(), 0.01f64.cos()];
        for (a, b) in pe.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn odd_dim_rejected() {
        assert!(sinusoidal_pe(1.0, 5, PE_BASE).is_err());
        assert!(positional_encoding_3d([0.0; 3], &RegionBounds::default(), 8).is_err());
    }

    #[test]
    fn region_minimum_encodes_as_zero() {
        let b = RegionBounds::default();
        let (pe, clamped) = positional_encoding_3d(b.min, &b, 12).unwrap();
        let zero = sinusoidal_pe(0.0, 4, PE_BASE).unwrap();
        assert!(!clamped);
        assert_eq!(pe, [zero.clone(), zero.clone(), zero].concat());
    }

    #[test]
    fn dim12_center_matches_oracle() {
        let b = RegionBounds::default();
        let (pe, _) = positional_encoding_3d([0.0, 0.0, -1.0], &b, 12).unwrap();
        // x, y normalize to 0.5; z to (−1 + 5) / 8 = 0.5 as well
        let axis = |u: f64| vec![u.sin(), u.cos(), (u / 100.0).sin(), (u / 100.0).cos()];
        let expect = [axis(0.5), axis(0.5), axis(0.5)].concat();
        for (a, e) in pe.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_region_is_clamped_and_flagged() {
        let b = RegionBounds::default();
        let (pe, clamped) = positional_encoding_3d([80.0, 0.0, 0.0], &b, 6).unwrap();
        let (edge, _) = positional_encoding_3d([51.2, 0.0, 0.0], &b, 6).unwrap();
        assert!(clamped);
        assert_eq!(pe, edge);
    }
}
