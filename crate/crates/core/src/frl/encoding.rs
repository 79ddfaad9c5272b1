//! Nyquist-normalized positional encoding.
//!
//! The harmonic `k` at resolution `ρ` is `sin(2πk · x / (ρ/2))`: positions are
//! measured in units of the grid's Nyquist wavelength, so a point at `x` on a
//! `ρ1` grid and the point `x · ρ2/ρ1` on a `ρ2` grid receive the same code.

use std::f64::consts::PI;

use super::FrlConfig;
use crate::error::Result;
use crate::field::GridField2D;
use crate::nn::{EncodedBatch, Real};

/// Sine channel of harmonic `k` at position `x` for resolution `rho`.
pub fn pe_freq(x: f64, k: usize, rho: usize) -> f64 {
    (2.0 * PI * k as f64 * x / (rho as f64 / 2.0)).sin()
}

/// Cosine companion of [`pe_freq`].
pub fn pe_freq_cos(x: f64, k: usize, rho: usize) -> f64 {
    (2.0 * PI * k as f64 * x / (rho as f64 / 2.0)).cos()
}

/// Encoding planes for a `rows × cols` grid, `4 · n_freq` of them, ordered per
/// harmonic as x-sin, x-cos, y-sin, y-cos. The x planes use `ρ = cols` and
/// `x = j / cols`, the y planes `ρ = rows` and `y = i / rows`. When `enabled`
/// is false every plane is zero.
pub fn pe_channels(rows: usize, cols: usize, n_freq: usize, enabled: bool) -> Vec<Vec<f64>> {
    let plane = rows * cols;
    let mut out = Vec::with_capacity(4 * n_freq);
    for k in 1..=n_freq {
        if !enabled {
            out.extend(std::iter::repeat_n(vec![0.0; plane], 4));
            continue;
        }
        let xs: Vec<(f64, f64)> = (0..cols)
            .map(|j| {
                let x = j as f64 / cols as f64;
                (pe_freq(x, k, cols), pe_freq_cos(x, k, cols))
            })
            .collect();
        let ys: Vec<(f64, f64)> = (0..rows)
            .map(|i| {
                let y = i as f64 / rows as f64;
                (pe_freq(y, k, rows), pe_freq_cos(y, k, rows))
            })
            .collect();
        let mut x_sin = Vec::with_capacity(plane);
        let mut x_cos = Vec::with_capacity(plane);
        let mut y_sin = Vec::with_capacity(plane);
        let mut y_cos = Vec::with_capacity(plane);
        for &(ys_, yc) in &ys {
            for &(xs_, xc) in &xs {
                x_sin.push(xs_);
                x_cos.push(xc);
                y_sin.push(ys_);
                y_cos.push(yc);
            }
        }
        out.extend([x_sin, x_cos, y_sin, y_cos]);
    }
    out
}

/// A field together with its encoding planes.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInput {
    pub field: GridField2D,
    pub pe: Vec<Vec<f64>>,
}

impl EncodedInput {
    pub fn channel_count(&self) -> usize {
        1 + self.pe.len()
    }

    pub fn to_batch<T: Real>(&self) -> Result<EncodedBatch<T>> {
        EncodedBatch::from_fields(&[&self.field], &self.pe)
    }
}

/// Appends the encoding planes for `u`'s resolution (zeros when the encoding
/// is ablated, keeping the channel count).
pub fn build_encoded_input(u: &GridField2D, cfg: &FrlConfig) -> EncodedInput {
    EncodedInput {
        field: u.clone(),
        pe: pe_channels(u.rows(), u.cols(), cfg.n_freq, cfg.use_freq_enc),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert!((pe_freq(0.5, 1, 4) - 1.0).abs() < 1e-15);
        for k in 1..9 {
            for rho in [4, 16, 128] {
                assert_eq!(pe_freq(0.0, k, rho), 0.0);
            }
        }
    }

    #[test]
    fn same_physical_scale_gives_same_code() {
        let a = pe_freq(0.3, 2, 64);
        let b = pe_freq(0.3 * 32.0 / 64.0, 2, 32);
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn grid_channels() {
        let cfg = FrlConfig { n_freq: 2, ..FrlConfig::default() };
        let u = GridField2D::zeros(4, 4).unwrap();
        let enc = build_encoded_input(&u, &cfg);
        assert_eq!(enc.channel_count(), 9);
        let x_sin = &enc.pe[0];
        for i in 0..4 {
            for j in 0..4 {
                let want = (2.0 * PI * (j as f64 / 4.0) / 2.0).sin();
                assert!((x_sin[i * 4 + j] - want).abs() < 1e-15);
            }
            assert_eq!(x_sin[i * 4], 0.0);
        }
        assert!(enc.pe.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));

        let off = build_encoded_input(&u, &FrlConfig { use_freq_enc: false, ..cfg });
        assert_eq!(off.channel_count(), 9);
        assert!(off.pe.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn y_planes_follow_rows() {
        let pe = pe_channels(8, 4, 1, true);
        assert_eq!(pe[2][5 * 4 + 1], pe_freq(5.0 / 8.0, 1, 8));
        assert_eq!(pe[3][5 * 4 + 3], pe_freq_cos(5.0 / 8.0, 1, 8));
        assert_eq!(pe[1][2 * 4 + 3], pe_freq_cos(3.0 / 4.0, 1, 4));
    }
}
