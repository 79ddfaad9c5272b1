//! Composite training loss `L_space + λ·L_freq + μ·L_phys` and its gradient.
//!
//! `L_freq = (1/N) Σ_k w_k (|P̂_k|/N − |T̂_k|/N)²` compares physical Fourier
//! amplitudes (coefficients divided by `N = rows · cols`) with radial weight
//! `w_k = (|k| / k_Nyq)^α` and `w_0 = 0`. `L_phys` penalizes the squared
//! difference of spatial means.

use num_complex::Complex64;
use rustfft::FftDirection;

use super::FrlConfig;
use crate::error::Result;
use crate::field::GridField2D;
use crate::spectral::{fft2_in_place, signed_wavenumber};

/// Amplitudes below this are treated as zero when differentiating `|z|`.
pub const AMPLITUDE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub space: f64,
    pub freq: f64,
    pub phys: f64,
    pub lambda_eff: f64,
}

/// Loss of one prediction at training epoch `epoch`.
pub fn loss(pred: &GridField2D, target: &GridField2D, cfg: &FrlConfig, epoch: usize) -> Result<LossParts> {
    pred.sub(target)?;
    let (h, w) = pred.shape();
    let weights = radial_weights(h, w, cfg.alpha_radial);
    let terms = Terms { lambda: cfg.lambda_eff(epoch), mu: cfg.mu_phys };
    Ok(sample_loss(pred.data(), target.data(), h, w, Some(&weights), terms, None))
}

/// `(|k| / k_Nyq)^α` for every storage position, zero at DC.
pub fn radial_weights(rows: usize, cols: usize, alpha: f64) -> Vec<f64> {
    let nyq = rows.min(cols) as f64 / 2.0;
    let mut w = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let ky = signed_wavenumber(i, rows) as f64;
        for j in 0..cols {
            let kx = signed_wavenumber(j, cols) as f64;
            let r = (kx * kx + ky * ky).sqrt();
            w.push(if r == 0.0 { 0.0 } else { (r / nyq).powf(alpha) });
        }
    }
    w
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Terms {
    pub lambda: f64,
    pub mu: f64,
}

fn to_complex(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

/// Loss of one sample. With `grad`, adds `scale · dL/dpred` into it. The
/// spectral term is evaluated when `weights` is given and differentiated when
/// `terms.lambda > 0`.
pub(crate) fn sample_loss(
    pred: &[f64],
    target: &[f64],
    rows: usize,
    cols: usize,
    weights: Option<&[f64]>,
    terms: Terms,
    grad: Option<(&mut [f64], f64)>,
) -> LossParts {
    let n = (rows * cols) as f64;
    let space = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let mean_diff = (pred.iter().sum::<f64>() - target.iter().sum::<f64>()) / n;
    let phys = mean_diff * mean_diff;

    let mut freq = 0.0;
    let mut freq_coeffs = None;
    if let Some(w) = weights {
        let mut p = to_complex(pred);
        let mut t = to_complex(target);
        fft2_in_place(&mut p, rows, cols, FftDirection::Forward);
        fft2_in_place(&mut t, rows, cols, FftDirection::Forward);
        let mut c = vec![Complex64::default(); p.len()];
        for k in 0..p.len() {
            let pa = p[k].norm();
            let d = pa / n - t[k].norm() / n;
            freq += w[k] * d * d;
            if pa >= AMPLITUDE_FLOOR {
                c[k] = p[k].conj() * (2.0 * w[k] * d / (n * n * pa));
            }
        }
        freq /= n;
        freq_coeffs = Some(c);
    }

    let total = space + terms.lambda * freq + terms.mu * phys;
    if let Some((g, scale)) = grad {
        let gs = scale * 2.0 / n;
        for ((gi, p), t) in g.iter_mut().zip(pred).zip(target) {
            *gi += gs * (p - t);
        }
        if terms.mu != 0.0 {
            let gp = scale * terms.mu * 2.0 * mean_diff / n;
            g.iter_mut().for_each(|gi| *gi += gp);
        }
        if terms.lambda != 0.0 {
            if let Some(mut c) = freq_coeffs {
                fft2_in_place(&mut c, rows, cols, FftDirection::Forward);
                let gf = scale * terms.lambda;
                for (gi, ci) in g.iter_mut().zip(&c) {
                    *gi += gf * ci.re;
                }
            }
        }
    }
    LossParts { total, space, freq, phys, lambda_eff: terms.lambda }
}

/// Mean loss over a batch laid out `[batch][row][col]`, with the gradient of
/// that mean.
pub(crate) fn batch_loss(
    pred: &[f64],
    target: &[f64],
    batch: usize,
    rows: usize,
    cols: usize,
    weights: Option<&[f64]>,
    terms: Terms,
    want_grad: bool,
) -> (LossParts, Vec<f64>) {
    let plane = rows * cols;
    let mut grad = if want_grad { vec![0.0; pred.len()] } else { Vec::new() };
    let mut acc = LossParts { lambda_eff: terms.lambda, ..LossParts::default() };
    let scale = 1.0 / batch as f64;
    for b in 0..batch {
        let r = b * plane..(b + 1) * plane;
        let g = if want_grad { Some((&mut grad[r.clone()], scale)) } else { None };
        let parts = sample_loss(&pred[r.clone()], &target[r], rows, cols, weights, terms, g);
        acc.total += parts.total * scale;
        acc.space += parts.space * scale;
        acc.freq += parts.freq * scale;
        acc.phys += parts.phys * scale;
    }
    (acc, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn identical_fields_have_zero_loss() {
        let u = GridField2D::from_fn(8, 8, |x, y| (2.0 * PI * (x - 2.0 * y)).sin()).unwrap();
        let p = loss(&u, &u, &FrlConfig { mu_phys: 1.0, ..FrlConfig::default() }, 7).unwrap();
        assert_eq!(p.total, 0.0);
    }

    #[test]
    fn half_nyquist_sine() {
        let eps = 0.05;
        let target = GridField2D::from_fn(32, 32, |x, y| (2.0 * PI * (x + 3.0 * y)).cos()).unwrap();
        let bump = GridField2D::from_fn(32, 32, |x, _| eps * (2.0 * PI * 8.0 * x).sin()).unwrap();
        let pred = target.add(&bump).unwrap();
        let cfg = FrlConfig::default();
        let p = loss(&pred, &target, &cfg, 10).unwrap();
        assert!((p.space - eps * eps / 2.0).abs() < 1e-15);
        // Direct sum: the bump sits at k = (±8, 0) with weight 8/16; its physical
        // amplitude per coefficient is eps/2 and the target has no energy there.
        let n = 1024.0;
        let direct = 2.0 * 0.5 * (eps / 2.0) * (eps / 2.0) / n;
        assert!((p.freq - direct).abs() < 1e-15, "{} vs {direct}", p.freq);
        assert!((p.total - (p.space + 0.1 * p.freq)).abs() < 1e-18);
    }

    #[test]
    fn warmup_epoch_zero_is_spatial_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = GridField2D::new(8, 8, (0..64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let b = a.scaled(0.5);
        let p = loss(&a, &b, &FrlConfig::default(), 0).unwrap();
        assert_eq!(p.lambda_eff, 0.0);
        assert_eq!(p.total, p.space);
        assert!(p.freq > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (h, w) = (8, 6);
        let pred: Vec<f64> = (0..2 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..2 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let weights = radial_weights(h, w, 1.0);
        let terms = Terms { lambda: 0.7, mu: 0.3 };
        let (_, grad) = batch_loss(&pred, &target, 2, h, w, Some(&weights), terms, true);
        let step = 1e-6;
        for idx in 0..pred.len() {
            let mut p = pred.clone();
            p[idx] += step;
            let up = batch_loss(&p, &target, 2, h, w, Some(&weights), terms, false).0.total;
            p[idx] -= 2.0 * step;
            let down = batch_loss(&p, &target, 2, h, w, Some(&weights), terms, false).0.total;
            let fd = (up - down) / (2.0 * step);
            assert!((fd - grad[idx]).abs() <= 1e-7 * (1.0 + fd.abs()), "{idx}: {fd} vs {}", grad[idx]);
        }
    }

    #[test]
    fn zero_amplitude_gradient_is_finite() {
        // A constant prediction has |P_k| = 0 at every k ≠ 0.
        let pred = vec![0.3; 16];
        let target: Vec<f64> = (0..16).map(|v| (v as f64).sin()).collect();
        let weights = radial_weights(4, 4, 1.0);
        let (_, grad) = batch_loss(&pred, &target, 1, 4, 4, Some(&weights), Terms { lambda: 1.0, mu: 0.0 }, true);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn matched_prediction_has_zero_spatial_gradient() {
        let u: Vec<f64> = (0..16).map(|v| (v as f64).cos()).collect();
        let (_, grad) = batch_loss(&u, &u, 1, 4, 4, None, Terms { lambda: 0.0, mu: 0.0 }, true);
        assert!(grad.iter().all(|&g| g == 0.0));
    }
}
