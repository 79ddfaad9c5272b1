//! Two-dimensional Fourier analysis on periodic grids.
//!
//! Normalization convention, used by every module in the crate: the forward
//! transform is unnormalized and the inverse carries the `1 / (rows * cols)`
//! factor,
//!
//! ```text
//! û[ky, kx] = Σ u[i, j] exp(-2πi (kx·x_j + ky·y_i)),   u = (1/N) Σ û exp(+2πi ...)
//! ```
//!
//! so a pure mode `A·sin(2π f x)` has coefficients of magnitude `A·N/2` at
//! `kx = ±f`, and Parseval reads `Σ|u|²/N = Σ|û|²/N²` with `N = rows * cols`.
//!
//! Wavenumbers are integers in cycles per unit length. Index `n` on an axis of
//! length `L` maps to `n` for `n < L/2` and to `n - L` otherwise, so the
//! Nyquist row and column carry the negative label `-L/2`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{check_grid, GridField2D};

/// Tolerance on the relative Hermitian defect accepted by [`ifft2`].
pub const HERMITIAN_TOL: f64 = 1e-8;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        let key = (len, direction == FftDirection::Forward);
        cache
            .entry(key)
            .or_insert_with(|| planner.plan_fft(len, direction))
            .clone()
    })
}

fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); src.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = src[i * cols + j];
        }
    }
    out
}

/// In-place unnormalized 2-D transform of a row-major complex buffer.
pub(crate) fn fft2_in_place(
    buf: &mut Vec<Complex64>,
    rows: usize,
    cols: usize,
    direction: FftDirection,
) {
    plan(cols, direction).process(buf);
    let mut t = transpose(buf, rows, cols);
    plan(rows, direction).process(&mut t);
    *buf = transpose(&t, cols, rows);
}

/// Signed integer wavenumber of index `n` on an axis of length `len`.
pub fn signed_wavenumber(n: usize, len: usize) -> i64 {
    if n < len / 2 {
        n as i64
    } else {
        n as i64 - len as i64
    }
}

/// Index on an axis of length `len` that holds signed wavenumber `k`.
pub fn wavenumber_index(k: i64, len: usize) -> usize {
    k.rem_euclid(len as i64) as usize
}

/// Complex Fourier coefficients of a [`GridField2D`] in the standard two-sided layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2D {
    rows: usize,
    cols: usize,
    coeffs: Vec<Complex64>,
}

impl Spectrum2D {
    pub fn new(rows: usize, cols: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        check_grid(rows, cols)?;
        if coeffs.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {} coefficients, got {}",
                rows * cols,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidData("non-finite spectral coefficient".into()));
        }
        Ok(Self { rows, cols, coeffs })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![Complex64::default(); rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn nyquist(&self) -> f64 {
        self.rows.min(self.cols) as f64 / 2.0
    }

    /// `(kx, ky)` for storage position `(row, col)`.
    pub fn wavenumber(&self, row: usize, col: usize) -> (i64, i64) {
        (
            signed_wavenumber(col, self.cols),
            signed_wavenumber(row, self.rows),
        )
    }

    /// Radial wavenumber `|k|` at storage position `(row, col)`.
    pub fn radial(&self, row: usize, col: usize) -> f64 {
        let (kx, ky) = self.wavenumber(row, col);
        ((kx * kx + ky * ky) as f64).sqrt()
    }

    /// Coefficient at signed wavenumber `(kx, ky)`.
    pub fn at(&self, kx: i64, ky: i64) -> Complex64 {
        self.coeffs[wavenumber_index(ky, self.rows) * self.cols + wavenumber_index(kx, self.cols)]
    }

    pub fn set(&mut self, kx: i64, ky: i64, value: Complex64) {
        let idx = wavenumber_index(ky, self.rows) * self.cols + wavenumber_index(kx, self.cols);
        self.coeffs[idx] = value;
    }

    /// Mean square of the represented field, `Σ|û|² / N²`.
    pub fn mean_square(&self) -> f64 {
        let n = (self.rows * self.cols) as f64;
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() / (n * n)
    }

    /// Largest `|c(k) - conj(c(-k))|` over the spectrum.
    pub fn hermitian_defect(&self) -> f64 {
        let (h, w) = self.shape();
        let mut worst = 0.0_f64;
        for i in 0..h {
            let mi = (h - i) % h;
            for j in 0..w {
                let mj = (w - j) % w;
                let d = (self.coeffs[i * w + j] - self.coeffs[mi * w + mj].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    fn max_norm(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.norm()))
    }
}

/// Forward 2-D transform (unnormalized).
pub fn fft2(field: &GridField2D) -> Result<Spectrum2D> {
    if !field.is_finite() {
        return Err(Error::InvalidData("fft2 input contains non-finite values".into()));
    }
    let (h, w) = field.shape();
    let mut buf: Vec<Complex64> = field.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_in_place(&mut buf, h, w, FftDirection::Forward);
    Ok(Spectrum2D { rows: h, cols: w, coeffs: buf })
}

/// Inverse 2-D transform back to a real field.
///
/// The spectrum must be Hermitian to within [`HERMITIAN_TOL`] relative to its
/// largest coefficient; it is symmetrized before inversion and the remaining
/// imaginary round-off is dropped.
pub fn ifft2(spec: &Spectrum2D) -> Result<GridField2D> {
    let (h, w) = spec.shape();
    let scale = spec.max_norm().max(1.0);
    let defect = spec.hermitian_defect();
    if defect > HERMITIAN_TOL * scale {
        return Err(Error::SpectralIntegrity(format!(
            "spectrum is not Hermitian: defect {defect:e} exceeds {:e}",
            HERMITIAN_TOL * scale
        )));
    }
    let mut buf = vec![Complex64::default(); h * w];
    for i in 0..h {
        let mi = (h - i) % h;
        for j in 0..w {
            let mj = (w - j) % w;
            buf[i * w + j] = 0.5 * (spec.coeffs[i * w + j] + spec.coeffs[mi * w + mj].conj());
        }
    }
    fft2_in_place(&mut buf, h, w, FftDirection::Inverse);
    let n = (h * w) as f64;
    let data: Vec<f64> = buf.iter().map(|c| c.re / n).collect();
    GridField2D::new(h, w, data)
}

/// Low-pass downsampling by spectral center-crop.
///
/// Keeps modes with `|ky| < rows'/2` and `|kx| < cols'/2` of the target grid and
/// rescales them by `N'/N`, so retained modes keep their real-space amplitude.
pub fn downsample_lowpass(field: &GridField2D, factor: usize) -> Result<GridField2D> {
    if factor == 0 {
        return Err(Error::Shape("downsampling factor must be positive".into()));
    }
    let (h, w) = field.shape();
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::Shape(format!(
            "{h}x{w} grid is not divisible by factor {factor}"
        )));
    }
    if factor == 1 {
        return Ok(field.clone());
    }
    let (h2, w2) = (h / factor, w / factor);
    check_grid(h2, w2)?;
    let spec = fft2(field)?;
    let scale = (h2 * w2) as f64 / (h * w) as f64;
    let mut out = vec![Complex64::default(); h2 * w2];
    let (ky_max, kx_max) = ((h2 / 2) as i64, (w2 / 2) as i64);
    for ky in -ky_max + 1..ky_max {
        for kx in -kx_max + 1..kx_max {
            out[wavenumber_index(ky, h2) * w2 + wavenumber_index(kx, w2)] = spec.at(kx, ky) * scale;
        }
    }
    ifft2(&Spectrum2D { rows: h2, cols: w2, coeffs: out })
}

/// Spectral interpolation onto a grid `factor` times finer by zero-padding.
///
/// The source Nyquist row and column are split evenly between the `±L/2`
/// wavenumbers of the finer grid so the result stays real.
pub fn upsample_spectral(field: &GridField2D, factor: usize) -> Result<GridField2D> {
    if factor == 0 {
        return Err(Error::Shape("upsampling factor must be positive".into()));
    }
    if factor == 1 {
        return Ok(field.clone());
    }
    let (h, w) = field.shape();
    let (h2, w2) = (h * factor, w * factor);
    let spec = fft2(field)?;
    let scale = (h2 * w2) as f64 / (h * w) as f64;
    let mut out = Spectrum2D::zeros(h2, w2)?;
    for i in 0..h {
        let ky = signed_wavenumber(i, h);
        let ky_targets: &[(i64, f64)] = if ky == -((h / 2) as i64) {
            &[(ky, 0.5), (-ky, 0.5)]
        } else {
            &[(ky, 1.0)]
        };
        for j in 0..w {
            let kx = signed_wavenumber(j, w);
            let kx_targets: &[(i64, f64)] = if kx == -((w / 2) as i64) {
                &[(kx, 0.5), (-kx, 0.5)]
            } else {
                &[(kx, 1.0)]
            };
            let c = spec.coeffs[i * w + j] * scale;
            for &(ty, fy) in ky_targets {
                for &(tx, fx) in kx_targets {
                    let idx = wavenumber_index(ty, h2) * w2 + wavenumber_index(tx, w2);
                    out.coeffs[idx] += c * fy * fx;
                }
            }
        }
    }
    ifft2(&out)
}

/// Which side of a radial cutoff a [`RadialBandMask`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    LowPass,
    HighPass,
}

/// Radial band selector: low-pass keeps `|k| < cutoff`, high-pass keeps the rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialBandMask {
    pub cutoff: f64,
    pub mode: MaskMode,
}

impl RadialBandMask {
    pub fn new(cutoff: f64, mode: MaskMode) -> Result<Self> {
        if !(cutoff.is_finite() && cutoff > 0.0) {
            return Err(Error::Precondition(format!("cutoff {cutoff} must be positive")));
        }
        Ok(Self { cutoff, mode })
    }

    pub fn keeps(&self, radial: f64) -> bool {
        match self.mode {
            MaskMode::LowPass => radial < self.cutoff,
            MaskMode::HighPass => radial >= self.cutoff,
        }
    }

    /// Zeroes every coefficient outside the band. The cutoff may not exceed the
    /// spectrum's Nyquist wavenumber.
    pub fn apply(&self, spec: &Spectrum2D) -> Result<Spectrum2D> {
        if self.cutoff > spec.nyquist() {
            return Err(Error::Precondition(format!(
                "cutoff {} exceeds Nyquist {}",
                self.cutoff,
                spec.nyquist()
            )));
        }
        let mut out = spec.clone();
        let (h, w) = spec.shape();
        for i in 0..h {
            for j in 0..w {
                if !self.keeps(spec.radial(i, j)) {
                    out.coeffs[i * w + j] = Complex64::default();
                }
            }
        }
        Ok(out)
    }
}

/// Mean-square errors of a prediction, split at a radial cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandMeanSquares {
    /// Mean square of the error restricted to `|k| < cutoff`.
    pub low: f64,
    /// Mean square of the full error.
    pub wide: f64,
}

pub(crate) fn band_mean_squares(
    pred: &GridField2D,
    truth: &GridField2D,
    cutoff: f64,
) -> Result<BandMeanSquares> {
    let mask = RadialBandMask::new(cutoff, MaskMode::LowPass)?;
    let err = fft2(&pred.sub(truth)?)?;
    let (h, w) = err.shape();
    let mut low = 0.0;
    let mut wide = 0.0;
    for i in 0..h {
        for j in 0..w {
            let p = err.coeffs[i * w + j].norm_sqr();
            wide += p;
            if mask.keeps(err.radial(i, j)) {
                low += p;
            }
        }
    }
    let n2 = ((h * w) as f64).powi(2);
    Ok(BandMeanSquares { low: low / n2, wide: wide / n2 })
}

/// Band-limited and wideband RMSE between a prediction and the truth.
///
/// `low_err` compares the radially low-passed fields (`|k| < cutoff`), `wide_err`
/// the unfiltered ones. Both are evaluated through Parseval on the error spectrum.
pub fn band_split(pred: &GridField2D, truth: &GridField2D, cutoff: f64) -> Result<(f64, f64)> {
    let ms = band_mean_squares(pred, truth, cutoff)?;
    Ok((ms.low.sqrt(), ms.wide.sqrt()))
}

/// One radial bin of a normalized power spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdBin {
    /// Bin center in normalized frequency `ξ = |k| / k_Nyq`.
    pub xi: f64,
    /// Summed power `Σ|û|²/N²` of the modes in the bin.
    pub power: f64,
    /// Number of grid modes that fell in the bin.
    pub modes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialPsd {
    /// Power of the `k = 0` mode, excluded from the bins.
    pub dc: f64,
    pub bins: Vec<PsdBin>,
}

impl RadialPsd {
    pub fn total_binned(&self) -> f64 {
        self.bins.iter().map(|b| b.power).sum()
    }
}

/// Radially binned power spectral density over normalized frequency.
///
/// Bins split `ξ ∈ [0, 1]` evenly; corner modes with `ξ > 1` land in the last
/// bin so the binned total equals the non-DC mean square of the field.
pub fn psd_radial(field: &GridField2D, n_bins: usize) -> Result<RadialPsd> {
    if n_bins < 2 {
        return Err(Error::Precondition(format!("need at least 2 bins, got {n_bins}")));
    }
    let spec = fft2(field)?;
    let (h, w) = spec.shape();
    let nyq = spec.nyquist();
    let n2 = ((h * w) as f64).powi(2);
    let width = 1.0 / n_bins as f64;
    let mut bins: Vec<PsdBin> = (0..n_bins)
        .map(|b| PsdBin { xi: (b as f64 + 0.5) * width, power: 0.0, modes: 0 })
        .collect();
    let mut dc = 0.0;
    for i in 0..h {
        for j in 0..w {
            let p = spec.coeffs[i * w + j].norm_sqr() / n2;
            if i == 0 && j == 0 {
                dc = p;
                continue;
            }
            let xi = spec.radial(i, j) / nyq;
            let b = ((xi * n_bins as f64).floor() as usize).min(n_bins - 1);
            bins[b].power += p;
            bins[b].modes += 1;
        }
    }
    Ok(RadialPsd { dc, bins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(rows: usize, cols: usize, seed: u64) -> GridField2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        GridField2D::new(rows, cols, data).unwrap()
    }

    #[test]
    fn constant_field_is_dc_only() {
        let f = GridField2D::constant(8, 8, 2.5).unwrap();
        let s = fft2(&f).unwrap();
        assert_abs_diff_eq!(s.at(0, 0).re, 2.5 * 64.0, epsilon = 1e-12);
        for (idx, c) in s.coeffs().iter().enumerate().skip(1) {
            assert!(c.norm() < 1e-12, "coefficient {idx} = {c}");
        }
    }

    #[test]
    fn single_sine_has_two_coefficients() {
        let f = GridField2D::from_fn(64, 64, |x, _| (2.0 * PI * 3.0 * x).sin()).unwrap();
        let s = fft2(&f).unwrap();
        for i in 0..64 {
            for j in 0..64 {
                let (kx, ky) = s.wavenumber(i, j);
                let c = s.coeffs()[i * 64 + j];
                if ky == 0 && kx.abs() == 3 {
                    assert_abs_diff_eq!(c.norm(), 64.0 * 64.0 / 2.0, epsilon = 1e-9);
                } else {
                    assert!(c.norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn round_trip_random() {
        let f = random_field(16, 16, 7);
        let back = ifft2(&fft2(&f).unwrap()).unwrap();
        for (a, b) in f.data().iter().zip(back.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn dc_spectrum_inverts_to_constant() {
        let mut s = Spectrum2D::zeros(8, 4).unwrap();
        s.set(0, 0, Complex64::new(1.5 * 32.0, 0.0));
        let f = ifft2(&s).unwrap();
        assert!(f.data().iter().all(|v| (v - 1.5).abs() < 1e-14));
    }

    #[test]
    fn sine_spectrum_inverts_to_sine() {
        let f = GridField2D::from_fn(32, 32, |x, y| (2.0 * PI * (2.0 * x + 5.0 * y)).sin()).unwrap();
        let back = ifft2(&fft2(&f).unwrap()).unwrap();
        for (a, b) in f.data().iter().zip(back.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn asymmetric_spectrum_is_rejected() {
        let f = GridField2D::from_fn(16, 16, |x, _| (2.0 * PI * x).sin()).unwrap();
        let mut s = fft2(&f).unwrap();
        let c = s.at(1, 0);
        s.set(1, 0, c + Complex64::new(1e-3, 0.0));
        assert!(matches!(ifft2(&s), Err(Error::SpectralIntegrity(_))));
    }

    #[test]
    fn nonfinite_input_rejected() {
        let mut f = GridField2D::zeros(4, 4).unwrap().into_data();
        f[3] = f64::INFINITY;
        let field = GridField2D::from_parts(4, 4, f);
        assert!(matches!(fft2(&field), Err(Error::InvalidData(_))));
    }

    #[test]
    fn downsample_keeps_low_modes() {
        let f = GridField2D::from_fn(64, 64, |x, _| (2.0 * PI * 4.0 * x).sin()).unwrap();
        let d = downsample_lowpass(&f, 2).unwrap();
        let expect = GridField2D::from_fn(32, 32, |x, _| (2.0 * PI * 4.0 * x).sin()).unwrap();
        assert_eq!(d.shape(), (32, 32));
        for (a, b) in d.data().iter().zip(expect.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn downsample_removes_modes_at_or_above_new_nyquist() {
        let f = GridField2D::from_fn(64, 64, |x, _| (2.0 * PI * 20.0 * x).sin()).unwrap();
        let d = downsample_lowpass(&f, 2).unwrap();
        assert!(d.max_abs() < 1e-12);
        let g = GridField2D::from_fn(64, 64, |x, _| (2.0 * PI * 16.0 * x).cos()).unwrap();
        assert!(downsample_lowpass(&g, 2).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn downsample_energy_never_grows() {
        let f = random_field(128, 128, 3);
        let d = downsample_lowpass(&f, 4).unwrap();
        // Direct Parseval sums on both grids.
        let e_in: f64 = f.data().iter().map(|v| v * v).sum::<f64>() / f.len() as f64;
        let e_out: f64 = d.data().iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
        assert!(e_out <= e_in);
        assert_eq!(downsample_lowpass(&f, 1).unwrap(), f);
    }

    #[test]
    fn downsample_rejects_bad_factors() {
        let f = GridField2D::zeros(12, 12).unwrap();
        assert!(matches!(downsample_lowpass(&f, 5), Err(Error::Shape(_))));
        assert!(matches!(downsample_lowpass(&f, 6), Err(Error::Shape(_))));
        assert!(matches!(downsample_lowpass(&f, 4), Err(Error::Shape(_))));
    }

    #[test]
    fn band_split_examples() {
        let truth = random_field(64, 64, 11);
        assert_eq!(band_split(&truth, &truth, 8.0).unwrap(), (0.0, 0.0));

        let bump = GridField2D::from_fn(64, 64, |x, _| 0.1 * (2.0 * PI * 20.0 * x).sin()).unwrap();
        let pred = truth.add(&bump).unwrap();
        let (low, wide) = band_split(&pred, &truth, 16.0).unwrap();
        assert!(low < 1e-12);
        // RMS of a sine is amplitude / sqrt(2).
        assert_abs_diff_eq!(wide, 0.1 / 2f64.sqrt(), epsilon = 1e-6);

        let pred = truth.add(&GridField2D::constant(64, 64, 0.1).unwrap()).unwrap();
        let (low, wide) = band_split(&pred, &truth, 1.0).unwrap();
        assert_abs_diff_eq!(low, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(wide, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn band_split_rejects_mismatch() {
        let a = GridField2D::zeros(8, 8).unwrap();
        let b = GridField2D::zeros(16, 16).unwrap();
        assert!(matches!(band_split(&a, &b, 2.0), Err(Error::Shape(_))));
    }

    #[test]
    fn psd_single_mode_and_zero() {
        // k_Nyq = 16 on 32x32; the mode |k| = 8 sits at xi = 0.5.
        let f = GridField2D::from_fn(32, 32, |x, _| (2.0 * PI * 8.0 * x).cos()).unwrap();
        let psd = psd_radial(&f, 10).unwrap();
        for (b, bin) in psd.bins.iter().enumerate() {
            if b == 5 {
                assert_abs_diff_eq!(bin.power, 0.5, epsilon = 1e-12);
            } else {
                assert!(bin.power < 1e-20, "bin {b} has {}", bin.power);
            }
        }
        let z = psd_radial(&GridField2D::zeros(16, 16).unwrap(), 4).unwrap();
        assert!(z.bins.iter().all(|b| b.power == 0.0) && z.dc == 0.0);
        assert!(psd_radial(&f, 1).is_err());
    }

    #[test]
    fn psd_total_matches_field_power() {
        let f = random_field(32, 16, 5);
        let psd = psd_radial(&f, 7).unwrap();
        let total = f.mean_square() - psd.dc;
        assert!((psd.total_binned() - total).abs() <= 1e-8 * total);
        assert_eq!(psd.bins.iter().map(|b| b.modes).sum::<usize>(), 32 * 16 - 1);
    }

    #[test]
    fn psd_of_white_noise_is_flat_per_mode() {
        let n_bins = 8;
        let realizations = 12;
        let mut per_mode = vec![0.0; n_bins];
        for r in 0..realizations {
            let f = random_field(64, 64, 100 + r);
            // Oracle: direct per-mode power summation.
            let s = fft2(&f).unwrap();
            let n2 = (64.0 * 64.0_f64).powi(2);
            let mut sums = vec![0.0; n_bins];
            let mut counts = vec![0usize; n_bins];
            for i in 0..64 {
                for j in 0..64 {
                    if i == 0 && j == 0 {
                        continue;
                    }
                    let xi = s.radial(i, j) / 32.0;
                    let b = ((xi * n_bins as f64) as usize).min(n_bins - 1);
                    sums[b] += s.coeffs()[i * 64 + j].norm_sqr() / n2;
                    counts[b] += 1;
                }
            }
            let psd = psd_radial(&f, n_bins).unwrap();
            for b in 0..n_bins {
                assert_eq!(psd.bins[b].modes, counts[b]);
                assert!((psd.bins[b].power - sums[b]).abs() <= 1e-12 * sums[b].max(1e-30));
                per_mode[b] += psd.bins[b].power / counts[b] as f64 / realizations as f64;
            }
        }
        let mean = per_mode.iter().sum::<f64>() / n_bins as f64;
        for (b, v) in per_mode.iter().enumerate() {
            assert!((v / mean - 1.0).abs() < 0.3, "bin {b}: {v} vs mean {mean}");
        }
    }

    #[test]
    fn upsample_then_downsample_is_identity() {
        let f = random_field(16, 16, 9);
        let low = downsample_lowpass(&f, 2).unwrap();
        let up = upsample_spectral(&low, 4).unwrap();
        let back = downsample_lowpass(&up, 4).unwrap();
        for (a, b) in low.data().iter().zip(back.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn mask_apply_respects_nyquist() {
        let s = Spectrum2D::zeros(8, 8).unwrap();
        let m = RadialBandMask::new(5.0, MaskMode::LowPass).unwrap();
        assert!(m.apply(&s).is_err());
        assert!(RadialBandMask::new(0.0, MaskMode::HighPass).is_err());
    }
}
