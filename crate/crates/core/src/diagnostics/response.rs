//! Frequency response of a forecaster to pure sinusoidal probes.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::field::GridField2D;
use crate::frl::{rollout_batch, Forecaster};
use crate::spectral::fft2;

/// Gain at one probe frequency, averaged over phase-shifted repeats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseSample {
    /// Probe frequency in cycles per unit length along x.
    pub f: f64,
    /// Mean of `A_out / A_in` over the repeats.
    pub h_mag: f64,
    /// Population standard deviation of the gain over the repeats.
    pub stddev: f64,
    pub n_repeats: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponseCurve {
    pub samples: Vec<ResponseSample>,
    pub probe_resolution: usize,
    pub train_nyquist: f64,
}

impl FrequencyResponseCurve {
    /// Checks ordering, sign and repeat counts of the samples.
    pub fn validate(&self) -> Result<()> {
        for s in &self.samples {
            if !(s.h_mag >= 0.0) || s.n_repeats == 0 {
                return Err(Error::Diagnostic(format!("invalid sample at f = {}", s.f)));
            }
        }
        if self.samples.windows(2).any(|w| !(w[1].f > w[0].f)) {
            return Err(Error::Diagnostic("probe frequencies must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.f).collect()
    }

    /// Gain at `f`, linearly interpolated between neighboring samples.
    pub fn interpolate(&self, f: f64) -> Result<f64> {
        let s = &self.samples;
        let (Some(first), Some(last)) = (s.first(), s.last()) else {
            return Err(Error::Diagnostic("empty response curve".into()));
        };
        if !(f >= first.f && f <= last.f) {
            return Err(Error::Diagnostic(format!(
                "f = {f} lies outside the probed range [{}, {}]",
                first.f, last.f
            )));
        }
        let i = s.partition_point(|p| p.f < f);
        if s[i].f == f {
            return Ok(s[i].h_mag);
        }
        let (a, b) = (&s[i - 1], &s[i]);
        Ok(a.h_mag + (b.h_mag - a.h_mag) * (f - a.f) / (b.f - a.f))
    }

    /// Mean gain over samples with `lo ≤ f ≤ hi`.
    pub fn mean_gain(&self, lo: f64, hi: f64) -> Result<f64> {
        let v: Vec<f64> = self.samples.iter().filter(|s| s.f >= lo && s.f <= hi).map(|s| s.h_mag).collect();
        if v.is_empty() {
            return Err(Error::Diagnostic(format!("no probed frequency in [{lo}, {hi}]")));
        }
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Probe settings. `steps > 1` measures the gain after a multi-step rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    pub amplitude: f64,
    pub repeats: usize,
    pub steps: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { amplitude: 1.0, repeats: 10, steps: 1 }
    }
}

/// Integer frequencies `lo, lo + step, … ≤ hi`.
pub fn frequency_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) || lo < 0.0 {
        return Err(Error::Precondition(format!("invalid frequency range {lo}..={hi} step {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

fn probe_field(res: usize, f: f64, amplitude: f64, phase: f64) -> Result<GridField2D> {
    if f == 0.0 {
        GridField2D::constant(res, res, amplitude)
    } else {
        GridField2D::from_fn(res, res, |x, _| amplitude * (2.0 * PI * f * x + phase).sin())
    }
}

/// Output amplitude at mode `(f, 0)`: `|û_0|/N` at DC, `2|û_f|/N` otherwise.
fn mode_amplitude(u: &GridField2D, f: usize) -> Result<f64> {
    let spec = fft2(u)?;
    let n = u.len() as f64;
    let c = spec.at(f as i64, 0).norm() / n;
    Ok(if f == 0 { c } else { 2.0 * c })
}

/// Gain `A_out / A_in` of `model` for each probe `u = A·sin(2πf x + φ_r)` on a
/// `probe_res²` grid, with `φ_r = 2πr / repeats`. Frequencies must be integers
/// below the probe Nyquist; `f = 0` probes with the constant `A`.
pub fn probe_frequency_response(
    model: &dyn Forecaster,
    probe_res: usize,
    freqs: &[f64],
    opts: &ProbeOptions,
) -> Result<FrequencyResponseCurve> {
    if !(opts.amplitude > 0.0) || opts.repeats == 0 || opts.steps == 0 {
        return Err(Error::Precondition("amplitude, repeats and steps must be positive".into()));
    }
    let mut modes = Vec::with_capacity(freqs.len());
    for &f in freqs {
        if !(f >= 0.0) || f.fract() != 0.0 {
            return Err(Error::Precondition(format!("probe frequency {f} must be a non-negative integer")));
        }
        if f >= probe_res as f64 / 2.0 {
            return Err(Error::Precondition(format!(
                "probe frequency {f} is not below the Nyquist frequency {} of a {probe_res}² grid",
                probe_res / 2
            )));
        }
        modes.push(f as usize);
    }
    let mut probes = Vec::with_capacity(freqs.len() * opts.repeats);
    for &f in freqs {
        for r in 0..opts.repeats {
            let phase = 2.0 * PI * r as f64 / opts.repeats as f64;
            probes.push(probe_field(probe_res, f, opts.amplitude, phase)?);
        }
    }
    let refs: Vec<&GridField2D> = probes.iter().collect();
    let rolled = rollout_batch(model, &refs, opts.steps)?;
    let last = rolled.last().expect("at least one step");

    let mut samples = Vec::with_capacity(freqs.len());
    for (fi, &f) in freqs.iter().enumerate() {
        let gains: Vec<f64> = (0..opts.repeats)
            .map(|r| Ok(mode_amplitude(&last[fi * opts.repeats + r], modes[fi])? / opts.amplitude))
            .collect::<Result<_>>()?;
        let n = gains.len() as f64;
        let mean = gains.iter().sum::<f64>() / n;
        let var = gains.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n;
        samples.push(ResponseSample { f, h_mag: mean, stddev: var.sqrt(), n_repeats: opts.repeats });
    }
    let curve = FrequencyResponseCurve {
        samples,
        probe_resolution: probe_res,
        train_nyquist: model.train_resolution() as f64 / 2.0,
    };
    curve.validate()?;
    Ok(curve)
}

/// Bandwidth of a response curve; `beyond` marks a curve that never falls to
/// the threshold, in which case `value` is the top probed frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    pub value: f64,
    pub beyond: bool,
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.beyond {
            write!(f, ">{:.2}", self.value)
        } else {
            write!(f, "{:.2}", self.value)
        }
    }
}

pub const BANDWIDTH_THRESHOLD: f64 = 0.707;

/// First frequency where the gain drops below `0.707` of the low-frequency
/// reference (the mean over the lowest tenth of the samples, at least one).
pub fn bandwidth(curve: &FrequencyResponseCurve) -> Result<Bandwidth> {
    let s = &curve.samples;
    if s.len() < 3 {
        return Err(Error::Precondition(format!("bandwidth needs at least 3 samples, got {}", s.len())));
    }
    curve.validate()?;
    let n_ref = s.len().div_ceil(10);
    let reference = s[..n_ref].iter().map(|p| p.h_mag).sum::<f64>() / n_ref as f64;
    if !(reference > 0.0) || !reference.is_finite() {
        return Err(Error::Diagnostic(format!("degenerate low-frequency reference {reference}")));
    }
    let thr = BANDWIDTH_THRESHOLD * reference;
    match s.iter().position(|p| p.h_mag < thr) {
        None => Ok(Bandwidth { value: s[s.len() - 1].f, beyond: true }),
        Some(0) => Ok(Bandwidth { value: s[0].f, beyond: false }),
        Some(i) => {
            let (a, b) = (&s[i - 1], &s[i]);
            let value = a.f + (b.f - a.f) * (a.h_mag - thr) / (a.h_mag - b.h_mag);
            Ok(Bandwidth { value, beyond: false })
        }
    }
}

/// `H(f_nyq − δ) / H(f_nyq + δ)` with interpolated gains; infinite when only
/// the denominator vanishes.
pub fn anchoring_ratio(curve: &FrequencyResponseCurve, f_nyq: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!("delta {delta} must be positive")));
    }
    let num = curve.interpolate(f_nyq - delta)?;
    let den = curve.interpolate(f_nyq + delta)?;
    if den == 0.0 {
        if num == 0.0 {
            return Err(Error::Diagnostic(format!("zero gain on both sides of f = {f_nyq}")));
        }
        return Ok(f64::INFINITY);
    }
    Ok(num / den)
}
