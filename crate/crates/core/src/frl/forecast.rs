//! One-snapshot forecasters and autoregressive rollout.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::pe_channels;
use super::train::predict_fields;
use crate::error::{Error, Result};
use crate::field::GridField2D;
use crate::nn::PredictorCheckpoint;
use crate::solver::BLOWUP_THRESHOLD;
use crate::spectral::{fft2, ifft2, Spectrum2D};

/// Advances fields by one snapshot interval at whatever resolution they arrive.
pub trait Forecaster: Sync {
    /// One step for every field; all fields share a resolution.
    fn step_batch(&self, fields: &[&GridField2D]) -> Result<Vec<GridField2D>>;

    /// Edge length of the grid the forecaster was fitted on.
    fn train_resolution(&self) -> usize;
}

/// Trained network; encoding planes are rebuilt for each input resolution.
pub struct TrainedForecaster {
    pub checkpoint: PredictorCheckpoint,
}

impl TrainedForecaster {
    pub fn new(checkpoint: PredictorCheckpoint) -> Self {
        Self { checkpoint }
    }
}

/// Samples per forward pass, bounded so patch matrices stay near 32 M values.
fn chunk_len(fan_in: usize, plane: usize) -> usize {
    (32_000_000 / (fan_in * plane).max(1)).max(1)
}

impl Forecaster for TrainedForecaster {
    fn step_batch(&self, fields: &[&GridField2D]) -> Result<Vec<GridField2D>> {
        let Some(first) = fields.first() else { return Ok(Vec::new()) };
        let (h, w) = first.shape();
        let frl = &self.checkpoint.meta.frl;
        let pe = pe_channels(h, w, frl.n_freq, frl.use_freq_enc);
        let cfg = self.checkpoint.config();
        let fan_in = cfg.in_channels.max(cfg.hidden_channels) * cfg.kernel * cfg.kernel;
        let mut out = Vec::with_capacity(fields.len());
        for chunk in fields.chunks(chunk_len(fan_in, h * w)) {
            let pred = predict_fields(&self.checkpoint.model, chunk, &pe)?;
            for p in pred.chunks(h * w) {
                out.push(GridField2D::from_parts(h, w, p.to_vec()));
            }
        }
        Ok(out)
    }

    fn train_resolution(&self) -> usize {
        self.checkpoint.meta.train_res
    }
}

/// Returns its input unchanged.
pub struct IdentityForecaster {
    pub train_res: usize,
}

impl Forecaster for IdentityForecaster {
    fn step_batch(&self, fields: &[&GridField2D]) -> Result<Vec<GridField2D>> {
        Ok(fields.iter().map(|f| (*f).clone()).collect())
    }

    fn train_resolution(&self) -> usize {
        self.train_res
    }
}

/// Exact one-interval evolution of the convection–diffusion equation without
/// forcing, applied mode by mode.
pub struct ExactEvolution {
    pub nu: f64,
    pub vx: f64,
    pub vy: f64,
    pub dt_snapshot: f64,
    pub train_res: usize,
}

impl ExactEvolution {
    pub fn evolve(&self, u: &GridField2D) -> Result<GridField2D> {
        let s = fft2(u)?;
        let (h, w) = s.shape();
        let mut out = s.clone().into_coeffs();
        for i in 0..h {
            for j in 0..w {
                let (kx, ky) = s.wavenumber(i, j);
                let cx = if 2 * j == w { 0.0 } else { kx as f64 };
                let cy = if 2 * i == h { 0.0 } else { ky as f64 };
                let lam = Complex64::new(
                    -self.nu * 4.0 * PI * PI * (kx * kx + ky * ky) as f64,
                    -2.0 * PI * (cx * self.vx + cy * self.vy),
                );
                out[i * w + j] *= (lam * self.dt_snapshot).exp();
            }
        }
        ifft2(&Spectrum2D::new(h, w, out)?)
    }
}

impl Forecaster for ExactEvolution {
    fn step_batch(&self, fields: &[&GridField2D]) -> Result<Vec<GridField2D>> {
        fields.iter().map(|f| self.evolve(f)).collect()
    }

    fn train_resolution(&self) -> usize {
        self.train_res
    }
}

fn check_divergence(fields: &[GridField2D], step: usize) -> Result<()> {
    for f in fields {
        let max_abs = f.data().iter().fold(0.0_f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) });
        if !max_abs.is_finite() || max_abs > BLOWUP_THRESHOLD {
            return Err(Error::RolloutDivergence { step, max_abs });
        }
    }
    Ok(())
}

/// Rolls every initial field forward `n_steps` snapshots. Returns, per step,
/// the predictions for all fields (`result[step][field]`), excluding the inputs.
pub fn rollout_batch(
    model: &dyn Forecaster,
    initial: &[&GridField2D],
    n_steps: usize,
) -> Result<Vec<Vec<GridField2D>>> {
    let mut out: Vec<Vec<GridField2D>> = Vec::with_capacity(n_steps);
    for step in 1..=n_steps {
        let next = {
            let current: Vec<&GridField2D> = match out.last() {
                Some(prev) => prev.iter().collect(),
                None => initial.to_vec(),
            };
            model.step_batch(&current)?
        };
        check_divergence(&next, step)?;
        out.push(next);
    }
    Ok(out)
}

/// Autoregressive predictions `u_1 … u_n` from `u0`; `n_steps = 0` yields none.
pub fn predict_rollout(model: &dyn Forecaster, u0: &GridField2D, n_steps: usize) -> Result<Vec<GridField2D>> {
    Ok(rollout_batch(model, &[u0], n_steps)?
        .into_iter()
        .map(|mut v| v.remove(0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frl::{FrlConfig, TrainMode};
    use crate::nn::checkpoint::TrainingMeta;
    use crate::nn::{Predictor, PredictorConfig};

    fn identity_checkpoint(train_res: usize) -> PredictorCheckpoint {
        let frl = FrlConfig { n_freq: 2, ..FrlConfig::default() };
        PredictorCheckpoint {
            model: Predictor::zeros(PredictorConfig::for_n_freq(2)).unwrap(),
            meta: TrainingMeta {
                mode: TrainMode::Frl,
                train_res,
                best_epoch: 0,
                epochs_run: 0,
                seed: 42,
                frl,
                history: Vec::new(),
            },
        }
    }

    #[test]
    fn zero_steps_is_empty() {
        let u = GridField2D::zeros(8, 8).unwrap();
        assert!(predict_rollout(&IdentityForecaster { train_res: 8 }, &u, 0).unwrap().is_empty());
    }

    #[test]
    fn untrained_model_repeats_input_at_any_resolution() {
        let f = TrainedForecaster::new(identity_checkpoint(32));
        for n in [32, 64] {
            let u = GridField2D::from_fn(n, n, |x, y| (2.0 * PI * (x + y)).sin() * 0.5).unwrap();
            let quantized = GridField2D::new(n, n, u.data().iter().map(|&v| v as f32 as f64).collect()).unwrap();
            let roll = predict_rollout(&f, &u, 3).unwrap();
            assert_eq!(roll.len(), 3);
            assert!(roll.iter().all(|r| *r == quantized));
        }
    }

    #[test]
    fn divergence_reports_step() {
        struct Doubler;
        impl Forecaster for Doubler {
            fn step_batch(&self, fields: &[&GridField2D]) -> Result<Vec<GridField2D>> {
                Ok(fields.iter().map(|f| f.scaled(1e3)).collect())
            }
            fn train_resolution(&self) -> usize {
                8
            }
        }
        let u = GridField2D::constant(8, 8, 1.0).unwrap();
        assert!(matches!(
            predict_rollout(&Doubler, &u, 5),
            Err(Error::RolloutDivergence { step: 3, .. })
        ));
    }

    #[test]
    fn exact_evolution_decays_single_mode() {
        let ev = ExactEvolution { nu: 0.01, vx: 1.0, vy: 0.5, dt_snapshot: 0.01, train_res: 32 };
        let u = GridField2D::from_fn(32, 32, |x, _| (2.0 * PI * 5.0 * x).sin()).unwrap();
        let out = ev.evolve(&u).unwrap();
        let want = (-0.01 * (2.0 * PI * 5.0_f64).powi(2) * 0.01).exp();
        assert!((out.rms() / u.rms() - want).abs() < 1e-12);
    }
}
