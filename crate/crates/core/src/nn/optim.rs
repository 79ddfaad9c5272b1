use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    #[serde(with = "crate::optional")]
    pub clip_max_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_max_norm: Some(1.0),
        }
    }
}

/// AdamW moments, kept in `f64` regardless of parameter precision.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Clips `grads` to the configured global norm, then applies one AdamW
    /// update with decoupled weight decay. `names` label parameters in errors.
    pub fn step<T: Real>(
        &mut self,
        params: &mut [&mut [T]],
        grads: &mut [&mut [T]],
        names: &[String],
    ) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Shape("parameter, gradient and moment counts differ".into()));
        }
        for (i, (p, g)) in params.iter().zip(grads.iter()).enumerate() {
            if p.len() != self.first[i].len() || g.len() != p.len() {
                return Err(Error::Shape(format!("shape mismatch for parameter {}", label(names, i))));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training {
                    epoch: 0,
                    step: self.step as usize,
                    reason: format!("non-finite gradient in {}", label(names, i)),
                });
            }
        }
        if let Some(max_norm) = self.config.clip_max_norm {
            let refs: Vec<&mut [T]> = grads.iter_mut().map(|g| &mut **g).collect();
            clip_global_norm(refs, max_norm);
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads.iter()).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for j in 0..p.len() {
                let gj = g[j].as_f64();
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                let mut pj = p[j].as_f64();
                pj -= c.lr * c.weight_decay * pj;
                pj -= c.lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + c.eps);
                p[j] = T::from_f64_lossy(pj);
            }
        }
        Ok(())
    }
}

fn label(names: &[String], i: usize) -> String {
    names.get(i).cloned().unwrap_or_else(|| format!("#{i}"))
}

/// Scales gradients so their joint Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Real>(mut grads: Vec<&mut [T]>, max_norm: f64) -> f64 {
    let total = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt();
    if total > max_norm {
        let scale = T::from_f64_lossy(max_norm / total);
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v *= scale);
        }
    }
    total
}
