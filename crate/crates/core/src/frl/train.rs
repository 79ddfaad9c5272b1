use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{batch_loss, radial_weights, LossParts, Terms};
use super::{build_multires_dataset, pe_channels, FrlConfig, TrainMode};
use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::field::GridField2D;
use crate::nn::checkpoint::{EpochRecord, PredictorCheckpoint, TrainingMeta};
use crate::nn::{AdamWConfig, EncodedBatch, Gradients, OptimizerState, Predictor, PredictorConfig, Tape};
use crate::solver::trajectory_rng;
use crate::spectral::downsample_lowpass;

/// Optimization settings shared by every training mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Edge length of the training grid; the reference data is low-passed to it.
    pub train_res: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; `None` never stops early.
    #[serde(with = "crate::optional")]
    pub patience: Option<usize>,
    pub batch_size: usize,
    pub hidden_channels: usize,
    pub n_blocks: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            train_res: 32,
            max_epochs: 100,
            patience: Some(10),
            batch_size: 8,
            hidden_channels: 32,
            n_blocks: 4,
            optimizer: AdamWConfig::default(),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn predictor_config(&self, frl: &FrlConfig) -> PredictorConfig {
        PredictorConfig {
            hidden_channels: self.hidden_channels,
            n_blocks: self.n_blocks,
            ..PredictorConfig::for_n_freq(frl.n_freq)
        }
    }
}

/// Random stream indices derived from the training seed.
const STREAM_INIT: usize = 1 << 20;
const STREAM_ORDER: usize = (1 << 20) + 1;

/// Consecutive snapshot pairs of one level, drawn without replacement and
/// reshuffled when exhausted.
struct PairPool {
    pairs: Vec<(usize, usize)>,
    cursor: usize,
}

impl PairPool {
    fn new(ds: &TrajectoryDataset) -> Self {
        let steps = ds.n_snapshots() - 1;
        let pairs = (0..ds.n_trajectories())
            .flat_map(|t| (0..steps).map(move |s| (t, s)))
            .collect();
        Self { pairs, cursor: 0 }
    }

    fn reshuffle<R: Rng>(&mut self, rng: &mut R) {
        self.pairs.shuffle(rng);
        self.cursor = 0;
    }

    fn next_batch<R: Rng>(&mut self, size: usize, rng: &mut R) -> Vec<(usize, usize)> {
        if self.cursor >= self.pairs.len() {
            self.reshuffle(rng);
        }
        let end = (self.cursor + size).min(self.pairs.len());
        let out = self.pairs[self.cursor..end].to_vec();
        self.cursor = end;
        out
    }
}

fn sample_level<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    if probs.len() == 1 {
        return 0;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub(crate) fn predict_fields(
    model: &Predictor<f32>,
    fields: &[&GridField2D],
    pe: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let batch = EncodedBatch::<f32>::from_fields(fields, pe)?;
    Ok(model.forward(&batch, None)?.iter().map(|&v| v as f64).collect())
}

fn flatten(fields: &[&GridField2D]) -> Vec<f64> {
    fields.iter().flat_map(|f| f.data().iter().copied()).collect()
}

/// One-step spatial MSE of `model` over every pair of `ds`.
fn validation_space(model: &Predictor<f32>, ds: &TrajectoryDataset, pe: &[Vec<f64>]) -> Result<f64> {
    let (h, w) = ds.resolution();
    let mut sum = 0.0;
    let mut count = 0usize;
    let pairs: Vec<(usize, usize)> = PairPool::new(ds).pairs;
    for chunk in pairs.chunks(32) {
        let inputs: Vec<&GridField2D> = chunk.iter().map(|&(t, s)| &ds.trajectory(t)[s]).collect();
        let targets: Vec<&GridField2D> = chunk.iter().map(|&(t, s)| &ds.trajectory(t)[s + 1]).collect();
        let pred = predict_fields(model, &inputs, pe)?;
        let tgt = flatten(&targets);
        sum += pred.iter().zip(&tgt).map(|(p, t)| (p - t) * (p - t)).sum::<f64>();
        count += chunk.len() * h * w;
    }
    Ok(sum / count as f64)
}

/// Reference data low-passed to the training grid.
pub fn training_data(reference: &TrajectoryDataset, train_res: usize) -> Result<TrajectoryDataset> {
    let (h, w) = reference.resolution();
    if h != w {
        return Err(Error::Shape(format!("training expects square data, got {h}x{w}")));
    }
    if train_res > h || h % train_res != 0 {
        return Err(Error::Shape(format!(
            "reference resolution {h} is not a multiple of train_res {train_res}"
        )));
    }
    let factor = h / train_res;
    if factor == 1 {
        Ok(reference.clone())
    } else {
        reference.map_fields(|f| downsample_lowpass(f, factor))
    }
}

/// Trains a predictor on `reference` (at or above `train_res`).
///
/// Baseline mode trains on single-resolution pairs with zeroed encoding
/// channels and the spatial loss only; it runs the same loop as FRL mode with
/// every component switched off. Each step draws a level from the sampling
/// probabilities and a batch of pairs from that level. An epoch has
/// `ceil(pairs at ρ0 / batch_size)` steps. Validation uses the spatial loss on
/// the `ρ0` validation split; the best epoch's parameters are returned.
pub fn train(
    reference: &TrajectoryDataset,
    mode: TrainMode,
    frl: &FrlConfig,
    cfg: &TrainConfig,
) -> Result<PredictorCheckpoint> {
    let frl = match mode {
        TrainMode::Baseline => frl.baseline(),
        TrainMode::Frl => frl.clone(),
    };
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::Precondition("batch_size and max_epochs must be positive".into()));
    }
    if reference.n_snapshots() < 2 {
        return Err(Error::Precondition("training needs at least two snapshots per trajectory".into()));
    }
    let base = training_data(reference, cfg.train_res)?;
    frl.validate_for_resolution(cfg.train_res, cfg.train_res)?;

    let split = base.split();
    let train_ds = base.subset(split.train.clone())?;
    let val_ds = if split.val.is_empty() {
        log::warn!("no validation trajectories; validating on the training split");
        train_ds.clone()
    } else {
        base.subset(split.val.clone())?
    };
    let levels = if frl.use_multires {
        build_multires_dataset(&train_ds, &frl)?
    } else {
        vec![train_ds]
    };
    let probs = if frl.use_multires {
        frl.level_sampling.probabilities(frl.levels)?
    } else {
        vec![1.0]
    };
    let pes: Vec<Vec<Vec<f64>>> = levels
        .iter()
        .map(|l| {
            let (h, w) = l.resolution();
            pe_channels(h, w, frl.n_freq, frl.use_freq_enc)
        })
        .collect();
    let weights: Vec<Vec<f64>> = levels
        .iter()
        .map(|l| {
            let (h, w) = l.resolution();
            radial_weights(h, w, frl.alpha_radial)
        })
        .collect();
    let val_pe = pe_channels(cfg.train_res, cfg.train_res, frl.n_freq, frl.use_freq_enc);

    let pconf = cfg.predictor_config(&frl);
    let mut model = Predictor::<f32>::init(pconf.clone(), &mut trajectory_rng(cfg.seed, STREAM_INIT))?;
    let names: Vec<String> = pconf.parameter_layout().into_iter().map(|(n, _)| n).collect();
    let sizes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    let mut opt = OptimizerState::new(cfg.optimizer, &sizes);
    let mut rng = trajectory_rng(cfg.seed, STREAM_ORDER);
    let mut pools: Vec<PairPool> = levels.iter().map(PairPool::new).collect();
    let steps_per_epoch = pools[0].pairs.len().div_ceil(cfg.batch_size);

    let identity_val = {
        let id = Predictor::<f32>::zeros(pconf.clone())?;
        validation_space(&id, &val_ds, &val_pe)?
    };
    log::info!(
        "{mode} training at {r}x{r}: {steps_per_epoch} steps/epoch, {n} levels, identity val {identity_val:.4e}",
        r = cfg.train_res,
        n = levels.len()
    );

    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut history = Vec::new();
    let mut since_best = 0usize;
    let mut epochs_run = 0;
    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        for pool in pools.iter_mut() {
            pool.reshuffle(&mut rng);
        }
        let terms = Terms { lambda: frl.lambda_eff(epoch), mu: frl.mu_phys };
        let mut train_sum = 0.0;
        for step in 0..steps_per_epoch {
            let level = sample_level(&probs, &mut rng);
            let ds = &levels[level];
            let (h, w) = ds.resolution();
            let pairs = pools[level].next_batch(cfg.batch_size, &mut rng);
            let inputs: Vec<&GridField2D> = pairs.iter().map(|&(t, s)| &ds.trajectory(t)[s]).collect();
            let targets: Vec<&GridField2D> = pairs.iter().map(|&(t, s)| &ds.trajectory(t)[s + 1]).collect();
            let batch = EncodedBatch::<f32>::from_fields(&inputs, &pes[level])?;
            let mut tape = Tape::new();
            let out = model.forward(&batch, Some(&mut tape))?;
            let pred: Vec<f64> = out.iter().map(|&v| v as f64).collect();
            let tgt = flatten(&targets);
            let spectral = (terms.lambda != 0.0).then_some(weights[level].as_slice());
            let (parts, grad) = batch_loss(&pred, &tgt, pairs.len(), h, w, spectral, terms, true);
            if !parts.total.is_finite() {
                return Err(Error::Training {
                    epoch,
                    step,
                    reason: format!("loss is {}", parts.total),
                });
            }
            train_sum += parts.total;
            let d_out: Vec<f32> = grad.iter().map(|&g| g as f32).collect();
            let mut grads = tape.backward(&model, &d_out)?;
            let mut params = model.tensors_mut();
            let mut gts = grads.tensors_mut();
            opt.step(&mut params, &mut gts, &names).map_err(|e| match e {
                Error::Training { reason, .. } => Error::Training { epoch, step, reason },
                other => other,
            })?;
        }
        let val = validation_space(&model, &val_ds, &val_pe)?;
        if !val.is_finite() {
            return Err(Error::Training { epoch, step: steps_per_epoch, reason: "validation loss is not finite".into() });
        }
        let train_loss = train_sum / steps_per_epoch as f64;
        history.push(EpochRecord { epoch, train_loss, val_space: val });
        epochs_run = epoch + 1;
        log::info!(
            "epoch {epoch}: train {train_loss:.4e} val {val:.4e} ({:.1}s)",
            started.elapsed().as_secs_f64()
        );
        if val < best.0 {
            best = (val, model.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                log::info!("early stop after epoch {epoch}; best epoch {}", best.2);
                break;
            }
        }
    }

    Ok(PredictorCheckpoint {
        model: best.1,
        meta: TrainingMeta {
            mode,
            train_res: cfg.train_res,
            best_epoch: best.2,
            epochs_run,
            seed: cfg.seed,
            frl,
            history,
        },
    })
}

/// One-step spatial MSE of the identity map on the validation split at `train_res`.
pub fn identity_validation_mse(reference: &TrajectoryDataset, train_res: usize) -> Result<f64> {
    let base = training_data(reference, train_res)?;
    let split = base.split();
    let val = if split.val.is_empty() { base.subset(split.train)? } else { base.subset(split.val)? };
    let mut sum = 0.0;
    let mut count = 0usize;
    for traj in val.trajectories() {
        for pair in traj.windows(2) {
            sum += pair[0].sub(&pair[1])?.mean_square();
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Composite training loss of `model` on one batch of `(input, target)`
/// pairs at `epoch`, in double precision. With `want_grad`, also returns the
/// gradient with respect to every parameter.
pub fn composite_loss(
    model: &Predictor<f64>,
    inputs: &[&GridField2D],
    targets: &[&GridField2D],
    frl: &FrlConfig,
    epoch: usize,
    want_grad: bool,
) -> Result<(LossParts, Option<Gradients<f64>>)> {
    let Some(first) = inputs.first() else {
        return Err(Error::Precondition("empty batch".into()));
    };
    if inputs.len() != targets.len() {
        return Err(Error::Shape(format!("{} inputs but {} targets", inputs.len(), targets.len())));
    }
    let (h, w) = first.shape();
    for t in targets {
        if t.shape() != (h, w) {
            return Err(Error::Shape("targets must match the input resolution".into()));
        }
    }
    let pe = pe_channels(h, w, frl.n_freq, frl.use_freq_enc);
    let batch = EncodedBatch::<f64>::from_fields(inputs, &pe)?;
    let mut tape = Tape::new();
    let pred = model.forward(&batch, want_grad.then_some(&mut tape))?;
    let terms = Terms { lambda: frl.lambda_eff(epoch), mu: frl.mu_phys };
    let weights = radial_weights(h, w, frl.alpha_radial);
    let spectral = frl.use_freq_loss.then_some(weights.as_slice());
    let (parts, grad) = batch_loss(&pred, &flatten(targets), inputs.len(), h, w, spectral, terms, want_grad);
    let grads = if want_grad { Some(tape.backward(model, &grad)?) } else { None };
    Ok((parts, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{generate_dataset, SolverConfig};

    fn tiny_data(n_traj: usize) -> TrajectoryDataset {
        let cfg = SolverConfig { resolution: (16, 16), n_snapshots: 4, ..SolverConfig::default() };
        generate_dataset(&cfg, n_traj).unwrap()
    }

    fn tiny_train(epochs: usize) -> TrainConfig {
        TrainConfig {
            train_res: 16,
            max_epochs: epochs,
            hidden_channels: 4,
            n_blocks: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn smoke_and_checkpoint_round_trip() {
        let ds = tiny_data(2);
        let frl = FrlConfig { n_freq: 2, levels: 2, ..FrlConfig::default() };
        let ckpt = train(&ds, TrainMode::Frl, &frl, &tiny_train(1)).unwrap();
        assert_eq!(ckpt.meta.epochs_run, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sack");
        crate::nn::save_checkpoint(&ckpt, &path).unwrap();
        assert_eq!(crate::nn::load_checkpoint(&path).unwrap(), ckpt);
    }

    #[test]
    fn all_components_off_reproduces_baseline() {
        let ds = tiny_data(3);
        let frl = FrlConfig { n_freq: 1, ..FrlConfig::default() };
        let off = FrlConfig { use_multires: false, use_freq_enc: false, use_freq_loss: false, ..frl.clone() };
        let a = train(&ds, TrainMode::Baseline, &frl, &tiny_train(3)).unwrap();
        let b = train(&ds, TrainMode::Frl, &off, &tiny_train(3)).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.meta.history, b.meta.history);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = tiny_data(2);
        let frl = FrlConfig { n_freq: 1, levels: 2, ..FrlConfig::default() };
        let a = train(&ds, TrainMode::Frl, &frl, &tiny_train(2)).unwrap();
        let b = train(&ds, TrainMode::Frl, &frl, &tiny_train(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn level_sampling_respects_zero_probability() {
        let mut rng = trajectory_rng(0, 0);
        for _ in 0..1000 {
            assert_ne!(sample_level(&[0.5, 0.5, 0.0], &mut rng), 2);
        }
        assert_eq!(sample_level(&[1.0], &mut rng), 0);
    }

    #[test]
    fn indivisible_train_resolution_rejected() {
        let ds = tiny_data(2);
        let cfg = TrainConfig { train_res: 6, ..tiny_train(1) };
        assert!(train(&ds, TrainMode::Baseline, &FrlConfig::default(), &cfg).is_err());
    }
}
