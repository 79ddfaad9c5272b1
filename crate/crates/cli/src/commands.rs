use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use salab::diagnostics::report::{format_value, write_band_energy, write_eval_report, write_freq_response};
use salab::diagnostics::{
    anchoring_ratio, bandwidth, error_table, frequency_grid, probe_frequency_response, rollout_band_energy,
    ProbeOptions, RmseRatio, Summary,
};
use salab::frl::{train, LevelSampling, SamplingPreset, TrainMode, TrainedForecaster};
use salab::nn::{load_checkpoint, save_checkpoint, PredictorCheckpoint};
use salab::spectral::downsample_lowpass;
use salab::{generate_dataset, read_dataset, write_dataset, Error, Forcing, Result, TrajectoryDataset};

use crate::args::{
    Ablation, BandEnergyArgs, EvalArgs, EvalOptions, ForcingArg, GenDataArgs, ModeArg, ProbeArgs, SweepArgs,
    TrainArgs, TrainOptions,
};
use crate::config::RunConfig;

/// Short content hash used to identify input files in reports.
pub fn file_id(path: &Path) -> Result<String> {
    let digest = Sha256::digest(std::fs::read(path)?);
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// `dir/name.ext` → `dir/name.config.toml`.
pub fn sidecar_config(path: &Path) -> PathBuf {
    path.with_extension("config.toml")
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p)?;
    }
    Ok(())
}

fn default_data(cfg: &RunConfig) -> PathBuf {
    cfg.paths.data_dir.join("dataset.salb")
}

pub fn cmd_gen_data(cfg: &mut RunConfig, a: &GenDataArgs) -> Result<PathBuf> {
    let s = &mut cfg.solver;
    if let Some(r) = a.resolution {
        s.resolution = (r, r);
    }
    if let Some(v) = a.snapshots {
        s.n_snapshots = v;
    }
    if let Some(v) = a.dt {
        s.dt = v;
    }
    if let Some(v) = a.nu {
        s.nu = v;
    }
    if let Some(v) = a.vx {
        s.vx = v;
    }
    if let Some(v) = a.vy {
        s.vy = v;
    }
    if let Some(f) = a.forcing {
        s.forcing = match f {
            ForcingArg::None => Forcing::None,
            ForcingArg::LowMode => Forcing::low_mode(),
        };
    }
    if let Some(v) = a.trajectories {
        cfg.data.trajectories = v;
    }
    cfg.set_seed(a.seed.unwrap_or(cfg.seed));
    if cfg.data.trajectories == 0 {
        return Err(Error::Usage("--trajectories must be at least 1".into()));
    }
    if a.dt.is_none() {
        let stable = cfg.solver.clone().with_stable_dt();
        if stable.dt != cfg.solver.dt {
            log::warn!(
                "dt {} is unstable on a {}x{} grid; using dt {} with {} steps per snapshot",
                cfg.solver.dt,
                cfg.solver.resolution.0,
                cfg.solver.resolution.1,
                stable.dt,
                stable.steps_per_snapshot
            );
        }
        cfg.solver = stable;
    }
    cfg.solver.validate()?;
    let out = a.out.clone().unwrap_or_else(|| default_data(cfg));
    ensure_parent(&out)?;
    log::info!("generating {} trajectories at {:?}", cfg.data.trajectories, cfg.solver.resolution);
    let ds = generate_dataset(&cfg.solver, cfg.data.trajectories)?;
    write_dataset(&ds, &out)?;
    cfg.write(&sidecar_config(&out))?;
    log::info!("wrote {}", out.display());
    Ok(out)
}

fn parse_sampling(s: &str) -> Result<LevelSampling> {
    match s {
        "table" => Ok(LevelSampling::Preset(SamplingPreset::Table)),
        "uniform" => Ok(LevelSampling::Preset(SamplingPreset::Uniform)),
        list => list
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(LevelSampling::Explicit)
            .map_err(|_| Error::Usage(format!("--level-sampling: expected table, uniform or a list, found {s:?}"))),
    }
}

fn parse_patience(s: &str) -> Result<Option<usize>> {
    if s == "none" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Usage(format!("--patience: expected a count or none, found {s:?}")))
}

/// Applies training flags onto `cfg`.
pub fn apply_train_options(cfg: &mut RunConfig, o: &TrainOptions) -> Result<()> {
    if let Some(m) = o.mode {
        cfg.mode = match m {
            ModeArg::Baseline => TrainMode::Baseline,
            ModeArg::Frl => TrainMode::Frl,
        };
    }
    if cfg.mode == TrainMode::Baseline {
        if !o.ablate.is_empty() {
            return Err(Error::Usage("--ablate applies to --mode frl only".into()));
        }
        let frl_only = [
            ("--lambda", o.lambda.is_some()),
            ("--levels", o.levels.is_some()),
            ("--level-sampling", o.level_sampling.is_some()),
            ("--warmup", o.warmup.is_some()),
            ("--alpha", o.alpha.is_some()),
            ("--mu", o.mu.is_some()),
        ];
        for (flag, _) in frl_only.iter().filter(|f| f.1) {
            log::warn!("{flag} has no effect in baseline mode");
        }
    }
    let f = &mut cfg.frl;
    if let Some(v) = o.levels {
        f.levels = v;
    }
    if let Some(s) = &o.level_sampling {
        f.level_sampling = parse_sampling(s)?;
    }
    if let Some(v) = o.lambda {
        f.lambda = v;
    }
    if let Some(v) = o.warmup {
        f.warmup_epochs = v;
    }
    if let Some(v) = o.n_freq {
        f.n_freq = v;
    }
    if let Some(v) = o.alpha {
        f.alpha_radial = v;
    }
    if let Some(v) = o.mu {
        f.mu_phys = v;
    }
    for a in &o.ablate {
        match a {
            Ablation::Multires => f.use_multires = false,
            Ablation::Freqenc => f.use_freq_enc = false,
            Ablation::Freqloss => f.use_freq_loss = false,
        }
    }
    let t = &mut cfg.train;
    if let Some(v) = o.train_res {
        t.train_res = v;
    }
    if let Some(v) = o.epochs {
        t.max_epochs = v;
    }
    if let Some(s) = &o.patience {
        t.patience = parse_patience(s)?;
    }
    if let Some(v) = o.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = o.hidden {
        t.hidden_channels = v;
    }
    if let Some(v) = o.blocks {
        t.n_blocks = v;
    }
    if let Some(v) = o.lr {
        t.optimizer.lr = v;
    }
    cfg.set_seed(o.seed.unwrap_or(cfg.seed));
    cfg.frl.validate()
}

fn load_data(cfg: &mut RunConfig, path: Option<&PathBuf>) -> Result<(PathBuf, TrajectoryDataset)> {
    let path = path.cloned().unwrap_or_else(|| default_data(cfg));
    let ds = read_dataset(&path)?;
    cfg.solver = ds.config().clone();
    cfg.data.trajectories = ds.n_trajectories();
    Ok((path, ds))
}

fn train_and_save(cfg: &RunConfig, ds: &TrajectoryDataset, out: &Path) -> Result<PredictorCheckpoint> {
    let ckpt = train(ds, cfg.mode, &cfg.frl, &cfg.train)?;
    ensure_parent(out)?;
    save_checkpoint(&ckpt, out)?;
    cfg.write(&sidecar_config(out))?;
    log::info!(
        "wrote {} (best epoch {} of {})",
        out.display(),
        ckpt.meta.best_epoch,
        ckpt.meta.epochs_run
    );
    Ok(ckpt)
}

pub fn cmd_train(cfg: &mut RunConfig, a: &TrainArgs) -> Result<PathBuf> {
    apply_train_options(cfg, &a.opts)?;
    let (_, ds) = load_data(cfg, a.data.as_ref())?;
    let out = a.out.clone().unwrap_or_else(|| {
        cfg.paths
            .checkpoint_dir
            .join(format!("{}_r{}_s{}.sack", cfg.mode, cfg.train.train_res, cfg.seed))
    });
    train_and_save(cfg, &ds, &out)?;
    Ok(out)
}

/// Adopts the settings a checkpoint was trained with.
fn adopt_checkpoint(cfg: &mut RunConfig, ckpt: &PredictorCheckpoint) {
    cfg.mode = ckpt.meta.mode;
    cfg.frl = ckpt.meta.frl.clone();
    cfg.train.train_res = ckpt.meta.train_res;
    cfg.train.hidden_channels = ckpt.config().hidden_channels;
    cfg.train.n_blocks = ckpt.config().n_blocks;
    cfg.set_seed(ckpt.meta.seed);
}

fn apply_eval_options(cfg: &mut RunConfig, o: &EvalOptions) {
    if !o.resolutions.is_empty() {
        cfg.eval.resolutions = o.resolutions.clone();
    }
    if let Some(v) = o.horizon {
        cfg.eval.horizon = v;
    }
    if let Some(v) = o.cutoff {
        cfg.eval.cutoff = v;
    }
}

/// Held-out trajectories of `ds`, or all of them when the test split is empty.
fn test_trajectories(ds: &TrajectoryDataset) -> Result<TrajectoryDataset> {
    let test = ds.split().test;
    if test.is_empty() {
        log::warn!("dataset has no test split; evaluating on all trajectories");
        Ok(ds.clone())
    } else {
        ds.subset(test)
    }
}

fn evaluate(
    cfg: &RunConfig,
    ckpt: PredictorCheckpoint,
    truth: &TrajectoryDataset,
) -> Result<salab::diagnostics::EvalReport> {
    let model = TrainedForecaster::new(ckpt);
    error_table(&model, truth, &cfg.eval.resolutions, cfg.eval.horizon, cfg.eval.cutoff.value())
}

pub fn cmd_eval(cfg: &mut RunConfig, a: &EvalArgs) -> Result<PathBuf> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    adopt_checkpoint(cfg, &ckpt);
    apply_eval_options(cfg, &a.opts);
    let (data_path, ds) = load_data(cfg, a.data.as_ref())?;
    let meta = ckpt.meta.clone();
    let mut report = evaluate(cfg, ckpt, &test_trajectories(&ds)?)?;
    report.checkpoint_id = file_id(&a.checkpoint)?;
    report.dataset_id = file_id(&data_path)?;
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.report_dir.join("eval"));
    std::fs::create_dir_all(&out)?;
    write_eval_report(&out.join("eval_report.csv"), &report)?;
    Summary::new(meta.train_res, meta.mode, meta.seed).with_eval(&report).write(&out.join("summary.json"))?;
    cfg.write(&out.join("config.toml"))?;
    for r in &report.rows {
        log::info!("{}²: rmse {:.4e} error ratio {:.3} f_oob {:.3}", r.resolution, r.rmse, r.error_ratio, r.f_oob);
    }
    Ok(out)
}

pub fn cmd_probe(cfg: &mut RunConfig, a: &ProbeArgs) -> Result<PathBuf> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    adopt_checkpoint(cfg, &ckpt);
    let p = &mut cfg.probe;
    if let Some(v) = a.probe_res {
        p.probe_res = v;
    }
    if let Some(v) = a.f_min {
        p.f_min = v;
    }
    if let Some(v) = a.f_max {
        p.f_max = v;
    }
    if let Some(v) = a.f_step {
        p.f_step = v;
    }
    if let Some(v) = a.amplitude {
        p.amplitude = v;
    }
    if let Some(v) = a.repeats {
        p.repeats = v;
    }
    if let Some(v) = a.delta {
        p.delta = v;
    }
    if let Some(v) = a.steps {
        p.steps = v;
    }
    let p = cfg.probe.clone();
    let f_max = p.f_max.resolve((p.probe_res / 2).saturating_sub(1) as f64);
    if f_max >= p.probe_res as f64 / 2.0 {
        return Err(Error::Usage(format!(
            "--f-max {f_max} must be below the probe Nyquist frequency {}",
            p.probe_res / 2
        )));
    }
    let freqs = frequency_grid(p.f_min, f_max, p.f_step)?;
    let meta = ckpt.meta.clone();
    let model = TrainedForecaster::new(ckpt);
    let opts = ProbeOptions { amplitude: p.amplitude, repeats: p.repeats, steps: p.steps };
    let curve = probe_frequency_response(&model, p.probe_res, &freqs, &opts)?;
    let bw = bandwidth(&curve)?;
    let ar = match anchoring_ratio(&curve, curve.train_nyquist, p.delta) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("anchoring ratio unavailable: {e}");
            None
        }
    };
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.report_dir.join("probe"));
    std::fs::create_dir_all(&out)?;
    write_freq_response(&out.join("freq_response.csv"), &curve)?;
    let mut summary = Summary::new(meta.train_res, meta.mode, meta.seed);
    summary.bandwidth = Some(bw.to_string());
    summary.anchoring_ratio = ar;
    summary.delta = Some(p.delta);
    summary.probe_resolution = Some(p.probe_res);
    summary.checkpoint = Some(file_id(&a.checkpoint)?);
    summary.write(&out.join("summary.json"))?;
    cfg.write(&out.join("config.toml"))?;
    log::info!("bandwidth {bw}, anchoring ratio {ar:?}");
    Ok(out)
}

fn ratio_cell(r: RmseRatio) -> String {
    match r {
        RmseRatio::Value(v) => format_value(v),
        RmseRatio::Exact => "exact".into(),
    }
}

pub const SWEEP_HEADER: [&str; 4] = ["levels", "lambda", "rmse_ratio", "train_res_rmse"];

pub fn cmd_sweep(cfg: &mut RunConfig, a: &SweepArgs) -> Result<PathBuf> {
    let mut train_opts = a.train.clone();
    train_opts.mode = Some(ModeArg::Frl);
    apply_train_options(cfg, &train_opts)?;
    apply_eval_options(cfg, &a.eval);
    if !a.levels_list.is_empty() {
        cfg.sweep.levels = a.levels_list.clone();
    }
    if !a.lambda_list.is_empty() {
        cfg.sweep.lambdas = a.lambda_list.clone();
    }
    if cfg.sweep.levels.is_empty() || cfg.sweep.lambdas.is_empty() {
        return Err(Error::Usage("sweep needs non-empty --levels-list and --lambda-list".into()));
    }
    let (_, ds) = load_data(cfg, a.data.as_ref())?;
    let truth = test_trajectories(&ds)?;
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.report_dir.join("sweep"));
    std::fs::create_dir_all(&out)?;
    cfg.write(&out.join("config.toml"))?;
    let mut w = csv::Writer::from_path(out.join("sweep.csv")).map_err(|e| Error::InvalidData(e.to_string()))?;
    w.write_record(SWEEP_HEADER).map_err(|e| Error::InvalidData(e.to_string()))?;
    for &levels in &cfg.sweep.levels {
        for &lambda in &cfg.sweep.lambdas {
            let mut cell = cfg.clone();
            cell.frl.levels = levels;
            cell.frl.lambda = lambda;
            cell.sweep.levels = vec![levels];
            cell.sweep.lambdas = vec![lambda];
            cell.frl.validate()?;
            let dir = out.join("cells").join(format!("levels{levels}_lambda{lambda}"));
            std::fs::create_dir_all(&dir)?;
            log::info!("sweep cell levels={levels} lambda={lambda}");
            let ckpt = train_and_save(&cell, &ds, &dir.join("model.sack"))?;
            let report = evaluate(&cell, ckpt, &truth)?;
            write_eval_report(&dir.join("eval_report.csv"), &report)?;
            let base = report.row(cell.train.train_res).expect("training resolution evaluated");
            w.write_record([
                levels.to_string(),
                format_value(lambda),
                ratio_cell(report.rmse_ratio),
                format_value(base.rmse),
            ])
            .map_err(|e| Error::InvalidData(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(out)
}

/// `[0, w), [w, 2w), …` covering `[0, nyquist]`, the last band clipped.
pub fn uniform_bands(width: f64, nyquist: f64) -> Result<Vec<(f64, f64)>> {
    if !(width > 0.0) {
        return Err(Error::Usage(format!("--band-width {width} must be positive")));
    }
    let mut out = Vec::new();
    let mut lo = 0.0;
    while lo < nyquist {
        out.push((lo, (lo + width).min(nyquist)));
        lo += width;
    }
    Ok(out)
}

pub fn cmd_band_energy(cfg: &mut RunConfig, a: &BandEnergyArgs) -> Result<PathBuf> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    adopt_checkpoint(cfg, &ckpt);
    let b = &mut cfg.band;
    if let Some(v) = a.resolution {
        b.resolution = v;
    }
    if let Some(v) = a.trajectory {
        b.trajectory = v;
    }
    if let Some(v) = a.steps {
        b.steps = v;
    }
    if let Some(v) = a.band_width {
        b.band_width = v;
    }
    let b = cfg.band.clone();
    let (_, ds) = load_data(cfg, a.data.as_ref())?;
    if b.trajectory >= ds.n_trajectories() {
        return Err(Error::Usage(format!(
            "--trajectory {} out of range for {} trajectories",
            b.trajectory,
            ds.n_trajectories()
        )));
    }
    let (h, _) = ds.resolution();
    if b.resolution == 0 || b.resolution > h || h % b.resolution != 0 {
        return Err(Error::Usage(format!("--resolution {} must divide the data resolution {h}", b.resolution)));
    }
    let u0 = downsample_lowpass(&ds.trajectory(b.trajectory)[0], h / b.resolution)?;
    let bands = uniform_bands(b.band_width, u0.nyquist())?;
    let rows = rollout_band_energy(&TrainedForecaster::new(ckpt), &u0, b.steps, &bands)?;
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.report_dir.join("band_energy"));
    std::fs::create_dir_all(&out)?;
    write_band_energy(&out.join("band_energy.csv"), &rows)?;
    cfg.write(&out.join("config.toml"))?;
    Ok(out)
}
