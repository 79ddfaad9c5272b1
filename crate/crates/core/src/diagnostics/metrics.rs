//! Rollout error tables, band energies and spectral occupancy measures.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::field::GridField2D;
use crate::frl::{rollout_batch, Forecaster};
use crate::spectral::{band_mean_squares, downsample_lowpass, fft2, Spectrum2D};

/// Ratio of a high-resolution error to the training-resolution error.
/// `Exact` marks `0/0`, when both errors vanish.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RmseRatio {
    Value(f64),
    Exact,
}

impl RmseRatio {
    pub fn new(high: f64, low: f64) -> Self {
        match (high == 0.0, low == 0.0) {
            (true, true) => RmseRatio::Exact,
            (false, true) => RmseRatio::Value(f64::INFINITY),
            _ => RmseRatio::Value(high / low),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            RmseRatio::Value(v) => Some(*v),
            RmseRatio::Exact => None,
        }
    }
}

impl Serialize for RmseRatio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RmseRatio::Value(v) => serialize_ratio(v, s),
            RmseRatio::Exact => s.serialize_str("exact"),
        }
    }
}

/// Finite values as numbers, infinities and NaN as strings.
pub(crate) fn serialize_ratio<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Errors at one test resolution, pooled over every rollout step and trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub resolution: usize,
    pub rmse: f64,
    pub mae: f64,
    /// `‖pred − truth‖₂ / ‖truth‖₂`.
    pub rel_err: f64,
    /// Band-limited over wideband RMSE; NaN when the error is identically zero.
    pub error_ratio: f64,
    /// Pooled fraction of truth energy above the training Nyquist.
    pub f_oob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// RMSE at the highest test resolution over RMSE at the training resolution.
    pub rmse_ratio: RmseRatio,
    pub train_res: usize,
    pub horizon: usize,
    pub cutoff: f64,
    pub checkpoint_id: String,
    pub dataset_id: String,
}

impl EvalReport {
    pub fn row(&self, resolution: usize) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.resolution == resolution)
    }
}

/// Non-DC energy above `ξ = rho_ratio` and in total, `ξ = |k| / k_Nyq`.
fn oob_energies(spec: &Spectrum2D, rho_ratio: f64) -> (f64, f64) {
    let (h, w) = spec.shape();
    let nyq = spec.nyquist();
    let mut out = 0.0;
    let mut total = 0.0;
    for i in 0..h {
        for j in 0..w {
            if i == 0 && j == 0 {
                continue;
            }
            let p = spec.coeffs()[i * w + j].norm_sqr();
            total += p;
            if spec.radial(i, j) / nyq > rho_ratio {
                out += p;
            }
        }
    }
    (out, total)
}

fn check_rho_ratio(rho_ratio: f64) -> Result<()> {
    if !(rho_ratio > 0.0 && rho_ratio.is_finite()) {
        return Err(Error::Precondition(format!("rho_ratio {rho_ratio} must be positive")));
    }
    Ok(())
}

/// Fraction of non-DC spectral energy at normalized frequency `ξ > rho_ratio`.
///
/// `rho_ratio` is the training Nyquist over the test Nyquist. Values of 1 or
/// more are accepted; they count only the corner modes beyond the Nyquist circle.
pub fn f_oob_spectrum(spec: &Spectrum2D, rho_ratio: f64) -> Result<f64> {
    check_rho_ratio(rho_ratio)?;
    let (out, total) = oob_energies(spec, rho_ratio);
    if total == 0.0 {
        return Err(Error::Diagnostic("field has no non-DC energy".into()));
    }
    Ok(out / total)
}

pub fn compute_f_oob(field: &GridField2D, rho_ratio: f64) -> Result<f64> {
    f_oob_spectrum(&fft2(field)?, rho_ratio)
}

/// `1 − (1 − δ²)·f_oob`, the leading term of the error-ratio bound for
/// `0 ≤ δ < 1` and `0 ≤ f_oob ≤ 1`. Aleatoric and higher-order terms are omitted.
pub fn mse_ratio_bound(f_oob: f64, delta: f64) -> f64 {
    1.0 - (1.0 - delta * delta) * f_oob
}

fn check_factor(reference: usize, rho: usize) -> Result<usize> {
    if rho == 0 || rho > reference || reference % rho != 0 {
        return Err(Error::Shape(format!(
            "test resolution {rho} does not divide the reference resolution {reference}"
        )));
    }
    Ok(reference / rho)
}

fn eval_resolution(
    model: &dyn Forecaster,
    truth: &TrajectoryDataset,
    rho: usize,
    horizon: usize,
    cutoff: f64,
    train_res: usize,
) -> Result<EvalRow> {
    let factor = check_factor(truth.resolution().0, rho)?;
    let down: Vec<Vec<GridField2D>> = truth
        .trajectories()
        .iter()
        .map(|tr| tr[..=horizon].iter().map(|f| downsample_lowpass(f, factor)).collect())
        .collect::<Result<_>>()?;
    let initial: Vec<&GridField2D> = down.iter().map(|tr| &tr[0]).collect();
    let pred = rollout_batch(model, &initial, horizon)?;

    let (mut sq, mut abs, mut truth_sq, mut low, mut wide) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut oob, mut energy) = (0.0, 0.0);
    let mut count = 0usize;
    let rho_ratio = train_res as f64 / rho as f64;
    for (step, fields) in pred.iter().enumerate() {
        for (p, tr) in fields.iter().zip(&down) {
            let t = &tr[step + 1];
            for (a, b) in p.data().iter().zip(t.data()) {
                let d = a - b;
                sq += d * d;
                abs += d.abs();
                truth_sq += b * b;
            }
            count += p.len();
            let ms = band_mean_squares(p, t, cutoff)?;
            low += ms.low;
            wide += ms.wide;
            let (o, e) = oob_energies(&fft2(t)?, rho_ratio);
            oob += o;
            energy += e;
        }
    }
    if energy == 0.0 {
        return Err(Error::Diagnostic(format!("truth at {rho}² has no non-DC energy")));
    }
    let n = count as f64;
    Ok(EvalRow {
        resolution: rho,
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        rel_err: if truth_sq == 0.0 { f64::NAN } else { (sq / truth_sq).sqrt() },
        error_ratio: if wide == 0.0 { f64::NAN } else { (low / wide).sqrt() },
        f_oob: oob / energy,
    })
}

/// Rolls `model` out for `horizon` snapshots from the first snapshot of every
/// trajectory of `truth`, low-passed to each test resolution, and tabulates the
/// errors. The error ratio splits at `cutoff` (default: the training Nyquist).
/// The training resolution must be among `test_resolutions`.
pub fn error_table(
    model: &dyn Forecaster,
    truth: &TrajectoryDataset,
    test_resolutions: &[usize],
    horizon: usize,
    cutoff: Option<f64>,
) -> Result<EvalReport> {
    let train_res = model.train_resolution();
    let (h, w) = truth.resolution();
    if h != w {
        return Err(Error::Shape(format!("evaluation expects square data, got {h}x{w}")));
    }
    if test_resolutions.is_empty() {
        return Err(Error::Precondition("no test resolutions".into()));
    }
    if !test_resolutions.contains(&train_res) {
        return Err(Error::Precondition(format!(
            "test resolutions must include the training resolution {train_res}"
        )));
    }
    if horizon == 0 || horizon >= truth.n_snapshots() {
        return Err(Error::Precondition(format!(
            "horizon {horizon} must lie in 1..{} for {} snapshots",
            truth.n_snapshots(),
            truth.n_snapshots()
        )));
    }
    for &rho in test_resolutions {
        check_factor(h, rho)?;
    }
    let cutoff = cutoff.unwrap_or(train_res as f64 / 2.0);
    if !(cutoff > 0.0) {
        return Err(Error::Precondition(format!("cutoff {cutoff} must be positive")));
    }
    let rows: Vec<EvalRow> = test_resolutions
        .par_iter()
        .map(|&rho| eval_resolution(model, truth, rho, horizon, cutoff, train_res))
        .collect::<Result<_>>()?;
    let highest = rows.iter().max_by_key(|r| r.resolution).expect("non-empty");
    let base = rows.iter().find(|r| r.resolution == train_res).expect("checked above");
    Ok(EvalReport {
        rmse_ratio: RmseRatio::new(highest.rmse, base.rmse),
        rows,
        train_res,
        horizon,
        cutoff,
        checkpoint_id: String::new(),
        dataset_id: String::new(),
    })
}

/// Energy of one radial band at one rollout step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandEnergyRow {
    pub step: usize,
    pub band_lo: f64,
    pub band_hi: f64,
    /// `Σ |û_k|² / N²` over modes with `band_lo ≤ |k| < band_hi`.
    pub energy: f64,
}

fn band_energy(spec: &Spectrum2D, lo: f64, hi: f64) -> f64 {
    let (h, w) = spec.shape();
    let n2 = ((h * w) as f64).powi(2);
    let mut e = 0.0;
    for i in 0..h {
        for j in 0..w {
            let r = spec.radial(i, j);
            if r >= lo && r < hi {
                e += spec.coeffs()[i * w + j].norm_sqr();
            }
        }
    }
    e / n2
}

/// Per-band energies of `u0` and of each of `n_steps` autoregressive predictions.
pub fn rollout_band_energy(
    model: &dyn Forecaster,
    u0: &GridField2D,
    n_steps: usize,
    bands: &[(f64, f64)],
) -> Result<Vec<BandEnergyRow>> {
    let nyq = u0.nyquist();
    for &(lo, hi) in bands {
        if !(lo >= 0.0 && hi > lo && hi <= nyq) {
            return Err(Error::Precondition(format!("band [{lo}, {hi}) must lie within [0, {nyq}]")));
        }
    }
    let rolled = rollout_batch(model, &[u0], n_steps)?;
    let mut rows = Vec::with_capacity((n_steps + 1) * bands.len());
    for (step, field) in std::iter::once(u0).chain(rolled.iter().map(|s| &s[0])).enumerate() {
        let spec = fft2(field)?;
        for &(lo, hi) in bands {
            rows.push(BandEnergyRow { step, band_lo: lo, band_hi: hi, energy: band_energy(&spec, lo, hi) });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overhead {
    pub train_time_ratio: f64,
    pub infer_time_ratio: f64,
}

fn median(mut t: Vec<f64>) -> f64 {
    t.sort_by(f64::total_cmp);
    let m = t.len() / 2;
    if t.len() % 2 == 1 {
        t[m]
    } else {
        0.5 * (t[m - 1] + t[m])
    }
}

fn seconds(f: &mut dyn FnMut() -> Result<()>) -> Result<f64> {
    let start = Instant::now();
    f()?;
    Ok(start.elapsed().as_secs_f64())
}

/// Median over `repeats` of the per-repeat ratio `frl / baseline`, timing the
/// two closures back to back so load changes affect both alike.
fn paired_ratio(
    repeats: usize,
    baseline: &mut dyn FnMut() -> Result<()>,
    frl: &mut dyn FnMut() -> Result<()>,
) -> Result<f64> {
    let mut ratios = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let (b, f) = if r % 2 == 0 {
            let b = seconds(baseline)?;
            (b, seconds(frl)?)
        } else {
            let f = seconds(frl)?;
            (seconds(baseline)?, f)
        };
        ratios.push(f / b);
    }
    Ok(median(ratios))
}

/// Median wall-clock ratios FRL / baseline for training and inference.
pub fn measure_overhead(
    train_baseline: &mut dyn FnMut() -> Result<()>,
    train_frl: &mut dyn FnMut() -> Result<()>,
    infer_baseline: &mut dyn FnMut() -> Result<()>,
    infer_frl: &mut dyn FnMut() -> Result<()>,
    repeats: usize,
) -> Result<Overhead> {
    if repeats == 0 {
        return Err(Error::Precondition("repeats must be positive".into()));
    }
    Ok(Overhead {
        train_time_ratio: paired_ratio(repeats, train_baseline, train_frl)?,
        infer_time_ratio: paired_ratio(repeats, infer_baseline, infer_frl)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frl::{ExactEvolution, IdentityForecaster};
    use crate::solver::{generate_dataset, SolverConfig};
    use std::f64::consts::PI;

    fn truth() -> TrajectoryDataset {
        let cfg = SolverConfig { resolution: (64, 64), n_snapshots: 4, ..SolverConfig::default() }.with_stable_dt();
        generate_dataset(&cfg, 3).unwrap()
    }

    #[test]
    fn oracle_evolution_has_near_zero_error() {
        let ds = truth();
        let cfg = ds.config().clone();
        let ev = ExactEvolution { nu: cfg.nu, vx: cfg.vx, vy: cfg.vy, dt_snapshot: cfg.dt_snapshot(), train_res: 16 };
        let rep = error_table(&ev, &ds, &[16, 32, 64], 3, None).unwrap();
        assert_eq!(rep.rows.len(), 3);
        for r in &rep.rows {
            assert!(r.rmse < 1e-6, "{r:?}");
            assert!(r.rel_err < 1e-5);
            assert!((0.0..=1.0).contains(&r.f_oob));
        }
        assert_eq!(rep.cutoff, 8.0);
    }

    #[test]
    fn identical_rollouts_report_exact_ratio() {
        struct Replay(TrajectoryDataset);
        impl Forecaster for Replay {
            fn step_batch(&self, fields: &[&GridField2D]) -> Result<Vec<GridField2D>> {
                let (h, _) = fields[0].shape();
                let factor = self.0.resolution().0 / h;
                fields
                    .iter()
                    .map(|f| {
                        for tr in self.0.trajectories() {
                            for s in 0..tr.len() - 1 {
                                if downsample_lowpass(&tr[s], factor)? == **f {
                                    return downsample_lowpass(&tr[s + 1], factor);
                                }
                            }
                        }
                        Err(Error::Diagnostic("unknown state".into()))
                    })
                    .collect()
            }
            fn train_resolution(&self) -> usize {
                16
            }
        }
        let ds = truth();
        let rep = error_table(&Replay(ds.clone()), &ds, &[16, 64], 2, None).unwrap();
        assert!(rep.rows.iter().all(|r| r.rmse == 0.0 && r.error_ratio.is_nan()));
        assert_eq!(rep.rmse_ratio, RmseRatio::Exact);
    }

    #[test]
    fn identity_metrics_are_consistent() {
        let ds = truth();
        let rep = error_table(&IdentityForecaster { train_res: 16 }, &ds, &[16, 32], 2, Some(4.0)).unwrap();
        for r in &rep.rows {
            assert!(r.rmse > 0.0 && r.mae > 0.0 && r.mae <= r.rmse);
            assert!(r.error_ratio > 0.0 && r.error_ratio <= 1.0);
        }
        assert!(rep.rmse_ratio.value().unwrap() > 0.0);
    }

    #[test]
    fn error_table_preconditions() {
        let ds = truth();
        let id = IdentityForecaster { train_res: 16 };
        assert!(matches!(error_table(&id, &ds, &[32, 64], 2, None), Err(Error::Precondition(_))));
        assert!(matches!(error_table(&id, &ds, &[16, 24], 2, None), Err(Error::Shape(_))));
        assert!(matches!(error_table(&id, &ds, &[16], 4, None), Err(Error::Precondition(_))));
        assert!(matches!(error_table(&id, &ds, &[16, 128], 2, None), Err(Error::Shape(_))));
    }

    fn single_mode(n: usize, kx: f64, ky: f64) -> GridField2D {
        GridField2D::from_fn(n, n, |x, y| (2.0 * PI * (kx * x + ky * y)).cos()).unwrap()
    }

    #[test]
    fn f_oob_examples() {
        assert!(compute_f_oob(&single_mode(32, 4.0, 0.0), 0.5).unwrap() < 1e-15);
        assert!((compute_f_oob(&single_mode(32, 12.0, 0.0), 0.5).unwrap() - 1.0).abs() < 1e-15);
        let mixed = single_mode(32, 4.0, 0.0).add(&single_mode(32, 0.0, 12.0)).unwrap();
        assert!((compute_f_oob(&mixed, 0.5).unwrap() - 0.5).abs() < 1e-14);
        assert!(matches!(compute_f_oob(&GridField2D::constant(8, 8, 2.0).unwrap(), 0.5), Err(Error::Diagnostic(_))));
        assert!(matches!(compute_f_oob(&mixed, 0.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn bound_examples() {
        assert_eq!(mse_ratio_bound(0.0, 0.4), 1.0);
        assert!((mse_ratio_bound(0.6, 0.0) - 0.4).abs() < 1e-15);
        assert!((mse_ratio_bound(0.5, 0.3) - 0.545).abs() < 1e-15);
    }

    #[test]
    fn identity_band_energy_is_constant() {
        let u = single_mode(32, 3.0, 1.0).add(&single_mode(32, 9.0, 0.0)).unwrap();
        let rows = rollout_band_energy(&IdentityForecaster { train_res: 16 }, &u, 4, &[(0.0, 5.0), (5.0, 16.0)]).unwrap();
        assert_eq!(rows.len(), 10);
        for r in &rows {
            assert!((r.energy - 0.5).abs() < 1e-14, "{r:?}");
        }
        assert!(rollout_band_energy(&IdentityForecaster { train_res: 16 }, &u, 1, &[(0.0, 17.0)]).is_err());
    }

    #[test]
    fn exact_band_energy_decays_per_mode() {
        let ev = ExactEvolution { nu: 0.01, vx: 1.0, vy: 0.5, dt_snapshot: 0.01, train_res: 16 };
        let u = single_mode(32, 6.0, 0.0);
        let rows = rollout_band_energy(&ev, &u, 3, &[(5.0, 7.0)]).unwrap();
        let g = (-2.0 * 0.01 * (2.0 * PI * 6.0_f64).powi(2) * 0.01).exp();
        for w in rows.windows(2) {
            assert!((w[1].energy / w[0].energy - g).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_closures_have_unit_overhead() {
        let work = || -> Result<()> {
            let u = single_mode(64, 3.0, 2.0);
            for _ in 0..200 {
                std::hint::black_box(fft2(&u)?);
            }
            Ok(())
        };
        let (mut a, mut b, mut c, mut d) = (work, work, work, work);
        let o = measure_overhead(&mut a, &mut b, &mut c, &mut d, 15).unwrap();
        assert!((0.9..=1.1).contains(&o.train_time_ratio), "{o:?}");
        assert!((0.9..=1.1).contains(&o.infer_time_ratio), "{o:?}");
    }
}
