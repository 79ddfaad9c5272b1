//! Pseudo-spectral convection–diffusion solver.
//!
//! Integrates `∂u/∂t + v·∇u = ν∇²u + f` on the periodic unit square. Each
//! Fourier mode evolves independently,
//!
//! ```text
//! dû_k/dt = (-i 2π (k·v) - ν (2π|k|)²) û_k + f̂_k
//! ```
//!
//! and is advanced with classical RK4. The equation is linear with constant
//! coefficients, so no de-aliasing is applied. The convection factor is zeroed
//! on Nyquist rows and columns, whose sign is ambiguous on an even grid, so the
//! evolved spectrum stays Hermitian.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::field::{check_grid, GridField2D};
use crate::spectral::{fft2, fft2_in_place, ifft2, signed_wavenumber, Spectrum2D};

/// Magnitude above which a field is treated as blown up.
pub const BLOWUP_THRESHOLD: f64 = 1e6;

/// Optional source term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Forcing {
    None,
    /// `amplitude · sin(2π(x + y))`, a single zero-mean mode at `k = (1, 1)`.
    LowMode { amplitude: f64 },
}

impl Forcing {
    pub const DEFAULT_AMPLITUDE: f64 = 0.1;

    pub fn low_mode() -> Self {
        Forcing::LowMode { amplitude: Self::DEFAULT_AMPLITUDE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub nu: f64,
    pub vx: f64,
    pub vy: f64,
    pub dt: f64,
    pub steps_per_snapshot: usize,
    /// Snapshots per trajectory, counting the initial condition.
    pub n_snapshots: usize,
    pub forcing: Forcing,
    /// `(rows, cols)`.
    pub resolution: (usize, usize),
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            nu: 0.01,
            vx: 1.0,
            vy: 0.5,
            dt: 1e-3,
            steps_per_snapshot: 10,
            n_snapshots: 50,
            forcing: Forcing::None,
            resolution: (128, 128),
            seed: 42,
        }
    }
}

impl SolverConfig {
    pub fn dt_snapshot(&self) -> f64 {
        self.dt * self.steps_per_snapshot as f64
    }

    /// Advective Courant number `max(|vx|, |vy|) · dt · max(H, W)`.
    pub fn courant(&self) -> f64 {
        let (h, w) = self.resolution;
        self.vx.abs().max(self.vy.abs()) * self.dt * h.max(w) as f64
    }

    /// Largest per-step RK4 amplification `|R(λ_k dt)|` over the grid's modes.
    pub fn rk4_amplification_max(&self) -> f64 {
        let (h, w) = self.resolution;
        let mut worst = 0.0_f64;
        for i in 0..h {
            for j in 0..w {
                let z = linear_factor(i, j, h, w, self) * self.dt;
                worst = worst.max(rk4_polynomial(z).norm());
            }
        }
        worst
    }

    /// Checks parameter ranges, the advective bound and RK4 linear stability.
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.resolution;
        check_grid(h, w)?;
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(Error::Precondition(format!("nu = {} must be finite and >= 0", self.nu)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Precondition(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.vx.is_finite() && self.vy.is_finite()) {
            return Err(Error::Precondition("velocity must be finite".into()));
        }
        if self.steps_per_snapshot == 0 || self.n_snapshots == 0 {
            return Err(Error::Precondition(
                "steps_per_snapshot and n_snapshots must be positive".into(),
            ));
        }
        if let Forcing::LowMode { amplitude } = self.forcing {
            if !amplitude.is_finite() {
                return Err(Error::Precondition("forcing amplitude must be finite".into()));
            }
        }
        let c = self.courant();
        if c > 2.0 {
            return Err(Error::UnstableStep(format!(
                "Courant number {c:.3} exceeds the hard limit 2"
            )));
        }
        if c >= 1.0 {
            log::warn!("Courant number {c:.3} is at or above 1");
        }
        let amp = self.rk4_amplification_max();
        if amp > 1.0 + 1e-12 {
            return Err(Error::UnstableStep(format!(
                "dt = {} is outside the RK4 stability region on a {h}x{w} grid \
                 (max amplification {amp:.4}); reduce dt",
                self.dt
            )));
        }
        Ok(())
    }

    /// Halves `dt` and doubles `steps_per_snapshot` until RK4 is linearly stable,
    /// preserving the snapshot interval.
    pub fn with_stable_dt(mut self) -> Self {
        for _ in 0..30 {
            if self.rk4_amplification_max() <= 1.0 + 1e-12 {
                break;
            }
            self.dt *= 0.5;
            self.steps_per_snapshot *= 2;
        }
        self
    }
}

/// Linear operator `λ_k` for storage position `(i, j)`.
fn linear_factor(i: usize, j: usize, h: usize, w: usize, cfg: &SolverConfig) -> Complex64 {
    let kx = signed_wavenumber(j, w) as f64;
    let ky = signed_wavenumber(i, h) as f64;
    let cx = if 2 * j == w { 0.0 } else { kx };
    let cy = if 2 * i == h { 0.0 } else { ky };
    let conv = -2.0 * PI * (cx * cfg.vx + cy * cfg.vy);
    let diff = -cfg.nu * (2.0 * PI) * (2.0 * PI) * (kx * kx + ky * ky);
    Complex64::new(diff, conv)
}

fn rk4_polynomial(z: Complex64) -> Complex64 {
    1.0 + z * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0)))
}

/// Precomputed per-mode operator for repeated RK4 steps on one grid.
#[derive(Debug, Clone)]
pub struct SpectralStepper {
    rows: usize,
    cols: usize,
    dt: f64,
    lambda: Vec<Complex64>,
    forcing: Option<Vec<Complex64>>,
}

impl SpectralStepper {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let (h, w) = cfg.resolution;
        let mut lambda = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                lambda.push(linear_factor(i, j, h, w, cfg));
            }
        }
        let forcing = match cfg.forcing {
            Forcing::None => None,
            Forcing::LowMode { amplitude } => {
                let f = GridField2D::from_fn(h, w, |x, y| amplitude * (2.0 * PI * (x + y)).sin())?;
                Some(fft2(&f)?.into_coeffs())
            }
        };
        Ok(Self { rows: h, cols: w, dt: cfg.dt, lambda, forcing })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// One RK4 step applied in place to unnormalized coefficients.
    pub fn step(&self, coeffs: &mut [Complex64]) {
        let dt = self.dt;
        let half = 0.5 * dt;
        for (idx, u) in coeffs.iter_mut().enumerate() {
            let l = self.lambda[idx];
            let f = self.forcing.as_ref().map_or(Complex64::default(), |f| f[idx]);
            let k1 = l * *u + f;
            let k2 = l * (*u + half * k1) + f;
            let k3 = l * (*u + half * k2) + f;
            let k4 = l * (*u + dt * k3) + f;
            *u += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }

    /// Cheap upper bound on `max |u|` from the coefficients, `Σ|û| / N`.
    fn sup_bound(&self, coeffs: &[Complex64]) -> f64 {
        coeffs.iter().map(|c| c.norm()).sum::<f64>() / (self.rows * self.cols) as f64
    }

    /// Advances `n` steps, failing with the global step index `first_step + s`
    /// of the first step after which `max |u|` exceeds [`BLOWUP_THRESHOLD`].
    pub fn advance(&self, coeffs: &mut [Complex64], n: usize, first_step: usize) -> Result<()> {
        for s in 0..n {
            self.step(coeffs);
            let bound = self.sup_bound(coeffs);
            if !bound.is_finite() || bound > BLOWUP_THRESHOLD {
                let max_abs = self.exact_max_abs(coeffs);
                if !max_abs.is_finite() || max_abs > BLOWUP_THRESHOLD {
                    return Err(Error::Stability { step: first_step + s + 1, max_abs });
                }
            }
        }
        Ok(())
    }

    fn exact_max_abs(&self, coeffs: &[Complex64]) -> f64 {
        let mut buf = coeffs.to_vec();
        fft2_in_place(&mut buf, self.rows, self.cols, FftDirection::Inverse);
        let n = (self.rows * self.cols) as f64;
        buf.iter().fold(0.0_f64, |m, c| {
            let v = (c.re / n).abs();
            if v.is_nan() { f64::NAN } else { m.max(v) }
        })
    }

    fn to_field(&self, coeffs: &[Complex64]) -> Result<GridField2D> {
        ifft2(&Spectrum2D::new(self.rows, self.cols, coeffs.to_vec())?)
    }
}

/// Advances `field` by one `dt`.
pub fn step_rk4(field: &GridField2D, cfg: &SolverConfig) -> Result<GridField2D> {
    if field.shape() != cfg.resolution {
        return Err(Error::Shape(format!(
            "field is {}x{} but the solver is configured for {}x{}",
            field.rows(),
            field.cols(),
            cfg.resolution.0,
            cfg.resolution.1
        )));
    }
    let stepper = SpectralStepper::new(cfg)?;
    let mut coeffs = fft2(field)?.into_coeffs();
    stepper.advance(&mut coeffs, 1, 0)?;
    stepper.to_field(&coeffs)
}

/// Random initial condition at `cfg.resolution`.
///
/// A Hermitian Gaussian random field with spectral amplitude
/// `exp(-|k|²/(2σ²))`, `σ = k_Nyq/4`, uniform random phases and zero mean is
/// scaled to unit RMS; three sinusoids `a_m sin(2π m x + φ_m)` with
/// `a_m ~ U[0.2, 0.5]` are added and the sum is rescaled to unit RMS.
pub fn make_initial_condition<R: Rng + ?Sized>(
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<GridField2D> {
    let (h, w) = cfg.resolution;
    check_grid(h, w)?;
    let mut spec = Spectrum2D::zeros(h, w)?;
    let sigma = h.min(w) as f64 / 8.0;
    for i in 0..h {
        let mi = (h - i) % h;
        for j in 0..w {
            let mj = (w - j) % w;
            if (mi, mj) < (i, j) || (i == 0 && j == 0) {
                continue;
            }
            let r = spec.radial(i, j);
            let amp = (-r * r / (2.0 * sigma * sigma)).exp();
            let phase: f64 = rng.random_range(0.0..2.0 * PI);
            let coeffs = spec.coeffs_mut();
            if (mi, mj) == (i, j) {
                coeffs[i * w + j] = Complex64::new(amp * phase.cos(), 0.0);
            } else {
                let c = Complex64::from_polar(amp, phase);
                coeffs[i * w + j] = c;
                coeffs[mi * w + mj] = c.conj();
            }
        }
    }
    let grf = ifft2(&spec)?;
    let grf = grf.scaled(1.0 / grf.rms());
    let mut modes = [(0.0, 0.0); 3];
    for m in modes.iter_mut() {
        let a: f64 = rng.random_range(0.2..=0.5);
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        *m = (a, phi);
    }
    let sines = GridField2D::from_fn(h, w, |x, _| {
        modes
            .iter()
            .enumerate()
            .map(|(idx, &(a, phi))| a * (2.0 * PI * (idx + 1) as f64 * x + phi).sin())
            .sum()
    })?;
    let u = grf.add(&sines)?;
    Ok(u.scaled(1.0 / u.rms()))
}

/// Random stream for trajectory `index` under `seed`.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Evolves `u0` and returns `n_snapshots` fields starting with `u0` itself.
pub fn evolve_snapshots(u0: &GridField2D, cfg: &SolverConfig) -> Result<Vec<GridField2D>> {
    let stepper = SpectralStepper::new(cfg)?;
    if u0.shape() != stepper.shape() {
        return Err(Error::Shape("initial condition does not match the solver grid".into()));
    }
    let mut coeffs = fft2(u0)?.into_coeffs();
    let mut out = Vec::with_capacity(cfg.n_snapshots);
    out.push(u0.clone());
    for s in 1..cfg.n_snapshots {
        stepper.advance(&mut coeffs, cfg.steps_per_snapshot, (s - 1) * cfg.steps_per_snapshot)?;
        out.push(stepper.to_field(&coeffs)?);
    }
    Ok(out)
}

/// Generates `n_traj` independent trajectories. Trajectory `t` draws its
/// initial condition from [`trajectory_rng`]`(cfg.seed, t)`, so the result does
/// not depend on scheduling.
pub fn generate_dataset(cfg: &SolverConfig, n_traj: usize) -> Result<TrajectoryDataset> {
    if n_traj == 0 {
        return Err(Error::Precondition("n_traj must be at least 1".into()));
    }
    cfg.validate()?;
    let trajectories = (0..n_traj)
        .into_par_iter()
        .map(|t| {
            let mut rng = trajectory_rng(cfg.seed, t);
            make_initial_condition(cfg, &mut rng)
                .and_then(|u0| evolve_snapshots(&u0, cfg))
                .map_err(|e| Error::Trajectory { trajectory: t, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    TrajectoryDataset::new(trajectories, cfg.clone())
}
