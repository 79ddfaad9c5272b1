//! Trajectory datasets and their on-disk format.
//!
//! Layout (little-endian): magic `SALB`, `u16` version, `u16` flags, `u32` H,
//! `u32` W, `u32` trajectory count, `u32` snapshot count, `f64` snapshot
//! interval, a `u32`-length-prefixed JSON blob holding the [`SolverConfig`],
//! then `f32` samples ordered `[trajectory][snapshot][row][col]`.

use std::io::BufWriter;
use std::ops::Range;
use std::path::Path;

use crate::binio::{read_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::field::GridField2D;
use crate::solver::SolverConfig;

pub const DATASET_MAGIC: &[u8; 4] = b"SALB";
pub const DATASET_VERSION: u16 = 1;

/// Time-ordered snapshot sequences sharing one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    trajectories: Vec<Vec<GridField2D>>,
    resolution: (usize, usize),
    dt_snapshot: f64,
    config: SolverConfig,
}

/// Trajectory index ranges of the train, validation and test splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl Split {
    /// 80/10/10 split by trajectory index. Validation and test each receive
    /// `n / 10` trajectories, validation at least one when `n ≥ 2`.
    pub fn by_index(n: usize) -> Self {
        let test = n / 10;
        let val = if n >= 2 { (n / 10).max(1) } else { 0 };
        let train = n - val - test;
        Split { train: 0..train, val: train..train + val, test: train + val..n }
    }
}

impl TrajectoryDataset {
    pub fn new(trajectories: Vec<Vec<GridField2D>>, config: SolverConfig) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::InvalidData("dataset has no trajectories".into()))?;
        let len = first.len();
        if len == 0 {
            return Err(Error::InvalidData("trajectories are empty".into()));
        }
        let resolution = first[0].shape();
        for (t, traj) in trajectories.iter().enumerate() {
            if traj.len() != len {
                return Err(Error::InvalidData(format!(
                    "trajectory {t} has {} snapshots, expected {len}",
                    traj.len()
                )));
            }
            if let Some(s) = traj.iter().position(|f| f.shape() != resolution) {
                return Err(Error::Shape(format!(
                    "trajectory {t} snapshot {s} does not match resolution {resolution:?}"
                )));
            }
        }
        let dt_snapshot = config.dt_snapshot();
        Ok(Self { trajectories, resolution, dt_snapshot, config })
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.resolution
    }

    pub fn dt_snapshot(&self) -> f64 {
        self.dt_snapshot
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn n_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    pub fn n_snapshots(&self) -> usize {
        self.trajectories[0].len()
    }

    pub fn trajectory(&self, t: usize) -> &[GridField2D] {
        &self.trajectories[t]
    }

    pub fn trajectories(&self) -> &[Vec<GridField2D>] {
        &self.trajectories
    }

    pub fn split(&self) -> Split {
        Split::by_index(self.n_trajectories())
    }

    /// Copy restricted to the trajectories in `range`.
    pub fn subset(&self, range: Range<usize>) -> Result<Self> {
        if range.end > self.n_trajectories() || range.is_empty() {
            return Err(Error::Precondition(format!(
                "subset {range:?} is empty or exceeds {} trajectories",
                self.n_trajectories()
            )));
        }
        Ok(Self {
            trajectories: self.trajectories[range].to_vec(),
            resolution: self.resolution,
            dt_snapshot: self.dt_snapshot,
            config: self.config.clone(),
        })
    }

    /// Applies `f` to every snapshot, producing a dataset at a new resolution.
    pub fn map_fields(
        &self,
        mut f: impl FnMut(&GridField2D) -> Result<GridField2D>,
    ) -> Result<Self> {
        let trajectories = self
            .trajectories
            .iter()
            .map(|traj| traj.iter().map(&mut f).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self::new(trajectories, self.config.clone())?;
        out.config.resolution = out.resolution;
        out.dt_snapshot = self.dt_snapshot;
        Ok(out)
    }

    /// Same dataset with every sample rounded to `f32`, as stored on disk.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        for traj in out.trajectories.iter_mut() {
            for field in traj.iter_mut() {
                let (h, w) = field.shape();
                let data = field.data().iter().map(|&v| v as f32 as f64).collect();
                *field = GridField2D::from_parts(h, w, data);
            }
        }
        out
    }
}

pub fn write_dataset(ds: &TrajectoryDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = Writer::new(BufWriter::new(file));
    let (h, wd) = ds.resolution;
    w.bytes(DATASET_MAGIC)?;
    w.u16(DATASET_VERSION)?;
    w.u16(0)?;
    w.len_u32(h, "rows")?;
    w.len_u32(wd, "cols")?;
    w.len_u32(ds.n_trajectories(), "trajectory count")?;
    w.len_u32(ds.n_snapshots(), "snapshot count")?;
    w.f64(ds.dt_snapshot)?;
    let json = serde_json::to_string(&ds.config)
        .map_err(|e| Error::InvalidData(format!("cannot serialize config: {e}")))?;
    w.text(&json)?;
    for traj in &ds.trajectories {
        for field in traj {
            w.f32_slice(field.data().iter().map(|&v| v as f32))?;
        }
    }
    w.finish()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<TrajectoryDataset> {
    let buf = read_file(path)?;
    decode_dataset(&buf)
}

pub(crate) fn decode_dataset(buf: &[u8]) -> Result<TrajectoryDataset> {
    let mut r = Reader::new(buf);
    r.magic(DATASET_MAGIC, "dataset magic")?;
    let version = r.u16("version")?;
    if version != DATASET_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "dataset",
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let _flags = r.u16("flags")?;
    let h = r.u32("rows")? as usize;
    let w = r.u32("cols")? as usize;
    let n_traj = r.u32("trajectory count")? as usize;
    let n_snap = r.u32("snapshot count")? as usize;
    let dt_snapshot = r.f64("snapshot interval")?;
    let cfg_offset = r.offset();
    let json = r.text("config blob")?;
    let config: SolverConfig = serde_json::from_str(json).map_err(|e| Error::Format {
        offset: cfg_offset,
        message: format!("config blob: {e}"),
    })?;
    if config.resolution != (h, w) {
        return Err(Error::ConfigMismatch(format!(
            "header resolution {h}x{w} disagrees with config {:?}",
            config.resolution
        )));
    }
    if config.n_snapshots != n_snap {
        return Err(Error::ConfigMismatch(format!(
            "header has {n_snap} snapshots, config {}",
            config.n_snapshots
        )));
    }
    if (config.dt_snapshot() - dt_snapshot).abs() > 1e-12 * dt_snapshot.abs().max(1.0) {
        return Err(Error::ConfigMismatch(format!(
            "header snapshot interval {dt_snapshot} disagrees with config {}",
            config.dt_snapshot()
        )));
    }
    if n_traj == 0 || n_snap == 0 {
        return Err(r.error("dataset declares no samples"));
    }
    crate::field::check_grid(h, w)
        .map_err(|e| Error::Format { offset: 8, message: e.to_string() })?;
    let mut trajectories = Vec::with_capacity(n_traj);
    for t in 0..n_traj {
        let mut traj = Vec::with_capacity(n_snap);
        for s in 0..n_snap {
            let start = r.offset();
            let values = r.f32_vec(h * w, &format!("trajectory {t} snapshot {s}"))?;
            let data: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            let field = GridField2D::new(h, w, data).map_err(|e| Error::Format {
                offset: start,
                message: e.to_string(),
            })?;
            traj.push(field);
        }
        trajectories.push(traj);
    }
    if !r.at_end() {
        return Err(r.error("trailing bytes after the last snapshot"));
    }
    let mut ds = TrajectoryDataset::new(trajectories, config)?;
    ds.dt_snapshot = dt_snapshot;
    Ok(ds)
}
