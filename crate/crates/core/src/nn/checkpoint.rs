//! Checkpoint files.
//!
//! Layout (little-endian): magic `SACK`, `u16` version, a `u32`-length-prefixed
//! JSON blob with the architecture and training metadata, then one record per
//! tensor until end of file: `u32` name length, name, `u32` rank, `u32` dims,
//! `f32` values.

use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Predictor, PredictorConfig};
use crate::binio::{read_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::frl::{FrlConfig, TrainMode};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SACK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_space: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub mode: TrainMode,
    /// Edge length of the training grid.
    pub train_res: usize,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub seed: u64,
    /// Encoding and loss settings the model was trained with.
    pub frl: FrlConfig,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorCheckpoint {
    pub model: Predictor<f32>,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    predictor: PredictorConfig,
    meta: TrainingMeta,
}

impl PredictorCheckpoint {
    pub fn config(&self) -> &PredictorConfig {
        self.model.config()
    }

    /// Fails unless the stored architecture equals `expected`.
    pub fn ensure_config(&self, expected: &PredictorConfig) -> Result<()> {
        if self.config() != expected {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint architecture {:?} differs from requested {:?}",
                self.config(),
                expected
            )));
        }
        Ok(())
    }
}

pub fn save_checkpoint(ckpt: &PredictorCheckpoint, path: &Path) -> Result<()> {
    if ckpt.model.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidData("checkpoint contains non-finite parameters".into()));
    }
    let file = std::fs::File::create(path)?;
    let mut w = Writer::new(BufWriter::new(file));
    w.bytes(CHECKPOINT_MAGIC)?;
    w.u16(CHECKPOINT_VERSION)?;
    let header = Header { predictor: ckpt.config().clone(), meta: ckpt.meta.clone() };
    let json = serde_json::to_string(&header)
        .map_err(|e| Error::InvalidData(format!("cannot serialize checkpoint header: {e}")))?;
    w.text(&json)?;
    let layout = ckpt.config().parameter_layout();
    for ((name, shape), data) in layout.iter().zip(ckpt.model.tensors()) {
        w.text(name)?;
        w.len_u32(shape.len(), "rank")?;
        for &d in shape {
            w.len_u32(d, "dimension")?;
        }
        w.f32_slice(data.iter().copied())?;
    }
    w.finish()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PredictorCheckpoint> {
    decode_checkpoint(&read_file(path)?)
}

pub(crate) fn decode_checkpoint(buf: &[u8]) -> Result<PredictorCheckpoint> {
    let mut r = Reader::new(buf);
    r.magic(CHECKPOINT_MAGIC, "checkpoint magic")?;
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "checkpoint",
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header_offset = r.offset();
    let json = r.text("checkpoint header")?;
    let header: Header = serde_json::from_str(json).map_err(|e| Error::Format {
        offset: header_offset,
        message: format!("checkpoint header: {e}"),
    })?;
    header
        .predictor
        .validate()
        .map_err(|e| Error::ConfigMismatch(e.to_string()))?;

    let mut records = Vec::new();
    while !r.at_end() {
        let start = r.offset();
        let name = r.text("tensor name")?.to_string();
        let rank = r.u32("tensor rank")? as usize;
        if rank > 8 {
            return Err(Error::Format { offset: start, message: format!("tensor {name} has rank {rank}") });
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("tensor dimension")? as usize);
        }
        let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| {
            Error::Format { offset: start, message: format!("tensor {name} is too large") }
        })?;
        let data = r.f32_vec(count, &format!("tensor {name}"))?;
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("tensor {name} has a non-finite value at {pos}")));
        }
        records.push((name, shape, data));
    }

    let layout = header.predictor.parameter_layout();
    if records.len() != layout.len() {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint holds {} tensors, the declared architecture needs {}",
            records.len(),
            layout.len()
        )));
    }
    let mut model = Predictor::<f32>::zeros(header.predictor)?;
    for (((name, shape), (rname, rshape, data)), dst) in
        layout.iter().zip(records).zip(model.tensors_mut())
    {
        if *name != rname || *shape != rshape {
            return Err(Error::ConfigMismatch(format!(
                "tensor {rname} {rshape:?} does not match declared {name} {shape:?}"
            )));
        }
        dst.copy_from_slice(&data);
    }
    Ok(PredictorCheckpoint { model, meta: header.meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> PredictorCheckpoint {
        let cfg = PredictorConfig { hidden_channels: 4, n_blocks: 1, ..PredictorConfig::for_n_freq(1) };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model = Predictor::<f32>::init(cfg, &mut rng).unwrap();
        model.layers_mut().last_mut().unwrap().bias[0] = 0.25;
        PredictorCheckpoint {
            model,
            meta: TrainingMeta {
                mode: TrainMode::Frl,
                train_res: 32,
                best_epoch: 3,
                epochs_run: 5,
                seed: 42,
                frl: FrlConfig { n_freq: 1, ..FrlConfig::default() },
                history: vec![EpochRecord { epoch: 0, train_loss: 0.5, val_space: 0.25 }],
            },
        }
    }

    fn bytes() -> Vec<u8> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.sack");
        save_checkpoint(&sample(), &path).unwrap();
        std::fs::read(path).unwrap()
    }

    #[test]
    fn round_trip() {
        assert_eq!(decode_checkpoint(&bytes()).unwrap(), sample());
    }

    #[test]
    fn truncated_tensor_is_format_error() {
        let b = bytes();
        assert!(matches!(decode_checkpoint(&b[..b.len() - 3]), Err(Error::Format { .. })));
    }

    #[test]
    fn corrupted_dimension_is_detected() {
        let mut b = bytes();
        // First tensor record follows the header; bump its leading dimension.
        let header_len = u32::from_le_bytes(b[6..10].try_into().unwrap()) as usize;
        let rec = 10 + header_len;
        let name_len = u32::from_le_bytes(b[rec..rec + 4].try_into().unwrap()) as usize;
        let dim0 = rec + 4 + name_len + 4;
        b[dim0] += 1;
        assert!(matches!(
            decode_checkpoint(&b),
            Err(Error::Format { .. }) | Err(Error::ConfigMismatch(_))
        ));
    }

    #[test]
    fn declared_config_mismatch() {
        let b = bytes();
        let header_len = u32::from_le_bytes(b[6..10].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&b[10..10 + header_len]).unwrap();
        let edited = header.replace("\"hidden_channels\":4", "\"hidden_channels\":5");
        assert_eq!(edited.len(), header.len());
        let mut out = b[..10].to_vec();
        out.extend_from_slice(edited.as_bytes());
        out.extend_from_slice(&b[10 + header_len..]);
        assert!(matches!(decode_checkpoint(&out), Err(Error::ConfigMismatch(_))));

        let ckpt = sample();
        let other = PredictorConfig { hidden_channels: 8, ..ckpt.config().clone() };
        assert!(matches!(ckpt.ensure_config(&other), Err(Error::ConfigMismatch(_))));
    }

    #[test]
    fn version_bump() {
        let mut b = bytes();
        b[4] = 9;
        assert!(matches!(decode_checkpoint(&b), Err(Error::UnsupportedVersion { found: 9, .. })));
    }
}
