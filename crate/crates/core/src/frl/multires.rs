use super::FrlConfig;
use crate::dataset::TrajectoryDataset;
use crate::error::Result;
use crate::spectral::downsample_lowpass;

/// Level `j` of the hierarchy is the input dataset low-pass downsampled by `2^j`,
/// snapshot by snapshot. Index 0 is the input itself.
pub fn build_multires_dataset(ds: &TrajectoryDataset, cfg: &FrlConfig) -> Result<Vec<TrajectoryDataset>> {
    let (h, w) = ds.resolution();
    let cfg = FrlConfig { use_multires: true, ..cfg.clone() };
    cfg.validate_for_resolution(h, w)?;
    let mut out = vec![ds.clone()];
    for j in 1..cfg.levels {
        let factor = 1usize << j;
        out.push(ds.map_fields(|f| downsample_lowpass(f, factor))?);
    }
    Ok(out)
}
