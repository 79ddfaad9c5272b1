//! Measurements on trained forecasters: frequency response, bandwidth and
//! anchoring ratio, rollout error tables, band energies, out-of-band energy
//! fraction and training overhead, plus their report files.

mod metrics;
pub mod report;
mod response;

pub use metrics::{
    compute_f_oob, error_table, f_oob_spectrum, measure_overhead, mse_ratio_bound, rollout_band_energy,
    BandEnergyRow, EvalReport, EvalRow, Overhead, RmseRatio,
};
pub use report::Summary;
pub use response::{
    anchoring_ratio, bandwidth, frequency_grid, probe_frequency_response, Bandwidth, FrequencyResponseCurve,
    ProbeOptions, ResponseSample, BANDWIDTH_THRESHOLD,
};
