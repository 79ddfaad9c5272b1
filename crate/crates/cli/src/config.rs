//! Run configuration: one TOML document with a section per stage.
//!
//! Every key has a default, unknown keys are rejected, and command-line flags
//! override file values. The top-level `seed` is authoritative: it replaces
//! the `seed` of the `[solver]` and `[train]` sections when resolved.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use salab::frl::{FrlConfig, TrainConfig, TrainMode};
use salab::{Error, Result, SolverConfig};

/// A number, or `auto` for a value derived from other settings.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AutoValue {
    #[default]
    Auto,
    Value(f64),
}

impl AutoValue {
    pub fn resolve(self, auto: f64) -> f64 {
        match self {
            AutoValue::Auto => auto,
            AutoValue::Value(v) => v,
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            AutoValue::Auto => None,
            AutoValue::Value(v) => Some(v),
        }
    }
}

impl fmt::Display for AutoValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AutoValue::Auto => f.write_str("auto"),
            AutoValue::Value(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for AutoValue {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(AutoValue::Auto);
        }
        s.parse().map(AutoValue::Value).map_err(|_| format!("expected a number or \"auto\", found {s:?}"))
    }
}

impl Serialize for AutoValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AutoValue::Auto => s.serialize_str("auto"),
            AutoValue::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for AutoValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Num(f64),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(AutoValue::Value(v as f64)),
            Repr::Num(v) => Ok(AutoValue::Value(v)),
            Repr::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            checkpoint_dir: "checkpoints".into(),
            report_dir: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSettings {
    pub trajectories: usize,
}

impl Default for DataSettings {
    fn default() -> Self {
        Self { trajectories: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub resolutions: Vec<usize>,
    /// Rollout length in snapshots, equal physical time at every resolution.
    pub horizon: usize,
    /// Error-ratio split; `auto` is the training Nyquist.
    pub cutoff: AutoValue,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { resolutions: vec![32, 64, 128], horizon: 10, cutoff: AutoValue::Auto }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSettings {
    pub probe_res: usize,
    pub f_min: f64,
    /// Highest probe frequency; `auto` is the last one below the probe Nyquist.
    pub f_max: AutoValue,
    pub f_step: f64,
    pub amplitude: f64,
    pub repeats: usize,
    pub delta: f64,
    /// Predictor steps per probe.
    pub steps: usize,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            probe_res: 128,
            f_min: 0.0,
            f_max: AutoValue::Auto,
            f_step: 1.0,
            amplitude: 1.0,
            repeats: 10,
            delta: 4.0,
            steps: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandSettings {
    pub resolution: usize,
    pub trajectory: usize,
    pub steps: usize,
    /// Bands are `[0, w), [w, 2w), …` up to the Nyquist frequency.
    pub band_width: f64,
}

impl Default for BandSettings {
    fn default() -> Self {
        Self { resolution: 128, trajectory: 0, steps: 50, band_width: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub levels: Vec<usize>,
    pub lambdas: Vec<f64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { levels: vec![2, 3, 4], lambdas: vec![0.01, 0.05, 0.1, 0.2, 0.5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: TrainMode,
    pub paths: Paths,
    pub data: DataSettings,
    pub solver: SolverConfig,
    pub frl: FrlConfig,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub probe: ProbeSettings,
    pub band: BandSettings,
    pub sweep: SweepSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut solver = SolverConfig::default();
        solver.resolution = (128, 128);
        Self {
            seed: 42,
            mode: TrainMode::Frl,
            paths: Paths::default(),
            data: DataSettings::default(),
            solver,
            frl: FrlConfig::default(),
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
            probe: ProbeSettings::default(),
            band: BandSettings::default(),
            sweep: SweepSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }

    /// Defaults, overlaid with `path` when given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.solver.seed = seed;
        self.train.seed = seed;
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// Writes the resolved configuration to `path`.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn sections_override_defaults() {
        let c = RunConfig::from_toml(
            "seed = 7\n[frl]\nlambda = 0.2\nlevel_sampling = \"uniform\"\n[train]\npatience = \"none\"\n\
             [train.optimizer]\nclip_max_norm = \"none\"\n[eval]\ncutoff = 12\n[probe]\nf_max = 40.0\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.frl.lambda, 0.2);
        assert_eq!(c.train.patience, None);
        assert_eq!(c.train.optimizer.clip_max_norm, None);
        assert_eq!(c.eval.cutoff, AutoValue::Value(12.0));
        assert_eq!(c.probe.f_max, AutoValue::Value(40.0));
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["sede = 1\n", "[frl]\nlamda = 0.1\n", "[solver]\nviscosity = 0.1\n", "[extra]\n"] {
            assert!(matches!(RunConfig::from_toml(text), Err(Error::Usage(_))), "{text}");
        }
    }

    #[test]
    fn auto_values_parse() {
        assert_eq!("auto".parse::<AutoValue>().unwrap(), AutoValue::Auto);
        assert_eq!("2.5".parse::<AutoValue>().unwrap(), AutoValue::Value(2.5));
        assert!("fast".parse::<AutoValue>().is_err());
        assert_eq!(AutoValue::Auto.resolve(16.0), 16.0);
    }
}
