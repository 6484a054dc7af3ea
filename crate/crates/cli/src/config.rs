//! Run configuration: one JSON document per run, schema-checked with
//! unknown keys rejected before any computation starts.

use pinn_rc_core::circuits::CircuitCase;
use pinn_rc_core::training::TrainConfig;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Name of the run directory under the output root; defaults to
    /// `<command>-<unix-seconds>` so repeated runs do not collide.
    #[serde(default)]
    pub run_name: Option<String>,
    /// Output root; overridden by `--out`, falls back to `$PINN_RC_OUT`
    /// and then `./out`.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub case: CircuitCase,
    pub train: TrainConfig,
    #[serde(default)]
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub inverse: Option<InverseSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub n_points: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    pub seed: u64,
    /// Output CSV path; relative paths land inside the run directory.
    /// Defaults to `dataset.csv`.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseSection {
    /// Existing dataset CSV; relative paths resolve against the config
    /// file's directory.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Inline synthetic-generation block used when no dataset file is given.
    #[serde(default)]
    pub synthetic: Option<SynthInline>,
    /// Initial parameter guesses; defaults to half the template values.
    #[serde(default)]
    pub init_params: Option<InitParams>,
    /// Free/frozen mask; defaults to everything trainable.
    #[serde(default)]
    pub mask: Option<MaskSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthInline {
    pub n_points: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitParams {
    #[serde(default)]
    pub r0: Option<f64>,
    pub branches: Vec<RcPair>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcPair {
    pub r: f64,
    pub c: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSpec {
    #[serde(default = "default_true")]
    pub r0: bool,
    pub branches: Vec<MaskPair>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskPair {
    #[serde(default = "default_true")]
    pub r: bool,
    #[serde(default = "default_true")]
    pub c: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub t_ends: Vec<f64>,
    #[serde(default = "default_true")]
    pub scale_points: bool,
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&content)
            .map_err(|e| format!("config {}: {e}", path.display()))?;
        config.train.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }
}
