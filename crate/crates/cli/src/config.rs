//! Configuration resolution. Values come from three layers, strongest first:
//! command-line flags, the `--config` JSON file, then the `QOESEQ_SEED`
//! environment variable (seed only). Anything still unset falls back to the
//! built-in defaults below.
//!
//! A manifest written by an earlier run is also accepted as a `--config`
//! file; its embedded snapshot (which records every resolved value) then
//! replays the original run.

use crate::error::CliError;
use crate::manifest::Manifest;
use clap::Args;
use qoeseq_core::GeneratorSpec;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

pub const DEFAULT_STATES: usize = 5;
pub const DEFAULT_CODEBOOK_SIZE: usize = 32;
pub const DEFAULT_BINS: usize = 3;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
pub const DEFAULT_WARMUP: usize = 10;
pub const DEFAULT_LENGTH: usize = 300;
pub const SEED_ENV_VAR: &str = "QOESEQ_SEED";

/// Flags shared by every subcommand. Commands ignore the ones they have no
/// use for, so one config file can drive the whole pipeline.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON config file (or a manifest from a previous run) supplying
    /// defaults for any flag not given explicitly.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RNG seed; falls back to the config file, then $QOESEQ_SEED, then 7.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of discrete QoE states S.
    #[arg(long)]
    pub states: Option<usize>,
    /// Codebook size K for vector quantization.
    #[arg(long)]
    pub codebook_size: Option<usize>,
    /// Bins per feature B for the discretization baseline.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Additive smoothing strength for counted distributions.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Output directory for this run; created if absent.
    #[arg(long)]
    pub out: PathBuf,
    /// Measured repetitions for latency timing.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Unmeasured warmup calls before timing starts.
    #[arg(long)]
    pub warmup: Option<usize>,
}

/// The on-disk config schema. Every field is optional so a file may pin only
/// what it cares about; unknown keys are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth_spec: Option<GeneratorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub codebook_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
}

/// Fully-resolved settings: flag and config layers merged, seed pinned.
#[derive(Debug, Clone)]
pub struct Settings {
    merged: ConfigFile,
    seed: u64,
    default_reps: usize,
}

fn read_config_file(path: &PathBuf) -> Result<ConfigFile, CliError> {
    if !path.exists() {
        return Err(CliError::missing(path));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
    // A manifest embeds the snapshot of the run that produced it; accept it
    // directly so `--config manifest.json` replays that run.
    if let Ok(manifest) = serde_json::from_str::<Manifest>(&text) {
        let mut config = manifest.config;
        config.seed = Some(manifest.seed);
        return Ok(config);
    }
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn seed_from_env() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV_VAR) {
        Ok(raw) => raw.parse::<u64>().map(Some).map_err(|_| {
            CliError::config(format!("{SEED_ENV_VAR} must be an unsigned integer, got {raw:?}"))
        }),
        Err(_) => Ok(None),
    }
}

impl Settings {
    /// Merges flags over the config file, resolves the seed chain, and
    /// validates every value that came from the weaker layers.
    pub fn resolve(common: &CommonArgs, default_reps: usize) -> Result<Self, CliError> {
        let mut merged = match &common.config {
            Some(path) => read_config_file(path)?,
            None => ConfigFile::default(),
        };
        if common.states.is_some() {
            merged.states = common.states;
        }
        if common.codebook_size.is_some() {
            merged.codebook_size = common.codebook_size;
        }
        if common.bins.is_some() {
            merged.bins = common.bins;
        }
        if common.alpha.is_some() {
            merged.alpha = common.alpha;
        }
        if common.reps.is_some() {
            merged.reps = common.reps;
        }
        if common.warmup.is_some() {
            merged.warmup = common.warmup;
        }
        if common.seed.is_some() {
            merged.seed = common.seed;
        }

        let seed = match merged.seed {
            Some(s) => s,
            None => seed_from_env()?.unwrap_or(DEFAULT_SEED),
        };

        let settings = Self {
            merged,
            seed,
            default_reps,
        };
        settings.validate()?;
        Ok(settings)
    }

    fn validate(&self) -> Result<(), CliError> {
        let m = &self.merged;
        if let Some(s) = m.states {
            if s < 1 {
                return Err(CliError::config("states must be >= 1"));
            }
        }
        if let Some(k) = m.codebook_size {
            if k < 1 {
                return Err(CliError::config("codebook_size must be >= 1"));
            }
        }
        if let Some(b) = m.bins {
            if b < 1 {
                return Err(CliError::config("bins must be >= 1"));
            }
        }
        if let Some(a) = m.alpha {
            if !(a.is_finite() && a >= 0.0) {
                return Err(CliError::config(format!(
                    "alpha must be finite and >= 0, got {a}"
                )));
            }
        }
        if let Some(f) = m.test_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(CliError::config(format!(
                    "test_fraction must lie in (0, 1), got {f}"
                )));
            }
        }
        if let Some(t) = m.length {
            if t < 1 {
                return Err(CliError::config("length must be >= 1"));
            }
        }
        if let Some(spec) = &m.synth_spec {
            spec.validate()
                .map_err(|e| CliError::config(format!("synth_spec: {e}")))?;
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.merged.states.unwrap_or(DEFAULT_STATES)
    }

    /// `Some` only when the user pinned S explicitly (flag or config), which
    /// lets `pipeline` cross-check it against a generator spec.
    pub fn explicit_states(&self) -> Option<usize> {
        self.merged.states
    }

    pub fn codebook_size(&self) -> usize {
        self.merged.codebook_size.unwrap_or(DEFAULT_CODEBOOK_SIZE)
    }

    pub fn bins(&self) -> usize {
        self.merged.bins.unwrap_or(DEFAULT_BINS)
    }

    pub fn alpha(&self) -> f64 {
        self.merged.alpha.unwrap_or(DEFAULT_ALPHA)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn test_fraction(&self) -> f64 {
        self.merged.test_fraction.unwrap_or(DEFAULT_TEST_FRACTION)
    }

    pub fn reps(&self) -> usize {
        self.merged.reps.unwrap_or(self.default_reps)
    }

    pub fn warmup(&self) -> usize {
        self.merged.warmup.unwrap_or(DEFAULT_WARMUP)
    }

    pub fn length(&self) -> usize {
        self.merged.length.unwrap_or(DEFAULT_LENGTH)
    }

    pub fn input_csv(&self) -> Option<&PathBuf> {
        self.merged.input_csv.as_ref()
    }

    pub fn train_csv(&self) -> Option<&PathBuf> {
        self.merged.train_csv.as_ref()
    }

    pub fn test_csv(&self) -> Option<&PathBuf> {
        self.merged.test_csv.as_ref()
    }

    pub fn synth_spec(&self) -> Option<&GeneratorSpec> {
        self.merged.synth_spec.as_ref()
    }

    pub fn set_synth_spec(&mut self, spec: GeneratorSpec) {
        self.merged.synth_spec = Some(spec);
    }

    pub fn set_input_csv(&mut self, path: PathBuf) {
        self.merged.input_csv = Some(path);
    }

    pub fn set_test_fraction(&mut self, fraction: f64) -> Result<(), CliError> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(CliError::config(format!(
                "test_fraction must lie in (0, 1), got {fraction}"
            )));
        }
        self.merged.test_fraction = Some(fraction);
        Ok(())
    }

    pub fn set_length(&mut self, length: usize) -> Result<(), CliError> {
        if length < 1 {
            return Err(CliError::config("length must be >= 1"));
        }
        self.merged.length = Some(length);
        Ok(())
    }

    /// A fully-resolved copy of the configuration for the manifest: every
    /// numeric knob pinned to the value this run actually used, so feeding
    /// the manifest back through `--config` reproduces the run.
    pub fn snapshot(&self) -> ConfigFile {
        ConfigFile {
            input_csv: self.merged.input_csv.clone(),
            train_csv: self.merged.train_csv.clone(),
            test_csv: self.merged.test_csv.clone(),
            synth_spec: self.merged.synth_spec.clone(),
            states: Some(self.states()),
            codebook_size: Some(self.codebook_size()),
            bins: Some(self.bins()),
            alpha: Some(self.alpha()),
            seed: Some(self.seed),
            test_fraction: Some(self.test_fraction()),
            reps: Some(self.reps()),
            warmup: Some(self.warmup()),
            length: Some(self.length()),
        }
    }
}
