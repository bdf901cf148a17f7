//! Run configuration: built-in defaults, overridden by a JSON config file
//! with flat dotted keys, overridden in turn by command-line flags.

use std::path::{Path, PathBuf};

use quieten_core::vae::TrainConfig;
use quieten_core::{Error, McemConfig, MixtureSpec, NoiseKind, Result};
use serde_json::Value;

/// Names a default config file used when --config is absent.
pub const CONFIG_ENV: &str = "QUIETEN_CONFIG";

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub alpha: f64,
    /// None: derived from the sample rate (64 ms rounded to a multiple of 4).
    pub win_length: Option<usize>,
    /// None: win_length / 4.
    pub hop: Option<usize>,
    pub train: TrainConfig,
    pub mcem: McemConfig,
    pub mix: MixtureSpec,
    pub weights: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 1.8,
            win_length: None,
            hop: None,
            train: TrainConfig::default(),
            mcem: McemConfig::default(),
            mix: MixtureSpec {
                snr_db: 0.0,
                seed: 0,
                noise_kind: NoiseKind::GaussianStationary,
            },
            weights: None,
            out: None,
        }
    }
}

impl RunConfig {
    /// Defaults, then the config file named by --config or QUIETEN_CONFIG
    /// (flag wins; no file is fine).
    pub fn load(flag: Option<&Path>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let path = flag
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        if let Some(p) = path {
            let text = std::fs::read_to_string(&p)?;
            cfg.apply_file(&text).map_err(|e| match e {
                Error::InvalidArgument(m) => {
                    Error::InvalidArgument(format!("{}: {m}", p.display()))
                }
                other => other,
            })?;
        }
        Ok(cfg)
    }

    fn apply_file(&mut self, text: &str) -> Result<()> {
        let map: serde_json::Map<String, Value> = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("config must be a JSON object: {e}")))?;
        for (key, value) in &map {
            self.apply_key(key, value)?;
        }
        Ok(())
    }

    fn apply_key(&mut self, key: &str, v: &Value) -> Result<()> {
        match key {
            "alpha" => self.alpha = float(key, v)?,
            "stft.win_length" => self.win_length = Some(uint(key, v)? as usize),
            "stft.hop" => self.hop = Some(uint(key, v)? as usize),
            "train.learning_rate" => self.train.learning_rate = float(key, v)?,
            "train.beta1" => self.train.beta1 = float(key, v)?,
            "train.beta2" => self.train.beta2 = float(key, v)?,
            "train.adam_eps" => self.train.adam_eps = float(key, v)?,
            "train.batch_size" => self.train.batch_size = uint(key, v)? as usize,
            "train.max_epochs" => self.train.max_epochs = uint(key, v)? as usize,
            "train.patience" => self.train.patience = uint(key, v)? as usize,
            "train.validation_fraction" => self.train.validation_fraction = float(key, v)?,
            "train.latent_dim" => self.train.latent_dim = uint(key, v)? as usize,
            "train.hidden_dim" => self.train.hidden_dim = uint(key, v)? as usize,
            "train.seed" => self.train.seed = uint(key, v)?,
            "mcem.n_iters" => self.mcem.n_iters = uint(key, v)? as usize,
            "mcem.gibbs_iters" => self.mcem.gibbs_iters = uint(key, v)? as usize,
            "mcem.burn_in" => self.mcem.burn_in = uint(key, v)? as usize,
            "mcem.eps2" => self.mcem.eps2 = float(key, v)?,
            "mcem.inner_iters" => self.mcem.inner_iters = uint(key, v)? as usize,
            "mcem.recon_iters" => self.mcem.recon_iters = uint(key, v)? as usize,
            "mcem.recon_burn_in" => self.mcem.recon_burn_in = uint(key, v)? as usize,
            "mcem.seed" => self.mcem.seed = uint(key, v)?,
            "mix.snr_db" => self.mix.snr_db = float(key, v)?,
            "mix.seed" => self.mix.seed = uint(key, v)?,
            "mix.noise_kind" => self.mix.noise_kind = parse_noise_kind(string(key, v)?)?,
            "paths.weights" => self.weights = Some(PathBuf::from(string(key, v)?)),
            "paths.out" => self.out = Some(PathBuf::from(string(key, v)?)),
            _ => return Err(Error::invalid(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }
}

pub fn parse_noise_kind(s: &str) -> Result<NoiseKind> {
    match s {
        "gaussian" | "gaussian_stationary" => Ok(NoiseKind::GaussianStationary),
        "sas" | "sas_synthetic" => Ok(NoiseKind::SasSynthetic),
        "file" => Ok(NoiseKind::File),
        _ => Err(Error::invalid(format!(
            "unknown noise kind '{s}' (expected gaussian_stationary, sas_synthetic, or file)"
        ))),
    }
}

fn float(key: &str, v: &Value) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::invalid(format!("key '{key}' must be a number, got {v}")))
}

fn uint(key: &str, v: &Value) -> Result<u64> {
    v.as_u64()
        .ok_or_else(|| Error::invalid(format!("key '{key}' must be a non-negative integer, got {v}")))
}

fn string<'v>(key: &str, v: &'v Value) -> Result<&'v str> {
    v.as_str()
        .ok_or_else(|| Error::invalid(format!("key '{key}' must be a string, got {v}")))
}
