use std::fmt;
use std::str::FromStr;

use crate::config::{format_list, list, value};
use crate::error::{Error, Result};
use crate::models::{AdversarialSource, ModelSpec, NetworkKind, DEFAULT_DELTA, DEFAULT_LAMBDA, DEFAULT_LATENT_DIM};
use crate::optim::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Iwgan,
    VaeIwgan,
    VanillaGanBaseline,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Iwgan => "iwgan",
            TrainMode::VaeIwgan => "vae-iwgan",
            TrainMode::VanillaGanBaseline => "vanilla-gan-baseline",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iwgan" => Ok(TrainMode::Iwgan),
            "vae-iwgan" => Ok(TrainMode::VaeIwgan),
            "vanilla-gan-baseline" => Ok(TrainMode::VanillaGanBaseline),
            _ => Err(Error::InvalidArgument(format!(
                "unknown mode `{s}` (iwgan, vae-iwgan, vanilla-gan-baseline)"
            ))),
        }
    }
}

fn source_str(s: AdversarialSource) -> &'static str {
    match s {
        AdversarialSource::Prior => "prior",
        AdversarialSource::Reconstruction => "reconstruction",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub batch_size: usize,
    pub epochs: usize,
    pub gen_interval: usize,
    pub lambda: f64,
    pub delta: f64,
    pub lr_gen: f64,
    pub lr_disc: f64,
    pub lr_enc: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// Epochs between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub adversarial_source: AdversarialSource,
    pub resolution: usize,
    pub latent_dim: usize,
    pub gen_channels: Option<Vec<usize>>,
    pub disc_channels: Option<Vec<usize>>,
    /// Encoder kind in `vae-iwgan` mode; defaults to the voxel encoder.
    pub encoder: Option<NetworkKind>,
    pub enc_channels: Option<Vec<usize>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            mode: TrainMode::Iwgan,
            batch_size: 32,
            epochs: 100,
            gen_interval: 5,
            lambda: DEFAULT_LAMBDA,
            delta: DEFAULT_DELTA,
            lr_gen: adam.lr,
            lr_disc: adam.lr,
            lr_enc: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            seed: 0,
            checkpoint_every: 0,
            adversarial_source: AdversarialSource::Prior,
            resolution: 32,
            latent_dim: DEFAULT_LATENT_DIM,
            gen_channels: None,
            disc_channels: None,
            encoder: None,
            enc_channels: None,
        }
    }
}

/// Keys understood by [`TrainConfig::set`], in snapshot order.
pub const TRAIN_KEYS: [&str; 20] = [
    "mode",
    "res",
    "latent_dim",
    "batch",
    "epochs",
    "gen_interval",
    "lambda",
    "delta",
    "lr_gen",
    "lr_disc",
    "lr_enc",
    "beta1",
    "beta2",
    "seed",
    "checkpoint_every",
    "adversarial_source",
    "gen_channels",
    "disc_channels",
    "encoder",
    "enc_channels",
];

impl TrainConfig {
    pub fn new(mode: TrainMode, resolution: usize, latent_dim: usize) -> Self {
        TrainConfig {
            mode,
            resolution,
            latent_dim,
            ..TrainConfig::default()
        }
    }

    /// Applies one `key = value` setting. `Ok(false)` means the key is not a
    /// training key; `Err` carries a message for an invalid value.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<bool, String> {
        match key {
            "mode" => self.mode = v.parse().map_err(|e: Error| e.to_string())?,
            "res" => self.resolution = value(key, v)?,
            "latent_dim" => self.latent_dim = value(key, v)?,
            "batch" => self.batch_size = value(key, v)?,
            "epochs" => self.epochs = value(key, v)?,
            "gen_interval" => self.gen_interval = value(key, v)?,
            "lambda" => self.lambda = value(key, v)?,
            "delta" => self.delta = value(key, v)?,
            "lr_gen" => self.lr_gen = value(key, v)?,
            "lr_disc" => self.lr_disc = value(key, v)?,
            "lr_enc" => self.lr_enc = value(key, v)?,
            "beta1" => self.beta1 = value(key, v)?,
            "beta2" => self.beta2 = value(key, v)?,
            "seed" => self.seed = value(key, v)?,
            "checkpoint_every" => self.checkpoint_every = value(key, v)?,
            "adversarial_source" => {
                self.adversarial_source = match v {
                    "prior" => AdversarialSource::Prior,
                    "reconstruction" => AdversarialSource::Reconstruction,
                    _ => return Err(format!("invalid value `{v}` for `{key}` (prior, reconstruction)")),
                }
            }
            "gen_channels" => self.gen_channels = Some(list(key, v)?),
            "disc_channels" => self.disc_channels = Some(list(key, v)?),
            "encoder" => {
                self.encoder = match v {
                    "none" => None,
                    "voxel-encoder" => Some(NetworkKind::VoxelEncoder),
                    "image-encoder" => Some(NetworkKind::ImageEncoder),
                    _ => return Err(format!("invalid value `{v}` for `{key}` (voxel-encoder, image-encoder)")),
                }
            }
            "enc_channels" => self.enc_channels = Some(list(key, v)?),
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn spec(&self, base: NetworkKind, channels: &Option<Vec<usize>>) -> Result<ModelSpec> {
        let mut spec = ModelSpec::standard(base, self.resolution, self.latent_dim)?;
        if let Some(c) = channels {
            spec.channels = c.clone();
            spec.validate()?;
        }
        Ok(spec)
    }

    pub fn generator_spec(&self) -> Result<ModelSpec> {
        self.spec(NetworkKind::Generator, &self.gen_channels)
    }

    pub fn discriminator_spec(&self) -> Result<ModelSpec> {
        self.spec(NetworkKind::Discriminator, &self.disc_channels)
    }

    pub fn encoder_kind(&self) -> Option<NetworkKind> {
        match self.mode {
            TrainMode::VaeIwgan => Some(self.encoder.unwrap_or(NetworkKind::VoxelEncoder)),
            _ => None,
        }
    }

    pub fn encoder_spec(&self) -> Result<Option<ModelSpec>> {
        self.encoder_kind().map(|k| self.spec(k, &self.enc_channels)).transpose()
    }

    pub fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.gen_interval < 1 {
            return bad("gen_interval must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch size must be at least 2 for batch norm, got {}", self.batch_size));
        }
        for (k, lr) in [("lr_gen", self.lr_gen), ("lr_disc", self.lr_disc), ("lr_enc", self.lr_enc)] {
            if !(lr.is_finite() && lr > 0.0) {
                return bad(format!("{k} must be positive, got {lr}"));
            }
        }
        for (k, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{k} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) || !(self.delta.is_finite() && self.delta >= 0.0) {
            return bad("lambda and delta must be finite and non-negative".into());
        }
        self.generator_spec()?;
        self.discriminator_spec()?;
        self.encoder_spec()?;
        Ok(())
    }

    /// Fully resolved `key = value` snapshot, channel schedules included.
    pub fn to_kv(&self) -> Result<String> {
        let gen = self.generator_spec()?;
        let disc = self.discriminator_spec()?;
        let enc = self.encoder_spec()?;
        let mut s = String::new();
        let mut put = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        put("mode", self.mode.to_string());
        put("res", self.resolution.to_string());
        put("latent_dim", self.latent_dim.to_string());
        put("batch", self.batch_size.to_string());
        put("epochs", self.epochs.to_string());
        put("gen_interval", self.gen_interval.to_string());
        put("lambda", self.lambda.to_string());
        put("delta", self.delta.to_string());
        put("lr_gen", self.lr_gen.to_string());
        put("lr_disc", self.lr_disc.to_string());
        put("lr_enc", self.lr_enc.to_string());
        put("beta1", self.beta1.to_string());
        put("beta2", self.beta2.to_string());
        put("seed", self.seed.to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        put("adversarial_source", source_str(self.adversarial_source).into());
        put("gen_channels", format_list(&gen.channels));
        put("disc_channels", format_list(&disc.channels));
        match &enc {
            Some(e) => {
                put("encoder", e.base.to_string());
                put("enc_channels", format_list(&e.channels));
            }
            None => put("encoder", "none".into()),
        }
        Ok(s)
    }
}
