//! Run configuration: one JSON document with `data`, `model`, `loss`, `train`
//! and `eval` sections plus a top-level `seed`. Every field is optional and
//! unknown keys are rejected. Command-line flags are applied on top.

use std::path::Path;

use azclip::data::SynthConfig;
use azclip::loss::LossConfig;
use azclip::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_images: usize,
    pub captions_per_image: usize,
    pub latent_dim: usize,
    pub img_dim: usize,
    pub txt_dim: usize,
    pub noise_sigma: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// Seed for the synthetic feature maps; `null` uses the run seed.
    pub map_seed: Option<u64>,
    pub augment_sigma: f64,
    pub augment_copies: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SynthConfig::default();
        DataConfig {
            n_images: s.n_images,
            captions_per_image: s.captions_per_image,
            latent_dim: s.latent_dim,
            img_dim: s.img_dim,
            txt_dim: s.txt_dim,
            noise_sigma: s.noise_sigma,
            val_fraction: s.val_fraction,
            test_fraction: s.test_fraction,
            map_seed: s.map_seed,
            augment_sigma: 0.0,
            augment_copies: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub shared_dim: usize,
    /// Recorded in checkpoints only; features arrive precomputed.
    pub image_encoder: String,
    pub text_encoder: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            shared_dim: 32,
            image_encoder: "precomputed".into(),
            text_encoder: "precomputed".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub warmup_steps: u64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub drop_last: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr_max: t.lr_max,
            lr_min: t.lr_min,
            warmup_steps: t.warmup_steps,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            drop_last: t.drop_last,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Hits returned by `query`.
    pub k: usize,
    pub model_name: String,
    /// Table label; `null` uses the text file's stem.
    pub dataset_name: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 10,
            model_name: "dual-encoder".into(),
            dataset_name: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub train: TrainSection,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::file(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }

    pub fn synth(&self) -> SynthConfig {
        let d = &self.data;
        SynthConfig {
            n_images: d.n_images,
            captions_per_image: d.captions_per_image,
            latent_dim: d.latent_dim,
            img_dim: d.img_dim,
            txt_dim: d.txt_dim,
            noise_sigma: d.noise_sigma,
            val_fraction: d.val_fraction,
            test_fraction: d.test_fraction,
            seed: self.seed,
            map_seed: d.map_seed,
        }
    }

    pub fn trainer(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr_max: t.lr_max,
            lr_min: t.lr_min,
            warmup_steps: t.warmup_steps,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            seed: self.seed,
            drop_last: t.drop_last,
            loss: self.loss.clone(),
            checkpoint_path: None,
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
