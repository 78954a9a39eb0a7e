//! Run configuration: JSON file with strict (unknown-key rejecting) schema
//! plus dotted-path command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{EdTalkError, Result};

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BankSizes {
    pub mouth: usize,
    pub pose: usize,
    pub expression: usize,
}

impl Default for BankSizes {
    fn default() -> Self {
        Self {
            mouth: 20,
            pose: 6,
            expression: 10,
        }
    }
}

impl BankSizes {
    pub fn total(&self) -> usize {
        self.mouth + self.pose + self.expression
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub image_size: usize,
    pub bank_sizes: BankSizes,
    /// Channel widths of the four encoder stages (generator mirrors them).
    pub channels: Vec<usize>,
    /// Number of deepest identity-feature levels modulated by the EEM.
    pub eem_levels: usize,
    pub flow_steps: usize,
    pub window_k: usize,
    /// Per-frame audio latent width (d_a).
    pub audio_dim: usize,
    pub mel_bins: usize,
    /// Sync embedder output width (d_s).
    pub sync_dim: usize,
    /// Semantics/text embedding width (d_t).
    pub text_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            image_size: 64,
            bank_sizes: BankSizes::default(),
            channels: vec![32, 64, 128, 256],
            eem_levels: 2,
            flow_steps: 4,
            window_k: 5,
            audio_dim: 32,
            mel_bins: 26,
            sync_dim: 64,
            text_dim: 16,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub rec: f64,
    pub per: f64,
    pub adv: f64,
    pub self_rec: f64,
    pub fea: f64,
    pub mot: f64,
    pub m_c: f64,
    pub sync: f64,
    pub tem: f64,
    pub mle: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            rec: 1.0,
            per: 1.0,
            adv: 1.0,
            self_rec: 1.0,
            fea: 1.0,
            mot: 10.0,
            m_c: 1.0,
            sync: 1.0,
            tem: 1.0,
            mle: 1.0,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub iters: usize,
    pub seed: u64,
    pub loss_weights: LossWeights,
    /// Loss-log interval in iterations.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            batch: 4,
            iters: 2000,
            seed: 0,
            loss_weights: LossWeights::default(),
            log_every: 50,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub root: PathBuf,
    pub synth_seed: u64,
    /// Number of clips in a generated dataset.
    pub size: usize,
    /// Frames per generated clip.
    pub clip_len: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("data"),
            synth_seed: 7,
            size: 200,
            clip_len: 24,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSeeds {
    pub perceptual: u64,
    pub probe: u64,
    pub sync: u64,
    pub semantics: u64,
    pub text: u64,
}

impl Default for OracleSeeds {
    fn default() -> Self {
        Self {
            perceptual: 11,
            probe: 12,
            sync: 13,
            semantics: 14,
            text: 15,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FitThresholds {
    pub probe_r2: f64,
    pub sync_margin: f64,
}

impl Default for FitThresholds {
    fn default() -> Self {
        Self {
            probe_r2: 0.95,
            sync_margin: 0.3,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub seeds: OracleSeeds,
    pub fit_thresholds: FitThresholds,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            seeds: OracleSeeds::default(),
            fit_thresholds: FitThresholds::default(),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub oracle: OracleConfig,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text)
            .map_err(|e| EdTalkError::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EdTalkError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.bank_sizes.total() > m.latent_dim {
            return Err(EdTalkError::Config(format!(
                "bank sizes total {} exceeds latent_dim {}",
                m.bank_sizes.total(),
                m.latent_dim
            )));
        }
        if m.channels.len() != 4 {
            return Err(EdTalkError::Config(
                "model.channels must list exactly 4 stage widths".into(),
            ));
        }
        if m.channels.iter().any(|&c| c == 0) {
            return Err(EdTalkError::Config("model.channels must be positive".into()));
        }
        if m.image_size < 16 || m.image_size % 16 != 0 {
            return Err(EdTalkError::Config(
                "model.image_size must be a positive multiple of 16".into(),
            ));
        }
        if m.image_size > 1024 || m.latent_dim > 8192 || *m.channels.iter().max().unwrap() > 4096 {
            return Err(EdTalkError::Config("model dimensions out of range".into()));
        }
        if m.window_k == 0 || m.window_k % 2 == 0 {
            return Err(EdTalkError::Config("model.window_k must be odd".into()));
        }
        if m.flow_steps == 0 || m.flow_steps > 64 {
            return Err(EdTalkError::Config("model.flow_steps must be in 1..=64".into()));
        }
        if m.bank_sizes.pose < 2 {
            return Err(EdTalkError::Config(
                "pose bank needs at least 2 bases for the coupling split".into(),
            ));
        }
        if m.mel_bins == 0 || m.audio_dim == 0 || m.sync_dim == 0 || m.text_dim == 0 {
            return Err(EdTalkError::Config("audio dimensions must be positive".into()));
        }
        if self.train.batch == 0 {
            return Err(EdTalkError::Config("train.batch must be positive".into()));
        }
        if !(self.train.lr.is_finite() && self.train.lr > 0.0) {
            return Err(EdTalkError::Config("train.lr must be positive".into()));
        }
        Ok(())
    }

    /// Apply `key=value` overrides with dotted paths (`model.latent_dim=512`).
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut value = serde_json::to_value(self).expect("config to json");
        for ov in overrides {
            let (path, raw) = ov.split_once('=').ok_or_else(|| {
                EdTalkError::Config(format!("override '{ov}' is not key=value"))
            })?;
            let parsed: serde_json::Value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            let parts: Vec<&str> = path.split('.').collect();
            fn set_path(
                cursor: &mut serde_json::Value,
                parts: &[&str],
                parsed: &serde_json::Value,
                path: &str,
            ) -> Result<()> {
                let obj = cursor.as_object_mut().ok_or_else(|| {
                    EdTalkError::Config(format!("override path '{path}' is not an object"))
                })?;
                if parts.len() == 1 {
                    obj.insert(parts[0].to_string(), parsed.clone());
                    Ok(())
                } else {
                    let next = obj
                        .entry(parts[0].to_string())
                        .or_insert_with(|| serde_json::Value::Object(serde_json::Map::new()));
                    set_path(next, &parts[1..], parsed, path)
                }
            }
            set_path(&mut value, &parts, &parsed, path)?;
        }
        let cfg: Config = serde_json::from_value(value)
            .map_err(|e| EdTalkError::Config(format!("override rejected: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
