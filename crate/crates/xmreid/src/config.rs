//! TOML configuration for the synthetic generator.
//!
//! A file picks a `preset` (`scenario`, `cca` or `attribute`; default
//! `scenario`) and may override any field of it:
//!
//! ```toml
//! preset = "scenario"
//! identities = 60
//! sigma_y = 4.0
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xmreid_core::synth::SynthConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("unknown preset {0:?}; expected scenario, cca or attribute")]
    UnknownPreset(String),
    #[error("seed {0} does not fit a TOML integer")]
    SeedTooLarge(u64),
}

/// Fully resolved generator settings, as written next to generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSettings {
    pub identities: usize,
    pub samples_per_view: usize,
    pub shared_dim: usize,
    pub vision_private_dim: usize,
    pub language_private_dim: usize,
    pub vision_dim: usize,
    pub language_dim: usize,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub language_gain: f64,
    pub view_shift: f64,
    pub attribute_bits: usize,
    pub splits: usize,
    pub seed: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Overrides {
    preset: Option<String>,
    identities: Option<usize>,
    samples_per_view: Option<usize>,
    shared_dim: Option<usize>,
    vision_private_dim: Option<usize>,
    language_private_dim: Option<usize>,
    vision_dim: Option<usize>,
    language_dim: Option<usize>,
    sigma_x: Option<f64>,
    sigma_y: Option<f64>,
    language_gain: Option<f64>,
    view_shift: Option<f64>,
    attribute_bits: Option<usize>,
    splits: Option<usize>,
    seed: Option<u64>,
}

impl From<&SynthConfig> for SynthSettings {
    fn from(c: &SynthConfig) -> Self {
        Self {
            identities: c.identities,
            samples_per_view: c.samples_per_view,
            shared_dim: c.shared_dim,
            vision_private_dim: c.vision_private_dim,
            language_private_dim: c.language_private_dim,
            vision_dim: c.vision_dim,
            language_dim: c.language_dim,
            sigma_x: c.sigma_x,
            sigma_y: c.sigma_y,
            language_gain: c.language_gain,
            view_shift: c.view_shift,
            attribute_bits: c.attribute_bits,
            splits: c.splits,
            seed: c.seed,
        }
    }
}

impl From<&SynthSettings> for SynthConfig {
    fn from(s: &SynthSettings) -> Self {
        SynthConfig {
            identities: s.identities,
            samples_per_view: s.samples_per_view,
            shared_dim: s.shared_dim,
            vision_private_dim: s.vision_private_dim,
            language_private_dim: s.language_private_dim,
            vision_dim: s.vision_dim,
            language_dim: s.language_dim,
            sigma_x: s.sigma_x,
            sigma_y: s.sigma_y,
            language_gain: s.language_gain,
            view_shift: s.view_shift,
            attribute_bits: s.attribute_bits,
            splits: s.splits,
            seed: s.seed,
        }
    }
}

pub fn preset(name: &str) -> Result<SynthConfig, ConfigError> {
    match name {
        "scenario" => Ok(SynthConfig::scenario_reference()),
        "cca" => Ok(SynthConfig::cca_reference()),
        "attribute" => Ok(SynthConfig::attribute_reference()),
        other => Err(ConfigError::UnknownPreset(other.into())),
    }
}

/// Resolves a config file; `default_seed` applies when the file sets none.
pub fn resolve(text: Option<&str>, default_seed: u64) -> Result<SynthConfig, ConfigError> {
    let o: Overrides = match text {
        Some(t) => toml::from_str(t).map_err(|e| ConfigError::Parse(e.to_string()))?,
        None => Overrides::default(),
    };
    let mut c = preset(o.preset.as_deref().unwrap_or("scenario"))?;
    macro_rules! apply {
        ($($f:ident),*) => { $( if let Some(v) = o.$f { c.$f = v; } )* };
    }
    apply!(
        identities,
        samples_per_view,
        shared_dim,
        vision_private_dim,
        language_private_dim,
        vision_dim,
        language_dim,
        sigma_x,
        sigma_y,
        language_gain,
        view_shift,
        attribute_bits,
        splits
    );
    c.seed = o.seed.unwrap_or(default_seed);
    Ok(c)
}

pub fn to_toml(c: &SynthConfig) -> Result<String, ConfigError> {
    if c.seed > i64::MAX as u64 {
        return Err(ConfigError::SeedTooLarge(c.seed));
    }
    toml::to_string(&SynthSettings::from(c)).map_err(|e| ConfigError::Parse(e.to_string()))
}
