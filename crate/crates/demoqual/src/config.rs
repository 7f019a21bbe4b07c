//! Run configuration: a flat TOML table with typed keys, plus `key=value`
//! overrides from the command line.

use std::path::Path;

use demoqual_core::corpus::{SplitMode, TierLadder};
use demoqual_core::critic::CriticConfig;
use demoqual_core::encoder::{Architecture, EncoderConfig};
use demoqual_core::filterpipe::InferenceSampling;
use demoqual_core::sampling::SegmentConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    pub n_demonstrators: usize,
    pub per_tier_count: usize,
    pub obs_dim: usize,
    pub tiers: Vec<String>,
    pub split_mode: SplitMode,
    pub split_fraction: f64,

    pub segment_length: usize,
    pub initial_length: usize,
    pub final_length: usize,
    pub position_encoding: bool,

    pub s1: bool,
    pub s2_initial: bool,
    pub s2_final: bool,
    pub time_warp: bool,
    pub max_warp: f64,
    pub s1_s2_ratio: f64,
    pub architecture: Architecture,
    pub hidden: usize,
    pub latent_dim: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub margin: f64,

    pub critic_hidden: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critic_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critic_batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critic_learning_rate: Option<f64>,
    pub label_noise: f64,
    pub num_segments: usize,

    pub gmm_k: usize,
    pub gmm_weighted: bool,

    pub inference_sampling: InferenceSampling,
    pub top_k: usize,

    pub eval_segments_per_tier: usize,
    pub eval_normalize: bool,
    pub histogram_bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        let critic = CriticConfig::default();
        RunConfig {
            seed: 0,
            n_demonstrators: 6,
            per_tier_count: 50,
            obs_dim: 4,
            tiers: TierLadder::default_ladder().names().to_vec(),
            split_mode: SplitMode::Unseen,
            split_fraction: 0.5,
            segment_length: enc.segments.length,
            initial_length: enc.segments.initial_length,
            final_length: enc.segments.final_length,
            position_encoding: enc.segments.position_encoding,
            s1: enc.s1,
            s2_initial: enc.s2_initial,
            s2_final: enc.s2_final,
            time_warp: enc.time_warp,
            max_warp: enc.max_warp,
            s1_s2_ratio: enc.s1_s2_ratio,
            architecture: enc.architecture,
            hidden: enc.hidden,
            latent_dim: enc.latent_dim,
            steps: enc.steps,
            batch_size: enc.batch_size,
            learning_rate: enc.learning_rate,
            margin: enc.margin,
            critic_hidden: critic.hidden,
            critic_steps: None,
            critic_batch_size: None,
            critic_learning_rate: None,
            label_noise: critic.label_noise,
            num_segments: critic.num_segments,
            gmm_k: 2,
            gmm_weighted: true,
            inference_sampling: InferenceSampling::Uniform,
            top_k: 50,
            eval_segments_per_tier: 1000,
            eval_normalize: true,
            histogram_bins: 20,
        }
    }
}

/// Parse the right-hand side of an override as a TOML value; bare words
/// fall back to strings.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl RunConfig {
    /// Defaults, then the file (if any), then overrides, then `seed`.
    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{o}` is not key=value")))?;
            table.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        if let Some(s) = seed {
            table.insert("seed".into(), toml::Value::Integer(s as i64));
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn ladder(&self) -> Result<TierLadder> {
        Ok(TierLadder::new(self.tiers.iter().cloned())?)
    }

    pub fn segments(&self) -> SegmentConfig {
        SegmentConfig {
            length: self.segment_length,
            initial_length: self.initial_length,
            final_length: self.final_length,
            position_encoding: self.position_encoding,
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            segments: self.segments(),
            s1: self.s1,
            s2_initial: self.s2_initial,
            s2_final: self.s2_final,
            time_warp: self.time_warp,
            max_warp: self.max_warp,
            s1_s2_ratio: self.s1_s2_ratio,
            architecture: self.architecture,
            hidden: self.hidden,
            latent_dim: self.latent_dim,
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            margin: self.margin,
        }
    }

    pub fn critic(&self) -> CriticConfig {
        CriticConfig {
            hidden: self.critic_hidden,
            steps: self.critic_steps.unwrap_or(self.steps),
            batch_size: self.critic_batch_size.unwrap_or(self.batch_size),
            learning_rate: self.critic_learning_rate.unwrap_or(self.learning_rate),
            label_noise: self.label_noise,
            num_segments: self.num_segments,
        }
    }

    /// True when no contrastive strategy is enabled: training falls back to
    /// the end-to-end preference baseline.
    pub fn preference_only(&self) -> bool {
        !self.encoder().any_strategy()
    }

    pub fn validate(&self) -> Result<()> {
        self.ladder()?;
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.n_demonstrators < 2 {
            return bad("n_demonstrators must be >= 2");
        }
        if self.per_tier_count < 1 {
            return bad("per_tier_count must be >= 1");
        }
        if self.obs_dim < 4 {
            return bad("obs_dim must be >= 4");
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad("split_fraction must lie in (0, 1)");
        }
        if !(0.0..=0.5).contains(&self.max_warp) {
            return bad("max_warp must lie in [0, 0.5]");
        }
        if !(self.s1_s2_ratio > 0.0 && self.s1_s2_ratio.is_finite()) {
            return bad("s1_s2_ratio must be positive");
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad("margin must be >= 0");
        }
        if self.gmm_k < 1 {
            return bad("gmm_k must be >= 1");
        }
        if self.eval_segments_per_tier < 1 || self.histogram_bins < 1 {
            return bad("eval_segments_per_tier and histogram_bins must be >= 1");
        }
        let enc = self.encoder();
        enc.validate_shape()?;
        if enc.batch_size == 0 || !(enc.learning_rate > 0.0) {
            return bad("batch_size and learning_rate must be positive");
        }
        self.critic().validate()?;
        Ok(())
    }
}
