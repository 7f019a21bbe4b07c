//! Quality critic `Q: R^d -> R` trained on preference pairs in a frozen
//! latent space.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Tier};
use crate::encoder::{encode, EncoderConfig, EncoderModel};
use crate::error::{Error, Result};
use crate::nn::{self, Activation, Adam, AdamConfig, LayerSpec, Network, Port, Value};
use crate::rng;
use crate::sampling::{Sampler, Segment};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    pub hidden: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub label_noise: f64,
    /// Segments drawn and embedded once before training.
    pub num_segments: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        CriticConfig {
            hidden: 64,
            steps: 20_000,
            batch_size: 128,
            learning_rate: 1e-4,
            label_noise: 0.1,
            num_segments: 2_000,
        }
    }
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.num_segments == 0 {
            return Err(Error::Config("critic sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("critic learning_rate must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.label_noise) && self.label_noise != 0.5 {
            return Err(Error::Config("label_noise must lie in [0, 0.5]".into()));
        }
        Ok(())
    }

    fn layers(&self, latent_dim: usize) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Dense {
                input: latent_dim,
                output: self.hidden,
                activation: Activation::Tanh,
            },
            LayerSpec::Dense {
                input: self.hidden,
                output: 1,
                activation: Activation::Identity,
            },
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticModel {
    pub config: CriticConfig,
    pub latent_dim: usize,
    pub network: Network,
}

impl CriticModel {
    pub fn untrained(latent_dim: usize, config: CriticConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = rng::stream(seed, 10);
        let network = Network::new(Port::Vector(latent_dim), config.layers(latent_dim), &mut init)?;
        Ok(CriticModel {
            config,
            latent_dim,
            network,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        let got: Vec<LayerSpec> = self.network.layers().iter().map(|l| l.spec).collect();
        if got != self.config.layers(self.latent_dim) || self.network.input() != Port::Vector(self.latent_dim) {
            return Err(Error::Config("critic layers do not match its config".into()));
        }
        Ok(())
    }

    /// Score of one latent vector.
    pub fn score_latent(&self, z: &[f64]) -> Result<f64> {
        Ok(self.network.forward_vec(z)?[0])
    }
}

/// `Q(E(segment))`.
pub fn score(critic: &CriticModel, encoder: &EncoderModel, seg: &Segment) -> Result<f64> {
    if critic.latent_dim != encoder.latent_dim() {
        return Err(Error::ShapeMismatch {
            expected: critic.latent_dim,
            got: encoder.latent_dim(),
        });
    }
    critic.score_latent(&encode(encoder, seg)?)
}

/// Latents of pre-sampled segments, grouped by tier.
fn latent_pool(
    encoder: &EncoderModel,
    sampler: &Sampler<'_>,
    tiers: &[Tier],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut r = rng::stream(seed, 11);
    let top = tiers.iter().map(|t| t.index()).max().unwrap_or(0);
    let mut pool = vec![Vec::new(); top + 1];
    for i in 0..n {
        let tier = tiers[i % tiers.len()];
        let seg = sampler.segment_of_tier(tier, &mut r)?;
        pool[tier.index()].push(encode(encoder, &seg)?);
    }
    Ok(pool)
}

/// Fit the critic with the noisy ranking loss. The encoder is only read.
pub fn train_critic(
    encoder: &EncoderModel,
    known: &Corpus,
    config: &CriticConfig,
    seed: u64,
) -> Result<(CriticModel, Vec<f64>)> {
    config.validate()?;
    known.require_min_len(encoder.segments().length)?;
    let sampler = Sampler::new(known, *encoder.segments())?;
    let pairs = sampler.tier_pairs();
    if pairs.is_empty() {
        return Err(Error::InsufficientData("critic needs two populated tiers".into()));
    }
    let mut tiers: Vec<Tier> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    tiers.sort();
    tiers.dedup();
    let pool = latent_pool(encoder, &sampler, &tiers, config.num_segments.max(tiers.len()), seed)?;

    let mut critic = CriticModel::untrained(encoder.latent_dim(), *config, seed)?;
    let mut adam = Adam::new(&critic.network, AdamConfig::with_lr(config.learning_rate));
    let mut r = rng::stream(seed, 12);
    let mut trace = Vec::with_capacity(config.steps);
    let inv = 1.0 / config.batch_size as f64;
    for _ in 0..config.steps {
        critic.network.zero_grad();
        let mut total = 0.0;
        for _ in 0..config.batch_size {
            let (hi, lo) = *pairs.choose(&mut r).expect("non-empty");
            let zb = pool[hi.index()].choose(&mut r).expect("pooled");
            let zw = pool[lo.index()].choose(&mut r).expect("pooled");
            let (yb, tb) = critic.network.forward_train(Value::Vector(zb.clone()))?;
            let (yw, tw) = critic.network.forward_train(Value::Vector(zw.clone()))?;
            let sb = yb.into_vector().expect("scalar")[0];
            let sw = yw.into_vector().expect("scalar")[0];
            let (loss, gb, gw) = nn::ranking_loss_grad(sb, sw, config.label_noise);
            critic.network.backward(tb, Value::Vector(vec![gb]));
            critic.network.backward(tw, Value::Vector(vec![gw]));
            total += loss;
        }
        critic.network.scale_grad(inv);
        adam.step(&mut critic.network);
        trace.push(total * inv);
    }
    Ok((critic, trace))
}

/// Preference-learning baseline: encoder and critic trained jointly on
/// segment pairs with the ranking loss, without a contrastive stage.
/// Uses the encoder's step, batch and learning-rate settings.
pub fn train_preference_baseline(
    known: &Corpus,
    encoder_config: &EncoderConfig,
    critic_config: &CriticConfig,
    seed: u64,
) -> Result<(EncoderModel, CriticModel, Vec<f64>)> {
    encoder_config.validate_shape()?;
    critic_config.validate()?;
    if encoder_config.batch_size == 0 || !(encoder_config.learning_rate > 0.0) {
        return Err(Error::Config("batch_size and learning_rate must be positive".into()));
    }
    known.require_min_len(encoder_config.segments.length)?;
    let sampler = Sampler::new(known, encoder_config.segments)?;
    if sampler.tier_pairs().is_empty() {
        return Err(Error::InsufficientData("preference pairs need two populated tiers".into()));
    }
    let mut encoder = EncoderModel::untrained_on(known, *encoder_config, seed)?;
    let mut critic = CriticModel::untrained(encoder.latent_dim(), *critic_config, seed)?;
    let adam_cfg = AdamConfig::with_lr(encoder_config.learning_rate);
    let mut enc_adam = Adam::new(&encoder.network, adam_cfg);
    let mut critic_adam = Adam::new(&critic.network, adam_cfg);
    let mut r = rng::stream(seed, 13);
    let inv = 1.0 / encoder_config.batch_size as f64;
    let mut trace = Vec::with_capacity(encoder_config.steps);
    for _ in 0..encoder_config.steps {
        encoder.network.zero_grad();
        critic.network.zero_grad();
        let mut total = 0.0;
        for _ in 0..encoder_config.batch_size {
            let pair = sampler.preference_pair(&mut r)?;
            let mut grads = [0.0; 2];
            let mut tapes = Vec::with_capacity(2);
            let mut scores = [0.0; 2];
            for (i, seg) in [&pair.better, &pair.worse].into_iter().enumerate() {
                let (z, te) = encoder
                    .network
                    .forward_train(Value::Sequence(encoder.scaler.apply(&seg.steps)))?;
                let (y, tc) = critic.network.forward_train(z)?;
                scores[i] = y.into_vector().expect("scalar")[0];
                tapes.push((te, tc));
            }
            let (loss, gb, gw) = nn::ranking_loss_grad(scores[0], scores[1], critic_config.label_noise);
            grads[0] = gb;
            grads[1] = gw;
            for ((te, tc), g) in tapes.into_iter().zip(grads) {
                let dz = critic.network.backward(tc, Value::Vector(vec![g]));
                encoder.network.backward(te, dz);
            }
            total += loss;
        }
        encoder.network.scale_grad(inv);
        critic.network.scale_grad(inv);
        enc_adam.step(&mut encoder.network);
        critic_adam.step(&mut critic.network);
        trace.push(total * inv);
    }
    Ok((encoder, critic, trace))
}
