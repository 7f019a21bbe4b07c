//! Contrastive segment encoder.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::nn::{self, Activation, Adam, AdamConfig, LayerSpec, Mat, Network, Port, Value};
use crate::rng::{self, Rng};
use crate::sampling::{time_warp, RegionSet, Sampler, Segment, SegmentConfig, Strategy, Triplet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Recurrent front-end pooled by attention with a learned CLS query.
    AttentionCls,
    /// Recurrent front-end, two dense layers, flatten, two dense layers.
    /// Needs every enabled segment length to be equal.
    Flatten,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub segments: SegmentConfig,
    pub s1: bool,
    pub s2_initial: bool,
    pub s2_final: bool,
    pub time_warp: bool,
    pub max_warp: f64,
    /// S1 triplets per S2 triplet inside a batch when both are enabled.
    pub s1_s2_ratio: f64,
    pub architecture: Architecture,
    pub hidden: usize,
    pub latent_dim: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub margin: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            segments: SegmentConfig::default(),
            s1: true,
            s2_initial: true,
            s2_final: true,
            time_warp: true,
            max_warp: 0.5,
            s1_s2_ratio: 1.0,
            architecture: Architecture::AttentionCls,
            hidden: 16,
            latent_dim: 12,
            steps: 20_000,
            batch_size: 128,
            learning_rate: 1e-4,
            margin: 1.0,
        }
    }
}

impl EncoderConfig {
    pub fn s2_regions(&self) -> RegionSet {
        RegionSet {
            initial: self.s2_initial,
            final_: self.s2_final,
        }
    }

    pub fn any_strategy(&self) -> bool {
        self.s1 || self.s2_initial || self.s2_final
    }

    /// Shape checks that do not depend on a corpus.
    pub fn validate_shape(&self) -> Result<()> {
        self.segments.validate()?;
        if self.hidden == 0 || self.latent_dim == 0 {
            return Err(Error::Config("hidden and latent_dim must be positive".into()));
        }
        if self.architecture == Architecture::Flatten {
            let len = self.segments.length;
            let bad = (self.s2_initial && self.segments.initial_length != len)
                || (self.s2_final && self.segments.final_length != len);
            if bad {
                return Err(Error::Config(
                    "flatten architecture needs all enabled segment lengths equal".into(),
                ));
            }
        }
        if !(self.max_warp >= 0.0) || !(self.s1_s2_ratio > 0.0) || !(self.margin >= 0.0) {
            return Err(Error::Config("max_warp, s1_s2_ratio or margin out of range".into()));
        }
        Ok(())
    }

    /// Full training-time validation.
    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        if !self.any_strategy() {
            return Err(Error::Config("no contrastive strategy enabled".into()));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config("batch_size and learning_rate must be positive".into()));
        }
        Ok(())
    }

    fn layers(&self, input_dim: usize) -> Vec<LayerSpec> {
        let h = self.hidden;
        let dense = |input, output, activation| LayerSpec::Dense {
            input,
            output,
            activation,
        };
        match self.architecture {
            Architecture::AttentionCls => vec![
                LayerSpec::Recurrent {
                    input: input_dim,
                    hidden: h,
                },
                LayerSpec::SelfAttentionCls { dim: h },
                dense(h, h, Activation::Tanh),
                dense(h, self.latent_dim, Activation::Identity),
            ],
            Architecture::Flatten => vec![
                LayerSpec::Recurrent {
                    input: input_dim,
                    hidden: h,
                },
                dense(h, h, Activation::Tanh),
                dense(h, h, Activation::Tanh),
                LayerSpec::Flatten {
                    steps: self.segments.length,
                    dim: h,
                },
                dense(self.segments.length * h, h, Activation::Tanh),
                dense(h, self.latent_dim, Activation::Identity),
            ],
        }
    }
}

/// Per-feature standardization of the observation columns. The position
/// channel, when present, passes through unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub mean: Vec<f64>,
    /// Reciprocal standard deviation; 1 for constant columns.
    pub inv_std: Vec<f64>,
}

impl InputScaler {
    pub fn identity(obs_dim: usize) -> Self {
        InputScaler {
            mean: vec![0.0; obs_dim],
            inv_std: vec![1.0; obs_dim],
        }
    }

    /// Statistics over every step of every trajectory.
    pub fn fit(corpus: &Corpus) -> Self {
        let d = corpus.obs_dim();
        let n = corpus.trajectories().iter().map(|t| t.len()).sum::<usize>();
        if n == 0 {
            return Self::identity(d);
        }
        let mut mean = vec![0.0; d];
        for s in corpus.trajectories().iter().flat_map(|t| t.steps()) {
            mean.iter_mut().zip(s).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for s in corpus.trajectories().iter().flat_map(|t| t.steps()) {
            for ((v, x), m) in var.iter_mut().zip(s).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let inv_std = var
            .iter()
            .map(|v| {
                let sd = libm::sqrt(v / n as f64);
                if sd > 1e-9 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        InputScaler { mean, inv_std }
    }

    pub fn apply(&self, steps: &Mat) -> Mat {
        let mut out = steps.clone();
        for r in 0..out.rows() {
            for ((x, m), k) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.inv_std) {
                *x = (*x - m) * k;
            }
        }
        out
    }
}

/// Frozen encoder `E: segment -> R^d` with the config it was trained under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    pub obs_dim: usize,
    pub scaler: InputScaler,
    pub network: Network,
}

impl EncoderModel {
    /// Freshly initialized weights, no training.
    pub fn untrained(obs_dim: usize, config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate_shape()?;
        let input_dim = config.segments.input_dim(obs_dim);
        let mut init = rng::stream(seed, 0);
        let network = Network::new(Port::Sequence(input_dim), config.layers(input_dim), &mut init)?;
        Ok(EncoderModel {
            config,
            obs_dim,
            scaler: InputScaler::identity(obs_dim),
            network,
        })
    }

    /// Untrained weights with the input scaler fitted to `corpus`.
    pub fn untrained_on(corpus: &Corpus, config: EncoderConfig, seed: u64) -> Result<Self> {
        let mut m = Self::untrained(corpus.obs_dim(), config, seed)?;
        m.scaler = InputScaler::fit(corpus);
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.config.segments.input_dim(self.obs_dim)
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn segments(&self) -> &SegmentConfig {
        &self.config.segments
    }

    /// Check a deserialized model against its own config echo.
    pub fn validate(&self) -> Result<()> {
        self.config.validate_shape()?;
        self.network.validate()?;
        let expected = self.config.layers(self.input_dim());
        let got: Vec<LayerSpec> = self.network.layers().iter().map(|l| l.spec).collect();
        if got != expected
            || self.network.input() != Port::Sequence(self.input_dim())
            || self.scaler.mean.len() != self.obs_dim
            || self.scaler.inv_std.len() != self.obs_dim
        {
            return Err(Error::Config("encoder layers do not match its config".into()));
        }
        Ok(())
    }
}

/// Latent vector of one segment.
pub fn encode(model: &EncoderModel, seg: &Segment) -> Result<Vec<f64>> {
    if seg.steps.cols() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            expected: model.input_dim(),
            got: seg.steps.cols(),
        });
    }
    model.network.forward_seq(&model.scaler.apply(&seg.steps))
}

fn draw_triplet(
    sampler: &Sampler<'_>,
    cfg: &EncoderConfig,
    strategy: Strategy,
    rng: &mut Rng,
) -> Result<Triplet> {
    match strategy {
        Strategy::S1 => sampler.triplet_s1(rng),
        Strategy::S2 => {
            let mut t = sampler.triplet_s2(cfg.s2_regions(), rng)?;
            if cfg.time_warp {
                t.anchor = time_warp(&t.anchor, cfg.max_warp, rng);
                t.positive = time_warp(&t.positive, cfg.max_warp, rng);
            }
            Ok(t)
        }
    }
}

/// Strategy for each slot of a batch.
fn batch_plan(cfg: &EncoderConfig) -> Vec<Strategy> {
    let s2 = cfg.s2_initial || cfg.s2_final;
    let n_s1 = match (cfg.s1, s2) {
        (true, false) => cfg.batch_size,
        (false, _) => 0,
        (true, true) => {
            let share = cfg.s1_s2_ratio / (1.0 + cfg.s1_s2_ratio);
            (libm::round(cfg.batch_size as f64 * share) as usize).min(cfg.batch_size)
        }
    };
    let mut plan = vec![Strategy::S1; n_s1];
    plan.resize(cfg.batch_size, Strategy::S2);
    plan
}

/// Mean triplet loss and its gradient accumulated into `net`.
fn triplet_step(net: &mut Network, scaler: &InputScaler, t: &Triplet, margin: f64) -> Result<f64> {
    let (za, ta) = net.forward_train(Value::Sequence(scaler.apply(&t.anchor.steps)))?;
    let (zp, tp) = net.forward_train(Value::Sequence(scaler.apply(&t.positive.steps)))?;
    let (zn, tn) = net.forward_train(Value::Sequence(scaler.apply(&t.negative.steps)))?;
    let (za, zp, zn) = (
        za.into_vector().expect("vector latent"),
        zp.into_vector().expect("vector latent"),
        zn.into_vector().expect("vector latent"),
    );
    let (loss, [ga, gp, gn]) = nn::triplet_margin_loss_grad(&za, &zp, &zn, margin);
    if loss > 0.0 {
        net.backward(ta, Value::Vector(ga));
        net.backward(tp, Value::Vector(gp));
        net.backward(tn, Value::Vector(gn));
    }
    Ok(loss)
}

/// Train on mixed S1/S2 triplets. Returns the model and per-step mean loss.
pub fn train_encoder(known: &Corpus, config: &EncoderConfig, seed: u64) -> Result<(EncoderModel, Vec<f64>)> {
    config.validate()?;
    known.require_labeled()?;
    let populated = known.by_tier().iter().filter(|m| !m.is_empty()).count();
    if populated < 2 {
        return Err(Error::InsufficientData(format!(
            "{populated} populated tier(s), 2 required"
        )));
    }
    known.require_min_len(config.segments.min_trajectory_len())?;

    let mut model = EncoderModel::untrained_on(known, *config, seed)?;
    let sampler = Sampler::new(known, config.segments)?;
    let mut draws = rng::stream(seed, 1);
    let mut adam = Adam::new(&model.network, AdamConfig::with_lr(config.learning_rate));
    let plan = batch_plan(config);
    let mut trace = Vec::with_capacity(config.steps);

    for _ in 0..config.steps {
        model.network.zero_grad();
        let mut total = 0.0;
        for &strategy in &plan {
            let t = draw_triplet(&sampler, config, strategy, &mut draws)?;
            total += triplet_step(&mut model.network, &model.scaler, &t, config.margin)?;
        }
        let inv = 1.0 / plan.len() as f64;
        model.network.scale_grad(inv);
        adam.step(&mut model.network);
        trace.push(total * inv);
    }
    Ok((model, trace))
}
