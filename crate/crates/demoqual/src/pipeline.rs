//! In-memory stages shared by the commands and the experiment tests.

use demoqual_core::corpus::{split_corpus, Corpus, HeldOut};
use demoqual_core::critic::{train_critic, train_preference_baseline};
use demoqual_core::encoder::train_encoder;
use demoqual_core::filterpipe::{score_corpus, select_top, TrajectoryScoreReport};
use demoqual_core::gmm::fit_quality_gmm;
use demoqual_core::synthgen::{default_tier_params, demonstrator_profiles, generate, SynthConfig};

use crate::artifact::{Artifact, Lineage, Models};
use crate::config::RunConfig;
use crate::error::Result;

pub fn generate_labeled(cfg: &RunConfig) -> Result<Corpus> {
    let ladder = cfg.ladder()?;
    let params = default_tier_params(ladder.len());
    let synth = SynthConfig {
        profiles: demonstrator_profiles(cfg.n_demonstrators, &params, cfg.seed),
        ladder,
        per_tier_count: cfg.per_tier_count,
        obs_dim: cfg.obs_dim,
        seed: cfg.seed,
    };
    Ok(generate(&synth)?)
}

pub fn split(cfg: &RunConfig, corpus: &Corpus) -> Result<(Corpus, HeldOut)> {
    Ok(split_corpus(corpus, cfg.split_mode, cfg.split_fraction, cfg.seed)?)
}

pub struct Trained {
    pub models: Models,
    /// Named loss traces, one value per optimizer step.
    pub losses: Vec<(&'static str, Vec<f64>)>,
}

/// Encoder, critic and mixture in sequence. With no contrastive strategy
/// enabled, encoder and critic are trained jointly on preferences instead.
pub fn train(cfg: &RunConfig, known: &Corpus, corpus_hash: &str) -> Result<Trained> {
    let tiers = known.ladder().names().to_vec();
    let enc_cfg = cfg.encoder();
    let critic_cfg = cfg.critic();
    let (encoder, critic, losses) = if cfg.preference_only() {
        let (e, c, trace) = train_preference_baseline(known, &enc_cfg, &critic_cfg, cfg.seed)?;
        (e, c, vec![("preference", trace)])
    } else {
        let (e, enc_trace) = train_encoder(known, &enc_cfg, cfg.seed)?;
        let (c, critic_trace) = train_critic(&e, known, &critic_cfg, cfg.seed)?;
        (e, c, vec![("encoder", enc_trace), ("critic", critic_trace)])
    };
    let gmm = fit_quality_gmm(&encoder, &critic, known, cfg.gmm_k, cfg.gmm_weighted, cfg.seed)?;

    let corpus_in = Lineage::from([("corpus".to_string(), corpus_hash.to_string())]);
    let encoder = Artifact::new("encoder", tiers.clone(), cfg, corpus_in.clone(), encoder);
    let mut critic_in = corpus_in.clone();
    critic_in.insert("encoder".into(), encoder.content_hash.clone());
    let critic = Artifact::new("critic", tiers.clone(), cfg, critic_in.clone(), critic);
    let mut gmm_in = critic_in;
    gmm_in.insert("critic".into(), critic.content_hash.clone());
    let gmm = Artifact::new("gmm", tiers, cfg, gmm_in, gmm);
    let models = Models { encoder, critic, gmm };
    models.check()?;
    Ok(Trained { models, losses })
}

pub fn score(cfg: &RunConfig, models: &Models, unknown: &Corpus) -> Result<Vec<TrajectoryScoreReport>> {
    Ok(score_corpus(
        &models.encoder.model,
        &models.critic.model,
        &models.gmm.model,
        unknown,
        cfg.gmm_k,
        cfg.inference_sampling,
        cfg.seed,
    )?)
}

pub fn select(cfg: &RunConfig, reports: &[TrajectoryScoreReport]) -> Result<Vec<String>> {
    Ok(select_top(reports, cfg.top_k)?)
}
