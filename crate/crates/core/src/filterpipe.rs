//! Scoring of unlabeled trajectories and top-k selection.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Tier, Trajectory};
use crate::critic::{score, CriticModel};
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::gmm::{mean_variance, QualityGmm};
use crate::rng;
use crate::sampling::{sample_segment, segment_budget, window};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceSampling {
    /// Seeded uniform starts, as during training.
    #[default]
    Uniform,
    /// Evenly spaced starts covering the whole trajectory.
    Stride,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScoreReport {
    pub id: String,
    pub segment_scores: Vec<f64>,
    pub assignments: Vec<Tier>,
    pub good_fraction: f64,
    pub score_mean: f64,
    pub score_variance: f64,
}

impl TrajectoryScoreReport {
    pub fn from_scores(id: &str, scores: Vec<f64>, gmm: &QualityGmm) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyInput);
        }
        let assignments: Vec<Tier> = scores.iter().map(|&s| gmm.assign(s)).collect();
        let top = gmm.top();
        let good = assignments.iter().filter(|&&t| t == top).count();
        let (score_mean, score_variance) = mean_variance(&scores);
        Ok(TrajectoryScoreReport {
            id: id.into(),
            good_fraction: good as f64 / scores.len() as f64,
            segment_scores: scores,
            assignments,
            score_mean,
            score_variance,
        })
    }
}

/// `n` starts spread evenly over `[0, max_start]`.
fn stride_starts(max_start: usize, n: usize) -> impl Iterator<Item = usize> {
    (0..n).map(move |i| if n == 1 { 0 } else { (i * max_start + (n - 1) / 2) / (n - 1) })
}

pub fn score_trajectory(
    encoder: &EncoderModel,
    critic: &CriticModel,
    gmm: &QualityGmm,
    traj: &Trajectory,
    k: usize,
    sampling: InferenceSampling,
    seed: u64,
) -> Result<TrajectoryScoreReport> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let cfg = encoder.segments();
    let len = cfg.length;
    if traj.len() < len {
        return Err(Error::TrajectoryTooShort {
            id: traj.id().into(),
            len: traj.len(),
            needed: len,
        });
    }
    let n = segment_budget(traj.len(), len, k);
    let mut scores = Vec::with_capacity(n);
    match sampling {
        InferenceSampling::Uniform => {
            let mut r = rng::keyed(seed, traj.id());
            for _ in 0..n {
                scores.push(score(critic, encoder, &sample_segment(traj, len, cfg, &mut r)?)?);
            }
        }
        InferenceSampling::Stride => {
            for start in stride_starts(traj.len() - len, n) {
                scores.push(score(critic, encoder, &window(traj, start, len, cfg)?)?);
            }
        }
    }
    TrajectoryScoreReport::from_scores(traj.id(), scores, gmm)
}

pub fn score_corpus(
    encoder: &EncoderModel,
    critic: &CriticModel,
    gmm: &QualityGmm,
    unknown: &Corpus,
    k: usize,
    sampling: InferenceSampling,
    seed: u64,
) -> Result<Vec<TrajectoryScoreReport>> {
    if gmm.components.len() != unknown.ladder().len() {
        return Err(Error::ShapeMismatch {
            expected: unknown.ladder().len(),
            got: gmm.components.len(),
        });
    }
    unknown
        .trajectories()
        .iter()
        .map(|t| score_trajectory(encoder, critic, gmm, t, k, sampling, seed))
        .collect()
}

/// Total order: good fraction desc, mean desc, variance asc, id asc.
pub fn rank_order(a: &TrajectoryScoreReport, b: &TrajectoryScoreReport) -> Ordering {
    b.good_fraction
        .total_cmp(&a.good_fraction)
        .then(b.score_mean.total_cmp(&a.score_mean))
        .then(a.score_variance.total_cmp(&b.score_variance))
        .then_with(|| a.id.cmp(&b.id))
}

pub fn select_top(reports: &[TrajectoryScoreReport], top_k: usize) -> Result<Vec<String>> {
    if top_k > reports.len() {
        return Err(Error::Config(alloc::format!(
            "top_k {top_k} exceeds {} candidates",
            reports.len()
        )));
    }
    let mut order: Vec<&TrajectoryScoreReport> = reports.iter().collect();
    order.sort_by(|a, b| rank_order(a, b));
    Ok(order.into_iter().take(top_k).map(|r| r.id.clone()).collect())
}
