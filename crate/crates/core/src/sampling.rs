//! Segment extraction, position encoding, contrastive triplets, preference
//! pairs and segment time warping.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Tier, Trajectory};
use crate::error::{Error, Result};
use crate::nn::Mat;
use crate::rng::Rng;

/// Segment lengths and input augmentation shared by every sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentConfig {
    /// Window length for tier-based sampling, scoring and the GMM.
    pub length: usize,
    pub initial_length: usize,
    pub final_length: usize,
    /// Append `t / T` to every observation.
    pub position_encoding: bool,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            length: 48,
            initial_length: 12,
            final_length: 6,
            position_encoding: true,
        }
    }
}

impl SegmentConfig {
    pub fn input_dim(&self, obs_dim: usize) -> usize {
        obs_dim + usize::from(self.position_encoding)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.initial_length == 0 || self.final_length == 0 {
            return Err(Error::Config("segment lengths must be positive".into()));
        }
        Ok(())
    }

    /// Shortest trajectory the samplers accept.
    pub fn min_trajectory_len(&self) -> usize {
        let longest = self.length.max(self.initial_length).max(self.final_length);
        let s2 = self.initial_length + self.final_length + self.initial_length.max(self.final_length);
        (2 * longest).max(s2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Initial,
    Final,
    Interior,
}

/// A contiguous, optionally position-encoded window of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub source_id: String,
    pub start: usize,
    pub region: Region,
    pub tier: Option<Tier>,
    pub steps: Mat,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.steps.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.rows() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Anchor and positive share a quality tier.
    S1,
    /// Anchor and positive share a trajectory region.
    S2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Triplet {
    pub anchor: Segment,
    pub positive: Segment,
    pub negative: Segment,
    pub strategy: Strategy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreferencePair {
    pub better: Segment,
    pub worse: Segment,
}

/// Observations with the normalized time `t / T` appended, `T = L_τ`.
pub fn augment_with_position(traj: &Trajectory) -> Mat {
    window_matrix(traj, 0, traj.len(), true)
}

fn window_matrix(traj: &Trajectory, start: usize, len: usize, position: bool) -> Mat {
    let d = traj.obs_dim();
    let cols = d + usize::from(position);
    let total = traj.len() as f64;
    let mut data = Vec::with_capacity(len * cols);
    for t in start..start + len {
        data.extend_from_slice(traj.step(t));
        if position {
            data.push(t as f64 / total);
        }
    }
    Mat::from_vec(len, cols, data).expect("window shape")
}

/// Window `[start, start + len)` with its region tag.
pub fn window(traj: &Trajectory, start: usize, len: usize, cfg: &SegmentConfig) -> Result<Segment> {
    if len == 0 || start + len > traj.len() {
        return Err(Error::TrajectoryTooShort {
            id: traj.id().into(),
            len: traj.len(),
            needed: start + len,
        });
    }
    let region = if start == 0 && len == cfg.initial_length {
        Region::Initial
    } else if start + len == traj.len() && len == cfg.final_length {
        Region::Final
    } else {
        Region::Interior
    };
    Ok(Segment {
        source_id: traj.id().into(),
        start,
        region,
        tier: traj.label(),
        steps: window_matrix(traj, start, len, cfg.position_encoding),
    })
}

/// Window with a uniformly drawn start in `[0, L_τ - len]`.
pub fn sample_segment(traj: &Trajectory, len: usize, cfg: &SegmentConfig, rng: &mut Rng) -> Result<Segment> {
    if traj.len() < len || len == 0 {
        return Err(Error::TrajectoryTooShort {
            id: traj.id().into(),
            len: traj.len(),
            needed: len,
        });
    }
    let start = rng.random_range(0..=traj.len() - len);
    window(traj, start, len, cfg)
}

/// `ceil(L / L1 * k)` segments per trajectory.
pub fn segment_budget(traj_len: usize, seg_len: usize, k: usize) -> usize {
    assert!(seg_len >= 1 && traj_len >= seg_len && k >= 1, "segment_budget preconditions");
    (traj_len * k).div_ceil(seg_len)
}

/// Resample a segment along time with a monotone piecewise-linear warp.
/// First and last steps are fixed; interior sample times move by at most
/// `max_warp` of a step (capped at half a step so the warp stays monotone).
pub fn time_warp(seg: &Segment, max_warp: f64, rng: &mut Rng) -> Segment {
    let n = seg.len();
    let cols = seg.steps.cols();
    let w = max_warp.clamp(0.0, 0.5);
    if n < 3 || w == 0.0 {
        return seg.clone();
    }
    let mut out = seg.steps.clone();
    for i in 1..n - 1 {
        let tau = (i as f64 + rng.random_range(-w..=w)).clamp(0.0, (n - 1) as f64);
        let lo = libm::floor(tau) as usize;
        let hi = (lo + 1).min(n - 1);
        let frac = tau - lo as f64;
        let (a, b) = (seg.steps.row(lo), seg.steps.row(hi));
        for (c, o) in out.row_mut(i).iter_mut().enumerate().take(cols) {
            *o = if frac == 0.0 { a[c] } else { a[c] + frac * (b[c] - a[c]) };
        }
    }
    Segment {
        steps: out,
        ..seg.clone()
    }
}

/// Which S2 regions may be drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSet {
    pub initial: bool,
    pub final_: bool,
}

impl RegionSet {
    pub const BOTH: RegionSet = RegionSet {
        initial: true,
        final_: true,
    };

    pub fn is_empty(&self) -> bool {
        !self.initial && !self.final_
    }
}

/// Draws triplets and preference pairs from a labeled corpus.
pub struct Sampler<'a> {
    corpus: &'a Corpus,
    cfg: SegmentConfig,
    by_tier: Vec<Vec<usize>>,
}

impl<'a> Sampler<'a> {
    pub fn new(corpus: &'a Corpus, cfg: SegmentConfig) -> Result<Self> {
        cfg.validate()?;
        corpus.require_labeled()?;
        Ok(Sampler {
            corpus,
            cfg,
            by_tier: corpus.by_tier(),
        })
    }

    pub fn config(&self) -> &SegmentConfig {
        &self.cfg
    }

    fn traj(&self, i: usize) -> &'a Trajectory {
        &self.corpus.trajectories()[i]
    }

    fn populated_tiers(&self) -> Vec<usize> {
        (0..self.by_tier.len()).filter(|&t| !self.by_tier[t].is_empty()).collect()
    }

    /// Anchor and positive from two trajectories of one tier, negative from
    /// another tier; all `length` steps.
    pub fn triplet_s1(&self, rng: &mut Rng) -> Result<Triplet> {
        let anchor_tiers: Vec<usize> =
            (0..self.by_tier.len()).filter(|&t| self.by_tier[t].len() >= 2).collect();
        let populated = self.populated_tiers();
        if anchor_tiers.is_empty() || populated.len() < 2 {
            return Err(Error::InsufficientData(
                "S1 needs two trajectories in one tier and one in another".into(),
            ));
        }
        let tier = *anchor_tiers.choose(rng).expect("non-empty");
        let others: Vec<usize> = populated.into_iter().filter(|&t| t != tier).collect();
        let neg_tier = *others.choose(rng).expect("non-empty");
        let members = &self.by_tier[tier];
        let mut pair = members.choose_multiple(rng, 2);
        let (ia, ip) = (*pair.next().expect("two"), *pair.next().expect("two"));
        let ineg = *self.by_tier[neg_tier].choose(rng).expect("non-empty");
        let len = self.cfg.length;
        Ok(Triplet {
            anchor: sample_segment(self.traj(ia), len, &self.cfg, rng)?,
            positive: sample_segment(self.traj(ip), len, &self.cfg, rng)?,
            negative: sample_segment(self.traj(ineg), len, &self.cfg, rng)?,
            strategy: Strategy::S1,
        })
    }

    /// Region-aligned anchor/positive from two trajectories of arbitrary
    /// tiers; a negative of the same length that overlaps neither the
    /// initial nor the final window of its trajectory.
    pub fn triplet_s2(&self, regions: RegionSet, rng: &mut Rng) -> Result<Triplet> {
        let n = self.corpus.len();
        if n < 2 || self.populated_tiers().len() < 2 {
            return Err(Error::InsufficientData("S2 needs two labeled tiers".into()));
        }
        if regions.is_empty() {
            return Err(Error::Config("no S2 region enabled".into()));
        }
        let region = match (regions.initial, regions.final_) {
            (true, true) => {
                if rng.random_bool(0.5) {
                    Region::Initial
                } else {
                    Region::Final
                }
            }
            (true, false) => Region::Initial,
            _ => Region::Final,
        };
        let len = match region {
            Region::Initial => self.cfg.initial_length,
            _ => self.cfg.final_length,
        };
        let ia = rng.random_range(0..n);
        let mut ip = rng.random_range(0..n - 1);
        if ip >= ia {
            ip += 1;
        }
        let aligned = |t: &Trajectory| -> Result<Segment> {
            if t.len() < self.cfg.initial_length + self.cfg.final_length {
                return Err(Error::TrajectoryTooShort {
                    id: t.id().into(),
                    len: t.len(),
                    needed: self.cfg.initial_length + self.cfg.final_length,
                });
            }
            match region {
                Region::Initial => window(t, 0, len, &self.cfg),
                _ => window(t, t.len() - len, len, &self.cfg),
            }
        };
        let anchor = aligned(self.traj(ia))?;
        let positive = aligned(self.traj(ip))?;
        let neg_src = self.traj(rng.random_range(0..n));
        let (lo, tail) = (self.cfg.initial_length, self.cfg.final_length);
        if neg_src.len() < lo + len + tail {
            return Err(Error::TrajectoryTooShort {
                id: neg_src.id().into(),
                len: neg_src.len(),
                needed: lo + len + tail,
            });
        }
        // disjoint from both the initial and the final window
        let start = rng.random_range(lo..=neg_src.len() - len - tail);
        let mut negative = window(neg_src, start, len, &self.cfg)?;
        negative.region = Region::Interior;
        Ok(Triplet {
            anchor,
            positive,
            negative,
            strategy: Strategy::S2,
        })
    }

    /// One segment from each side of a uniformly chosen ordered tier pair.
    pub fn preference_pair(&self, rng: &mut Rng) -> Result<PreferencePair> {
        let pairs = self.tier_pairs();
        if pairs.is_empty() {
            return Err(Error::InsufficientData("preference pairs need two tiers".into()));
        }
        let (hi, lo) = *pairs.choose(rng).expect("non-empty");
        let len = self.cfg.length;
        let ib = *self.by_tier[hi.index()].choose(rng).expect("populated");
        let iw = *self.by_tier[lo.index()].choose(rng).expect("populated");
        Ok(PreferencePair {
            better: sample_segment(self.traj(ib), len, &self.cfg, rng)?,
            worse: sample_segment(self.traj(iw), len, &self.cfg, rng)?,
        })
    }

    /// Ordered (better, worse) pairs of populated tiers.
    pub fn tier_pairs(&self) -> Vec<(Tier, Tier)> {
        self.corpus
            .ladder()
            .ordered_pairs()
            .into_iter()
            .filter(|(a, b)| !self.by_tier[a.index()].is_empty() && !self.by_tier[b.index()].is_empty())
            .collect()
    }

    /// A random window of a random trajectory of `tier`.
    pub fn segment_of_tier(&self, tier: Tier, rng: &mut Rng) -> Result<Segment> {
        let members = self
            .by_tier
            .get(tier.index())
            .filter(|m| !m.is_empty())
            .ok_or_else(|| Error::InsufficientData(format!("no trajectory in tier {}", tier.0)))?;
        let i = *members.choose(rng).expect("non-empty");
        sample_segment(self.traj(i), self.cfg.length, &self.cfg, rng)
    }
}

/// Convenience wrapper over [`Sampler::triplet_s1`].
pub fn sample_triplet_s1(known: &Corpus, cfg: &SegmentConfig, rng: &mut Rng) -> Result<Triplet> {
    Sampler::new(known, *cfg)?.triplet_s1(rng)
}

/// Convenience wrapper over [`Sampler::triplet_s2`] with both regions enabled.
pub fn sample_triplet_s2(known: &Corpus, cfg: &SegmentConfig, rng: &mut Rng) -> Result<Triplet> {
    Sampler::new(known, *cfg)?.triplet_s2(RegionSet::BOTH, rng)
}
