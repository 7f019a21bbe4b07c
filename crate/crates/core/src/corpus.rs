//! Demonstration corpora: tiers, trajectories, validation and the
//! familiar / unseen split protocols.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Ordinal quality rank; 0 is the worst tier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tier(pub u32);

impl Tier {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A tier together with its display name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QualityTier {
    pub rank: Tier,
    pub name: String,
}

/// Strictly ordered list of tier names, worst first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TierLadder {
    names: Vec<String>,
}

impl TierLadder {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::InvalidLadder(format!(
                "at least 2 tiers required, got {}",
                names.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::InvalidLadder("empty tier name".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidLadder(format!("duplicate tier `{n}`")));
            }
        }
        Ok(TierLadder { names })
    }

    /// `bad` < `okay` < `good`.
    pub fn default_ladder() -> Self {
        TierLadder {
            names: ["bad", "okay", "good"].iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn top(&self) -> Tier {
        Tier(self.names.len() as u32 - 1)
    }

    pub fn tiers(&self) -> impl DoubleEndedIterator<Item = Tier> + ExactSizeIterator {
        (0..self.names.len() as u32).map(Tier)
    }

    pub fn contains(&self, tier: Tier) -> bool {
        tier.index() < self.names.len()
    }

    pub fn name(&self, tier: Tier) -> &str {
        &self.names[tier.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tier(&self, name: &str) -> Result<Tier> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| Tier(i as u32))
            .ok_or_else(|| Error::UnknownTier(name.to_string()))
    }

    pub fn quality_tier(&self, tier: Tier) -> QualityTier {
        QualityTier {
            rank: tier,
            name: self.name(tier).to_string(),
        }
    }

    /// All (better, worse) pairs, best pairs first.
    pub fn ordered_pairs(&self) -> Vec<(Tier, Tier)> {
        let mut out = Vec::new();
        for hi in self.tiers().rev() {
            for lo in self.tiers().rev().filter(|&t| t < hi) {
                out.push((hi, lo));
            }
        }
        out
    }
}

impl TryFrom<Vec<String>> for TierLadder {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        TierLadder::new(v)
    }
}

impl From<TierLadder> for Vec<String> {
    fn from(l: TierLadder) -> Self {
        l.names
    }
}

/// One demonstration: a variable-length sequence of observation vectors
/// stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    id: String,
    demonstrator_id: String,
    label: Option<Tier>,
    obs_dim: usize,
    observations: Vec<f64>,
}

impl Trajectory {
    pub fn new(
        id: impl Into<String>,
        demonstrator_id: impl Into<String>,
        label: Option<Tier>,
        steps: &[Vec<f64>],
    ) -> Result<Self> {
        let id = id.into();
        let obs_dim = steps.first().map_or(0, Vec::len);
        let mut observations = Vec::with_capacity(obs_dim * steps.len());
        for (step, row) in steps.iter().enumerate() {
            if row.len() != obs_dim {
                return Err(Error::DimensionMismatch {
                    id,
                    step,
                    expected: obs_dim,
                    got: row.len(),
                });
            }
            observations.extend_from_slice(row);
        }
        Self::from_flat(id, demonstrator_id, label, obs_dim, observations)
    }

    pub fn from_flat(
        id: impl Into<String>,
        demonstrator_id: impl Into<String>,
        label: Option<Tier>,
        obs_dim: usize,
        observations: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if obs_dim == 0 || observations.len() % obs_dim != 0 {
            return Err(Error::DimensionMismatch {
                id,
                step: 0,
                expected: obs_dim,
                got: observations.len(),
            });
        }
        if observations.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(id));
        }
        Ok(Trajectory {
            id,
            demonstrator_id: demonstrator_id.into(),
            label,
            obs_dim,
            observations,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn demonstrator_id(&self) -> &str {
        &self.demonstrator_id
    }

    pub fn label(&self) -> Option<Tier> {
        self.label
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    /// Number of steps, `L_τ`.
    pub fn len(&self) -> usize {
        self.observations.len() / self.obs_dim
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn step(&self, t: usize) -> &[f64] {
        &self.observations[t * self.obs_dim..(t + 1) * self.obs_dim]
    }

    pub fn steps(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.observations.chunks_exact(self.obs_dim)
    }

    pub fn flat(&self) -> &[f64] {
        &self.observations
    }

    pub fn without_label(&self) -> Trajectory {
        Trajectory {
            label: None,
            ..self.clone()
        }
    }

    pub(crate) fn labeled(&self) -> Result<Tier> {
        self.label.ok_or_else(|| Error::MissingLabel(self.id.clone()))
    }
}

/// A validated collection of trajectories sharing `obs_dim` and a tier ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    obs_dim: usize,
    ladder: TierLadder,
    trajectories: Vec<Trajectory>,
}

impl Corpus {
    pub fn new(obs_dim: usize, ladder: TierLadder, trajectories: Vec<Trajectory>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for tr in &trajectories {
            if tr.obs_dim != obs_dim {
                return Err(Error::DimensionMismatch {
                    id: tr.id.clone(),
                    step: 0,
                    expected: obs_dim,
                    got: tr.obs_dim,
                });
            }
            if let Some(l) = tr.label {
                if !ladder.contains(l) {
                    return Err(Error::UnknownTier(format!("rank {}", l.0)));
                }
            }
            if !ids.insert(tr.id.as_str()) {
                return Err(Error::Config(format!("duplicate trajectory id `{}`", tr.id)));
            }
        }
        Ok(Corpus {
            obs_dim,
            ladder,
            trajectories,
        })
    }

    pub fn empty(ladder: TierLadder) -> Self {
        Corpus {
            obs_dim: 0,
            ladder,
            trajectories: Vec::new(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn ladder(&self) -> &TierLadder {
        &self.ladder
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.id == id)
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.trajectories.iter().all(|t| t.label.is_some())
    }

    /// Fails unless every trajectory carries a label.
    pub fn require_labeled(&self) -> Result<()> {
        match self.trajectories.iter().find(|t| t.label.is_none()) {
            Some(t) => Err(Error::MissingLabel(t.id.clone())),
            None => Ok(()),
        }
    }

    /// Fails on the first trajectory shorter than `min_len`.
    pub fn require_min_len(&self, min_len: usize) -> Result<()> {
        match self.trajectories.iter().find(|t| t.len() < min_len) {
            Some(t) => Err(Error::TrajectoryTooShort {
                id: t.id.clone(),
                len: t.len(),
                needed: min_len,
            }),
            None => Ok(()),
        }
    }

    /// Trajectory indices grouped by label, one entry per ladder tier.
    pub fn by_tier(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.ladder.len()];
        for (i, t) in self.trajectories.iter().enumerate() {
            if let Some(l) = t.label {
                out[l.index()].push(i);
            }
        }
        out
    }

    pub fn demonstrators(&self) -> BTreeSet<&str> {
        self.trajectories.iter().map(|t| t.demonstrator_id.as_str()).collect()
    }

    /// Copy with every label removed.
    pub fn stripped(&self) -> Corpus {
        Corpus {
            obs_dim: self.obs_dim,
            ladder: self.ladder.clone(),
            trajectories: self.trajectories.iter().map(Trajectory::without_label).collect(),
        }
    }

    fn subset(&self, keep: impl Fn(usize) -> bool) -> Corpus {
        Corpus {
            obs_dim: self.obs_dim,
            ladder: self.ladder.clone(),
            trajectories: self
                .trajectories
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, t)| t.clone())
                .collect(),
        }
    }
}

/// The unknown half of a split. True labels are kept for evaluation only;
/// anything that trains or filters gets [`HeldOut::unlabeled`].
#[derive(Clone, Debug, PartialEq)]
pub struct HeldOut {
    labeled: Corpus,
}

impl HeldOut {
    pub fn new(labeled: Corpus) -> Self {
        HeldOut { labeled }
    }

    pub fn unlabeled(&self) -> Corpus {
        self.labeled.stripped()
    }

    pub fn labeled_for_evaluation(&self) -> &Corpus {
        &self.labeled
    }

    pub fn len(&self) -> usize {
        self.labeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labeled.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Every demonstrator contributes to both halves.
    Familiar,
    /// Demonstrators are partitioned between the halves.
    Unseen,
}

/// Split a labeled corpus into a training half and a held-out half.
pub fn split_corpus(
    corpus: &Corpus,
    mode: SplitMode,
    fraction: f64,
    seed: u64,
) -> Result<(Corpus, HeldOut)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction {fraction} outside (0,1)")));
    }
    corpus.require_labeled()?;
    let mut rng = rng::seeded(seed);
    let mut to_known = alloc::vec![false; corpus.len()];

    match mode {
        SplitMode::Familiar => {
            let mut cells: BTreeMap<(&str, Tier), Vec<usize>> = BTreeMap::new();
            for (i, t) in corpus.trajectories.iter().enumerate() {
                cells.entry((t.demonstrator_id.as_str(), t.labeled()?)).or_default().push(i);
            }
            if cells.is_empty() {
                return Err(Error::InfeasibleSplit("corpus is empty".into()));
            }
            for ((demo, tier), members) in cells.iter_mut() {
                if members.len() < 2 {
                    return Err(Error::InfeasibleSplit(format!(
                        "demonstrator `{demo}` has {} trajectory in tier {}",
                        members.len(),
                        corpus.ladder.name(*tier)
                    )));
                }
                members.shuffle(&mut rng);
                let take = libm::floor(fraction * members.len() as f64) as usize;
                for &i in &members[..take] {
                    to_known[i] = true;
                }
            }
        }
        SplitMode::Unseen => {
            for tier in corpus.ladder.tiers() {
                let demos: BTreeSet<&str> = corpus
                    .trajectories
                    .iter()
                    .filter(|t| t.label == Some(tier))
                    .map(|t| t.demonstrator_id.as_str())
                    .collect();
                if demos.len() < 2 {
                    return Err(Error::InfeasibleSplit(format!(
                        "tier {} has {} demonstrator(s), 2 required",
                        corpus.ladder.name(tier),
                        demos.len()
                    )));
                }
            }
            let mut demos: Vec<&str> = corpus.demonstrators().into_iter().collect();
            demos.shuffle(&mut rng);
            let take = (libm::floor(fraction * demos.len() as f64) as usize).clamp(1, demos.len() - 1);
            let known: BTreeSet<&str> = demos[..take].iter().copied().collect();
            for (i, t) in corpus.trajectories.iter().enumerate() {
                to_known[i] = known.contains(t.demonstrator_id.as_str());
            }
        }
    }

    let known = corpus.subset(|i| to_known[i]);
    let unknown = corpus.subset(|i| !to_known[i]);
    Ok((known, HeldOut::new(unknown)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn traj(id: &str, demo: &str, tier: u32, len: usize) -> Trajectory {
        let steps: Vec<Vec<f64>> = (0..len).map(|t| vec![t as f64, 0.0]).collect();
        Trajectory::new(id, demo, Some(Tier(tier)), &steps).unwrap()
    }

    fn grid(demos: usize, per_cell: usize) -> Corpus {
        let mut ts = Vec::new();
        for d in 0..demos {
            for tier in 0..3 {
                for k in 0..per_cell {
                    ts.push(traj(&format!("d{d}-{tier}-{k}"), &format!("d{d}"), tier, 4));
                }
            }
        }
        Corpus::new(2, TierLadder::default_ladder(), ts).unwrap()
    }

    #[test]
    fn ladder_validation() {
        assert!(TierLadder::new(["only"]).is_err());
        assert!(TierLadder::new(["a", "a"]).is_err());
        let l = TierLadder::default_ladder();
        assert_eq!(l.tier("good").unwrap(), Tier(2));
        assert_eq!(l.top(), Tier(2));
        assert!(matches!(l.tier("great"), Err(Error::UnknownTier(_))));
        assert_eq!(
            l.ordered_pairs(),
            vec![(Tier(2), Tier(1)), (Tier(2), Tier(0)), (Tier(1), Tier(0))]
        );
    }

    #[test]
    fn ragged_steps_rejected() {
        let err = Trajectory::new("x", "d", None, &[vec![1.0, 2.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { step: 1, .. }));
        let err = Trajectory::new("x", "d", None, &[vec![f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn corpus_checks_dims_and_ids() {
        let a = traj("a", "d", 0, 3);
        let b = Trajectory::new("b", "d", None, &[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(Corpus::new(2, TierLadder::default_ladder(), vec![a.clone(), b]).is_err());
        assert!(Corpus::new(2, TierLadder::default_ladder(), vec![a.clone(), a]).is_err());
    }

    #[test]
    fn familiar_split_halves_every_cell() {
        // 6 demonstrators x 3 tiers x 16, every cell split in half
        let c = grid(6, 16);
        let (known, unknown) = split_corpus(&c, SplitMode::Familiar, 0.5, 3).unwrap();
        assert_eq!(known.len(), 6 * 3 * 8);
        assert_eq!(unknown.len(), 6 * 3 * 8);
        assert_eq!(known.demonstrators().len(), 6);
        assert_eq!(unknown.labeled_for_evaluation().demonstrators().len(), 6);
    }

    #[test]
    fn unseen_split_is_disjoint() {
        let c = grid(6, 2);
        let (known, unknown) = split_corpus(&c, SplitMode::Unseen, 0.5, 11).unwrap();
        let a = known.demonstrators();
        let b = unknown.labeled_for_evaluation().demonstrators();
        assert_eq!(a.len(), 3);
        assert_eq!(b.len(), 3);
        assert!(a.is_disjoint(&b));
        assert!(!unknown.unlabeled().trajectories().iter().any(|t| t.label().is_some()));
    }

    #[test]
    fn infeasible_splits() {
        let c = grid(1, 2);
        assert!(matches!(
            split_corpus(&c, SplitMode::Unseen, 0.5, 0),
            Err(Error::InfeasibleSplit(_))
        ));
        let c = grid(2, 1);
        assert!(matches!(
            split_corpus(&c, SplitMode::Familiar, 0.5, 0),
            Err(Error::InfeasibleSplit(_))
        ));
    }

    #[test]
    fn split_is_deterministic() {
        let c = grid(4, 3);
        let a = split_corpus(&c, SplitMode::Familiar, 0.5, 9).unwrap();
        let b = split_corpus(&c, SplitMode::Familiar, 0.5, 9).unwrap();
        assert_eq!(a, b);
    }
}
