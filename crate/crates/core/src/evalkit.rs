//! Separability, selection confusion and score histograms.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Tier};
use crate::critic::{score, CriticModel};
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::gmm::mean_variance;
use crate::rng;
use crate::sampling::Sampler;

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Exact 1-Wasserstein distance between two empirical distributions.
///
/// Walks the merged quantile breakpoints `i/n` and `j/m` on the common
/// grid `1/lcm(n, m)`, so interval widths are integers.
pub fn wasserstein_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (xs, ys) = (sorted(xs), sorted(ys));
    let (n, m) = (xs.len(), ys.len());
    let l = n / gcd(n, m) * m;
    let (sx, sy) = (l / n, l / m);
    let (mut i, mut j, mut at) = (0usize, 0usize, 0usize);
    let mut acc = 0.0;
    while i < n && j < m {
        let next = ((i + 1) * sx).min((j + 1) * sy);
        acc += libm::fabs(xs[i] - ys[j]) * (next - at) as f64;
        at = next;
        if (i + 1) * sx == next {
            i += 1;
        }
        if (j + 1) * sy == next {
            j += 1;
        }
    }
    Ok(acc / l as f64)
}

/// Equal-size case: mean absolute difference of order statistics.
pub fn wasserstein_1d_equal(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptyInput);
    }
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let acc: f64 = sorted(xs)
        .iter()
        .zip(sorted(ys))
        .map(|(a, b)| libm::fabs(a - b))
        .sum();
    Ok(acc / xs.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub better: Tier,
    pub worse: Tier,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub pairs: Vec<PairDistance>,
    pub total: f64,
    pub normalized: bool,
}

impl SeparabilityReport {
    pub fn distance(&self, better: Tier, worse: Tier) -> Option<f64> {
        self.pairs
            .iter()
            .find(|p| p.better == better && p.worse == worse)
            .map(|p| p.distance)
    }
}

/// Shift and scale pooled scores to zero mean and unit variance.
/// Constant pools are only centered.
pub fn standardize(scores_by_tier: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let pooled: Vec<f64> = scores_by_tier.iter().flatten().copied().collect();
    if pooled.is_empty() {
        return scores_by_tier.to_vec();
    }
    let (mean, var) = mean_variance(&pooled);
    let sd = libm::sqrt(var);
    let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
    scores_by_tier
        .iter()
        .map(|xs| xs.iter().map(|x| (x - mean) * scale).collect())
        .collect()
}

/// Pairwise distances over every (better, worse) tier pair.
pub fn separability_from_scores(scores_by_tier: &[Vec<f64>], normalize: bool) -> Result<SeparabilityReport> {
    let populated = scores_by_tier.iter().filter(|s| !s.is_empty()).count();
    if populated < 2 {
        return Err(Error::InsufficientData("separability needs two scored tiers".into()));
    }
    let scores = if normalize {
        standardize(scores_by_tier)
    } else {
        scores_by_tier.to_vec()
    };
    let mut pairs = Vec::new();
    for hi in (0..scores.len()).rev() {
        for lo in (0..hi).rev() {
            if scores[hi].is_empty() || scores[lo].is_empty() {
                continue;
            }
            pairs.push(PairDistance {
                better: Tier(hi as u32),
                worse: Tier(lo as u32),
                distance: wasserstein_1d(&scores[hi], &scores[lo])?,
            });
        }
    }
    let total = pairs.iter().map(|p| p.distance).sum();
    Ok(SeparabilityReport {
        pairs,
        total,
        normalized: normalize,
    })
}

/// `n` critic scores per populated tier of a labeled corpus.
pub fn tier_score_samples(
    encoder: &EncoderModel,
    critic: &CriticModel,
    labeled: &Corpus,
    n_per_tier: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if n_per_tier == 0 {
        return Err(Error::Config("segments per tier must be positive".into()));
    }
    labeled.require_min_len(encoder.segments().length)?;
    let sampler = Sampler::new(labeled, *encoder.segments())?;
    let by_tier = labeled.by_tier();
    let mut out = vec![Vec::new(); labeled.ladder().len()];
    for tier in labeled.ladder().tiers() {
        if by_tier[tier.index()].is_empty() {
            continue;
        }
        let mut r = rng::stream(seed, 20 + u64::from(tier.0));
        for _ in 0..n_per_tier {
            out[tier.index()].push(score(critic, encoder, &sampler.segment_of_tier(tier, &mut r)?)?);
        }
    }
    Ok(out)
}

pub fn separability_report(
    encoder: &EncoderModel,
    critic: &CriticModel,
    labeled_unknown: &Corpus,
    n_per_tier: usize,
    normalize: bool,
    seed: u64,
) -> Result<SeparabilityReport> {
    let scores = tier_score_samples(encoder, critic, labeled_unknown, n_per_tier, seed)?;
    separability_from_scores(&scores, normalize)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfusion {
    /// Selected trajectories per true tier, worst first.
    pub counts: Vec<usize>,
    pub top_k: usize,
}

impl SelectionConfusion {
    pub fn top_fraction(&self) -> f64 {
        if self.top_k == 0 {
            return 0.0;
        }
        *self.counts.last().unwrap_or(&0) as f64 / self.top_k as f64
    }
}

pub fn selection_confusion(selected: &[String], labeled_unknown: &Corpus) -> Result<SelectionConfusion> {
    let mut seen = BTreeSet::new();
    let mut counts = vec![0; labeled_unknown.ladder().len()];
    for id in selected {
        if !seen.insert(id.as_str()) {
            return Err(Error::Config(alloc::format!("id `{id}` selected twice")));
        }
        let t = labeled_unknown.get(id).ok_or_else(|| Error::UnknownId(id.clone()))?;
        let tier = t.label().ok_or_else(|| Error::MissingLabel(id.clone()))?;
        counts[tier.index()] += 1;
    }
    Ok(SelectionConfusion {
        counts,
        top_k: selected.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges spanning the pooled range.
    pub edges: Vec<f64>,
    /// Per tier, `bins` counts.
    pub counts: Vec<Vec<usize>>,
}

/// Equal-width bins over the pooled `[min, max]`; the last bin is closed.
pub fn histogram(scores_by_tier: &[Vec<f64>], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Config("bins must be >= 1".into()));
    }
    let pooled = scores_by_tier.iter().flatten();
    let (lo, hi) = pooled.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::EmptyInput);
    }
    let width = hi - lo;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 / bins as f64 })
        .collect();
    let counts = scores_by_tier
        .iter()
        .map(|xs| {
            let mut c = vec![0; bins];
            for &x in xs {
                let b = if width > 0.0 {
                    (libm::floor((x - lo) / width * bins as f64) as usize).min(bins - 1)
                } else {
                    0
                };
                c[b] += 1;
            }
            c
        })
        .collect();
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn point_masses_and_identity() {
        assert_eq!(wasserstein_1d(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&[1.0, 3.0, 2.0], &[3.0, 2.0, 1.0]).unwrap(), 0.0);
        assert!((wasserstein_1d(&[0.0, 0.0, 1.0], &[1.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(wasserstein_1d(&[], &[1.0]), Err(Error::EmptyInput));
    }

    #[test]
    fn duplicated_support_is_same_distribution() {
        assert_eq!(wasserstein_1d(&[1.0, 2.0], &[1.0, 1.0, 2.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn constant_scores_separate_nothing() {
        let r = separability_from_scores(&[vec![0.3; 10], vec![0.3; 10], vec![0.3; 7]], true).unwrap();
        assert_eq!(r.total, 0.0);
        assert_eq!(r.pairs.len(), 3);
        assert_eq!((r.pairs[0].better, r.pairs[0].worse), (Tier(2), Tier(1)));
    }

    #[test]
    fn normalization_removes_scale() {
        let a = [vec![0.0, 1.0, 2.0], vec![3.0, 5.0, 4.0]];
        let b = [vec![0.0, 10.0, 20.0], vec![30.0, 50.0, 40.0]];
        let ra = separability_from_scores(&a, true).unwrap().total;
        let rb = separability_from_scores(&b, true).unwrap().total;
        assert!((ra - rb).abs() < 1e-12);
    }

    #[test]
    fn histogram_examples() {
        let h = histogram(&[vec![0.5]], 1).unwrap();
        assert_eq!(h.counts, [[1]]);
        assert_eq!(h.edges, [0.5, 0.5]);
        let data = [vec![-1.0, 0.0, 0.2], vec![3.0, 2.5]];
        let h = histogram(&data, 4).unwrap();
        assert_eq!(h.edges, [-1.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(h.counts, [vec![1, 2, 0, 0], vec![0, 0, 0, 2]]);
        assert!(histogram(&data, 0).is_err());
    }

    fn vals() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50i32..50, 1..12).prop_map(|v| v.into_iter().map(|x| x as f64 / 4.0).collect())
    }

    proptest! {
        #[test]
        fn metric_properties(a in vals(), b in vals(), c in vals()) {
            let ab = wasserstein_1d(&a, &b).unwrap();
            prop_assert_eq!(ab, wasserstein_1d(&b, &a).unwrap());
            prop_assert!(ab >= 0.0);
            let ac = wasserstein_1d(&a, &c).unwrap();
            let bc = wasserstein_1d(&b, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(wasserstein_1d(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn zero_iff_same_distribution(a in vals(), reps in 1usize..4) {
            let b: Vec<f64> = a.iter().flat_map(|&x| core::iter::repeat_n(x, reps)).collect();
            prop_assert_eq!(wasserstein_1d(&a, &b).unwrap(), 0.0);
            let mut c = b.clone();
            c[0] += 0.25;
            prop_assert!(wasserstein_1d(&a, &c).unwrap() > 0.0);
        }

        #[test]
        fn translation_invariant(a in vals(), b in vals(), shift in -64i32..64) {
            let c = shift as f64 / 8.0;
            let sa: Vec<f64> = a.iter().map(|x| x + c).collect();
            let sb: Vec<f64> = b.iter().map(|x| x + c).collect();
            let d0 = wasserstein_1d(&a, &b).unwrap();
            prop_assert!((wasserstein_1d(&sa, &sb).unwrap() - d0).abs() < 1e-12);
        }

        #[test]
        fn equal_size_paths_agree(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40)) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert_eq!(wasserstein_1d(&a, &b).unwrap(), wasserstein_1d_equal(&a, &b).unwrap());
        }

        #[test]
        fn histogram_conserves_counts(a in vals(), b in vals(), bins in 1usize..30) {
            let h = histogram(&[a.clone(), b.clone()], bins).unwrap();
            prop_assert_eq!(h.counts[0].iter().sum::<usize>(), a.len());
            prop_assert_eq!(h.counts[1].iter().sum::<usize>(), b.len());
            prop_assert_eq!(h.edges.len(), bins + 1);
        }
    }
}
