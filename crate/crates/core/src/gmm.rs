//! One Gaussian per quality tier over critic scores.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Tier};
use crate::critic::{score, CriticModel};
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::rng;
use crate::sampling::{sample_segment, segment_budget};

pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub tier: Tier,
    pub mean: f64,
    pub variance: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityGmm {
    /// Ordered by tier, worst first; one per ladder tier.
    pub components: Vec<Component>,
    /// Include mixture weights in the assignment posterior.
    pub weighted: bool,
}

/// Population mean and variance (two-pass).
pub fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

impl QualityGmm {
    /// Maximum-likelihood fit from per-tier score sets (index = tier rank).
    pub fn fit(scores_by_tier: &[Vec<f64>], weighted: bool) -> Result<Self> {
        if scores_by_tier.len() < 2 {
            return Err(Error::InsufficientData("at least two tiers required".into()));
        }
        let total: usize = scores_by_tier.iter().map(Vec::len).sum();
        let components = scores_by_tier
            .iter()
            .enumerate()
            .map(|(t, xs)| {
                if xs.len() < 2 {
                    return Err(Error::InsufficientData(format!(
                        "tier {t} has {} score(s), 2 required",
                        xs.len()
                    )));
                }
                if xs.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InsufficientData(format!("tier {t} has a non-finite score")));
                }
                let (mean, var) = mean_variance(xs);
                Ok(Component {
                    tier: Tier(t as u32),
                    mean,
                    variance: var.max(VARIANCE_FLOOR),
                    weight: xs.len() as f64 / total as f64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QualityGmm { components, weighted })
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.components.iter().map(|c| c.weight).sum();
        let ok = self.components.len() >= 2
            && (sum - 1.0).abs() < 1e-12
            && self.components.iter().enumerate().all(|(i, c)| {
                c.tier == Tier(i as u32)
                    && c.variance >= VARIANCE_FLOOR
                    && c.weight > 0.0
                    && c.weight <= 1.0
                    && c.mean.is_finite()
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Config("invalid mixture parameters".into()))
        }
    }

    pub fn top(&self) -> Tier {
        Tier(self.components.len() as u32 - 1)
    }

    /// `ln w_t + ln N(x; mu_t, sigma_t^2)`, without `ln w_t` when unweighted.
    pub fn log_score(&self, tier: Tier, x: f64) -> f64 {
        let c = &self.components[tier.index()];
        let d = x - c.mean;
        let ll = -0.5 * (libm::log(2.0 * core::f64::consts::PI * c.variance) + d * d / c.variance);
        if self.weighted {
            ll + libm::log(c.weight)
        } else {
            ll
        }
    }

    /// Most probable tier; exact ties go to the better tier.
    pub fn assign(&self, x: f64) -> Tier {
        let mut best = self.top();
        let mut best_score = self.log_score(best, x);
        for c in self.components.iter().rev().skip(1) {
            let s = self.log_score(c.tier, x);
            if s > best_score {
                best = c.tier;
                best_score = s;
            }
        }
        best
    }
}

/// Per-tier score sets from `segment_budget(L, L1, k)` windows of each
/// labeled trajectory.
pub fn tier_scores(
    encoder: &EncoderModel,
    critic: &CriticModel,
    known: &Corpus,
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    known.require_labeled()?;
    let cfg = encoder.segments();
    known.require_min_len(cfg.length)?;
    let mut out = alloc::vec![Vec::new(); known.ladder().len()];
    for t in known.trajectories() {
        let tier = t.label().expect("labeled");
        let mut r = rng::keyed(seed, t.id());
        for _ in 0..segment_budget(t.len(), cfg.length, k) {
            let seg = sample_segment(t, cfg.length, cfg, &mut r)?;
            out[tier.index()].push(score(critic, encoder, &seg)?);
        }
    }
    Ok(out)
}

pub fn fit_quality_gmm(
    encoder: &EncoderModel,
    critic: &CriticModel,
    known: &Corpus,
    k: usize,
    weighted: bool,
    seed: u64,
) -> Result<QualityGmm> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    QualityGmm::fit(&tier_scores(encoder, critic, known, k, seed)?, weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn two(mu: [f64; 2], var: [f64; 2], w: [f64; 2]) -> QualityGmm {
        QualityGmm {
            components: (0..2)
                .map(|i| Component {
                    tier: Tier(i as u32),
                    mean: mu[i],
                    variance: var[i],
                    weight: w[i],
                })
                .collect(),
            weighted: true,
        }
    }

    #[test]
    fn degenerate_and_two_point_fits() {
        let g = QualityGmm::fit(&[vec![3.0; 5], vec![0.0, 2.0]], true).unwrap();
        assert_eq!(g.components[0].mean, 3.0);
        assert_eq!(g.components[0].variance, VARIANCE_FLOOR);
        assert_eq!(g.components[1].mean, 1.0);
        assert_eq!(g.components[1].variance, 1.0);
        assert!((g.components[0].weight - 5.0 / 7.0).abs() < 1e-15);
        g.validate().unwrap();
    }

    #[test]
    fn too_few_scores() {
        assert!(matches!(
            QualityGmm::fit(&[vec![1.0], vec![0.0, 2.0]], true),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn assign_examples() {
        let g = two([0.0, 10.0], [1.0, 1.0], [0.5, 0.5]);
        assert_eq!(g.assign(10.0), Tier(1));
        assert_eq!(g.assign(0.0), Tier(0));
        let g = two([0.0, 2.0], [1.0, 1.0], [0.5, 0.5]);
        assert_eq!(g.assign(1.0), Tier(1));
    }

    #[test]
    fn weights_matter_only_when_weighted() {
        let mut g = two([0.0, 1.0], [1.0, 1.0], [0.9, 0.1]);
        assert_eq!(g.assign(0.6), Tier(0));
        g.weighted = false;
        assert_eq!(g.assign(0.6), Tier(1));
    }

    #[test]
    fn far_tails_stay_finite() {
        let g = two([0.0, 1.0], [1e-6, 4.0], [0.01, 0.99]);
        for x in [-200.0, -100.0, 100.0, 1e3] {
            assert!(g.log_score(Tier(0), x).is_finite());
            assert!(g.log_score(Tier(1), x).is_finite());
        }
        assert_eq!(g.assign(1e3), Tier(1));
    }
}
