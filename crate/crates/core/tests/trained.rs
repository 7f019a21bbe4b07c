//! Statistical checks on models trained from the synthetic corpus, five seeds
//! each, summarized by the median over seeds.

use std::sync::OnceLock;

use demoqual_core::corpus::{split_corpus, Corpus, SplitMode, Tier};
use demoqual_core::critic::{score, train_critic, CriticConfig, CriticModel};
use demoqual_core::encoder::{encode, train_encoder, EncoderConfig, EncoderModel};
use demoqual_core::filterpipe::{score_trajectory, InferenceSampling};
use demoqual_core::gmm::{fit_quality_gmm, QualityGmm};
use demoqual_core::rng;
use demoqual_core::sampling::{Sampler, SegmentConfig};
use demoqual_core::synthgen::generate_corpus;

const SEEDS: u64 = 5;

struct Run {
    encoder: EncoderModel,
    critic: CriticModel,
    gmm: QualityGmm,
    trace: Vec<f64>,
    held: Corpus,
}

fn encoder_config() -> EncoderConfig {
    EncoderConfig {
        segments: SegmentConfig {
            position_encoding: false,
            ..SegmentConfig::default()
        },
        s2_initial: false,
        s2_final: false,
        time_warp: false,
        steps: 12_000,
        batch_size: 8,
        learning_rate: 3e-3,
        ..EncoderConfig::default()
    }
}

fn runs() -> &'static [Run] {
    static RUNS: OnceLock<Vec<Run>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (0..SEEDS)
            .map(|seed| {
                let corpus = generate_corpus(6, 20, 4, seed).unwrap();
                let (known, held) = split_corpus(&corpus, SplitMode::Unseen, 0.5, seed).unwrap();
                let (encoder, trace) = train_encoder(&known, &encoder_config(), seed).unwrap();
                let ccfg = CriticConfig {
                    steps: 600,
                    batch_size: 8,
                    learning_rate: 3e-3,
                    num_segments: 600,
                    ..CriticConfig::default()
                };
                let (critic, _) = train_critic(&encoder, &known, &ccfg, seed).unwrap();
                let gmm = fit_quality_gmm(&encoder, &critic, &known, 2, true, seed).unwrap();
                Run {
                    encoder,
                    critic,
                    gmm,
                    trace,
                    held: held.labeled_for_evaluation().clone(),
                }
            })
            .collect()
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn triplet_loss_decreases() {
    let improved = runs()
        .iter()
        .filter(|r| {
            let k = r.trace.len() / 10;
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            mean(&r.trace[r.trace.len() - k..]) < mean(&r.trace[..k])
        })
        .count();
    assert!(improved >= 4, "{improved}/5 seeds improved");
}

#[test]
fn held_out_triplets_are_satisfied() {
    let mut rates = Vec::new();
    let mut good_gaps = Vec::new();
    for r in runs() {
        let sampler = Sampler::new(&r.held, *r.encoder.segments()).unwrap();
        let mut g = rng::seeded(77);
        let (mut ok, mut intra, mut inter, mut n_good) = (0, 0.0, 0.0, 0);
        for _ in 0..400 {
            let t = sampler.triplet_s1(&mut g).unwrap();
            let [a, p, n] = [&t.anchor, &t.positive, &t.negative].map(|s| encode(&r.encoder, s).unwrap());
            let (dp, dn) = (dist(&a, &p), dist(&a, &n));
            if dp < dn {
                ok += 1;
            }
            if t.anchor.tier == Some(Tier(2)) {
                intra += dp;
                inter += dn;
                n_good += 1;
            }
        }
        rates.push(ok as f64 / 400.0);
        good_gaps.push((inter - intra) / n_good as f64);
    }
    assert!(median(rates.clone()) >= 0.65, "{rates:?}");
    assert!(median(good_gaps.clone()) > 0.0, "{good_gaps:?}");
}

#[test]
fn critic_ranks_held_out_pairs() {
    let mut accs = Vec::new();
    let mut gaps = Vec::new();
    for r in runs() {
        let sampler = Sampler::new(&r.held, *r.encoder.segments()).unwrap();
        let mut g = rng::seeded(78);
        let mut ok = 0;
        for _ in 0..400 {
            let pair = sampler.preference_pair(&mut g).unwrap();
            if score(&r.critic, &r.encoder, &pair.better).unwrap() > score(&r.critic, &r.encoder, &pair.worse).unwrap()
            {
                ok += 1;
            }
        }
        accs.push(ok as f64 / 400.0);
        let mean_of = |tier: Tier, g: &mut rng::Rng| {
            (0..200).map(|_| score(&r.critic, &r.encoder, &sampler.segment_of_tier(tier, g).unwrap()).unwrap()).sum::<f64>()
                / 200.0
        };
        gaps.push(mean_of(Tier(2), &mut g) - mean_of(Tier(0), &mut g));
    }
    assert!(median(accs.clone()) >= 0.75, "{accs:?}");
    assert!(median(gaps.clone()) > 0.0, "{gaps:?}");
}

#[test]
fn mixture_means_follow_tiers() {
    let ordered: Vec<f64> = runs()
        .iter()
        .map(|r| {
            let m: Vec<f64> = r.gmm.components.iter().map(|c| c.mean).collect();
            f64::from(u8::from(m[2] > m[1] && m[1] > m[0]))
        })
        .collect();
    assert!(median(ordered.clone()) == 1.0, "{ordered:?}");
}

#[test]
fn good_trajectories_get_more_good_segments() {
    let mut diffs = Vec::new();
    for (seed, r) in runs().iter().enumerate() {
        let mut per_demo = Vec::new();
        for demo in r.held.demonstrators() {
            let frac = |tier: Tier| {
                let ts: Vec<_> =
                    r.held.trajectories().iter().filter(|t| t.demonstrator_id() == demo && t.label() == Some(tier)).collect();
                ts.iter()
                    .map(|t| {
                        score_trajectory(&r.encoder, &r.critic, &r.gmm, t, 2, InferenceSampling::Uniform, seed as u64)
                            .unwrap()
                            .good_fraction
                    })
                    .sum::<f64>()
                    / ts.len() as f64
            };
            per_demo.push(frac(Tier(2)) - frac(Tier(0)));
        }
        diffs.push(per_demo.iter().sum::<f64>() / per_demo.len() as f64);
    }
    assert!(median(diffs.clone()) > 0.0, "{diffs:?}");
}
