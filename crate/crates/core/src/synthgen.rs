//! Synthetic reach -> grasp -> place demonstrations in the plane.
//!
//! Each trajectory runs through five phases:
//!
//! 1. start-up: accelerate away from the start pose (clean),
//! 2. reach: free motion to the object (quality effects),
//! 3. grasp: dwell on the object (clean),
//! 4. transport: free motion towards the goal (quality effects),
//! 5. place: straight decelerating approach and settle on the goal (clean).
//!
//! Demonstrator style (curvature, detour side, speed) shapes every phase.
//! Tier quality (jitter, detours, pauses, overshoot) only touches the two
//! free-motion phases, so every demonstration succeeds and the opening and
//! closing windows look alike across tiers.
//!
//! Observation layout: `[x, y, object_x - x, object_y - y, 0...]`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Tier, TierLadder, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

type P = [f64; 2];

pub const START: P = [0.0, 0.0];
pub const OBJECT: P = [4.0, 1.0];
pub const GOAL: P = [0.8, 3.6];
/// Demonstrations end within this distance of [`GOAL`].
pub const GOAL_RADIUS: f64 = 0.05;

const STARTUP_STEPS: usize = 14;
const GRASP_STEPS: usize = 8;
const PLACE_APPROACH: f64 = 0.6;
const PLACE_DWELL: usize = 4;
const GRIP_OFFSET: P = [0.0, -0.1];
const JITTER_CORRELATION: f64 = 0.6;
const JITTER_TAPER: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityParams {
    /// Stationary std of the correlated position noise.
    pub jitter_std: f64,
    /// Per free-motion phase probability of swinging out to a side waypoint.
    pub detour_prob: f64,
    /// Per free-motion phase probability of stopping for a while.
    pub pause_prob: f64,
    /// Overshoot past each target, as a fraction of a fixed reference distance.
    pub overshoot_gain: f64,
}

impl QualityParams {
    pub const CLEAN: QualityParams = QualityParams {
        jitter_std: 0.0,
        detour_prob: 0.0,
        pause_prob: 0.0,
        overshoot_gain: 0.0,
    };

    fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(self.jitter_std >= 0.0
            && self.overshoot_gain >= 0.0
            && prob(self.detour_prob)
            && prob(self.pause_prob))
        {
            return Err(Error::Config(format!("invalid quality parameters {self:?}")));
        }
        Ok(())
    }
}

/// Tier knobs worst first: bad / okay / good for the default ladder, linear
/// interpolation between the bad and good settings for other ladder sizes.
pub fn default_tier_params(tiers: usize) -> Vec<QualityParams> {
    const BAD: [f64; 4] = [0.08, 0.5, 0.3, 0.5];
    const OKAY: [f64; 4] = [0.04, 0.2, 0.1, 0.2];
    const GOOD: [f64; 4] = [0.01, 0.0, 0.0, 0.0];
    let make = |v: [f64; 4]| QualityParams {
        jitter_std: v[0],
        detour_prob: v[1],
        pause_prob: v[2],
        overshoot_gain: v[3],
    };
    if tiers == 3 {
        return vec![make(BAD), make(OKAY), make(GOOD)];
    }
    (0..tiers)
        .map(|i| {
            let f = if tiers > 1 { i as f64 / (tiers - 1) as f64 } else { 1.0 };
            let mut v = [0.0; 4];
            for k in 0..4 {
                v[k] = BAD[k] + f * (GOOD[k] - BAD[k]);
            }
            make(v)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Style {
    /// Lateral bow of free motions relative to their length.
    pub approach_curvature: f64,
    pub preferred_detour_side: Side,
    /// Distance covered per step while moving.
    pub base_speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemonstratorProfile {
    pub id: String,
    pub style: Style,
    /// Indexed by tier rank.
    pub tier_params: Vec<QualityParams>,
}

impl DemonstratorProfile {
    pub fn validate(&self, ladder: &TierLadder) -> Result<()> {
        if !(self.style.base_speed > 0.0) {
            return Err(Error::Config(format!("demonstrator {}: base_speed must be > 0", self.id)));
        }
        if self.tier_params.len() != ladder.len() {
            return Err(Error::Config(format!(
                "demonstrator {}: {} tier parameter sets for {} tiers",
                self.id,
                self.tier_params.len(),
                ladder.len()
            )));
        }
        self.tier_params.iter().try_for_each(QualityParams::validate)
    }
}

/// `n` demonstrators with alternating detour sides and spread-out styles.
pub fn demonstrator_profiles(n: usize, tier_params: &[QualityParams], seed: u64) -> Vec<DemonstratorProfile> {
    let mut r = rng::stream(seed, u64::MAX);
    (0..n)
        .map(|d| DemonstratorProfile {
            id: format!("d{d}"),
            style: Style {
                approach_curvature: r.random_range(0.1..0.3),
                preferred_detour_side: if d % 2 == 0 { Side::Left } else { Side::Right },
                base_speed: r.random_range(0.07..0.09),
            },
            tier_params: tier_params.to_vec(),
        })
        .collect()
}

fn sub(a: P, b: P) -> P {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: P) -> f64 {
    libm::hypot(a[0], a[1])
}

fn lerp(a: P, b: P, t: f64) -> P {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Left-hand unit normal of `a -> b`.
fn normal(a: P, b: P) -> P {
    let d = sub(b, a);
    let l = norm(d).max(1e-12);
    [-d[1] / l, d[0] / l]
}

/// Quadratic Bezier from `a` to `b` bowed sideways by `bend * |b - a|`.
fn bowed(a: P, b: P, bend: f64) -> Vec<P> {
    const N: usize = 64;
    let n = normal(a, b);
    let mid = lerp(a, b, 0.5);
    let len = norm(sub(b, a));
    let c = [mid[0] + bend * len * n[0], mid[1] + bend * len * n[1]];
    (0..=N)
        .map(|i| {
            let t = i as f64 / N as f64;
            lerp(lerp(a, c, t), lerp(c, b, t), t)
        })
        .collect()
}

/// Points along `poly` spaced by the successive entries of `steps`
/// (the last entry repeats), excluding the first vertex and always ending
/// exactly on the last.
fn walk(poly: &[P], mut step_len: impl FnMut(usize) -> f64) -> Vec<P> {
    let mut out = Vec::new();
    let mut seg = 0;
    let mut pos = poly[0];
    let mut k = 0;
    loop {
        let mut remaining = step_len(k);
        k += 1;
        loop {
            if seg + 1 >= poly.len() {
                out.push(*poly.last().expect("non-empty"));
                return out;
            }
            let to = poly[seg + 1];
            let d = norm(sub(to, pos));
            if d >= remaining {
                pos = lerp(pos, to, remaining / d);
                break;
            }
            remaining -= d;
            pos = to;
            seg += 1;
        }
        out.push(pos);
    }
}

/// One free-motion phase from `from` to `to`.
fn free_motion(from: P, to: P, style: &Style, q: &QualityParams, r: &mut Rng) -> Vec<P> {
    let side = style.preferred_detour_side.sign();
    let bend = style.approach_curvature * side;
    let mut poly = if r.random_bool(q.detour_prob) {
        let n = normal(from, to);
        let span = norm(sub(to, from));
        let at = r.random_range(0.35..0.65);
        let out = span * r.random_range(0.3..0.45) * side;
        let base = lerp(from, to, at);
        let wp = [base[0] + out * n[0], base[1] + out * n[1]];
        let mut p = bowed(from, wp, 0.5 * bend);
        p.extend(bowed(wp, to, 0.5 * bend).into_iter().skip(1));
        p
    } else {
        bowed(from, to, bend)
    };
    if q.overshoot_gain > 0.0 {
        let tail = poly[poly.len() - 2];
        let dir = sub(to, tail);
        let l = norm(dir).max(1e-12);
        let reach = q.overshoot_gain * 0.8 * r.random_range(0.5..1.0);
        let over = [to[0] + reach * dir[0] / l, to[1] + reach * dir[1] / l];
        poly.push(over);
        poly.push(to);
    }
    let mut pts = walk(&poly, |_| style.base_speed);
    if r.random_bool(q.pause_prob) && pts.len() > 2 {
        let at = r.random_range(1..pts.len() - 1);
        let hold = r.random_range(6..=16);
        let p = pts[at];
        pts.splice(at..at, core::iter::repeat_n(p, hold));
    }
    if q.jitter_std > 0.0 {
        let innov = Normal::new(0.0, q.jitter_std * libm::sqrt(1.0 - JITTER_CORRELATION * JITTER_CORRELATION))
            .expect("finite std");
        let n = pts.len();
        let mut e = [0.0, 0.0];
        for (i, p) in pts.iter_mut().enumerate() {
            e[0] = JITTER_CORRELATION * e[0] + innov.sample(r);
            e[1] = JITTER_CORRELATION * e[1] + innov.sample(r);
            let taper = ((i + 1) as f64 / JITTER_TAPER)
                .min((n - 1 - i) as f64 / JITTER_TAPER)
                .min(1.0);
            p[0] += taper * e[0];
            p[1] += taper * e[1];
        }
    }
    pts
}

/// Agent positions for one demonstration.
pub fn rollout(style: &Style, q: &QualityParams, r: &mut Rng) -> Vec<P> {
    let mut path = vec![START];
    // start-up: ramp speed along the clean reach curve
    let reach_curve = bowed(START, OBJECT, style.approach_curvature * style.preferred_detour_side.sign());
    let ramp = walk(&reach_curve, |k| style.base_speed * (k + 1) as f64 / (STARTUP_STEPS + 1) as f64);
    path.extend(ramp.into_iter().take(STARTUP_STEPS - 1));
    let here = *path.last().expect("non-empty");
    path.extend(free_motion(here, OBJECT, style, q, r));
    path.extend(core::iter::repeat_n(OBJECT, GRASP_STEPS));
    let approach_dir = sub(GOAL, OBJECT);
    let l = norm(approach_dir);
    let pre_place = [
        GOAL[0] - PLACE_APPROACH * approach_dir[0] / l,
        GOAL[1] - PLACE_APPROACH * approach_dir[1] / l,
    ];
    path.extend(free_motion(OBJECT, pre_place, style, q, r));
    // decelerate onto the goal
    let line = [pre_place, GOAL];
    let n_place = libm::ceil(2.0 * PLACE_APPROACH / style.base_speed) as usize;
    let place = walk(&line, |k| {
        let frac = 1.0 - k as f64 / n_place as f64;
        (2.0 * PLACE_APPROACH / n_place as f64 * frac).max(1e-3)
    });
    path.extend(place);
    path.extend(core::iter::repeat_n(GOAL, PLACE_DWELL));
    path
}

fn observations(path: &[P], obs_dim: usize) -> Vec<f64> {
    let grasp_at = path
        .iter()
        .position(|p| *p == OBJECT)
        .unwrap_or(path.len());
    let mut out = Vec::with_capacity(path.len() * obs_dim);
    for (t, p) in path.iter().enumerate() {
        let object = if t < grasp_at {
            OBJECT
        } else {
            [p[0] + GRIP_OFFSET[0], p[1] + GRIP_OFFSET[1]]
        };
        out.extend_from_slice(&[p[0], p[1], object[0] - p[0], object[1] - p[1]]);
        out.extend(core::iter::repeat_n(0.0, obs_dim - 4));
    }
    out
}

/// Total Euclidean length of a path.
pub fn path_length(path: &[P]) -> f64 {
    path.windows(2).map(|w| norm(sub(w[1], w[0]))).sum()
}

/// Generator settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub ladder: TierLadder,
    pub profiles: Vec<DemonstratorProfile>,
    pub per_tier_count: usize,
    pub obs_dim: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// Default ladder and tier knobs with generated demonstrator styles.
    pub fn standard(n_demonstrators: usize, per_tier_count: usize, obs_dim: usize, seed: u64) -> Self {
        let ladder = TierLadder::default_ladder();
        let params = default_tier_params(ladder.len());
        SynthConfig {
            profiles: demonstrator_profiles(n_demonstrators, &params, seed),
            ladder,
            per_tier_count,
            obs_dim,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.profiles.len() < 2 {
            return Err(Error::Config("at least 2 demonstrators required".into()));
        }
        if self.per_tier_count < 1 {
            return Err(Error::Config("per_tier_count must be >= 1".into()));
        }
        if self.obs_dim < 4 {
            return Err(Error::Config("obs_dim must be >= 4".into()));
        }
        self.profiles.iter().try_for_each(|p| p.validate(&self.ladder))
    }
}

/// Generate a labeled corpus: demonstrator-major, then tier, then index.
pub fn generate(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut trajectories = Vec::new();
    let mut index = 0u64;
    for profile in &cfg.profiles {
        for tier in cfg.ladder.tiers() {
            let q = &profile.tier_params[tier.index()];
            for k in 0..cfg.per_tier_count {
                let mut r = rng::stream(cfg.seed, index);
                index += 1;
                let path = rollout(&profile.style, q, &mut r);
                trajectories.push(Trajectory::from_flat(
                    format!("{}-{}-{k:03}", profile.id, cfg.ladder.name(tier)),
                    profile.id.clone(),
                    Some(tier),
                    cfg.obs_dim,
                    observations(&path, cfg.obs_dim),
                )?);
            }
        }
    }
    Corpus::new(cfg.obs_dim, cfg.ladder.clone(), trajectories)
}

/// Default-ladder corpus of `n_demonstrators * 3 * per_tier_count` trajectories.
pub fn generate_corpus(n_demonstrators: usize, per_tier_count: usize, obs_dim: usize, seed: u64) -> Result<Corpus> {
    generate(&SynthConfig::standard(n_demonstrators, per_tier_count, obs_dim, seed))
}

/// Tier of a generated trajectory id, for diagnostics.
pub fn tier_of(corpus: &Corpus, id: &str) -> Option<Tier> {
    corpus.get(id).and_then(Trajectory::label)
}
