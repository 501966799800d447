//! Quenched walks and Monte Carlo estimates of slab and box exit probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, Environment, EnvironmentLaw, MAX_DIM};
use crate::geometry::{slab_exit_test, BoxSpec, GeometryError, SlabExit};
use crate::rng::derive_seed;
use crate::stats::{wilson, Z95};

/// Tag separating environment seeds from other derived seeds.
pub const ENV_TAG: u64 = 0x656e_7669;

/// Cap-hit fraction above which an estimate is flagged.
pub const UNRELIABLE_CAP_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WalkError {
    #[error("start point is not strictly inside the region")]
    StartNotInterior,
    #[error("slab half-width {0} must be at least 1")]
    BadHalfWidth(f64),
    #[error("at least one replica is required")]
    NoReplicas,
    #[error("dimension mismatch: {got} vs {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitLabel {
    ExitPlus,
    ExitMinus,
    ExitPositiveBoundary,
    ExitOtherBoundary,
    CapHit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkOutcome {
    pub label: ExitLabel,
    pub steps: u64,
    pub final_site: Vec<i64>,
}

/// Walk randomness for replica `replica` of a run seeded with `seed`: a
/// ChaCha8 stream independent of every environment stream.
pub fn walk_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Environment realization seed for index `index` of a run.
pub fn env_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, ENV_TAG, index)
}

/// Default step caps.
pub fn default_slab_cap(half_width: f64) -> u64 {
    (100.0 * half_width * half_width).ceil() as u64
}

pub fn default_box_cap(l_minus: f64, l_plus: f64) -> u64 {
    let s = l_minus + l_plus;
    (100.0 * s * s).ceil() as u64
}

#[inline]
fn step<R: Rng>(env: &Environment, x: &mut [i64], probs: &mut [f64], rng: &mut R) {
    env.sample_into(x, probs);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut k = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            k = i;
            break;
        }
    }
    x[k / 2] += if k % 2 == 0 { 1 } else { -1 };
}

fn check_dim(got: usize, expected: usize) -> Result<(), WalkError> {
    if got == expected {
        Ok(())
    } else {
        Err(WalkError::DimensionMismatch { got, expected })
    }
}

/// Walk from `start` until `X.l >= b_plus`, `X.l <= -b_minus` or `cap` steps.
pub fn run_slab_with<R: Rng>(
    env: &Environment,
    l: &[f64],
    b_minus: f64,
    b_plus: f64,
    start: &[i64],
    cap: u64,
    rng: &mut R,
) -> Result<WalkOutcome, WalkError> {
    let d = env.dim();
    check_dim(l.len(), d)?;
    check_dim(start.len(), d)?;
    if slab_exit_test(l, b_minus, b_plus, start) != SlabExit::None {
        return Err(WalkError::StartNotInterior);
    }
    let mut xb = [0i64; MAX_DIM];
    let mut pb = [0f64; 2 * MAX_DIM];
    let x = &mut xb[..d];
    let probs = &mut pb[..2 * d];
    x.copy_from_slice(start);
    let mut steps = 0;
    let label = loop {
        if steps == cap {
            break ExitLabel::CapHit;
        }
        step(env, x, probs, rng);
        steps += 1;
        match slab_exit_test(l, b_minus, b_plus, x) {
            SlabExit::Plus => break ExitLabel::ExitPlus,
            SlabExit::Minus => break ExitLabel::ExitMinus,
            SlabExit::None => {}
        }
    };
    Ok(WalkOutcome {
        label,
        steps,
        final_site: x.to_vec(),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn run_slab(
    env: &Environment,
    l: &[f64],
    b_minus: f64,
    b_plus: f64,
    start: &[i64],
    cap: u64,
    seed: u64,
    replica: u64,
) -> Result<WalkOutcome, WalkError> {
    run_slab_with(env, l, b_minus, b_plus, start, cap, &mut walk_rng(seed, replica))
}

/// Walk from an interior `start` until it leaves `b` or hits `cap`.
pub fn run_box_with<R: Rng>(
    env: &Environment,
    b: &BoxSpec,
    start: &[i64],
    cap: u64,
    rng: &mut R,
) -> Result<WalkOutcome, WalkError> {
    let d = env.dim();
    check_dim(b.dim(), d)?;
    check_dim(start.len(), d)?;
    if !b.contains(start) {
        return Err(WalkError::StartNotInterior);
    }
    let mut xb = [0i64; MAX_DIM];
    let mut pb = [0f64; 2 * MAX_DIM];
    let x = &mut xb[..d];
    let probs = &mut pb[..2 * d];
    x.copy_from_slice(start);
    let mut steps = 0;
    let label = loop {
        if steps == cap {
            break ExitLabel::CapHit;
        }
        step(env, x, probs, rng);
        steps += 1;
        if !b.contains(x) {
            break if b.boundary_is_positive(x) {
                ExitLabel::ExitPositiveBoundary
            } else {
                ExitLabel::ExitOtherBoundary
            };
        }
    };
    Ok(WalkOutcome {
        label,
        steps,
        final_site: x.to_vec(),
    })
}

pub fn run_box(
    env: &Environment,
    b: &BoxSpec,
    start: &[i64],
    cap: u64,
    seed: u64,
    replica: u64,
) -> Result<WalkOutcome, WalkError> {
    run_box_with(env, b, start, cap, &mut walk_rng(seed, replica))
}

/// Monte Carlo tally with a Wilson 95% interval.
///
/// Cap hits are kept out of both outcomes: `p_hat` is the success fraction
/// among walks that exited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitStats {
    pub replicas: u64,
    pub successes: u64,
    pub cap_hits: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// More than 1% of the replicas hit the step cap.
    pub unreliable: bool,
}

impl ExitStats {
    pub fn from_counts(replicas: u64, successes: u64, cap_hits: u64) -> Self {
        debug_assert!(successes + cap_hits <= replicas);
        let resolved = replicas - cap_hits;
        let p_hat = if resolved == 0 {
            0.0
        } else {
            successes as f64 / resolved as f64
        };
        let (ci_low, ci_high) = wilson(successes, resolved, Z95);
        ExitStats {
            replicas,
            successes,
            cap_hits,
            p_hat,
            ci_low,
            ci_high,
            unreliable: cap_hits as f64 > UNRELIABLE_CAP_FRACTION * replicas as f64,
        }
    }

    /// Binomial standard error of `p_hat`.
    pub fn std_error(&self) -> f64 {
        let n = (self.replicas - self.cap_hits) as f64;
        if n == 0.0 {
            return f64::NAN;
        }
        (self.p_hat * (1.0 - self.p_hat) / n).sqrt()
    }
}

/// How environments and walks are paired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// A fresh environment for every walk.
    Annealed { replicas: u64 },
    /// `walks_per_env` walks in each of `env_count` environments.
    Quenched { env_count: u64, walks_per_env: u64 },
}

impl Sampling {
    pub fn total(&self) -> u64 {
        match *self {
            Sampling::Annealed { replicas } => replicas,
            Sampling::Quenched {
                env_count,
                walks_per_env,
            } => env_count * walks_per_env,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabEstimate {
    pub pooled: ExitStats,
    /// One entry per environment in quenched mode, empty when annealed.
    pub per_env: Vec<ExitStats>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    n: u64,
    success: u64,
    cap: u64,
}

impl Counts {
    fn merge(self, o: Counts) -> Counts {
        Counts {
            n: self.n + o.n,
            success: self.success + o.success,
            cap: self.cap + o.cap,
        }
    }

    fn stats(self) -> ExitStats {
        ExitStats::from_counts(self.n, self.success, self.cap)
    }
}

/// Run `sampling` replicas of `walk(env, replica)`; per-environment counts in
/// quenched mode.
fn tally<F>(
    base: &Environment,
    sampling: Sampling,
    seed: u64,
    walk: F,
) -> Result<(Counts, Vec<Counts>), WalkError>
where
    F: Fn(&Environment, u64) -> Result<(bool, bool), WalkError> + Sync,
{
    let one = |env: &Environment, r: u64| -> Result<Counts, WalkError> {
        let (success, cap) = walk(env, r)?;
        Ok(Counts {
            n: 1,
            success: success as u64,
            cap: cap as u64,
        })
    };
    match sampling {
        Sampling::Annealed { replicas } => {
            if replicas == 0 {
                return Err(WalkError::NoReplicas);
            }
            let c = (0..replicas)
                .into_par_iter()
                .map(|r| one(&base.realization(env_seed(seed, r)), r))
                .try_reduce(Counts::default, |a, b| Ok(a.merge(b)))?;
            Ok((c, Vec::new()))
        }
        Sampling::Quenched {
            env_count,
            walks_per_env,
        } => {
            if env_count == 0 || walks_per_env == 0 {
                return Err(WalkError::NoReplicas);
            }
            let per_env: Vec<Counts> = (0..env_count)
                .into_par_iter()
                .map(|e| {
                    let env = base.realization(env_seed(seed, e));
                    (0..walks_per_env)
                        .into_par_iter()
                        .map(|j| one(&env, e * walks_per_env + j))
                        .try_reduce(Counts::default, |a, b| Ok(a.merge(b)))
                })
                .collect::<Result<_, _>>()?;
            let pooled = per_env.iter().fold(Counts::default(), |a, b| a.merge(*b));
            Ok((pooled, per_env))
        }
    }
}

/// Estimate `P(T~_{-L} < T_L)`, the back exit from the slab `|x.l| < L`,
/// started at the origin.
pub fn mc_slab_estimate(
    law: &EnvironmentLaw,
    l: &[f64],
    half_width: f64,
    sampling: Sampling,
    cap: Option<u64>,
    seed: u64,
) -> Result<SlabEstimate, WalkError> {
    if !(half_width >= 1.0) {
        return Err(WalkError::BadHalfWidth(half_width));
    }
    check_dim(l.len(), law.d)?;
    let base = Environment::new(law, 0)?;
    let cap = cap.unwrap_or_else(|| default_slab_cap(half_width));
    let origin = vec![0i64; law.d];
    let (pooled, per_env) = tally(&base, sampling, seed, |env, r| {
        let mut rng = walk_rng(seed, r);
        let o = run_slab_with(env, l, half_width, half_width, &origin, cap, &mut rng)?;
        Ok((o.label == ExitLabel::ExitMinus, o.label == ExitLabel::CapHit))
    })?;
    Ok(SlabEstimate {
        pooled: pooled.stats(),
        per_env: per_env.into_iter().map(Counts::stats).collect(),
    })
}

/// Which box exits count as a success.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxEvent {
    /// The exit site is not in the positive boundary part.
    NotPositiveBoundary,
    /// The exit site satisfies `x.l < L_plus` (the polynomial-condition event).
    ShortOfFront,
}

/// Estimate the probability of `event` for walks started at the origin.
pub fn mc_box_estimate(
    law: &EnvironmentLaw,
    b: &BoxSpec,
    event: BoxEvent,
    sampling: Sampling,
    cap: Option<u64>,
    seed: u64,
) -> Result<SlabEstimate, WalkError> {
    check_dim(b.dim(), law.d)?;
    let base = Environment::new(law, 0)?;
    let cap = cap.unwrap_or_else(|| default_box_cap(b.l_minus(), b.l_plus()));
    let origin = vec![0i64; law.d];
    if !b.contains(&origin) {
        return Err(WalkError::StartNotInterior);
    }
    let (pooled, per_env) = tally(&base, sampling, seed, |env, r| {
        let mut rng = walk_rng(seed, r);
        let o = run_box_with(env, b, &origin, cap, &mut rng)?;
        let success = match (o.label, event) {
            (ExitLabel::CapHit, _) => false,
            (label, BoxEvent::NotPositiveBoundary) => label == ExitLabel::ExitOtherBoundary,
            (_, BoxEvent::ShortOfFront) => !b.beyond_positive_face(&o.final_site),
        };
        Ok((success, o.label == ExitLabel::CapHit))
    })?;
    Ok(SlabEstimate {
        pooled: pooled.stats(),
        per_env: per_env.into_iter().map(Counts::stats).collect(),
    })
}
