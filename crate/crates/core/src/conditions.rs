//! Empirical checks of the ballisticity conditions: the polynomial condition,
//! the fitted decay exponent and the effective criterion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::env::{EnvError, EnvironmentLaw};
use crate::geometry::{normalize, BoxSpec, GeometryError, PolyBox, Rotation};
use crate::rng::derive_seed;
use crate::solver::{sample_rho, SolverError, SolverOptions};
use crate::stats::Z95;
use crate::walk::{mc_box_estimate, mc_slab_estimate, BoxEvent, ExitStats, Sampling, WalkError};

const POLY_TAG: u64 = 0x706f_6c79;
const FIT_TAG: u64 = 0x6669_7467;

/// Default exponents for the infimum in the effective criterion.
pub fn default_a_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConditionError {
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

type Result<T> = std::result::Result<T, ConditionError>;

fn bad(msg: impl Into<String>) -> ConditionError {
    ConditionError::BadInput(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Polynomial { m: f64, l: f64 },
    GammaFit { grid: Vec<f64> },
    EffectiveCriterion { l0: f64, ltilde0: f64 },
}

/// One measured point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// What was varied (`ltilde`, `L`, `a`).
    pub key: String,
    pub value: f64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub verdict: Verdict,
    /// The tested quantity (`gamma_hat`, or the criterion's left side).
    pub statistic: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub evidence: Vec<Evidence>,
    pub metadata: BTreeMap<String, Value>,
}

fn stats_row(key: &str, value: f64, s: &ExitStats) -> Evidence {
    Evidence {
        key: key.into(),
        value,
        estimate: s.p_hat,
        ci_low: s.ci_low,
        ci_high: s.ci_high,
        note: s
            .unreliable
            .then(|| format!("{} of {} walks hit the step cap", s.cap_hits, s.replicas)),
    }
}

/// `P_0(X_{T_B} . l < L) <= L^{-M}` for some `L~` in the list, with
/// `B = B_{l,L,L~}`.
pub fn check_polynomial(
    law: &EnvironmentLaw,
    l: &[f64],
    big_l: f64,
    m: f64,
    ltilde_list: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<ConditionReport> {
    law.validate()?;
    if !(m >= 1.0) {
        return Err(bad(format!("M = {m} must be at least 1")));
    }
    if ltilde_list.is_empty() {
        return Err(bad("the L~ list is empty"));
    }
    let threshold = big_l.powf(-m);
    let mut evidence = Vec::new();
    let (mut any_pass, mut all_fail) = (false, true);
    for (i, &lt) in ltilde_list.iter().enumerate() {
        let b = PolyBox::new(l.to_vec(), big_l, lt)?.to_box()?;
        let est = mc_box_estimate(
            law,
            &b,
            BoxEvent::ShortOfFront,
            Sampling::Annealed { replicas },
            None,
            derive_seed(seed, POLY_TAG, i as u64),
        )?;
        let s = est.pooled;
        // flagged estimates never give a hard verdict
        any_pass |= !s.unreliable && s.ci_high <= threshold;
        all_fail &= !s.unreliable && s.ci_low > threshold;
        evidence.push(stats_row("ltilde", lt, &s));
    }
    let verdict = if any_pass {
        Verdict::Pass
    } else if all_fail {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    let mut metadata = base_metadata(law, seed);
    metadata.insert("l".into(), json!(l));
    metadata.insert("threshold".into(), json!(threshold));
    metadata.insert("replicas".into(), json!(replicas));
    Ok(ConditionReport {
        condition: Condition::Polynomial { m, l: big_l },
        verdict,
        statistic: None,
        ci: None,
        evidence,
        metadata,
    })
}

/// A back-exit probability at one slab half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub l: f64,
    pub p: f64,
    /// Standard error of `p`; zero for exact values.
    pub std_error: f64,
}

/// Fitted slope of `ln(-ln p)` against `ln L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub gamma_hat: f64,
    pub std_error: f64,
    pub ci: (f64, f64),
    pub used: Vec<DecayPoint>,
    /// Points with `p = 0` or `p = 1`, which have no finite transform.
    pub dropped: Vec<DecayPoint>,
}

/// Least-squares slope with delta-method error `se(ln(-ln p)) = se(p) / |p ln p|`.
/// `None` when fewer than three points survive.
pub fn fit_gamma_from_points(points: &[DecayPoint]) -> Option<GammaFit> {
    let (used, dropped): (Vec<DecayPoint>, Vec<DecayPoint>) =
        points.iter().partition(|q| q.p > 0.0 && q.p < 1.0);
    if used.len() < 3 {
        return None;
    }
    let xs: Vec<f64> = used.iter().map(|q| q.l.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|q| (-q.p.ln()).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx;
    let var: f64 = used
        .iter()
        .zip(&xs)
        .map(|(q, x)| {
            let sy = q.std_error / (q.p * q.p.ln()).abs();
            (x - mx) * (x - mx) * sy * sy
        })
        .sum::<f64>()
        / (sxx * sxx);
    let se = var.sqrt();
    Some(GammaFit {
        gamma_hat: slope,
        std_error: se,
        ci: (slope - Z95 * se, slope + Z95 * se),
        used,
        dropped,
    })
}

/// Fit the decay exponent of the slab back-exit probability along `l`.
/// Passes when the fitted interval lies above `gamma_min`, fails when it
/// lies below.
pub fn fit_gamma(
    law: &EnvironmentLaw,
    l: &[f64],
    grid: &[f64],
    replicas: u64,
    seed: u64,
    gamma_min: f64,
) -> Result<ConditionReport> {
    law.validate()?;
    if grid.len() < 3 || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(bad("the L grid needs at least three increasing points"));
    }
    let dir = normalize(l)?;
    let mut points = Vec::with_capacity(grid.len());
    let mut evidence = Vec::with_capacity(grid.len());
    for (i, &big_l) in grid.iter().enumerate() {
        let s = mc_slab_estimate(
            law,
            &dir,
            big_l,
            Sampling::Annealed { replicas },
            None,
            derive_seed(seed, FIT_TAG, i as u64),
        )?
        .pooled;
        let mut row = stats_row("L", big_l, &s);
        if s.p_hat == 0.0 {
            row.note = Some("no back exits observed; point dropped".into());
        }
        evidence.push(row);
        points.push(DecayPoint {
            l: big_l,
            p: s.p_hat,
            std_error: s.std_error(),
        });
    }
    let fit = fit_gamma_from_points(&points);
    let (verdict, statistic, ci) = match &fit {
        None => (Verdict::Inconclusive, None, None),
        Some(f) => {
            let v = if f.ci.0 > gamma_min {
                Verdict::Pass
            } else if f.ci.1 < gamma_min {
                Verdict::Fail
            } else {
                Verdict::Inconclusive
            };
            (v, Some(f.gamma_hat), Some(f.ci))
        }
    };
    let mut metadata = base_metadata(law, seed);
    metadata.insert("l".into(), json!(dir));
    metadata.insert("replicas".into(), json!(replicas));
    metadata.insert("gamma_min".into(), json!(gamma_min));
    if let Some(f) = &fit {
        metadata.insert("std_error".into(), json!(f.std_error));
        metadata.insert("dropped".into(), json!(f.dropped.len()));
    }
    Ok(ConditionReport {
        condition: Condition::GammaFit {
            grid: grid.to_vec(),
        },
        verdict,
        statistic,
        ci,
        evidence,
        metadata,
    })
}

/// `l` followed by the `2(d-1)` directions tilted by `angle` towards `+-R(e_i)`.
pub fn direction_neighborhood(l: &[f64], angle: f64) -> Result<Vec<Vec<f64>>> {
    let rot = Rotation::new(&normalize(l)?)?;
    let base = rot.direction().to_vec();
    let mut out = vec![base.clone()];
    for i in 1..rot.dim() {
        for sign in [1.0, -1.0] {
            let v: Vec<f64> = base
                .iter()
                .zip(rot.column(i))
                .map(|(a, b)| angle.cos() * a + sign * angle.sin() * b)
                .collect();
            out.push(normalize(&v)?);
        }
    }
    Ok(out)
}

/// Run [`fit_gamma`] on every direction of the neighborhood. Passes when all
/// directions pass, fails when any fails.
pub fn fit_gamma_neighborhood(
    law: &EnvironmentLaw,
    directions: &[Vec<f64>],
    grid: &[f64],
    replicas: u64,
    seed: u64,
    gamma_min: f64,
) -> Result<(Verdict, Vec<ConditionReport>)> {
    let reports = directions
        .iter()
        .enumerate()
        .map(|(i, l)| fit_gamma(law, l, grid, replicas, derive_seed(seed, FIT_TAG, 1000 + i as u64), gamma_min))
        .collect::<Result<Vec<_>>>()?;
    let verdict = if reports.iter().any(|r| r.verdict == Verdict::Fail) {
        Verdict::Fail
    } else if reports.iter().all(|r| r.verdict == Verdict::Pass) {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    Ok((verdict, reports))
}

/// Constant in front of the effective criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionConstants {
    pub c15: f64,
}

impl Default for CriterionConstants {
    fn default() -> Self {
        CriterionConstants { c15: 1.0 }
    }
}

/// `c15 (ln 1/kappa)^{3(d-1)} L~0^{d-1} L0^{3d-2}`.
pub fn criterion_prefactor(d: usize, kappa: f64, l0: f64, ltilde0: f64, c15: f64) -> f64 {
    let d = d as f64;
    c15 * (1.0 / kappa).ln().powf(3.0 * (d - 1.0)) * ltilde0.powf(d - 1.0) * l0.powf(3.0 * d - 2.0)
}

/// `c15 (ln 1/kappa)^{3(d-1)} L~0^{d-1} L0^{3d-2} inf_a E[rho^a] < 1` on the
/// box `(R, L0 - 1, L0 + 1, L~0)`, the infimum taken over `a_grid`.
///
/// The grid minimum bounds the true infimum from above, so a pass carries
/// over. A fail is certified outright when every sampled `rho` is at least
/// one, since then `E[rho^a] >= 1` for every `a`.
#[allow(clippy::too_many_arguments)]
pub fn effective_criterion(
    law: &EnvironmentLaw,
    l: &[f64],
    l0: f64,
    ltilde0: f64,
    a_grid: &[f64],
    env_count: usize,
    constants: CriterionConstants,
    seed: u64,
) -> Result<ConditionReport> {
    law.validate()?;
    let d = law.d;
    if !(ltilde0 >= 3.0 * (d as f64).sqrt() && ltilde0 <= l0.powi(3)) {
        return Err(bad(format!("L~0 = {ltilde0} outside [3 sqrt(d), L0^3]")));
    }
    if !(l0 > 1.0) {
        return Err(bad(format!("L0 = {l0} must exceed 1")));
    }
    if a_grid.is_empty() || a_grid.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
        return Err(bad("a grid must be non-empty and inside (0, 1]"));
    }
    let b = BoxSpec::new(Rotation::new(&normalize(l)?)?, l0 - 1.0, l0 + 1.0, ltilde0)?;
    let samples = sample_rho(law, &b, env_count, seed, &SolverOptions::default())?;
    let pref = criterion_prefactor(d, law.kappa, l0, ltilde0, constants.c15);

    let mut evidence = Vec::with_capacity(a_grid.len());
    let mut best: Option<(f64, f64, f64)> = None;
    for &a in a_grid {
        let m = samples.moment(a)?;
        let half = Z95 * m.std_error;
        evidence.push(Evidence {
            key: "a".into(),
            value: a,
            estimate: m.mean,
            ci_low: (m.mean - half).max(0.0),
            ci_high: m.mean + half,
            note: None,
        });
        if best.is_none_or(|(_, mean, _)| m.mean < mean) {
            best = Some((a, m.mean, half));
        }
    }
    let (a_star, mean, half) = best.expect("non-empty grid");
    let lhs = pref * mean;
    let ci = (pref * (mean - half).max(0.0), pref * (mean + half));
    let rho_min = samples.min();
    let certified_fail = rho_min >= 1.0 && pref > 1.0;
    let verdict = if certified_fail || ci.0 > 1.0 {
        Verdict::Fail
    } else if ci.1 < 1.0 {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    let mut metadata = base_metadata(law, seed);
    metadata.insert("l".into(), json!(b.rotation().direction()));
    metadata.insert("box".into(), json!(b.to_config()));
    metadata.insert("c15".into(), json!(constants.c15));
    metadata.insert("prefactor".into(), json!(pref));
    metadata.insert("a_star".into(), json!(a_star));
    metadata.insert("env_count".into(), json!(env_count));
    metadata.insert("solver_failures".into(), json!(samples.failures));
    metadata.insert("rho_min".into(), json!(rho_min));
    metadata.insert("certified_fail".into(), json!(certified_fail));
    metadata.insert("snapped".into(), json!(b.snapped()));
    Ok(ConditionReport {
        condition: Condition::EffectiveCriterion { l0, ltilde0 },
        verdict,
        statistic: Some(lhs),
        ci: Some(ci),
        evidence,
        metadata,
    })
}

fn base_metadata(law: &EnvironmentLaw, seed: u64) -> BTreeMap<String, Value> {
    let mut m = BTreeMap::new();
    m.insert("law".into(), serde_json::to_value(law).unwrap_or(Value::Null));
    m.insert("seed".into(), json!(seed));
    m
}
