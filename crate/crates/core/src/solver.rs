//! Exact quenched exit probabilities from boxes via the harmonic equation
//! `h(x) = sum_e omega(x, e) h(x + e)`, `h = 1` on the positive boundary part
//! and `0` on the rest of the boundary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, Environment, EnvironmentLaw};
use crate::geometry::BoxSpec;
use crate::stats::MeanEstimate;
use crate::walk::env_seed;

/// Interiors up to this size are solved by direct elimination.
pub const DIRECT_LIMIT: usize = 10_000;

/// Largest interior accepted at all.
pub const MAX_INTERIOR: usize = 10_000_000;

const NO_SITE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("box interior has {0} sites, limit is {MAX_INTERIOR}")]
    BoxTooLarge(usize),
    #[error("start point is not in the box interior")]
    StartNotInterior,
    #[error("box interior is empty")]
    EmptyBox,
    #[error("relaxation stopped after {sweeps} sweeps with residual {residual:e}")]
    NotConverged { sweeps: usize, residual: f64 },
    #[error("exponent a = {0} outside (0, 1]")]
    BadExponent(f64),
    #[error("at least one environment is required")]
    NoEnvironments,
    #[error("{failed} of {total} environments could not be solved")]
    TooManyFailures { failed: usize, total: usize },
    #[error("dimension mismatch: {got} vs {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Direct elimination up to [`DIRECT_LIMIT`] sites, relaxation above.
    Auto,
    Direct,
    Relaxation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub method: Method,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: Method::Auto,
            tolerance: 1e-12,
            max_sweeps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSolution {
    pub p: f64,
    pub q: f64,
    pub rho: f64,
    pub residual: f64,
    pub interior_size: usize,
}

/// Lattice interior of a box with neighbour indices.
#[derive(Debug, Clone)]
pub struct Interior {
    d: usize,
    sites: Vec<i64>,
    /// `2d` entries per site: neighbour index or `NO_SITE`.
    nbr: Vec<u32>,
    /// `2d` entries per site: `1.0` for a positive-boundary neighbour.
    bval: Vec<f64>,
    /// Per-coordinate `(lo, hi)` of the enumeration range.
    ranges: Vec<(i64, i64)>,
    grid: Vec<u32>,
}

impl Interior {
    /// Enumerate the interior lexicographically (first coordinate slowest).
    pub fn new(b: &BoxSpec) -> Result<Self, SolverError> {
        let d = b.dim();
        let ranges = b.bounding_ranges();
        let volume = ranges
            .iter()
            .map(|(lo, hi)| (hi - lo + 1) as f64)
            .product::<f64>();
        if volume > 20.0 * MAX_INTERIOR as f64 {
            return Err(SolverError::BoxTooLarge(volume as usize));
        }
        let volume = volume as usize;
        let mut grid = vec![NO_SITE; volume];
        let mut sites = Vec::new();
        let mut x: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        for cell in grid.iter_mut() {
            if b.contains(&x) {
                let n = sites.len() / d;
                if n >= MAX_INTERIOR {
                    return Err(SolverError::BoxTooLarge(n + 1));
                }
                *cell = n as u32;
                sites.extend_from_slice(&x);
            }
            // odometer, last coordinate fastest
            for i in (0..d).rev() {
                if x[i] < ranges[i].1 {
                    x[i] += 1;
                    break;
                }
                x[i] = ranges[i].0;
            }
        }
        let n = sites.len() / d;
        if n == 0 {
            return Err(SolverError::EmptyBox);
        }
        let mut interior = Interior {
            d,
            sites,
            nbr: vec![NO_SITE; n * 2 * d],
            bval: vec![0.0; n * 2 * d],
            ranges,
            grid,
        };
        let mut y = vec![0i64; d];
        for s in 0..n {
            y.copy_from_slice(interior.site(s));
            for k in 0..2 * d {
                let (axis, step) = (k / 2, if k % 2 == 0 { 1 } else { -1 });
                y[axis] += step;
                match interior.index_of(&y) {
                    Some(j) => interior.nbr[s * 2 * d + k] = j as u32,
                    None => {
                        if b.boundary_is_positive(&y) {
                            interior.bval[s * 2 * d + k] = 1.0;
                        }
                    }
                }
                y[axis] -= step;
            }
        }
        Ok(interior)
    }

    pub fn len(&self) -> usize {
        self.sites.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn site(&self, i: usize) -> &[i64] {
        &self.sites[i * self.d..(i + 1) * self.d]
    }

    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        for (c, (lo, hi)) in x.iter().zip(&self.ranges) {
            if c < lo || c > hi {
                return None;
            }
            flat = flat * (hi - lo + 1) as usize + (c - lo) as usize;
        }
        match self.grid[flat] {
            NO_SITE => None,
            i => Some(i as usize),
        }
    }
}

/// Transition weights of one environment on an interior.
struct System<'a> {
    interior: &'a Interior,
    w: Vec<f64>,
    rhs: Vec<f64>,
}

impl<'a> System<'a> {
    fn new(interior: &'a Interior, env: &Environment) -> Self {
        let d = interior.d;
        let n = interior.len();
        let mut w = vec![0.0; n * 2 * d];
        let mut rhs = vec![0.0; n];
        for s in 0..n {
            let row = &mut w[s * 2 * d..(s + 1) * 2 * d];
            env.sample_into(interior.site(s), row);
            rhs[s] = row
                .iter()
                .zip(&interior.bval[s * 2 * d..(s + 1) * 2 * d])
                .map(|(a, b)| a * b)
                .sum();
        }
        System { interior, w, rhs }
    }

    fn row(&self, s: usize) -> (&[u32], &[f64]) {
        let k = 2 * self.interior.d;
        (
            &self.interior.nbr[s * k..(s + 1) * k],
            &self.w[s * k..(s + 1) * k],
        )
    }

    /// `max_x |h(x) - sum_e omega(x, e) h(x + e)|` including boundary values.
    fn residual(&self, h: &[f64]) -> f64 {
        (0..h.len())
            .map(|s| (h[s] - self.apply(s, h)).abs())
            .fold(0.0, f64::max)
    }

    #[inline]
    fn apply(&self, s: usize, h: &[f64]) -> f64 {
        let (nbr, w) = self.row(s);
        let mut acc = self.rhs[s];
        for (j, p) in nbr.iter().zip(w) {
            if *j != NO_SITE {
                acc += p * h[*j as usize];
            }
        }
        acc
    }

    /// Gauss-Seidel sweeps in lexicographic order until the residual is below
    /// `tol`.
    fn relax(&self, h: &mut [f64], tol: f64, max_sweeps: usize) -> Result<(f64, usize), SolverError> {
        let n = h.len();
        for sweep in 0..=max_sweeps {
            let mut change: f64 = 0.0;
            for s in 0..n {
                let v = self.apply(s, h);
                change = change.max((v - h[s]).abs());
                h[s] = v;
            }
            if change <= tol {
                let r = self.residual(h);
                if r <= tol {
                    return Ok((r, sweep + 1));
                }
            }
        }
        Err(SolverError::NotConverged {
            sweeps: max_sweeps,
            residual: self.residual(h),
        })
    }

    /// Banded elimination without pivoting; the matrix `I - P` is a
    /// diagonally dominant M-matrix. Sites are reordered so the widest axis
    /// varies slowest, which keeps the band narrow.
    fn direct(&self) -> Vec<f64> {
        let it = self.interior;
        let d = it.d;
        let n = it.len();
        let mut axes: Vec<usize> = (0..d).collect();
        // widest axis first (slowest), ties by index
        axes.sort_by_key(|&a| std::cmp::Reverse(it.ranges[a].1 - it.ranges[a].0));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_cached_key(|&s| {
            let x = it.site(s);
            axes.iter().map(|&a| x[a]).collect::<Vec<_>>()
        });
        let mut pos = vec![0usize; n];
        for (p, &s) in order.iter().enumerate() {
            pos[s] = p;
        }
        let mut bw = 0usize;
        for s in 0..n {
            for &j in self.row(s).0 {
                if j != NO_SITE {
                    bw = bw.max(pos[s].abs_diff(pos[j as usize]));
                }
            }
        }
        let width = 2 * bw + 1;
        // a[r][c] stored at r * width + (c + bw - r)
        let mut a = vec![0.0; n * width];
        let mut rhs = vec![0.0; n];
        for s in 0..n {
            let r = pos[s];
            a[r * width + bw] = 1.0;
            rhs[r] = self.rhs[s];
            let (nbr, w) = self.row(s);
            for (j, p) in nbr.iter().zip(w) {
                if *j != NO_SITE {
                    let c = pos[*j as usize];
                    a[r * width + c + bw - r] -= p;
                }
            }
        }
        for k in 0..n {
            let piv = a[k * width + bw];
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let f = a[i * width + k + bw - i] / piv;
                if f == 0.0 {
                    continue;
                }
                for j in k..=last {
                    a[i * width + j + bw - i] -= f * a[k * width + j + bw - k];
                }
                rhs[i] -= f * rhs[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let last = (k + bw).min(n - 1);
            let mut acc = rhs[k];
            for j in k + 1..=last {
                acc -= a[k * width + j + bw - k] * x[j];
            }
            x[k] = acc / a[k * width + bw];
        }
        (0..n).map(|s| x[pos[s]]).collect()
    }
}

/// The full solution `h` on an interior.
#[derive(Debug, Clone)]
pub struct HarmonicField {
    pub h: Vec<f64>,
    pub residual: f64,
    pub sweeps: usize,
}

/// Solve for `h` on a prepared interior.
pub fn solve_field(
    interior: &Interior,
    env: &Environment,
    opts: &SolverOptions,
) -> Result<HarmonicField, SolverError> {
    if env.dim() != interior.d {
        return Err(SolverError::DimensionMismatch {
            got: interior.d,
            expected: env.dim(),
        });
    }
    let sys = System::new(interior, env);
    let n = interior.len();
    let direct = match opts.method {
        Method::Auto => n <= DIRECT_LIMIT,
        Method::Direct => true,
        Method::Relaxation => false,
    };
    let mut h = if direct { sys.direct() } else { vec![0.0; n] };
    let residual = sys.residual(&h);
    let (residual, sweeps) = if direct && residual <= opts.tolerance {
        (residual, 0)
    } else {
        // also polishes a direct solution that missed the tolerance
        sys.relax(&mut h, opts.tolerance, opts.max_sweeps)?
    };
    for v in h.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(HarmonicField {
        h,
        residual,
        sweeps,
    })
}

/// Quenched probability of leaving `b` through its positive boundary part.
pub fn exact_exit(env: &Environment, b: &BoxSpec, start: &[i64]) -> Result<BoxSolution, SolverError> {
    exact_exit_with(env, b, start, &SolverOptions::default())
}

pub fn exact_exit_with(
    env: &Environment,
    b: &BoxSpec,
    start: &[i64],
    opts: &SolverOptions,
) -> Result<BoxSolution, SolverError> {
    let interior = Interior::new(b)?;
    exact_exit_on(&interior, env, start, opts)
}

/// [`exact_exit_with`] on an interior that is reused across environments.
pub fn exact_exit_on(
    interior: &Interior,
    env: &Environment,
    start: &[i64],
    opts: &SolverOptions,
) -> Result<BoxSolution, SolverError> {
    let i = interior
        .index_of(start)
        .ok_or(SolverError::StartNotInterior)?;
    let field = solve_field(interior, env, opts)?;
    let p = field.h[i];
    let q = 1.0 - p;
    Ok(BoxSolution {
        p,
        q,
        rho: q / p,
        residual: field.residual,
        interior_size: interior.len(),
    })
}

/// `rho` sampled over independent environment realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoSamples {
    pub rho: Vec<f64>,
    pub failures: usize,
    pub env_count: usize,
}

impl RhoSamples {
    /// Mean and standard error of `rho^a`.
    pub fn moment(&self, a: f64) -> Result<MeanEstimate, SolverError> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(SolverError::BadExponent(a));
        }
        let xs: Vec<f64> = self.rho.iter().map(|r| r.powf(a)).collect();
        Ok(MeanEstimate::from_samples(&xs))
    }

    pub fn min(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Solve `env_count` independent realizations of `law` on `b`, from the
/// origin. Fails when more than 1% of them cannot be solved.
pub fn sample_rho(
    law: &EnvironmentLaw,
    b: &BoxSpec,
    env_count: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<RhoSamples, SolverError> {
    if env_count == 0 {
        return Err(SolverError::NoEnvironments);
    }
    if b.dim() != law.d {
        return Err(SolverError::DimensionMismatch {
            got: b.dim(),
            expected: law.d,
        });
    }
    let interior = Interior::new(b)?;
    let origin = vec![0i64; law.d];
    interior
        .index_of(&origin)
        .ok_or(SolverError::StartNotInterior)?;
    let base = Environment::new(law, 0)?;
    let results: Vec<Option<f64>> = (0..env_count)
        .into_par_iter()
        .map(|e| {
            let env = base.realization(env_seed(seed, e as u64));
            exact_exit_on(&interior, &env, &origin, opts).ok().map(|s| s.rho)
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_none()).count();
    if failures * 100 > env_count {
        return Err(SolverError::TooManyFailures {
            failed: failures,
            total: env_count,
        });
    }
    Ok(RhoSamples {
        rho: results.into_iter().flatten().collect(),
        failures,
        env_count,
    })
}

/// Monte Carlo estimate of `E[rho_B^a]`.
pub fn rho_moment(
    law: &EnvironmentLaw,
    b: &BoxSpec,
    a: f64,
    env_count: usize,
    seed: u64,
) -> Result<MeanEstimate, SolverError> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(SolverError::BadExponent(a));
    }
    sample_rho(law, b, env_count, seed, &SolverOptions::default())?.moment(a)
}
