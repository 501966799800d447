//! Renormalization scales built from iterated powers of 8, the growth
//! conditions on them, the `phi_k` recursion, scale location, the refined
//! intermediate scales and the effective decay exponent.
//!
//! Every inequality verdict is computed with bounds rounded against the
//! inequality, so `true` is a certificate.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::towermath::{round, Rounding, TowerError, TowerInterval, TowerReal, MAX_HEIGHT};

/// Base of the tower functions.
pub const V: f64 = 8.0;
/// Fixed growth constant.
pub const ALPHA: f64 = 240.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenormError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("index {0} exceeds the height cap {MAX_HEIGHT}")]
    TooDeep(u32),
    #[error("N_{k} = {value} is below 7; L0 is too small for this kappa")]
    SmallN { k: usize, value: TowerReal },
    #[error("L = {0} is below L0")]
    BelowL0(TowerReal),
    #[error("L = {0} lies beyond the last computed scale")]
    BeyondScales(TowerReal),
    #[error("refined bound needs case two")]
    NotCaseTwo,
    #[error(transparent)]
    Tower(#[from] TowerError),
}

type Result<T> = std::result::Result<T, RenormError>;

fn bad(msg: impl Into<String>) -> RenormError {
    RenormError::BadParameter(msg.into())
}

/// Constants of the scale construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub d: usize,
    pub kappa: f64,
    pub l0: f64,
    pub ltilde0: f64,
    pub a0: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c15: f64,
    pub c_result: f64,
}

impl ScaleParams {
    /// Defaults: `L~0 = L0`, `a0 = 1`, `c2 = 7`, `c3 = c4 = 2`, `c15 = C = 1`.
    pub fn new(d: usize, kappa: f64, l0: f64) -> Result<Self> {
        let p = ScaleParams {
            d,
            kappa,
            l0,
            ltilde0: l0,
            a0: 1.0,
            c2: 7.0,
            c3: 2.0,
            c4: 2.0,
            c15: 1.0,
            c_result: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if d < 2 {
            return Err(bad(format!("d = {d} must be at least 2")));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0 / (2 * d) as f64) {
            return Err(bad(format!("kappa = {} outside (0, 1/(2d)]", self.kappa)));
        }
        for (name, v) in [
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("c15", self.c15),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.c_result.is_finite() && self.c_result >= 0.0) {
            return Err(bad(format!("C = {} must be non-negative", self.c_result)));
        }
        if !(self.l0.is_finite() && self.l0 >= self.c2) {
            return Err(bad(format!("L0 = {} must be at least c2 = {}", self.l0, self.c2)));
        }
        let lt_min = 3.0 * (d as f64).sqrt();
        if !(self.ltilde0 > lt_min && self.ltilde0 <= self.l0.powi(3)) {
            return Err(bad(format!(
                "L~0 = {} outside (3 sqrt(d), L0^3] = ({lt_min}, {}]",
                self.ltilde0,
                self.l0.powi(3)
            )));
        }
        if !(self.a0 > 0.0 && self.a0 <= 1.0) {
            return Err(bad(format!("a0 = {} outside (0, 1]", self.a0)));
        }
        Ok(())
    }

    pub fn c1(&self) -> f64 {
        (self.d as f64).sqrt()
    }

    pub fn c5(&self) -> f64 {
        2.0 * self.c3 * self.c4
    }

    /// `3(d-1) / (L0 ln(1/kappa))`.
    pub fn u0(&self) -> f64 {
        3.0 * (self.d - 1) as f64 / (self.l0 * (1.0 / self.kappa).ln())
    }

    /// `ln(1/kappa)` rounded in `mode`.
    fn ln_inv_kappa(&self, mode: Rounding) -> f64 {
        -round::ln(self.kappa, mode.flip())
    }

    /// `alpha c1 / u0 = alpha sqrt(d) L0 ln(1/kappa) / (3(d-1))`, rounded in `mode`.
    pub fn growth(&self, mode: Rounding) -> f64 {
        let c1 = round::sqrt(self.d as f64, mode);
        let num = round::mul(round::mul(ALPHA, c1, mode), self.l0, mode);
        let num = round::mul(num, self.ln_inv_kappa(mode), mode);
        round::div(num, 3.0 * (self.d - 1) as f64, mode)
    }

    /// `3(d-1)`: the exponent `u0 L0 ln(1/kappa)`.
    fn base_exponent(&self) -> f64 {
        3.0 * (self.d - 1) as f64
    }
}

/// Lower bound, nearest estimate and upper bound of one quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: TowerReal,
    pub est: TowerReal,
    pub hi: TowerReal,
}

impl Bracket {
    fn eval(f: impl Fn(Rounding) -> std::result::Result<TowerReal, TowerError>) -> Result<Self> {
        let lo = f(Rounding::Down)?;
        let hi = f(Rounding::Up)?;
        let est = f(Rounding::Nearest)?.max(lo).min(hi);
        Ok(Bracket { lo, est, hi })
    }

    pub fn exact(x: TowerReal) -> Self {
        Bracket {
            lo: x,
            est: x,
            hi: x,
        }
    }

    pub fn get(&self, mode: Rounding) -> TowerReal {
        match mode {
            Rounding::Down => self.lo,
            Rounding::Nearest => self.est,
            Rounding::Up => self.hi,
        }
    }

    pub fn interval(&self) -> TowerInterval {
        TowerInterval::new(self.lo, self.hi)
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }
}

fn eight() -> TowerReal {
    TowerReal::from(8u32)
}

/// `8^t` rounded in `mode`.
fn pow8(t: &TowerReal, mode: Rounding) -> std::result::Result<TowerReal, TowerError> {
    eight().powt(t, mode)
}

/// `f_n(x)`: `f_0 = 1`, `f_1(x) = 8^x`, `f_{n+1} = f_n(8^x)`, rounded in
/// `mode` (every `f_n` is increasing).
pub fn f_tower_rounded(n: u32, x: f64, mode: Rounding) -> Result<TowerReal> {
    if n > MAX_HEIGHT {
        return Err(RenormError::TooDeep(n));
    }
    if !(x.is_finite() && x >= 0.0) {
        return Err(bad(format!("tower argument {x} must be finite and non-negative")));
    }
    if n == 0 {
        return Ok(TowerReal::ONE);
    }
    let mut t = TowerReal::from_f64_rounded(x, mode)?;
    for _ in 0..n {
        t = pow8(&t, mode)?;
    }
    Ok(t)
}

pub fn f_tower(n: u32, x: f64) -> Result<Bracket> {
    Bracket::eval(|m| f_tower_rounded(n, x, m).map_err(|e| match e {
        RenormError::Tower(t) => t,
        _ => TowerError::NotRepresentable,
    }))
}

/// `F(j) = f_{[(j+1)/2]}([j/2])`, so that `N_k = (alpha c1/u0) F(k+1)/F(k)`
/// and `L_k = F(k) (alpha c1/u0)^k L0`.
pub fn big_f(j: u32, mode: Rounding) -> Result<TowerReal> {
    f_tower_rounded(j.div_ceil(2), (j / 2) as f64, mode)
}

/// Per-scale data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub k: usize,
    pub n: Bracket,
    pub l: Bracket,
    pub ltilde: Bracket,
    /// `L_k / L0`.
    pub ratio: Bracket,
    pub u: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSequence {
    pub params: ScaleParams,
    pub entries: Vec<ScaleEntry>,
    /// Multiplier applied to each `N_k` (all ones for the genuine scales).
    pub scaling: Vec<f64>,
    /// Indices with `N_k < 7` not excluded.
    pub small_n: Vec<usize>,
    /// `F(k)` for `k = 0..=k_max + 1`.
    f: Vec<Bracket>,
}

impl ScaleSequence {
    pub fn k_max(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn get(&self, k: usize) -> &ScaleEntry {
        &self.entries[k]
    }

    pub fn f(&self, j: usize) -> &Bracket {
        &self.f[j]
    }

    /// `L_k` by the product rule `L_{k+1} = N_k L_k`, nearest rounding.
    pub fn l_by_product(&self, k: usize) -> TowerReal {
        let mut l = TowerReal::from_f64_rounded(self.params.l0, Rounding::Nearest).unwrap();
        for e in &self.entries[..k] {
            l = l.mul(&e.n.est, Rounding::Nearest);
        }
        l
    }

    /// Ulps between `ln L_k` from the closed form and from the product rule.
    pub fn consistency_ulps(&self, k: usize) -> f64 {
        let a = self.entries[k].l.est;
        let b = self.l_by_product(k);
        let la = a.ln(Rounding::Nearest).unwrap();
        let lb = b.ln(Rounding::Nearest).unwrap();
        la.ulps_between(&lb)
    }
}

/// Genuine scales up to `k_max`; fails when some `N_k` is not certified `>= 7`.
pub fn build_scales(params: &ScaleParams, k_max: usize) -> Result<ScaleSequence> {
    let seq = build_scales_scaled(params, k_max, &vec![1.0; k_max + 1])?;
    if let Some(&k) = seq.small_n.first() {
        return Err(RenormError::SmallN {
            k,
            value: seq.entries[k].n.est,
        });
    }
    Ok(seq)
}

/// Scales with `N_k` multiplied by `scaling[k]`, for perturbation studies.
/// Violations of `N_k >= 7` are recorded rather than rejected.
pub fn build_scales_scaled(
    params: &ScaleParams,
    k_max: usize,
    scaling: &[f64],
) -> Result<ScaleSequence> {
    params.validate()?;
    if k_max > MAX_HEIGHT as usize {
        return Err(RenormError::TooDeep(k_max as u32));
    }
    if scaling.len() != k_max + 1 || scaling.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(bad("scaling needs k_max + 1 positive entries"));
    }
    let f: Vec<Bracket> = (0..=k_max as u32 + 1)
        .map(|j| {
            Ok(Bracket {
                lo: big_f(j, Rounding::Down)?,
                est: big_f(j, Rounding::Nearest)?,
                hi: big_f(j, Rounding::Up)?,
            })
        })
        .collect::<Result<_>>()?;
    let growth = |m: Rounding| TowerReal::from_f64_rounded(params.growth(m), m);
    let l0 = |m: Rounding| TowerReal::from_f64_rounded(params.l0, m);
    let lt0 = |m: Rounding| TowerReal::from_f64_rounded(params.ltilde0, m);
    let u0 = params.u0();
    let mut entries = Vec::with_capacity(k_max + 1);
    let mut small_n = Vec::new();
    for k in 0..=k_max {
        // prod_{j<k} scaling[j]
        let prefix = |m: Rounding| -> std::result::Result<TowerReal, TowerError> {
            let mut s = TowerReal::ONE;
            for &x in &scaling[..k] {
                s = s.mul_f64(x, m);
            }
            Ok(s)
        };
        let n = Bracket::eval(|m| {
            let q = f[k + 1].get(m).div(&f[k].get(m.flip()), m)?;
            Ok(q.mul(&growth(m)?, m).mul_f64(scaling[k], m))
        })?;
        let ratio = Bracket::eval(|m| {
            let g = growth(m)?.pow(k as f64, m)?;
            Ok(f[k].get(m).mul(&g, m).mul(&prefix(m)?, m))
        })?;
        let l = Bracket::eval(|m| Ok(ratio.get(m).mul(&l0(m)?, m)))?;
        let ltilde = Bracket::eval(|m| Ok(ratio.get(m).pow(3.0, m)?.mul(&lt0(m)?, m)))?;
        if n.lo < TowerReal::from(7u32) {
            small_n.push(k);
        }
        entries.push(ScaleEntry {
            k,
            n,
            l,
            ltilde,
            ratio,
            u: u0 / V.powi(k as i32),
            a: params.a0 / 2f64.powi(k as i32),
        });
    }
    Ok(ScaleSequence {
        params: params.clone(),
        entries,
        scaling: scaling.to_vec(),
        small_n,
        f,
    })
}

/// `8^k` as an exact tower for the small `k` used here.
fn pow8_int(k: usize, mode: Rounding) -> TowerReal {
    eight().pow(k as f64, mode).expect("positive base")
}

/// `E_k = u_k L_k ln(1/kappa) = 3(d-1) (L_k/L0) / 8^k`, so that
/// `kappa^{u_k L_k} = exp(-E_k)`. Using the identity avoids rounding `u0`.
fn exponent(seq: &ScaleSequence, k: usize, mode: Rounding) -> TowerReal {
    seq.entries[k]
        .ratio
        .get(mode)
        .mul_f64(seq.params.base_exponent(), mode)
        .div(&pow8_int(k, mode.flip()), mode)
        .expect("nonzero")
}

fn ln_f64(x: f64, mode: Rounding) -> TowerReal {
    TowerReal::from_f64_r(round::ln(x, mode), mode)
}

fn exponent_bracket(seq: &ScaleSequence, k: usize) -> Bracket {
    Bracket {
        lo: exponent(seq, k, Rounding::Down),
        est: exponent(seq, k, Rounding::Nearest),
        hi: exponent(seq, k, Rounding::Up),
    }
}

/// `L_k / E_k = L0 8^k / (3(d-1))`.
fn l_over_exponent(seq: &ScaleSequence, k: usize, mode: Rounding) -> TowerReal {
    TowerReal::from_f64_r(seq.params.l0, mode)
        .mul(&pow8_int(k, mode), mode)
        .div_f64(seq.params.base_exponent(), mode)
        .expect("nonzero")
}

/// `G_j = L_j / (L0 F(j)) = (alpha c1/u0)^j prod_{i<j} scaling_i`.
fn growth_factor(seq: &ScaleSequence, j: usize, mode: Rounding) -> TowerReal {
    let mut g = TowerReal::from_f64_r(seq.params.growth(mode), mode)
        .pow(j as f64, mode)
        .expect("positive");
    for &s in &seq.scaling[..j] {
        g = g.mul_f64(s, mode);
    }
    g
}

/// `ln F(j+1) / F(j)`. For even `j >= 2`, `F(j+1) = 8^{F(j)}` gives `ln 8`
/// exactly, which keeps the leading terms comparable at any height.
fn log_step(seq: &ScaleSequence, j: usize, mode: Rounding) -> TowerReal {
    if j >= 2 && j % 2 == 0 {
        ln_f64(8.0, mode)
    } else {
        seq.f[j + 1]
            .get(mode)
            .ln(mode)
            .expect("F >= 1")
            .div(&seq.f[j].get(mode.flip()), mode)
            .expect("positive")
    }
}

/// Lower bound of `a b` for `a` in a positive bracket and `b >= b_lo`.
fn mul_lower(a: &Bracket, b_lo: &TowerReal) -> TowerReal {
    let a = if *b_lo >= TowerReal::ZERO { a.lo } else { a.hi };
    a.mul(b_lo, Rounding::Down)
}

/// Upper bound of `a b` for `a` in a positive bracket and `b <= b_hi`.
fn mul_upper(a: &Bracket, b_hi: &TowerReal) -> TowerReal {
    let a = if *b_hi <= TowerReal::ZERO { a.lo } else { a.hi };
    a.mul(b_hi, Rounding::Up)
}

/// Upper bound of `x / e` for `x <= x_hi` and `e` in a positive bracket.
fn div_upper(x_hi: &TowerReal, e: &Bracket) -> TowerReal {
    let e = if *x_hi >= TowerReal::ZERO { e.lo } else { e.hi };
    x_hi.div(&e, Rounding::Up).expect("positive")
}

/// Lower bound of `x / e` for `x >= x_lo` and `e` in a positive bracket.
fn div_lower(x_lo: &TowerReal, e: &Bracket) -> TowerReal {
    let e = if *x_lo >= TowerReal::ZERO { e.hi } else { e.lo };
    x_lo.div(&e, Rounding::Down).expect("positive")
}

fn positive_product(a: &Bracket, b: &Bracket) -> Bracket {
    Bracket {
        lo: a.lo.mul(&b.lo, Rounding::Down),
        est: a.est.mul(&b.est, Rounding::Nearest),
        hi: a.hi.mul(&b.hi, Rounding::Up),
    }
}

fn scaled(a: &Bracket, num: f64, den: f64) -> Bracket {
    let f = |x: &TowerReal, m: Rounding| x.mul_f64(num, m).div_f64(den, m).expect("nonzero");
    Bracket {
        lo: f(&a.lo, Rounding::Down),
        est: f(&a.est, Rounding::Nearest),
        hi: f(&a.hi, Rounding::Up),
    }
}

/// Verdicts and margins of the growth conditions at one `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GReport {
    pub k: usize,
    pub g1: bool,
    /// Lower bound of `u_k N_k / (alpha c1)`; `N_k` may be divided by anything
    /// below it without breaking the first condition.
    pub g1_ratio: TowerReal,
    /// `ln` of `g1_ratio`, rounded down.
    pub g1_log_margin: TowerReal,
    pub g2: bool,
    /// Lower bound of `-ln(c5 N_{k+1}^{3(d-1)} L_{k+1}^{3d-1} kappa^{u_{k+1} L_{k+1}})`.
    pub g2_log_margin: TowerReal,
}

/// Check both growth conditions for `k = 0 .. k_max - 1`.
///
/// The second condition is evaluated relative to `E_{k+1} = u_{k+1} L_{k+1} ln(1/kappa)`.
pub fn check_g(seq: &ScaleSequence) -> Vec<GReport> {
    let p = &seq.params;
    let d = p.d as f64;
    let up = Rounding::Up;
    (0..seq.k_max())
        .map(|k| {
            // u_k N_k / (alpha c1) = scaling_k F(k+1) / (F(k) 8^k)
            let ratio = seq.f[k + 1]
                .lo
                .div(&seq.f[k].hi.mul(&pow8_int(k, up), up), Rounding::Down)
                .expect("positive")
                .mul_f64(seq.scaling[k], Rounding::Down);
            let g1 = ratio >= TowerReal::ONE;
            let g1_log_margin = ratio.ln(Rounding::Down).expect("positive");

            // ln N_j = ln(A s_j) + (ln F(j+1)/F(j)) F(j) - ln F(j)
            let j = k + 1;
            let e = exponent_bracket(seq, j);
            let next = &seq.entries[j];
            let ln_a = ln_f64(round::mul(p.growth(up), seq.scaling[j], up), up);
            let small = ln_f64(p.c5(), up)
                .add(&next.l.hi.ln(up).unwrap().mul_f64(3.0 * d - 1.0, up), up)
                .add(
                    &ln_a
                        .sub(&seq.f[j].lo.ln(Rounding::Down).unwrap(), up)
                        .mul_f64(3.0 * (d - 1.0), up),
                    up,
                );
            // 3(d-1) F(j) / E_j = 8^j / G_j
            let big = log_step(seq, j, up)
                .mul(&pow8_int(j, up), up)
                .div(&growth_factor(seq, j, Rounding::Down), up)
                .unwrap();
            let rel = div_upper(&small, &e).add(&big, up);
            let slack = TowerReal::ONE.sub(&rel, Rounding::Down);
            GReport {
                k,
                g1,
                g1_ratio: ratio,
                g1_log_margin,
                g2: rel <= TowerReal::ONE,
                g2_log_margin: mul_lower(&e, &slack),
            }
        })
        .collect()
}

/// Starting value of the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phi0 {
    /// `ln phi_0`, taken as exact.
    Log(f64),
    /// `phi_0` itself.
    Value(TowerReal),
}

impl Phi0 {
    /// The boundary case `phi_0 = kappa^{u0 L0} = e^{-3(d-1)}`.
    pub fn boundary(params: &ScaleParams) -> Self {
        Phi0::Log(-params.base_exponent())
    }

    fn ln_upper(&self) -> Result<TowerReal> {
        Ok(match *self {
            Phi0::Log(l) => TowerReal::from_f64_rounded(l, Rounding::Up)?,
            Phi0::Value(v) => v.ln(Rounding::Up)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiStep {
    pub k: usize,
    /// Lower bound of `ln(1/phi_k) / (u_k L_k ln(1/kappa))`; the step passes
    /// when it is at least one.
    pub ratio: TowerReal,
    /// Estimate of the bound on `ln phi_k`.
    pub ln_phi: TowerReal,
    /// Estimate of `ln kappa^{u_k L_k}`.
    pub ln_target: TowerReal,
    pub pass: bool,
    /// Lower bound of `ln kappa^{u_k L_k} - ln phi_k`.
    pub margin: TowerReal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiReport {
    pub steps: Vec<PhiStep>,
    /// First `k` whose bound misses its target.
    pub first_failure: Option<usize>,
}

/// Run the `phi_k` recursion up to `k_max` with adverse rounding and compare
/// each bound with `kappa^{u_k L_k}`.
///
/// The sum over `m` is bounded by its term count times its largest term, and
/// `ln(e^a + e^b)` by `max(a, b) + ln 2`. The state is `ln(1/phi_k) / E_k`
/// with `E_k = u_k L_k ln(1/kappa)`, since the recursion gains only constant
/// factors over the target and those vanish in absolute tower form.
pub fn propagate_phi(phi0: Phi0, seq: &ScaleSequence, k_max: usize) -> Result<PhiReport> {
    if k_max + 1 > seq.k_max() {
        return Err(bad(format!(
            "phi_{k_max} needs scales up to {}, sequence stops at {}",
            k_max + 1,
            seq.k_max()
        )));
    }
    let p = &seq.params;
    let d = p.d as f64;
    let (down, up) = (Rounding::Down, Rounding::Up);
    let c1 = round::sqrt(d, up);
    let kappa_coef = round::mul(10.0 * c1, p.ln_inv_kappa(up), up);
    let mut r = div_lower(&phi0.ln_upper()?.neg(), &exponent_bracket(seq, 0));
    let mut steps = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let e = exponent_bracket(seq, k);
        steps.push(PhiStep {
            k,
            ratio: r,
            ln_phi: r.mul(&e.est, Rounding::Nearest).neg(),
            ln_target: e.est.neg(),
            pass: r >= TowerReal::ONE,
            margin: mul_lower(&e, &r.sub(&TowerReal::ONE, down)),
        });
        if k == k_max {
            break;
        }
        let n = &seq.entries[k].n;
        let next = &seq.entries[k + 1];
        let en = exponent_bracket(seq, k + 1);
        // kappa^{-10 c1 L_{k+1}} phi_k^{N_k^2/12}, over E_{k+1} = N_k E_k / 8
        let t1 = l_over_exponent(seq, k + 1, up)
            .mul_f64(kappa_coef, up)
            .sub(&mul_lower(&scaled(n, 2.0, 3.0), &r), up);
        // ([N_k] + 2) phi_k^{([N_k] - 1)/2}, same scale
        let count = n.hi.add(&TowerReal::from(2u32), up).ln(up)?.mul_f64(8.0, up);
        // ([N] - 1)/N >= 1 - 2/N; never divide a lower bound by an upper one,
        // brackets of height two or more are wide in relative terms
        let frac = Bracket {
            lo: TowerReal::ONE
                .sub(&n.lo.recip().mul_f64(2.0, up), down)
                .mul_f64(4.0, down),
            est: TowerReal::from(4u32),
            hi: TowerReal::from(4u32),
        };
        let t2 = div_upper(&count, &positive_product(n, &e)).sub(&mul_lower(&frac, &r), up);
        // ln L~_{k+2} = 3 ln G_{k+2} + ln L~0 + 3 (ln F(k+2)/F(k+1)) F(k+1)
        let ln_lt = growth_factor(seq, k + 2, up)
            .ln(up)?
            .mul_f64(3.0, up)
            .add(&ln_f64(p.ltilde0, up), up);
        let pref = ln_f64(2.0 * p.c3 * p.c4, up)
            .add(&ln_lt.mul_f64(d - 1.0, up), up)
            .add(&next.l.hi.ln(up)?, up);
        // (d-1) 3 F(k+1) / E_{k+1} = 8^{k+1} / G_{k+1}
        let lead = log_step(seq, k + 1, up)
            .mul(&pow8_int(k + 1, up), up)
            .div(&growth_factor(seq, k + 1, down), up)?;
        r = div_upper(&pref, &en)
            .add(&lead, up)
            .add(&t1.max(t2), up)
            .neg();
    }
    let first_failure = steps.iter().find(|s| !s.pass).map(|s| s.k);
    Ok(PhiReport {
        steps,
        first_failure,
    })
}

/// Certified `f_n(a + b) >= f_n(a) f_n(b)` for `a, b >= 1`.
///
/// For `n = 1` both sides are `8^{a+b}`, an identity that directed rounding
/// cannot resolve, so it is answered exactly.
pub fn superadditivity_check(n: u32, a: f64, b: f64) -> Result<bool> {
    if !(a >= 1.0 && b >= 1.0 && a.is_finite() && b.is_finite()) {
        return Err(bad("superadditivity needs finite a, b >= 1"));
    }
    match n {
        0 | 1 => Ok(true),
        _ => {
            let lhs = f_tower_rounded(n, round::add(a, b, Rounding::Down), Rounding::Down)?;
            let rhs = f_tower_rounded(n, a, Rounding::Up)?
                .mul(&f_tower_rounded(n, b, Rounding::Up)?, Rounding::Up);
            Ok(lhs >= rhs)
        }
    }
}

/// Where `L` sits in the scale sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub k: usize,
    /// `n(L) = [(k+1)/2]`.
    pub n: u32,
    /// `L_k <= L < L_{k+1}` holds for the certified bounds, not only the estimates.
    pub certified: bool,
    /// `log_8` applied `n` times to `L` (nearest rounding).
    pub iterlog: Option<TowerReal>,
    /// `k/4 <= [k/2] <= log_8^{(n)} L` certified from `L >= L_k >= F(k)` and
    /// `log_8^{(n)} F(k) = [k/2]`.
    pub sandwich: bool,
    /// The same sandwich checked on the numeric iterated logarithm.
    pub sandwich_numeric: bool,
}

pub fn locate_k(l: &TowerReal, seq: &ScaleSequence) -> Result<Location> {
    let first = &seq.entries[0];
    if *l < first.l.est {
        return Err(RenormError::BelowL0(*l));
    }
    let k = (0..seq.k_max())
        .find(|&k| *l < seq.entries[k + 1].l.est)
        .ok_or(RenormError::BeyondScales(*l))?;
    let certified = *l >= seq.entries[k].l.hi && *l < seq.entries[k + 1].l.lo;
    let n = k.div_ceil(2) as u32;
    let iterlog = l.iterlog_rounded(V, n, Rounding::Nearest).ok();
    let half = (k / 2) as f64;
    // L_k >= F(k) needs (alpha c1/u0)^k L0 >= 1
    let structural = seq.params.growth(Rounding::Down) >= 1.0 && seq.params.l0 >= 1.0;
    let l_ge_lk = l.compare(&seq.entries[k].l.est) != Ordering::Less;
    let sandwich = k == 0 || (structural && l_ge_lk && k as f64 / 4.0 <= half);
    let sandwich_numeric = match &iterlog {
        Some(t) => k as f64 / 4.0 <= half && TowerReal::from_f64_r(half, Rounding::Nearest) <= *t,
        None => false,
    };
    Ok(Location {
        k,
        n,
        certified,
        iterlog,
        sandwich,
        sandwich_numeric,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    One,
    Two,
}

/// Intermediate scales between `L_k` and `L_{k+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScales {
    pub k: usize,
    pub case: Case,
    /// `m_k = floor(L / L_k)`, exact when `lo == hi`.
    pub m: Bracket,
    pub s1: Bracket,
    pub s1_tilde: Bracket,
    pub s2: Bracket,
    pub s2_tilde: Bracket,
    /// `m_k L_k <= L < (m_k + 1) L_k` certified numerically. A floor always
    /// satisfies it; this only reports whether the brackets resolve it.
    pub bracket_certified: bool,
}

fn floor_bracket(q: &Bracket) -> Bracket {
    match (q.lo.as_f64(), q.hi.as_f64()) {
        (Some(lo), Some(hi)) if hi < 2f64.powi(52) => {
            let lo = TowerReal::from_f64_r(lo.floor(), Rounding::Down);
            let hi = TowerReal::from_f64_r(hi.floor(), Rounding::Up);
            let est = TowerReal::from_f64_r(q.est.to_f64().floor(), Rounding::Nearest);
            Bracket { lo, est: est.max(lo).min(hi), hi }
        }
        _ => Bracket {
            lo: q.lo.sub(&TowerReal::ONE, Rounding::Down).max(TowerReal::ZERO),
            est: q.est,
            hi: q.hi,
        },
    }
}

/// Intermediate scales for a given `m_k` (used for forced values too).
pub fn case_scales_with_m(
    l: &TowerReal,
    k: usize,
    case: Case,
    m: Bracket,
    seq: &ScaleSequence,
) -> Result<CaseScales> {
    let e = &seq.entries[k];
    let scale = |p: f64, base: &Bracket| {
        Bracket::eval(|mode| Ok(m.get(mode).pow(p, mode)?.mul(&base.get(mode), mode)))
    };
    let s1 = scale(1.0, &e.l)?;
    let s1_tilde = scale(3.0, &e.ltilde)?;
    let s2 = scale(2.0, &e.l)?;
    let s2_tilde = scale(6.0, &e.ltilde)?;
    let m1 = m.hi.add(&TowerReal::ONE, Rounding::Down);
    let upper = m1.mul(&e.l.lo, Rounding::Down);
    let bracket_certified = s1.hi <= *l && *l < upper;
    Ok(CaseScales {
        k,
        case,
        m,
        s1,
        s1_tilde,
        s2,
        s2_tilde,
        bracket_certified,
    })
}

/// Classify `L` as case one (`L <= (2 alpha c1/u0) 8^k L_k`) or case two.
/// Case two is only reported when certified.
pub fn case_scales(l: &TowerReal, seq: &ScaleSequence) -> Result<CaseScales> {
    let loc = locate_k(l, seq)?;
    let k = loc.k;
    let e = &seq.entries[k];
    let threshold = TowerReal::from_f64_rounded(2.0 * seq.params.growth(Rounding::Up), Rounding::Up)?
        .mul(&pow8_int(k, Rounding::Up), Rounding::Up)
        .mul(&e.l.hi, Rounding::Up);
    let case = if *l > threshold { Case::Two } else { Case::One };
    let q = Bracket::eval(|mode| l.div(&e.l.get(mode.flip()), mode))?;
    case_scales_with_m(l, k, case, floor_bracket(&q), seq)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub name: String,
    pub pass: bool,
    /// Certified lower bound of `ln(rhs) - ln(lhs)`.
    pub log_margin: TowerReal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedReport {
    /// `m_k >= (alpha c1/u0) 8^k` certified.
    pub m_floor_ok: bool,
    /// Upper bound of `ln E[rho_hat_k^{a_{k+1}}]`.
    pub ln_rho_hat: TowerReal,
    pub links: Vec<Link>,
    pub pass: bool,
    pub first_failure: Option<String>,
}

/// Follow the chain that bounds the refined box moment in case two.
///
/// `ln_phi_k` is an upper bound of `ln phi_k`; by default the bound
/// `kappa^{u_k L_k}` is used. Each link is evaluated relative to
/// `m_k E_k` with `E_k = u_k L_k ln(1/kappa)`.
pub fn check_refined_bound(
    cs: &CaseScales,
    seq: &ScaleSequence,
    ln_phi_k: Option<TowerReal>,
) -> Result<RefinedReport> {
    if cs.case != Case::Two {
        return Err(RenormError::NotCaseTwo);
    }
    let p = &seq.params;
    let k = cs.k;
    let d = p.d as f64;
    let (down, up) = (Rounding::Down, Rounding::Up);
    let e = exponent_bracket(seq, k);
    // ln(1/phi_k) / E_k
    let r = match ln_phi_k {
        None => TowerReal::ONE,
        Some(l) => div_lower(&l.neg(), &e),
    };
    let c1 = round::sqrt(d, up);
    let m = &cs.m;

    let floor = TowerReal::from_f64_rounded(p.growth(up), up)?.mul(&pow8_int(k, up), up);
    let m_floor_ok = m.lo >= floor;

    let me = positive_product(m, &e);
    // D = u_{k+1} S1 ln(1/kappa) = m_k E_k / 8
    let dd = scaled(&me, 1.0, 8.0);
    // 10 c1 ln(1/kappa) L_k / E_k
    let kap = l_over_exponent(seq, k, up).mul_f64(round::mul(10.0 * c1, p.ln_inv_kappa(up), up), up);

    let mut links = Vec::new();
    let mut push = |name: &str, rel: TowerReal, scale: &Bracket| {
        links.push(Link {
            name: name.to_string(),
            pass: rel <= TowerReal::ZERO,
            log_margin: mul_lower(scale, &rel.neg()),
        });
    };

    // kappa^{-10 c1 S1} phi^{m^2/24} <= 1, over m E_k
    let aux1 = kap.sub(&mul_lower(&scaled(m, 1.0, 24.0), &r), up);
    push("aux1", aux1, &me);

    // 2 c3 (S2~)^{d-1} (S1)^2 phi^{m/8} <= 1, over m E_k
    let logs = ln_f64(2.0 * p.c3, up)
        .add(&cs.s2_tilde.hi.ln(up)?.mul_f64(d - 1.0, up), up)
        .add(&cs.s1.hi.ln(up)?.mul_f64(2.0, up), up);
    let last = div_upper(&logs, &me).sub(&r.mul_f64(0.125, down), up);
    push("last", last, &me);

    // E[rho_hat^{a_{k+1}}] <= c3 {kappa^{-10c1 S1} phi^{m^2/12} + (m+2) phi^{(m-1)/2}}, over D
    let t1 = kap.mul_f64(8.0, up).sub(&mul_lower(&scaled(m, 2.0, 3.0), &r), up);
    let count = m.hi.add(&TowerReal::from(2u32), up).ln(up)?.mul_f64(8.0, up);
    let frac = Bracket {
        lo: m.lo.sub(&TowerReal::ONE, down).div(&m.lo, down)?.mul_f64(4.0, down),
        est: TowerReal::from(4u32),
        hi: TowerReal::from(4u32),
    };
    let t2 = div_upper(&count, &me).sub(&mul_lower(&frac, &r), up);
    let rho = div_upper(&ln_f64(2.0 * p.c3, up), &dd).add(&t1.max(t2), up);
    let ln_rho_hat = mul_upper(&dd, &rho);

    // (S2~)^{d-1} S1 E[rho_hat^{a_{k+1}}] <= kappa^{u_{k+1} S1}, over D
    let logs = cs
        .s2_tilde
        .hi
        .ln(up)?
        .mul_f64(d - 1.0, up)
        .add(&cs.s1.hi.ln(up)?, up);
    let desfinal = div_upper(&logs, &dd).add(&rho, up).add(&TowerReal::ONE, up);
    push("desfinal", desfinal, &dd);

    let mut all = links;
    all.insert(
        0,
        Link {
            name: "m_floor".into(),
            pass: m_floor_ok,
            log_margin: m.lo.ln(down)?.sub(&floor.ln(up)?, down),
        },
    );
    let first_failure = all.iter().find(|l| !l.pass).map(|l| l.name.clone());
    Ok(RefinedReport {
        m_floor_ok,
        ln_rho_hat,
        pass: first_failure.is_none(),
        first_failure,
        links: all,
    })
}

/// Effective exponents at `L`, all with `log = log_8`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub k: usize,
    pub n: u32,
    pub log8_l: TowerReal,
    pub iterlog: TowerReal,
    /// `C log^{(n)} L / log L`.
    pub gap_iterated: TowerReal,
    /// `C sqrt(log L) / log L`.
    pub gap_sznitman: TowerReal,
    /// `C / log L`.
    pub gap_t: TowerReal,
    pub gamma_iterated: f64,
    pub gamma_sznitman: f64,
    pub gamma_t: f64,
}

impl GammaReport {
    /// `(1 - gamma_iterated) / (1 - gamma_sznitman) = log^{(n)} L / sqrt(log L)`.
    pub fn gap_ratio(&self) -> TowerReal {
        let s = self.log8_l.sqrt(Rounding::Nearest).expect("positive");
        self.iterlog.div(&s, Rounding::Nearest).expect("positive")
    }
}

pub fn gamma_effective(l: &TowerReal, seq: &ScaleSequence) -> Result<GammaReport> {
    let loc = locate_k(l, seq)?;
    gamma_at(l, loc.k, seq.params.c_result)
}

/// Exponents with an explicit `n(L) = [(k+1)/2]`.
pub fn gamma_at(l: &TowerReal, k: usize, c: f64) -> Result<GammaReport> {
    let near = Rounding::Nearest;
    let n = k.div_ceil(2) as u32;
    let log8_l = l.iterlog_rounded(V, 1, near)?;
    let iterlog = l.iterlog_rounded(V, n, near)?;
    if iterlog <= TowerReal::ONE {
        return Err(bad(format!("log_8^({n}) L = {iterlog} must exceed 1")));
    }
    let gap = |num: TowerReal| -> Result<TowerReal> { Ok(num.mul_f64(c, near).div(&log8_l, near)?) };
    let gap_iterated = gap(iterlog)?;
    let gap_sznitman = gap(log8_l.sqrt(near)?)?;
    let gap_t = gap(TowerReal::ONE)?;
    let one_minus = |g: &TowerReal| 1.0 - g.to_f64();
    Ok(GammaReport {
        k,
        n,
        log8_l,
        iterlog,
        gamma_iterated: one_minus(&gap_iterated),
        gamma_sznitman: one_minus(&gap_sznitman),
        gamma_t: one_minus(&gap_t),
        gap_iterated,
        gap_sznitman,
        gap_t,
    })
}
