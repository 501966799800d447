use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::round::{self, Rounding};
use super::TowerError;

/// Mantissas at height zero stay below this value.
pub const THRESHOLD: f64 = 1e12;

/// Lower mantissa bound at height one and above.
///
/// This is the `f64` just above `ln(1e12)`, so `exp(LN_THRESHOLD) > THRESHOLD`
/// and the ranges covered by consecutive heights never overlap. That keeps the
/// lexicographic `(height, mantissa)` order exact.
pub const LN_THRESHOLD: f64 = 27.63102111592855;

/// Largest height accepted by the scale constructors.
pub const MAX_HEIGHT: u32 = 64;

/// Mantissas at height one whose exponential still fits comfortably in `f64`.
const DEMOTABLE_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    fn flip(self) -> Self {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Zero => Sign::Zero,
            Sign::Positive => Sign::Negative,
        }
    }

    fn times(self, other: Sign) -> Sign {
        match (self, other) {
            (Sign::Zero, _) | (_, Sign::Zero) => Sign::Zero,
            (a, b) if a == b => Sign::Positive,
            _ => Sign::Negative,
        }
    }
}

/// A magnitude `exp^h(y) >= 1` in canonical form.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Mag {
    h: u32,
    y: f64,
}

impl Mag {
    const ONE: Mag = Mag { h: 0, y: 1.0 };

    fn cmp(&self, other: &Mag) -> Ordering {
        self.h
            .cmp(&other.h)
            .then_with(|| self.y.partial_cmp(&other.y).unwrap_or(Ordering::Equal))
    }

    /// Bound on the magnitude as a plain float (may be infinite when rounding up).
    fn to_f64(self, mode: Rounding) -> f64 {
        match self.h {
            0 => self.y,
            1 => round::exp(self.y, mode),
            _ if mode == Rounding::Down => f64::MAX,
            _ => f64::INFINITY,
        }
    }

    /// Bound on `1 / magnitude`.
    fn recip_to_f64(self, mode: Rounding) -> f64 {
        match self.h {
            0 => round::div(1.0, self.y, mode),
            1 => round::exp(-self.y, mode),
            _ if mode == Rounding::Up => f64::from_bits(1),
            _ => 0.0,
        }
    }
}

/// Bring `exp^h(y)` (assumed `>= 1`) into canonical form, rounding every
/// re-expressed mantissa in direction `mode`.
fn normalize_mag(mut h: u32, mut y: f64, mode: Rounding) -> Mag {
    debug_assert!(y.is_finite(), "non-finite mantissa");
    loop {
        if y >= THRESHOLD {
            let l = round::ln(y, mode);
            if l < LN_THRESHOLD {
                // the value sits in the gap [T, exp(LN_THRESHOLD))
                return match mode {
                    Rounding::Up => Mag { h: h + 1, y: LN_THRESHOLD },
                    _ => Mag { h, y: THRESHOLD.next_down() },
                };
            }
            h += 1;
            y = l;
        } else if h >= 1 && y < LN_THRESHOLD {
            let e = round::exp(y, mode);
            if e >= THRESHOLD {
                return match mode {
                    Rounding::Up => Mag { h, y: LN_THRESHOLD },
                    _ => Mag { h: h - 1, y: THRESHOLD.next_down() },
                };
            }
            h -= 1;
            y = e;
        } else {
            return Mag { h, y };
        }
    }
}

/// A signed real `± exp^height(mantissa)`, or its reciprocal, with the
/// mantissa kept in a fixed window so that huge towers compare and multiply
/// without overflow.
///
/// Values below one in magnitude carry the reciprocal flag and store the
/// tower of `1 / |x|`. Every constructor returns canonical form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TowerReal {
    sign: Sign,
    reciprocal: bool,
    height: u32,
    mantissa: f64,
}

impl TowerReal {
    pub const ZERO: TowerReal = TowerReal {
        sign: Sign::Zero,
        reciprocal: false,
        height: 0,
        mantissa: 0.0,
    };

    pub const ONE: TowerReal = TowerReal {
        sign: Sign::Positive,
        reciprocal: false,
        height: 0,
        mantissa: 1.0,
    };

    fn from_mag(sign: Sign, reciprocal: bool, mag: Mag) -> Self {
        if sign == Sign::Zero {
            return Self::ZERO;
        }
        let reciprocal = reciprocal && mag != Mag::ONE;
        TowerReal {
            sign,
            reciprocal,
            height: mag.h,
            mantissa: mag.y,
        }
    }

    fn mag(&self) -> Mag {
        Mag {
            h: self.height,
            y: self.mantissa,
        }
    }

    /// Build from raw parts, normalizing non-canonical input with
    /// round-to-nearest.
    pub fn from_parts(
        sign: Sign,
        reciprocal: bool,
        height: u32,
        mantissa: f64,
    ) -> Result<Self, TowerError> {
        if !mantissa.is_finite() {
            return Err(TowerError::NonFinite(mantissa));
        }
        if sign == Sign::Zero {
            return Ok(Self::ZERO);
        }
        if mantissa < 0.0 && height == 0 {
            return Err(TowerError::NegativeMantissa(mantissa));
        }
        // walk down until the mantissa is in range or we reach height zero
        let mut h = height;
        let mut y = mantissa;
        while h >= 1 && y < LN_THRESHOLD {
            y = y.exp();
            h -= 1;
        }
        if !y.is_finite() {
            return Err(TowerError::NonFinite(y));
        }
        let magnitude = if h == 0 {
            if y == 0.0 {
                return if reciprocal {
                    Err(TowerError::DivisionByZero)
                } else {
                    Ok(Self::ZERO)
                };
            }
            Self::from_f64_r(y, Rounding::Nearest)
        } else {
            Self::from_mag(Sign::Positive, false, normalize_mag(h, y, Rounding::Nearest))
        };
        let magnitude = if reciprocal {
            magnitude.recip()
        } else {
            magnitude
        };
        Ok(if sign == Sign::Negative {
            magnitude.neg()
        } else {
            magnitude
        })
    }

    /// Exact-as-possible conversion from a finite float.
    pub fn from_f64(x: f64) -> Result<Self, TowerError> {
        Self::from_f64_rounded(x, Rounding::Nearest)
    }

    /// Conversion from a finite float, rounded in direction `mode`.
    pub fn from_f64_rounded(x: f64, mode: Rounding) -> Result<Self, TowerError> {
        if !x.is_finite() {
            return Err(TowerError::NonFinite(x));
        }
        Ok(Self::from_f64_r(x, mode))
    }

    pub(crate) fn from_f64_r(v: f64, mode: Rounding) -> Self {
        debug_assert!(v.is_finite());
        if v == 0.0 {
            return Self::ZERO;
        }
        let (sign, mm) = if v > 0.0 {
            (Sign::Positive, mode)
        } else {
            (Sign::Negative, mode.flip())
        };
        let a = v.abs();
        if a >= 1.0 {
            Self::from_mag(sign, false, normalize_mag(0, a, mm))
        } else if a >= 1.0 / THRESHOLD {
            let base = round::div(1.0, a, mm.flip());
            if base <= 1.0 {
                Self::from_mag(sign, false, Mag::ONE)
            } else {
                Self::from_mag(sign, true, normalize_mag(0, base, mm.flip()))
            }
        } else {
            // |v| = exp(-l) with l = -ln|v|
            let l = -round::ln(a, mm);
            Self::from_mag(sign, true, normalize_mag(1, l, mm.flip()))
        }
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn is_reciprocal(&self) -> bool {
        self.reciprocal
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn mantissa(&self) -> f64 {
        self.mantissa
    }

    pub fn is_zero(&self) -> bool {
        self.sign == Sign::Zero
    }

    pub fn is_positive(&self) -> bool {
        self.sign == Sign::Positive
    }

    /// Nearest `f64`; saturates to `±inf` or `0` outside the float range.
    pub fn to_f64(&self) -> f64 {
        self.to_f64_rounded(Rounding::Nearest)
    }

    /// Directed bound on the value as a float.
    pub fn to_f64_rounded(&self, mode: Rounding) -> f64 {
        match self.sign {
            Sign::Zero => 0.0,
            Sign::Positive => self.abs_to_f64(mode),
            Sign::Negative => -self.abs_to_f64(mode.flip()),
        }
    }

    /// The value as a float when it is finite, `None` otherwise.
    pub fn as_f64(&self) -> Option<f64> {
        let v = self.to_f64();
        (v.is_finite() && (v != 0.0 || self.is_zero())).then_some(v)
    }

    fn abs_to_f64(&self, mode: Rounding) -> f64 {
        if self.reciprocal {
            self.mag().recip_to_f64(mode)
        } else {
            self.mag().to_f64(mode)
        }
    }

    fn demotable(&self) -> bool {
        self.height == 0 || (self.height == 1 && self.mantissa <= DEMOTABLE_EXPONENT)
    }

    pub fn neg(&self) -> Self {
        TowerReal {
            sign: self.sign.flip(),
            ..*self
        }
    }

    pub fn abs(&self) -> Self {
        if self.sign == Sign::Negative {
            self.neg()
        } else {
            *self
        }
    }

    /// `1 / x`, exact. Zero maps to zero; use [`TowerReal::div`] for a checked
    /// division.
    pub fn recip(&self) -> Self {
        if self.is_zero() {
            return *self;
        }
        Self::from_mag(self.sign, !self.reciprocal, self.mag())
    }

    /// Total order on values.
    pub fn compare(&self, other: &Self) -> Ordering {
        match (self.sign, other.sign) {
            (a, b) if a != b => a.cmp(&b),
            (Sign::Zero, _) => Ordering::Equal,
            (Sign::Positive, _) => cmp_abs(self, other),
            _ => cmp_abs(other, self),
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self.compare(&other) == Ordering::Less {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self.compare(&other) == Ordering::Greater {
            other
        } else {
            self
        }
    }

    /// Move the magnitude one mantissa ulp in direction `mm`.
    fn nudge_abs(&self, mm: Rounding) -> Self {
        if self.is_zero() || mm == Rounding::Nearest {
            return *self;
        }
        if !self.reciprocal {
            if mm == Rounding::Down && self.height == 0 && self.mantissa == 1.0 {
                return Self::from_f64_r(1.0f64.next_down(), Rounding::Down)
                    .with_sign(self.sign);
            }
            let y = round::nudge(self.mantissa, mm);
            Self::from_mag(self.sign, false, normalize_mag(self.height, y, mm))
        } else {
            let base = round::nudge(self.mantissa, mm.flip());
            if base <= 1.0 {
                return Self::ONE.with_sign(self.sign);
            }
            Self::from_mag(self.sign, true, normalize_mag(self.height, base, mm.flip()))
        }
    }

    /// Move the value one ulp of its mantissa in direction `mode`.
    pub fn nudged(&self, mode: Rounding) -> Self {
        match self.sign {
            Sign::Zero => match mode {
                Rounding::Up => Self::from_f64_r(f64::from_bits(1), Rounding::Up),
                Rounding::Down => Self::from_f64_r(-f64::from_bits(1), Rounding::Down),
                Rounding::Nearest => *self,
            },
            Sign::Positive => self.nudge_abs(mode),
            Sign::Negative => self.nudge_abs(mode.flip()),
        }
    }

    fn with_sign(self, sign: Sign) -> Self {
        if sign == Sign::Zero {
            Self::ZERO
        } else {
            TowerReal { sign, ..self }
        }
    }

    /// `ln |x|` for non-zero `x`, rounded in `mode`. Exact above height zero.
    fn ln_abs(&self, mode: Rounding) -> Self {
        debug_assert!(!self.is_zero());
        let m = if self.reciprocal { mode.flip() } else { mode };
        let l = if self.height >= 1 {
            Self::from_mag(
                Sign::Positive,
                false,
                Mag {
                    h: self.height - 1,
                    y: self.mantissa,
                },
            )
        } else {
            Self::from_f64_r(round::ln(self.mantissa, m), m)
        };
        if self.reciprocal {
            l.neg()
        } else {
            l
        }
    }

    /// Natural logarithm of a positive value.
    pub fn ln(&self, mode: Rounding) -> Result<Self, TowerError> {
        if self.sign != Sign::Positive {
            return Err(TowerError::LogOfNonPositive);
        }
        Ok(self.ln_abs(mode))
    }

    /// `e^x`. Exact when `x >= LN_THRESHOLD` (only the height changes).
    pub fn exp(&self, mode: Rounding) -> Self {
        match self.sign {
            Sign::Zero => Self::ONE,
            Sign::Negative => self.neg().exp(mode.flip()).recip(),
            Sign::Positive if self.reciprocal => {
                let v = self.abs_to_f64(mode);
                Self::from_f64_r(round::exp(v, mode), mode)
            }
            Sign::Positive if self.height >= 1 => Self::from_mag(
                Sign::Positive,
                false,
                Mag {
                    h: self.height + 1,
                    y: self.mantissa,
                },
            ),
            Sign::Positive if self.mantissa >= LN_THRESHOLD => Self::from_mag(
                Sign::Positive,
                false,
                Mag {
                    h: 1,
                    y: self.mantissa,
                },
            ),
            Sign::Positive => Self::from_f64_r(round::exp(self.mantissa, mode), mode),
        }
    }

    /// Signed addition.
    ///
    /// Operands of comparable size go through `ln|x| + ln1p(±|y|/|x|)`; an
    /// operand many heights below the other is absorbed, costing at most one
    /// mantissa ulp in the rounding direction.
    pub fn add(&self, other: &Self, mode: Rounding) -> Self {
        if self.is_zero() {
            return *other;
        }
        if other.is_zero() {
            return *self;
        }
        if self.demotable() && other.demotable() {
            let a = self.to_f64_rounded(mode);
            let b = other.to_f64_rounded(mode);
            return Self::from_f64_r(round::add(a, b, mode), mode);
        }
        let (big, small) = if cmp_abs(self, other) == Ordering::Less {
            (other, self)
        } else {
            (self, other)
        };
        let same = big.sign == small.sign;
        // rounding direction for |result|
        let mm = if big.sign == Sign::Positive {
            mode
        } else {
            mode.flip()
        };
        if negligible(big, small) {
            return match (same, mm) {
                (true, Rounding::Up) => big.nudge_abs(Rounding::Up),
                (false, Rounding::Down) => big.nudge_abs(Rounding::Down),
                _ => *big,
            };
        }
        // ratio r = |small| / |big| in [0, 1]
        let rmode = if same { mm } else { mm.flip() };
        let diff = small.ln_abs(rmode).add(&big.ln_abs(rmode.flip()).neg(), rmode);
        let r = diff
            .exp(rmode)
            .to_f64_rounded(rmode)
            .clamp(0.0, 1.0);
        let t = if same {
            round::ln1p(r, mm)
        } else if r >= 1.0 {
            return Self::ZERO;
        } else {
            round::ln1p(-r, mm)
        };
        let log_mag = big
            .ln_abs(mm)
            .add(&Self::from_f64_r(t, mm), mm);
        log_mag.exp(mm).with_sign(big.sign)
    }

    pub fn sub(&self, other: &Self, mode: Rounding) -> Self {
        self.add(&other.neg(), mode)
    }

    /// Product rounded in `mode`.
    pub fn mul(&self, other: &Self, mode: Rounding) -> Self {
        let sign = self.sign.times(other.sign);
        if sign == Sign::Zero {
            return Self::ZERO;
        }
        let mm = if sign == Sign::Positive {
            mode
        } else {
            mode.flip()
        };
        if self.height == 0 && other.height == 0 {
            return mul_height_zero(self, other, mm).with_sign(sign);
        }
        let log_mag = self.ln_abs(mm).add(&other.ln_abs(mm), mm);
        log_mag.exp(mm).with_sign(sign)
    }

    /// Quotient rounded in `mode`.
    pub fn div(&self, other: &Self, mode: Rounding) -> Result<Self, TowerError> {
        if other.is_zero() {
            return Err(TowerError::DivisionByZero);
        }
        Ok(self.mul(&other.recip(), mode))
    }

    /// Product with a plain float, without first converting the scalar to a
    /// tower (which would round it).
    pub fn mul_f64(&self, s: f64, mode: Rounding) -> Self {
        debug_assert!(s.is_finite());
        if s == 0.0 || self.is_zero() {
            return Self::ZERO;
        }
        let sign = self.sign.times(if s > 0.0 {
            Sign::Positive
        } else {
            Sign::Negative
        });
        let mm = if sign == Sign::Positive {
            mode
        } else {
            mode.flip()
        };
        let a = s.abs();
        let mag = match (self.height, self.reciprocal) {
            (0, false) => Self::from_f64_r(round::mul(self.mantissa, a, mm), mm),
            (0, true) => Self::from_f64_r(round::div(a, self.mantissa, mm), mm),
            _ => {
                let ln_s = Self::from_f64_r(round::ln(a, mm), mm);
                self.ln_abs(mm).add(&ln_s, mm).exp(mm)
            }
        };
        mag.with_sign(sign)
    }

    /// Quotient by a plain non-zero float.
    pub fn div_f64(&self, s: f64, mode: Rounding) -> Result<Self, TowerError> {
        if s == 0.0 {
            return Err(TowerError::DivisionByZero);
        }
        if !s.is_finite() {
            return Err(TowerError::NonFinite(s));
        }
        if self.is_zero() {
            return Ok(Self::ZERO);
        }
        let sign = self.sign.times(if s > 0.0 {
            Sign::Positive
        } else {
            Sign::Negative
        });
        let mm = if sign == Sign::Positive {
            mode
        } else {
            mode.flip()
        };
        let a = s.abs();
        let mag = match (self.height, self.reciprocal) {
            (0, false) => Self::from_f64_r(round::div(self.mantissa, a, mm), mm),
            (0, true) => Self::from_f64_r(round::mul(self.mantissa, a, mm.flip()), mm.flip()).recip(),
            _ => {
                let ln_s = Self::from_f64_r(round::ln(a, mm.flip()), mm.flip());
                self.ln_abs(mm).sub(&ln_s, mm).exp(mm)
            }
        };
        Ok(mag.with_sign(sign))
    }

    /// `x^p` for positive `x` (zero allowed when `p > 0`).
    ///
    /// Integer exponents on height-zero bases use repeated squaring while the
    /// result stays at height zero, so small exact powers such as `8^8` stay
    /// exact.
    pub fn pow(&self, p: f64, mode: Rounding) -> Result<Self, TowerError> {
        if !p.is_finite() {
            return Err(TowerError::NonFinite(p));
        }
        match self.sign {
            Sign::Negative => return Err(TowerError::NegativeBase),
            Sign::Zero if p > 0.0 => return Ok(Self::ZERO),
            Sign::Zero => return Err(TowerError::ZeroToNonPositive),
            Sign::Positive => {}
        }
        if p == 0.0 {
            return Ok(Self::ONE);
        }
        if p == 1.0 {
            return Ok(*self);
        }
        // stay on exact float products while the result is below the threshold
        if self.height == 0 && p.fract() == 0.0 && p.abs() * self.mantissa.ln() < 27.0 {
            let m = if p > 0.0 { mode } else { mode.flip() };
            let r = self.powi_positive(p.abs() as u64, m);
            return Ok(if p > 0.0 { r } else { r.recip() });
        }
        let m1 = if p > 0.0 { mode } else { mode.flip() };
        Ok(self.ln_abs(m1).mul_f64(p, mode).exp(mode))
    }

    fn powi_positive(&self, mut e: u64, mode: Rounding) -> Self {
        let mut result = Self::ONE;
        let mut base = *self;
        loop {
            if e & 1 == 1 {
                result = result.mul(&base, mode);
            }
            e >>= 1;
            if e == 0 {
                return result;
            }
            base = base.mul(&base, mode);
        }
    }

    /// `x^p` with a tower exponent.
    pub fn powt(&self, p: &Self, mode: Rounding) -> Result<Self, TowerError> {
        if p.height == 0 && !p.reciprocal {
            return self.pow(p.to_f64(), mode);
        }
        match self.sign {
            Sign::Negative => return Err(TowerError::NegativeBase),
            Sign::Zero if p.is_positive() => return Ok(Self::ZERO),
            Sign::Zero => return Err(TowerError::ZeroToNonPositive),
            Sign::Positive => {}
        }
        let m1 = if p.is_positive() { mode } else { mode.flip() };
        Ok(self.ln_abs(m1).mul(p, mode).exp(mode))
    }

    pub fn sqrt(&self, mode: Rounding) -> Result<Self, TowerError> {
        match (self.sign, self.height, self.reciprocal) {
            (Sign::Negative, ..) => Err(TowerError::NegativeBase),
            (Sign::Zero, ..) => Ok(Self::ZERO),
            (_, 0, false) => Ok(Self::from_f64_r(round::sqrt(self.mantissa, mode), mode)),
            (_, 0, true) => {
                Ok(Self::from_f64_r(round::sqrt(self.mantissa, mode.flip()), mode.flip()).recip())
            }
            _ => self.pow(0.5, mode),
        }
    }

    /// `log_base` applied `count` times, returned as a plain float.
    pub fn iterlog(&self, base: f64, count: u32) -> Result<f64, TowerError> {
        let t = self.iterlog_rounded(base, count, Rounding::Nearest)?;
        t.as_f64().ok_or(TowerError::NotRepresentable)
    }

    /// Directed version of [`TowerReal::iterlog`] that keeps the tower form.
    pub fn iterlog_rounded(
        &self,
        base: f64,
        count: u32,
        mode: Rounding,
    ) -> Result<Self, TowerError> {
        if !(base.is_finite() && base > 1.0) {
            return Err(TowerError::BadLogBase(base));
        }
        // dividing by a larger ln(base) gives a smaller quotient
        let ln_base = round::ln(base, mode.flip());
        let mut x = *self;
        for iteration in 1..=count {
            if x.compare(&Self::ONE) != Ordering::Greater {
                return Err(TowerError::IterLogDomain { iteration });
            }
            x = x.ln_abs(mode).div_f64(ln_base, mode)?;
        }
        Ok(x)
    }

    /// Distance in mantissa ulps between two values at the same height,
    /// `inf` when their representations are not comparable that way.
    pub fn ulps_between(&self, other: &Self) -> f64 {
        if self == other {
            return 0.0;
        }
        if self.sign != other.sign
            || self.reciprocal != other.reciprocal
            || self.height != other.height
        {
            return f64::INFINITY;
        }
        let m = self.mantissa.abs().max(other.mantissa.abs());
        (self.mantissa - other.mantissa).abs() / (m.next_up() - m)
    }
}

/// True when `|small| / |big|` is far below `f64` resolution, judged from the
/// heights alone.
fn negligible(big: &TowerReal, small: &TowerReal) -> bool {
    // |small| < e^-700 against |big| >= 1e-12
    let vanishing = small.reciprocal && small.height >= 1 && small.mantissa > DEMOTABLE_EXPONENT;
    if vanishing && (!big.reciprocal || big.height == 0) {
        return true;
    }
    match (big.reciprocal, small.reciprocal) {
        (false, true) => big.height >= 2 || small.height >= 2,
        (false, false) => big.height >= 2 && small.height + 2 <= big.height,
        (true, true) => small.height >= big.height + 2,
        (true, false) => false,
    }
}

fn cmp_abs(a: &TowerReal, b: &TowerReal) -> Ordering {
    match (a.reciprocal, b.reciprocal) {
        (false, false) => a.mag().cmp(&b.mag()),
        (false, true) => Ordering::Greater,
        (true, false) => Ordering::Less,
        (true, true) => b.mag().cmp(&a.mag()),
    }
}

/// `|a * b|` for two height-zero operands, using exact-aware float ops.
fn mul_height_zero(a: &TowerReal, b: &TowerReal, mm: Rounding) -> TowerReal {
    let pos = |recip: bool, m: Mag| TowerReal::from_mag(Sign::Positive, recip, m);
    match (a.reciprocal, b.reciprocal) {
        (false, false) => pos(false, normalize_mag(0, round::mul(a.mantissa, b.mantissa, mm), mm)),
        (true, true) => {
            let base = round::mul(a.mantissa, b.mantissa, mm.flip());
            pos(true, normalize_mag(0, base, mm.flip()))
        }
        _ => {
            let (num, den) = if a.reciprocal {
                (b.mantissa, a.mantissa)
            } else {
                (a.mantissa, b.mantissa)
            };
            if num >= den {
                pos(false, normalize_mag(0, round::div(num, den, mm).max(1.0), mm))
            } else {
                let base = round::div(den, num, mm.flip());
                if base <= 1.0 {
                    TowerReal::ONE
                } else {
                    pos(true, normalize_mag(0, base, mm.flip()))
                }
            }
        }
    }
}

impl PartialOrd for TowerReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.compare(other))
    }
}

impl Default for TowerReal {
    fn default() -> Self {
        Self::ZERO
    }
}

impl From<u32> for TowerReal {
    fn from(v: u32) -> Self {
        Self::from_f64_r(v as f64, Rounding::Nearest)
    }
}

/// `T(<height>;<mantissa>)` with 17 significant digits, a leading `1/` for
/// the reciprocal flag and a leading `-` for negative values.
impl fmt::Display for TowerReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sign == Sign::Negative {
            f.write_str("-")?;
        }
        if self.reciprocal {
            f.write_str("1/")?;
        }
        write!(f, "T({};{:.16e})", self.height, self.mantissa)
    }
}

impl FromStr for TowerReal {
    type Err = TowerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TowerError::Parse(s.to_string());
        let t = s.trim();
        let (negative, t) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let (reciprocal, t) = match t.strip_prefix("1/") {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let inner = t
            .strip_prefix("T(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(bad)?;
        let (h, m) = inner.split_once(';').ok_or_else(bad)?;
        let height: u32 = h.trim().parse().map_err(|_| bad())?;
        let mantissa: f64 = m.trim().parse().map_err(|_| bad())?;
        if mantissa == 0.0 && height == 0 && !reciprocal {
            return Ok(Self::ZERO);
        }
        let sign = if negative {
            Sign::Negative
        } else {
            Sign::Positive
        };
        let canonical = if height == 0 {
            (1.0..THRESHOLD).contains(&mantissa) && !(reciprocal && mantissa == 1.0)
        } else {
            (LN_THRESHOLD..THRESHOLD).contains(&mantissa)
        };
        if canonical {
            Ok(TowerReal {
                sign,
                reciprocal,
                height,
                mantissa,
            })
        } else {
            Self::from_parts(sign, reciprocal, height, mantissa)
        }
    }
}

impl Serialize for TowerReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TowerReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
