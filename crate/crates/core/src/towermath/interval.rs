use std::fmt;

use serde::{Deserialize, Serialize};

use super::round::Rounding;
use super::{TowerError, TowerReal};

/// Closed interval `[lo, hi]` with tower endpoints and outward rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TowerInterval {
    pub lo: TowerReal,
    pub hi: TowerReal,
}

impl TowerInterval {
    pub fn new(lo: TowerReal, hi: TowerReal) -> Self {
        debug_assert!(lo <= hi, "inverted interval {lo} > {hi}");
        TowerInterval { lo, hi }
    }

    pub fn point(x: TowerReal) -> Self {
        TowerInterval { lo: x, hi: x }
    }

    /// Smallest interval with tower endpoints that contains `x`.
    pub fn from_f64(x: f64) -> Result<Self, TowerError> {
        Ok(TowerInterval {
            lo: TowerReal::from_f64_rounded(x, Rounding::Down)?,
            hi: TowerReal::from_f64_rounded(x, Rounding::Up)?,
        })
    }

    pub fn contains(&self, x: &TowerReal) -> bool {
        self.lo <= *x && *x <= self.hi
    }

    pub fn is_positive(&self) -> bool {
        self.lo.is_positive()
    }

    pub fn add(&self, o: &Self) -> Self {
        TowerInterval {
            lo: self.lo.add(&o.lo, Rounding::Down),
            hi: self.hi.add(&o.hi, Rounding::Up),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        TowerInterval {
            lo: self.lo.sub(&o.hi, Rounding::Down),
            hi: self.hi.sub(&o.lo, Rounding::Up),
        }
    }

    pub fn neg(&self) -> Self {
        TowerInterval {
            lo: self.hi.neg(),
            hi: self.lo.neg(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let pairs = [
            (&self.lo, &o.lo),
            (&self.lo, &o.hi),
            (&self.hi, &o.lo),
            (&self.hi, &o.hi),
        ];
        corners(&pairs, |a, b, m| Ok(a.mul(b, m))).expect("multiplication is total")
    }

    pub fn div(&self, o: &Self) -> Result<Self, TowerError> {
        if o.lo <= TowerReal::ZERO && o.hi >= TowerReal::ZERO {
            return Err(TowerError::DivisionByZero);
        }
        let pairs = [
            (&self.lo, &o.lo),
            (&self.lo, &o.hi),
            (&self.hi, &o.lo),
            (&self.hi, &o.hi),
        ];
        corners(&pairs, |a, b, m| a.div(b, m))
    }

    pub fn mul_f64(&self, s: f64) -> Self {
        let a = self.lo.mul_f64(s, Rounding::Down).min(self.hi.mul_f64(s, Rounding::Down));
        let b = self.lo.mul_f64(s, Rounding::Up).max(self.hi.mul_f64(s, Rounding::Up));
        TowerInterval { lo: a, hi: b }
    }

    /// `x^p` for a positive base interval and a real exponent.
    pub fn pow(&self, p: f64) -> Result<Self, TowerError> {
        let a = [self.lo.pow(p, Rounding::Down)?, self.hi.pow(p, Rounding::Down)?];
        let b = [self.lo.pow(p, Rounding::Up)?, self.hi.pow(p, Rounding::Up)?];
        Ok(TowerInterval {
            lo: a[0].min(a[1]),
            hi: b[0].max(b[1]),
        })
    }

    /// `x^p` with an interval exponent; extremes sit at the corners because
    /// `p ln x` is bilinear.
    pub fn powi(&self, p: &Self) -> Result<Self, TowerError> {
        let pairs = [
            (&self.lo, &p.lo),
            (&self.lo, &p.hi),
            (&self.hi, &p.lo),
            (&self.hi, &p.hi),
        ];
        corners(&pairs, |a, b, m| a.powt(b, m))
    }

    pub fn ln(&self) -> Result<Self, TowerError> {
        Ok(TowerInterval {
            lo: self.lo.ln(Rounding::Down)?,
            hi: self.hi.ln(Rounding::Up)?,
        })
    }

    pub fn exp(&self) -> Self {
        TowerInterval {
            lo: self.lo.exp(Rounding::Down),
            hi: self.hi.exp(Rounding::Up),
        }
    }

    pub fn sqrt(&self) -> Result<Self, TowerError> {
        Ok(TowerInterval {
            lo: self.lo.sqrt(Rounding::Down)?,
            hi: self.hi.sqrt(Rounding::Up)?,
        })
    }

    /// Reciprocal of an interval that excludes zero.
    pub fn recip(&self) -> Result<Self, TowerError> {
        TowerInterval::point(TowerReal::ONE).div(self)
    }

    pub fn max(&self, o: &Self) -> Self {
        TowerInterval {
            lo: self.lo.max(o.lo),
            hi: self.hi.max(o.hi),
        }
    }

    pub fn min(&self, o: &Self) -> Self {
        TowerInterval {
            lo: self.lo.min(o.lo),
            hi: self.hi.min(o.hi),
        }
    }

    /// Midpoint-ish representative: the geometric mean of positive endpoints,
    /// otherwise the nearest rounding of the arithmetic mean.
    pub fn estimate(&self) -> TowerReal {
        if self.lo == self.hi {
            return self.lo;
        }
        if self.lo.is_positive() {
            let prod = self.lo.mul(&self.hi, Rounding::Nearest);
            if let Ok(g) = prod.sqrt(Rounding::Nearest) {
                return g.max(self.lo).min(self.hi);
            }
        }
        self.lo
            .add(&self.hi, Rounding::Nearest)
            .mul_f64(0.5, Rounding::Nearest)
    }
}

fn corners<F>(pairs: &[(&TowerReal, &TowerReal); 4], f: F) -> Result<TowerInterval, TowerError>
where
    F: Fn(&TowerReal, &TowerReal, Rounding) -> Result<TowerReal, TowerError>,
{
    let mut lo: Option<TowerReal> = None;
    let mut hi: Option<TowerReal> = None;
    for (a, b) in pairs {
        let d = f(a, b, Rounding::Down)?;
        let u = f(a, b, Rounding::Up)?;
        lo = Some(lo.map_or(d, |l| l.min(d)));
        hi = Some(hi.map_or(u, |h| h.max(u)));
    }
    Ok(TowerInterval {
        lo: lo.unwrap(),
        hi: hi.unwrap(),
    })
}

impl fmt::Display for TowerInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}
