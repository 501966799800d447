//! Directed rounding for the elementary `f64` operations.
//!
//! Arithmetic results (`+`, `*`, `/`, `sqrt`) are corrected with an exact
//! error term, so an exactly representable result is never nudged.
//! Transcendental results are moved one ulp in the requested direction unless
//! the argument hits an exact special value.

use serde::{Deserialize, Serialize};

/// Rounding direction for a computed bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    /// Result is a lower bound of the exact value.
    Down,
    /// Plain round-to-nearest, no nudging.
    Nearest,
    /// Result is an upper bound of the exact value.
    Up,
}

impl Rounding {
    /// The opposite direction; `Nearest` is its own flip.
    #[inline]
    pub fn flip(self) -> Self {
        match self {
            Rounding::Down => Rounding::Up,
            Rounding::Up => Rounding::Down,
            Rounding::Nearest => Rounding::Nearest,
        }
    }
}

/// Move `x` toward the rounding direction when the exact value lies on that
/// side (`err_sign` > 0: exact value is above `x`).
#[inline]
fn correct(x: f64, err_sign: f64, mode: Rounding) -> f64 {
    match mode {
        Rounding::Up if err_sign > 0.0 => x.next_up(),
        Rounding::Down if err_sign < 0.0 => x.next_down(),
        _ => x,
    }
}

#[inline]
pub(crate) fn nudge(x: f64, mode: Rounding) -> f64 {
    match mode {
        Rounding::Up => x.next_up(),
        Rounding::Down => x.next_down(),
        Rounding::Nearest => x,
    }
}

pub(crate) fn add(a: f64, b: f64, mode: Rounding) -> f64 {
    let s = a + b;
    if !s.is_finite() {
        return s;
    }
    // two-sum
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    correct(s, err, mode)
}

pub(crate) fn mul(a: f64, b: f64, mode: Rounding) -> f64 {
    let p = a * b;
    if !p.is_finite() {
        return p;
    }
    if p != 0.0 && p.abs() < 1e-290 {
        // fma residual is unreliable near the subnormal range
        return nudge(p, mode);
    }
    let err = a.mul_add(b, -p);
    correct(p, err, mode)
}

pub(crate) fn div(a: f64, b: f64, mode: Rounding) -> f64 {
    let q = a / b;
    if !q.is_finite() {
        return q;
    }
    if q != 0.0 && q.abs() < 1e-290 {
        return nudge(q, mode);
    }
    // a - q*b exactly; the exact quotient exceeds q iff rem/b > 0
    let rem = (-q).mul_add(b, a);
    correct(q, rem * b.signum(), mode)
}

pub(crate) fn sqrt(a: f64, mode: Rounding) -> f64 {
    let r = a.sqrt();
    correct(r, (-r).mul_add(r, a), mode)
}

pub(crate) fn exp(x: f64, mode: Rounding) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let e = x.exp();
    match mode {
        Rounding::Down if e == 0.0 => 0.0,
        Rounding::Up if e == 0.0 => f64::from_bits(1),
        Rounding::Down if e.is_infinite() => f64::MAX,
        _ if e.is_infinite() => e,
        _ => nudge(e, mode).max(0.0),
    }
}

pub(crate) fn ln(x: f64, mode: Rounding) -> f64 {
    if x == 1.0 {
        return 0.0;
    }
    nudge(x.ln(), mode)
}

pub(crate) fn ln1p(x: f64, mode: Rounding) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    nudge(x.ln_1p(), mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_operations_are_not_nudged() {
        for mode in [Rounding::Down, Rounding::Up] {
            assert_eq!(mul(8.0, 8.0, mode), 64.0);
            assert_eq!(add(0.5, 0.25, mode), 0.75);
            assert_eq!(div(1.0, 4.0, mode), 0.25);
            assert_eq!(sqrt(64.0, mode), 8.0);
            assert_eq!(exp(0.0, mode), 1.0);
            assert_eq!(ln(1.0, mode), 0.0);
        }
    }

    #[test]
    fn inexact_operations_bracket() {
        let third_lo = div(1.0, 3.0, Rounding::Down);
        let third_hi = div(1.0, 3.0, Rounding::Up);
        assert!(third_lo < third_hi);
        assert_eq!(third_hi, third_lo.next_up());
        // 3 * lo < 1 < 3 * hi in exact arithmetic
        assert!(3.0f64.mul_add(third_lo, -1.0) < 0.0);
        assert!(3.0f64.mul_add(third_hi, -1.0) > 0.0);

        let s_lo = add(1.0, 1e-20, Rounding::Down);
        let s_hi = add(1.0, 1e-20, Rounding::Up);
        assert_eq!(s_lo, 1.0);
        assert_eq!(s_hi, 1.0f64.next_up());
    }

    #[test]
    fn exp_underflow_and_overflow_stay_sound() {
        assert_eq!(exp(-1e4, Rounding::Down), 0.0);
        assert!(exp(-1e4, Rounding::Up) > 0.0);
        assert_eq!(exp(1e4, Rounding::Down), f64::MAX);
        assert!(exp(1e4, Rounding::Up).is_infinite());
    }
}
