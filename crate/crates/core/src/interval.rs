//! Closed intervals of the chromosome, the marks carried by individuals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used for all interval comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;

/// `|a - b| <= tol * max(1, |a|, |b|)`.
#[inline]
pub fn approx_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

/// A closed interval `[lo, hi]` with `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo <= hi {
            Ok(Self { lo, hi })
        } else {
            Err(Error::InvalidInterval { lo, hi })
        }
    }

    /// The initial chromosome `[0, length]`.
    pub fn from_length(length: f64) -> Result<Self> {
        Self::new(0.0, length)
    }

    #[inline]
    pub fn lo(&self) -> f64 {
        self.lo
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// `self ⊆ other`, with endpoints compared at relative tolerance `tol`.
    pub fn is_subinterval_of(&self, other: &Interval, tol: f64) -> bool {
        (self.lo >= other.lo || approx_eq(self.lo, other.lo, tol))
            && (self.hi <= other.hi || approx_eq(self.hi, other.hi, tol))
    }

    pub fn approx_eq(&self, other: &Interval, tol: f64) -> bool {
        approx_eq(self.lo, other.lo, tol) && approx_eq(self.hi, other.hi, tol)
    }

    /// `[lo, lo + len]`, the piece left of a cut.
    #[inline]
    pub(crate) fn left_piece(&self, len: f64) -> Interval {
        Interval { lo: self.lo, hi: (self.lo + len).min(self.hi) }
    }

    /// `[hi - len, hi]`, the piece right of a cut.
    #[inline]
    pub(crate) fn right_piece(&self, len: f64) -> Interval {
        Interval { lo: (self.hi - len).max(self.lo), hi: self.hi }
    }

    /// `[lo, x]`; `x` is clamped into the interval.
    #[inline]
    pub(crate) fn cut_right_of(&self, x: f64) -> Interval {
        Interval { lo: self.lo, hi: x.clamp(self.lo, self.hi) }
    }

    /// `[x, hi]`; `x` is clamped into the interval.
    #[inline]
    pub(crate) fn cut_left_of(&self, x: f64) -> Interval {
        Interval { lo: x.clamp(self.lo, self.hi), hi: self.hi }
    }

    pub fn shifted(&self, by: f64) -> Interval {
        Interval { lo: self.lo + by, hi: self.hi + by }
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_reversed_and_non_finite() {
        assert!(Interval::new(1.0, 0.0).is_err());
        assert!(Interval::new(f64::NAN, 0.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
        assert_eq!(Interval::new(2.0, 2.0).unwrap().length(), 0.0);
    }

    #[test]
    fn pieces_nest() {
        let i = Interval::new(1.0, 5.0).unwrap();
        let l = i.left_piece(1.5);
        let r = i.right_piece(1.5);
        assert_eq!((l.lo(), l.hi()), (1.0, 2.5));
        assert_eq!((r.lo(), r.hi()), (3.5, 5.0));
        assert!(l.is_subinterval_of(&i, DEFAULT_TOL));
        assert!(r.is_subinterval_of(&i, DEFAULT_TOL));
        assert!(!i.is_subinterval_of(&l, DEFAULT_TOL));
    }

    #[test]
    fn tolerance_is_relative() {
        assert!(approx_eq(1e12, 1e12 + 1.0, DEFAULT_TOL));
        assert!(!approx_eq(1.0, 1.0 + 1e-6, DEFAULT_TOL));
        let i = Interval::new(0.0, 1.0).unwrap();
        let j = Interval::new(-1e-12, 1.0 + 1e-12).unwrap();
        assert!(j.is_subinterval_of(&i, DEFAULT_TOL));
    }

    #[test]
    fn intersection() {
        let a = Interval::new(0.0, 2.0).unwrap();
        let b = Interval::new(1.0, 3.0).unwrap();
        assert_eq!(a.intersect(&b), Some(Interval::new(1.0, 2.0).unwrap()));
        assert_eq!(a.intersect(&Interval::new(5.0, 6.0).unwrap()), None);
    }
}
