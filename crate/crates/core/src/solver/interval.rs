use std::fmt;

use serde::{Deserialize, Serialize};

/// A real interval whose bounds may be infinite and are tagged open or
/// closed. Infinite bounds are always open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub hi_closed: bool,
}

impl Interval {
    pub const FULL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        lo_closed: false,
        hi: f64::INFINITY,
        hi_closed: false,
    };

    pub fn new(lo: f64, lo_closed: bool, hi: f64, hi_closed: bool) -> Self {
        Interval {
            lo,
            lo_closed: lo_closed && lo.is_finite(),
            hi,
            hi_closed: hi_closed && hi.is_finite(),
        }
    }

    pub fn point(v: f64) -> Self {
        Interval::new(v, true, v, true)
    }

    /// `[lo, hi)`
    pub fn closed_open(lo: f64, hi: f64) -> Self {
        Interval::new(lo, true, hi, false)
    }

    /// `[t, +inf)`
    pub fn at_least(t: f64) -> Self {
        Interval::new(t, true, f64::INFINITY, false)
    }

    /// `(-inf, t)`
    pub fn below(t: f64) -> Self {
        Interval::new(f64::NEG_INFINITY, false, t, false)
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi && self.lo_closed && self.hi_closed
    }

    pub fn is_full(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }

    pub fn contains(&self, x: f64) -> bool {
        let above_lo = x > self.lo || (x == self.lo && self.lo_closed);
        let below_hi = x < self.hi || (x == self.hi && self.hi_closed);
        above_lo && below_hi
    }

    /// Some point of the interval satisfies `x < t`.
    pub fn meets_below(&self, t: f64) -> bool {
        !self.is_empty() && self.lo < t
    }

    /// Some point of the interval satisfies `x >= t`.
    pub fn meets_at_or_above(&self, t: f64) -> bool {
        !self.is_empty() && (self.hi > t || (self.hi == t && self.hi_closed))
    }

    /// Intersection with `(-inf, t)`.
    pub fn restrict_below(&self, t: f64) -> Interval {
        let mut out = *self;
        if t < self.hi || (t == self.hi && self.hi_closed) {
            out.hi = t;
            out.hi_closed = false;
        }
        out
    }

    /// Intersection with `[t, +inf)`.
    pub fn restrict_at_or_above(&self, t: f64) -> Interval {
        let mut out = *self;
        if t > self.lo {
            out.lo = t;
            out.lo_closed = true;
        }
        out
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        let (lo, lo_closed) = if self.lo > other.lo {
            (self.lo, self.lo_closed)
        } else if other.lo > self.lo {
            (other.lo, other.lo_closed)
        } else {
            (self.lo, self.lo_closed && other.lo_closed)
        };
        let (hi, hi_closed) = if self.hi < other.hi {
            (self.hi, self.hi_closed)
        } else if other.hi < self.hi {
            (other.hi, other.hi_closed)
        } else {
            (self.hi, self.hi_closed && other.hi_closed)
        };
        Interval::new(lo, lo_closed, hi, hi_closed)
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        self.is_empty() || self.intersect(other) == *self
    }

    /// The interior point used for witnesses and grid cells: the value of a
    /// point interval, the midpoint of a bounded interval, `lo + 1` or
    /// `hi - 1` for half-bounded ones and `0` for the full line. Falls back
    /// to a closed endpoint or the nearest float inside when rounding pushes
    /// the candidate out. `None` when no `f64` lies inside.
    pub fn representative(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        if self.lo == self.hi {
            return Some(self.lo);
        }
        let candidate = match (self.lo.is_finite(), self.hi.is_finite()) {
            (false, false) => 0.0,
            (true, false) => self.lo + 1.0,
            (false, true) => self.hi - 1.0,
            (true, true) => self.lo / 2.0 + self.hi / 2.0,
        };
        [
            Some(candidate),
            self.lo_closed.then_some(self.lo),
            self.hi_closed.then_some(self.hi),
            Some(self.lo.next_up()),
            Some(self.hi.next_down()),
        ]
        .into_iter()
        .flatten()
        .find(|&x| self.contains(x))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_point() {
            return write!(f, "[{}, {}]", self.lo, self.hi);
        }
        let open = if self.lo_closed { '[' } else { '(' };
        let close = if self.hi_closed { ']' } else { ')' };
        write!(f, "{open}{}, {}{close}", self.lo, self.hi)
    }
}
