//! Closed intervals `[lo, hi]` used to carry rigorous bounds on truncated
//! series through the constant computations.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Enclosure {
    pub lo: f64,
    pub hi: f64,
}

impl Enclosure {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "inverted enclosure [{lo}, {hi}]");
        Enclosure { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Enclosure { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn scale(self, c: f64) -> Self {
        if c >= 0.0 {
            Enclosure::new(self.lo * c, self.hi * c)
        } else {
            Enclosure::new(self.hi * c, self.lo * c)
        }
    }

    /// `self^p` for a nonnegative enclosure and `p > 0`.
    pub fn powf(self, p: f64) -> Self {
        debug_assert!(self.lo >= 0.0 && p > 0.0);
        Enclosure::new(self.lo.powf(p), self.hi.powf(p))
    }

    pub fn powi(self, k: i32) -> Self {
        debug_assert!(self.lo >= 0.0 && k >= 0);
        Enclosure::new(self.lo.powi(k), self.hi.powi(k))
    }

    pub fn sub_point(self, v: f64) -> Self {
        Enclosure::new(self.lo - v, self.hi - v)
    }

    /// Widen both ends by `rel` times the larger magnitude.
    pub fn inflate(self, rel: f64) -> Self {
        let pad = rel * self.lo.abs().max(self.hi.abs());
        Enclosure::new(self.lo - pad, self.hi + pad)
    }

    pub fn clamp_nonneg(self) -> Self {
        Enclosure::new(self.lo.max(0.0), self.hi.max(0.0))
    }
}

impl Sub for Enclosure {
    type Output = Enclosure;
    fn sub(self, o: Enclosure) -> Enclosure {
        Enclosure::new(self.lo - o.hi, self.hi - o.lo)
    }
}

impl Add for Enclosure {
    type Output = Enclosure;
    fn add(self, o: Enclosure) -> Enclosure {
        Enclosure::new(self.lo + o.lo, self.hi + o.hi)
    }
}

impl Mul for Enclosure {
    type Output = Enclosure;
    fn mul(self, o: Enclosure) -> Enclosure {
        if self.lo >= 0.0 && o.lo >= 0.0 {
            return Enclosure::new(self.lo * o.lo, self.hi * o.hi);
        }
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Enclosure::new(lo, hi)
    }
}
