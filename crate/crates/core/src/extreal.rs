//! Nonnegative reals with an unbounded binary exponent.
//!
//! Carleman weights range far beyond the `f64` exponent (values like
//! `exp(1e5)` are routine), so they are carried as `mant * 2^exp2` with
//! `mant` in `[1, 2)`.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtReal {
    mant: f64,
    exp2: i64,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal { mant: 0.0, exp2: 0 };
    pub const ONE: ExtReal = ExtReal { mant: 1.0, exp2: 0 };
    pub const INFINITY: ExtReal = ExtReal { mant: f64::INFINITY, exp2: 0 };

    fn normalized(m: f64, e: i64) -> ExtReal {
        if m == 0.0 || !m.is_finite() {
            return ExtReal { mant: m, exp2: 0 };
        }
        debug_assert!(m > 0.0, "ExtReal holds nonnegative values");
        let bits = m.to_bits();
        let raw = ((bits >> 52) & 0x7ff) as i64;
        if raw == 0 {
            return ExtReal::normalized(m * 2f64.powi(64), e - 64);
        }
        let mant = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1023u64 << 52));
        ExtReal { mant, exp2: e + raw - 1023 }
    }

    /// Nonnegative finite or infinite `f64`.
    pub fn from_f64(x: f64) -> ExtReal {
        ExtReal::normalized(x, 0)
    }

    /// `e^x` for any real `x`, including the infinities.
    pub fn exp(x: f64) -> ExtReal {
        if x == f64::NEG_INFINITY {
            return ExtReal::ZERO;
        }
        if x == f64::INFINITY {
            return ExtReal::INFINITY;
        }
        const LN2_HI: f64 = 6.931_471_803_691_238e-1;
        const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
        let q = (x / std::f64::consts::LN_2).floor();
        let r = (x - q * LN2_HI) - q * LN2_LO;
        ExtReal::normalized(r.exp(), q as i64)
    }

    pub fn is_zero(&self) -> bool {
        self.mant == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.mant.is_finite()
    }

    pub fn powi(self, k: i32) -> ExtReal {
        if self.is_zero() || !self.is_finite() {
            return if k >= 0 {
                if k == 0 {
                    ExtReal::ONE
                } else {
                    self
                }
            } else if self.is_zero() {
                ExtReal::INFINITY
            } else {
                ExtReal::ZERO
            };
        }
        ExtReal::normalized(self.mant.powi(k), self.exp2 * k as i64)
    }

    pub fn recip(self) -> ExtReal {
        ExtReal::ONE / self
    }

    /// Natural logarithm (`-inf` for zero).
    pub fn ln(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else if !self.is_finite() {
            f64::INFINITY
        } else {
            self.mant.ln() + self.exp2 as f64 * std::f64::consts::LN_2
        }
    }

    pub fn log10(&self) -> f64 {
        self.ln() / std::f64::consts::LN_10
    }

    /// Nearest `f64`, saturating to zero or infinity.
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() || !self.is_finite() {
            return self.mant;
        }
        if self.exp2 > 1023 {
            f64::INFINITY
        } else if self.exp2 < -1080 {
            0.0
        } else if self.exp2 < -1000 {
            self.mant * 2f64.powi(-1000) * 2f64.powi((self.exp2 + 1000) as i32)
        } else {
            self.mant * 2f64.powi(self.exp2 as i32)
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Mul for ExtReal {
    type Output = ExtReal;
    fn mul(self, rhs: ExtReal) -> ExtReal {
        if self.is_zero() || rhs.is_zero() {
            return ExtReal::ZERO;
        }
        if !self.is_finite() || !rhs.is_finite() {
            return ExtReal::INFINITY;
        }
        ExtReal::normalized(self.mant * rhs.mant, self.exp2 + rhs.exp2)
    }
}

impl Div for ExtReal {
    type Output = ExtReal;
    fn div(self, rhs: ExtReal) -> ExtReal {
        if rhs.is_zero() {
            return if self.is_zero() { ExtReal { mant: f64::NAN, exp2: 0 } } else { ExtReal::INFINITY };
        }
        if !rhs.is_finite() {
            return if self.is_finite() { ExtReal::ZERO } else { ExtReal { mant: f64::NAN, exp2: 0 } };
        }
        if self.is_zero() || !self.is_finite() {
            return self;
        }
        ExtReal::normalized(self.mant / rhs.mant, self.exp2 - rhs.exp2)
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        if !self.is_finite() || !rhs.is_finite() {
            return ExtReal::INFINITY;
        }
        let (big, small) = if self.exp2 >= rhs.exp2 { (self, rhs) } else { (rhs, self) };
        let shift = small.exp2 - big.exp2;
        let tail = if shift < -1100 { 0.0 } else { small.mant * 2f64.powi(shift as i32) };
        ExtReal::normalized(big.mant + tail, big.exp2)
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &ExtReal) -> Option<Ordering> {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Some(Ordering::Equal),
            (true, false) => return Some(Ordering::Less),
            (false, true) => return Some(Ordering::Greater),
            _ => {}
        }
        match (self.is_finite(), other.is_finite()) {
            (false, false) => return Some(Ordering::Equal),
            (false, true) => return Some(Ordering::Greater),
            (true, false) => return Some(Ordering::Less),
            _ => {}
        }
        Some(self.exp2.cmp(&other.exp2).then(self.mant.partial_cmp(&other.mant)?))
    }
}

impl std::iter::Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        iter.fold(ExtReal::ZERO, |a, b| a + b)
    }
}
