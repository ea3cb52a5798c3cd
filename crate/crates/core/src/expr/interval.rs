use serde::{Deserialize, Serialize};

use super::pow_magnitude;

/// Closed interval with outward-rounded arithmetic.
///
/// Every operation widens its floating-point result by at least one ulp in
/// each direction, so the exact real range is always enclosed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

fn down(x: f64) -> f64 {
    if x.is_nan() {
        f64::NEG_INFINITY
    } else {
        x.next_down()
    }
}

fn up(x: f64) -> f64 {
    if x.is_nan() {
        f64::INFINITY
    } else {
        x.next_up()
    }
}

// 0 * inf is taken as 0: the bound of a finite factor times an unbounded one.
fn mul_bound(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn entire() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.lo <= 0.0 && 0.0 <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn hull(&self, other: Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn neg(self) -> Self {
        Self::new(-self.hi, -self.lo)
    }

    pub fn abs(self) -> Self {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            self.neg()
        } else {
            Self::new(0.0, (-self.lo).max(self.hi))
        }
    }

    pub fn add(self, o: Self) -> Self {
        Self::new(down(self.lo + o.lo), up(self.hi + o.hi))
    }

    pub fn sub(self, o: Self) -> Self {
        Self::new(down(self.lo - o.hi), up(self.hi - o.lo))
    }

    pub fn mul(self, o: Self) -> Self {
        let c = [
            mul_bound(self.lo, o.lo),
            mul_bound(self.lo, o.hi),
            mul_bound(self.hi, o.lo),
            mul_bound(self.hi, o.hi),
        ];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(down(lo), up(hi))
    }

    /// `None` when the divisor is exactly `[0, 0]`.
    pub fn div(self, o: Self) -> Option<Self> {
        if o.lo == 0.0 && o.hi == 0.0 {
            return None;
        }
        if o.contains_zero() {
            if o.lo == 0.0 {
                // divisor in [0, hi]: quotient sign follows the numerator
                return Some(self.mul(Interval::new(1.0 / o.hi, f64::INFINITY).widen()));
            }
            if o.hi == 0.0 {
                return Some(self.mul(Interval::new(f64::NEG_INFINITY, 1.0 / o.lo).widen()));
            }
            return Some(Self::entire());
        }
        Some(self.mul(o.recip_nonzero()))
    }

    fn recip_nonzero(self) -> Self {
        Self::new(down(1.0 / self.hi), up(1.0 / self.lo))
    }

    fn widen(self) -> Self {
        Self::new(down(self.lo), up(self.hi))
    }

    pub fn exp(self) -> Self {
        let lo = down(down(self.lo.exp())).max(0.0);
        Self::new(lo, up(up(self.hi.exp())))
    }

    /// `None` when the interval lies entirely in `(-inf, 0]`.
    pub fn ln(self) -> Option<Self> {
        if self.hi <= 0.0 {
            return None;
        }
        let lo = if self.lo <= 0.0 {
            f64::NEG_INFINITY
        } else {
            down(down(self.lo.ln()))
        };
        Some(Self::new(lo, up(up(self.hi.ln()))))
    }

    /// Integer power. `None` for a negative power of `[0, 0]`.
    pub fn powi(self, n: i32) -> Option<Self> {
        if n == 0 {
            return Some(Self::point(1.0));
        }
        let m = n.unsigned_abs();
        // binary exponentiation performs at most 2*log2(m)+2 roundings
        let steps = 2 * (32 - m.leading_zeros()) as i32 + 2;
        let rel = steps as f64 * f64::EPSILON;
        let lower = |a: f64| if a == 0.0 { 0.0 } else { down(pow_magnitude(a, m) * (1.0 - rel)) };
        let upper = |a: f64| if a == 0.0 { 0.0 } else { up(pow_magnitude(a, m) * (1.0 + rel)) };
        let positive = if m % 2 == 1 {
            let lo = if self.lo >= 0.0 {
                lower(self.lo)
            } else {
                -upper(-self.lo)
            };
            let hi = if self.hi >= 0.0 {
                upper(self.hi)
            } else {
                -lower(-self.hi)
            };
            Self::new(lo, hi)
        } else if self.lo >= 0.0 {
            Self::new(lower(self.lo).max(0.0), upper(self.hi))
        } else if self.hi <= 0.0 {
            Self::new(lower(-self.hi).max(0.0), upper(-self.lo))
        } else {
            Self::new(0.0, upper((-self.lo).max(self.hi)))
        };
        if n > 0 {
            Some(positive)
        } else {
            Interval::point(1.0).div(positive)
        }
    }

    pub fn min(self, o: Self) -> Self {
        Self::new(self.lo.min(o.lo), self.hi.min(o.hi))
    }

    pub fn max(self, o: Self) -> Self {
        Self::new(self.lo.max(o.lo), self.hi.max(o.hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reciprocal_of_half_open_divisor() {
        let q = Interval::new(1.0, 2.0).div(Interval::new(0.0, 4.0)).unwrap();
        assert!(q.lo <= 0.25 && q.hi == f64::INFINITY);
        assert!(Interval::new(1.0, 2.0).div(Interval::point(0.0)).is_none());
        let q = Interval::new(1.0, 2.0).div(Interval::new(-1.0, 1.0)).unwrap();
        assert_eq!(q, Interval::entire());
    }

    #[test]
    fn odd_and_even_powers() {
        let c = Interval::new(-2.0, 1.0).powi(3).unwrap();
        assert!(c.lo <= -8.0 && c.hi >= 1.0 && c.lo > -8.0001);
        let s = Interval::new(-2.0, 1.0).powi(2).unwrap();
        assert!(s.lo == 0.0 && s.hi >= 4.0);
        let r = Interval::new(2.0, 4.0).powi(-1).unwrap();
        assert!(r.lo <= 0.25 && r.hi >= 0.5 && r.hi < 0.5001);
        assert!(Interval::point(0.0).powi(-2).is_none());
    }

    #[test]
    fn exp_and_ln_enclose() {
        let e = Interval::new(0.0, 1.0).exp();
        assert!(e.lo <= 1.0 && e.hi >= std::f64::consts::E);
        let l = Interval::new(-1.0, 1.0).ln().unwrap();
        assert!(l.lo == f64::NEG_INFINITY && l.hi >= 0.0);
    }
}
