//! Exact numbers `a/b + (c/d)·√2 + (e/f)·√3` in the field ℚ(√2, √3).
//!
//! Only the additive structure and scaling by rationals are needed, so the
//! √6 component never arises.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Q = Ratio<i128>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Surd {
    pub rational: Q,
    pub sqrt2: Q,
    pub sqrt3: Q,
}

impl Surd {
    pub fn new(rational: Q, sqrt2: Q, sqrt3: Q) -> Self {
        Surd {
            rational,
            sqrt2,
            sqrt3,
        }
    }

    pub fn zero() -> Self {
        Surd::from_rational(Q::zero())
    }

    pub fn from_rational(r: Q) -> Self {
        Surd::new(r, Q::zero(), Q::zero())
    }

    pub fn frac(num: i128, den: i128) -> Self {
        Surd::from_rational(Q::new(num, den))
    }

    pub fn is_rational(&self) -> bool {
        self.sqrt2.is_zero() && self.sqrt3.is_zero()
    }

    pub fn scale(&self, r: Q) -> Surd {
        Surd::new(self.rational * r, self.sqrt2 * r, self.sqrt3 * r)
    }

    /// Product with `u + v·√2`. Fails (returns `None`) if a √6 term would appear.
    pub fn mul_q_sqrt2(&self, u: Q, v: Q) -> Option<Surd> {
        if !v.is_zero() && !self.sqrt3.is_zero() {
            return None;
        }
        Some(Surd::new(
            self.rational * u + self.sqrt2 * v * Q::from_integer(2),
            self.rational * v + self.sqrt2 * u,
            self.sqrt3 * u,
        ))
    }

    /// Drops the integer part of the rational component, so the value lies in
    /// `[0,1)` up to the irrational parts.
    pub fn reduce_rational_mod1(&self) -> Surd {
        let r = self.rational - self.rational.floor();
        Surd::new(r, self.sqrt2, self.sqrt3)
    }

    pub fn to_f64(&self) -> f64 {
        q_f64(self.rational)
            + q_f64(self.sqrt2) * std::f64::consts::SQRT_2
            + q_f64(self.sqrt3) * 3f64.sqrt()
    }

    /// Value mod 1 in `[0,1)`, with the rational part reduced exactly first.
    pub fn frac_f64(&self) -> f64 {
        let r = self.rational - self.rational.floor();
        let s2 = self.sqrt2 * Q::from_integer(2);
        let s3 = self.sqrt3 * Q::from_integer(3);
        let v = q_f64(r)
            + signed_sqrt_f64(self.sqrt2, s2 * self.sqrt2)
            + signed_sqrt_f64(self.sqrt3, s3 * self.sqrt3);
        crate::torus::wrap(v)
    }
}

fn signed_sqrt_f64(sign_of: Q, square: Q) -> f64 {
    // (c/d)√2 = sign(c)·sqrt(2c²/d²); evaluating the square root of an exact
    // rational keeps full relative precision.
    let v = q_f64(square).sqrt();
    if sign_of.is_negative() {
        -v
    } else {
        v
    }
}

pub fn q_f64(q: Q) -> f64 {
    let n = *q.numer();
    let d = *q.denom();
    if let (Some(nf), Some(df)) = (n.to_f64(), d.to_f64()) {
        if nf.abs() < 9.0e15 && df < 9.0e15 {
            return nf / df;
        }
    }
    // split off the integer part to keep precision for large numerators
    let ip = n.div_euclid(d);
    let rem = n.rem_euclid(d);
    ip as f64 + rem as f64 / d as f64
}

/// Closest rational with the given denominator bound, by rounding.
pub fn q_from_f64(x: f64, den: i128) -> Q {
    Q::new((x * den as f64).round() as i128, den)
}

impl Add for Surd {
    type Output = Surd;
    fn add(self, o: Surd) -> Surd {
        Surd::new(
            self.rational + o.rational,
            self.sqrt2 + o.sqrt2,
            self.sqrt3 + o.sqrt3,
        )
    }
}

impl Sub for Surd {
    type Output = Surd;
    fn sub(self, o: Surd) -> Surd {
        self + (-o)
    }
}

impl Neg for Surd {
    type Output = Surd;
    fn neg(self) -> Surd {
        Surd::new(-self.rational, -self.sqrt2, -self.sqrt3)
    }
}

impl fmt::Display for Surd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rational)?;
        if !self.sqrt2.is_zero() {
            write!(f, " + ({})√2", self.sqrt2)?;
        }
        if !self.sqrt3.is_zero() {
            write!(f, " + ({})√3", self.sqrt3)?;
        }
        Ok(())
    }
}

/// Whether `1, u, v` are linearly independent over ℚ. Since `1, √2, √3` are,
/// this reduces to a 2×2 determinant of the irrational parts.
pub fn rationally_independent(u: &Surd, v: &Surd) -> bool {
    let det = u.sqrt2 * v.sqrt3 - u.sqrt3 * v.sqrt2;
    !det.is_zero()
}

pub fn q_one() -> Q {
    Q::one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_rational_arithmetic() {
        let a = Surd::frac(1, 3) + Surd::frac(2, 3);
        assert_eq!(a, Surd::frac(1, 1));
        assert_eq!(a.frac_f64(), 0.0);
        assert_eq!(Surd::frac(7, 5).frac_f64(), q_f64(Q::new(2, 5)));
    }

    #[test]
    fn sqrt2_multiplication() {
        // (√2 − 1)(√2 + 1) = 1
        let a = Surd::new(Q::from_integer(-1), Q::one(), Q::zero());
        let b = a.mul_q_sqrt2(Q::one(), Q::one()).unwrap();
        assert_eq!(b, Surd::frac(1, 1));
        let c = Surd::new(Q::zero(), Q::zero(), Q::one());
        assert!(c.mul_q_sqrt2(Q::one(), Q::one()).is_none());
    }

    #[test]
    fn float_value() {
        let s = Surd::new(Q::new(1, 2), Q::new(1, 4), Q::new(-1, 8));
        let want = 0.5 + 2f64.sqrt() / 4.0 - 3f64.sqrt() / 8.0;
        assert!((s.to_f64() - want).abs() < 1e-15);
        assert!((s.frac_f64() - want.rem_euclid(1.0)).abs() < 1e-15);
    }

    #[test]
    fn independence() {
        let u = Surd::new(Q::new(1, 2), Q::new(1, 8), Q::zero());
        let v = Surd::new(Q::new(1, 2), Q::zero(), Q::new(1, 8));
        assert!(rationally_independent(&u, &v));
        assert!(!rationally_independent(&u, &u));
    }
}
