//! Rotation vectors on 𝕋² with their arithmetic class.

use num_integer::Integer;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::surd::{q_f64, rationally_independent, Surd, Q};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RotationClass {
    Rational { p: i64, p_prime: i64, q: i64 },
    IrrationalCollinear,
    TotallyIrrational,
}

/// Requested class for [`perturb_to_class`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetClass {
    IrrationalCollinear,
    TotallyIrrational,
}

impl RotationClass {
    fn name(&self) -> &'static str {
        match self {
            RotationClass::Rational { .. } => "rational",
            RotationClass::IrrationalCollinear => "irrational_collinear",
            RotationClass::TotallyIrrational => "totally_irrational",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RotationVector {
    pub rho1: Surd,
    pub rho2: Surd,
    pub class: RotationClass,
}

pub fn make_rational_vector(p: i64, p_prime: i64, q: i64) -> Result<RotationVector> {
    if q < 1 || !(0..q).contains(&p) || !(0..q).contains(&p_prime) {
        return Err(Error::InvalidRotation(format!(
            "need q >= 1 and 0 <= p, p' < q, got ({p}, {p_prime}, {q})"
        )));
    }
    if p.gcd(&p_prime).gcd(&q) != 1 {
        return Err(Error::NotCoprime { p, p_prime, q });
    }
    Ok(RotationVector {
        rho1: Surd::frac(p as i128, q as i128),
        rho2: Surd::frac(p_prime as i128, q as i128),
        class: RotationClass::Rational { p, p_prime, q },
    })
}

impl RotationVector {
    pub fn zero() -> Self {
        RotationVector {
            rho1: Surd::zero(),
            rho2: Surd::zero(),
            class: RotationClass::Rational {
                p: 0,
                p_prime: 0,
                q: 1,
            },
        }
    }

    /// Builds a vector from exact coordinates and derives its class.
    pub fn from_surds(rho1: Surd, rho2: Surd) -> Result<Self> {
        let class = classify(&rho1, &rho2)?;
        Ok(RotationVector { rho1, rho2, class })
    }

    /// Coordinates mod 1 as floats.
    pub fn to_f64(&self) -> [f64; 2] {
        [self.rho1.frac_f64(), self.rho2.frac_f64()]
    }

    /// Unreduced float coordinates.
    pub fn raw_f64(&self) -> [f64; 2] {
        [self.rho1.to_f64(), self.rho2.to_f64()]
    }

    pub fn rational_parts(&self) -> Option<(i64, i64, i64)> {
        match self.class {
            RotationClass::Rational { p, p_prime, q } => Some((p, p_prime, q)),
            _ => None,
        }
    }

    pub fn is_rational(&self) -> bool {
        matches!(self.class, RotationClass::Rational { .. })
    }

    /// `α·ρ` for `α = 1 + k(√2−1)/2^j`; `self` must be rational.
    pub fn collinear(&self, k: i64, j: u32) -> Result<RotationVector> {
        let Some((p, pp, _)) = self.rational_parts() else {
            return Err(Error::InvalidRotation(
                "collinear perturbation needs a rational vector".into(),
            ));
        };
        if p == 0 && pp == 0 {
            return Err(Error::InvalidRotation(
                "the zero vector has no irrational multiple".into(),
            ));
        }
        if k == 0 {
            return Err(Error::InvalidRotation("k must be nonzero".into()));
        }
        let kk = Q::new(k as i128, 1i128 << j);
        // α = (1 − k/2^j) + (k/2^j)√2
        let u = Q::from_integer(1) - kk;
        let r1 = self.rho1.mul_q_sqrt2(u, kk).expect("rational input");
        let r2 = self.rho2.mul_q_sqrt2(u, kk).expect("rational input");
        let v = RotationVector {
            rho1: r1,
            rho2: r2,
            class: RotationClass::IrrationalCollinear,
        };
        debug_assert_eq!(classify(&r1, &r2).ok(), Some(v.class));
        Ok(v)
    }

    /// Adds `(a·√2, b·√3)` to the coordinates.
    pub fn shifted(&self, a: Q, b: Q) -> Result<RotationVector> {
        let r1 = self.rho1 + Surd::new(Q::zero(), a, Q::zero());
        let r2 = self.rho2 + Surd::new(Q::zero(), Q::zero(), b);
        RotationVector::from_surds(r1, r2)
    }

    /// `max_i |ρ_i − σ_i|` computed on the unreduced values.
    pub fn max_abs_diff(&self, other: &RotationVector) -> f64 {
        let d1 = (self.rho1 - other.rho1).to_f64().abs();
        let d2 = (self.rho2 - other.rho2).to_f64().abs();
        d1.max(d2)
    }
}

/// Derives the arithmetic class of an exact pair.
pub fn classify(r1: &Surd, r2: &Surd) -> Result<RotationClass> {
    if r1.is_rational() && r2.is_rational() {
        let a = r1.rational - r1.rational.floor();
        let b = r2.rational - r2.rational.floor();
        let q = a.denom().lcm(b.denom());
        let p = a.numer() * (q / a.denom());
        let pp = b.numer() * (q / b.denom());
        let (p, pp, q) = (to_i64(p)?, to_i64(pp)?, to_i64(q)?);
        if p.gcd(&pp).gcd(&q) != 1 {
            return Err(Error::NotCoprime { p, p_prime: pp, q });
        }
        return Ok(RotationClass::Rational { p, p_prime: pp, q });
    }
    if rationally_independent(r1, r2) {
        return Ok(RotationClass::TotallyIrrational);
    }
    // collinear: ρ = α·(p/q, p'/q) with α = u + v√2, v ≠ 0
    if r1.sqrt3.is_zero() && r2.sqrt3.is_zero() && collinear_with_rational(r1, r2) {
        return Ok(RotationClass::IrrationalCollinear);
    }
    Err(Error::InvalidRotation(format!(
        "({r1}, {r2}) is neither rational, collinear-irrational nor totally irrational"
    )))
}

fn collinear_with_rational(r1: &Surd, r2: &Surd) -> bool {
    // r_i = α·c_i with rational c_i ⇔ r1.rational·r2.sqrt2 = r2.rational·r1.sqrt2
    // (the two components are proportional with the same ratio).
    r1.rational * r2.sqrt2 == r2.rational * r1.sqrt2
        && !(r1.sqrt2.is_zero() && r2.sqrt2.is_zero())
}

fn to_i64(v: i128) -> Result<i64> {
    i64::try_from(v).map_err(|_| Error::InvalidRotation(format!("{v} overflows i64")))
}

/// Perturbs `rho` into the requested class within `bound` in each coordinate.
///
/// Collinear: `α = 1 + (√2−1)/2^j` with the smallest such `j`. Totally irrational:
/// adds `(√2/2^j, √3/2^j)` with the smallest such `j`.
pub fn perturb_to_class(rho: &RotationVector, target: TargetClass, bound: f64) -> Result<RotationVector> {
    if !(bound > 0.0) {
        return Err(Error::InvalidRotation("bound must be positive".into()));
    }
    match target {
        TargetClass::IrrationalCollinear => {
            let m = rho.rho1.to_f64().abs().max(rho.rho2.to_f64().abs());
            let mut j = 0u32;
            while (2f64.sqrt() - 1.0) / 2f64.powi(j as i32) * m >= bound {
                j += 1;
            }
            rho.collinear(1, j)
        }
        TargetClass::TotallyIrrational => {
            let mut j = 0u32;
            while 3f64.sqrt() / 2f64.powi(j as i32) >= bound {
                j += 1;
            }
            loop {
                let s = Q::new(1, 1i128 << j);
                let v = rho.shifted(s, s);
                if let Ok(v) = v {
                    if v.class == RotationClass::TotallyIrrational {
                        return Ok(v);
                    }
                }
                j += 1;
                if j > 100 {
                    return Err(Error::InvalidRotation("no totally irrational shift found".into()));
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CoordJson {
    a: i64,
    b: i64,
    c: i64,
    d: i64,
    e: i64,
    f: i64,
    tag: String,
}

impl CoordJson {
    // i64 on the wire: self-describing formats buffer integers wider than 64 bits poorly
    fn from_surd(s: &Surd, tag: &str) -> std::result::Result<Self, String> {
        let n = |v: i128| i64::try_from(v).map_err(|_| format!("{v} does not fit in i64"));
        Ok(CoordJson {
            a: n(*s.rational.numer())?,
            b: n(*s.rational.denom())?,
            c: n(*s.sqrt2.numer())?,
            d: n(*s.sqrt2.denom())?,
            e: n(*s.sqrt3.numer())?,
            f: n(*s.sqrt3.denom())?,
            tag: tag.to_string(),
        })
    }

    fn to_surd(&self) -> std::result::Result<Surd, String> {
        if self.b == 0 || self.d == 0 || self.f == 0 {
            return Err("zero denominator".into());
        }
        Ok(Surd::new(
            Q::new(self.a as i128, self.b as i128),
            Q::new(self.c as i128, self.d as i128),
            Q::new(self.e as i128, self.f as i128),
        ))
    }
}

impl Serialize for RotationVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let tag = self.class.name();
        let c1 = CoordJson::from_surd(&self.rho1, tag).map_err(S::Error::custom)?;
        let c2 = CoordJson::from_surd(&self.rho2, tag).map_err(S::Error::custom)?;
        [c1, c2].serialize(s)
    }
}

impl<'de> Deserialize<'de> for RotationVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let [c1, c2] = <[CoordJson; 2]>::deserialize(d)?;
        let r1 = c1.to_surd().map_err(D::Error::custom)?;
        let r2 = c2.to_surd().map_err(D::Error::custom)?;
        let v = RotationVector::from_surds(r1, r2).map_err(D::Error::custom)?;
        if c1.tag != v.class.name() || c2.tag != v.class.name() {
            return Err(D::Error::custom(format!(
                "tag mismatch: stored {}/{}, derived {}",
                c1.tag,
                c2.tag,
                v.class.name()
            )));
        }
        Ok(v)
    }
}

impl std::fmt::Display for RotationVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.class {
            RotationClass::Rational { p, p_prime, q } => write!(f, "({p}/{q}, {p_prime}/{q})"),
            _ => {
                let [a, b] = self.to_f64();
                write!(f, "({a:.12}, {b:.12})")
            }
        }
    }
}

/// Magnitude of a rational, as a float.
pub fn q_abs_f64(q: Q) -> f64 {
    q_f64(q.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn make_rational_examples() {
        let v = make_rational_vector(1, 1, 2).unwrap();
        assert_eq!(v.to_f64(), [0.5, 0.5]);
        assert_eq!(v.class, RotationClass::Rational { p: 1, p_prime: 1, q: 2 });
        let v = make_rational_vector(1, 2, 5).unwrap();
        assert_eq!(v.rho2, Surd::frac(2, 5));
        assert!(matches!(make_rational_vector(2, 2, 4), Err(Error::NotCoprime { .. })));
    }

    #[test]
    fn collinear_example() {
        let rho = make_rational_vector(1, 1, 2).unwrap();
        let v = perturb_to_class(&rho, TargetClass::IrrationalCollinear, 1e-3).unwrap();
        // oracle: smallest j with (√2−1)/2^{j+1} < 1e-3
        let j = (0..).find(|&j| (2f64.sqrt() - 1.0) / 2f64.powi(j + 1) < 1e-3).unwrap();
        let alpha = 1.0 + (2f64.sqrt() - 1.0) / 2f64.powi(j);
        assert!((v.rho1.to_f64() - alpha / 2.0).abs() < 1e-15);
        assert_eq!(v.class, RotationClass::IrrationalCollinear);
        assert!(v.max_abs_diff(&rho) < 1e-3);
    }

    #[test]
    fn totally_irrational_example() {
        let rho = make_rational_vector(1, 1, 2).unwrap();
        let v = perturb_to_class(&rho, TargetClass::TotallyIrrational, 1e-3).unwrap();
        let j = (0..).find(|&j| 3f64.sqrt() / 2f64.powi(j) < 1e-3).unwrap();
        assert!((v.rho1.to_f64() - (0.5 + 2f64.sqrt() / 2f64.powi(j))).abs() < 1e-15);
        assert!((v.rho2.to_f64() - (0.5 + 3f64.sqrt() / 2f64.powi(j))).abs() < 1e-15);
        assert_eq!(v.class, RotationClass::TotallyIrrational);
    }

    #[test]
    fn infinite_bound_still_classifies() {
        let rho = make_rational_vector(1, 2, 5).unwrap();
        for t in [TargetClass::IrrationalCollinear, TargetClass::TotallyIrrational] {
            let v = perturb_to_class(&rho, t, f64::INFINITY).unwrap();
            assert!(!v.is_rational());
        }
    }

    #[test]
    fn json_round_trip() {
        let rho = make_rational_vector(1, 2, 5).unwrap();
        let v = perturb_to_class(&rho, TargetClass::IrrationalCollinear, 1e-4).unwrap();
        let w = perturb_to_class(&v, TargetClass::TotallyIrrational, 1e-6).unwrap();
        for x in [rho, v, w] {
            let s = serde_json::to_string(&x).unwrap();
            let y: RotationVector = serde_json::from_str(&s).unwrap();
            assert_eq!(x, y);
        }
        let s = serde_json::to_string(&rho).unwrap();
        assert!(s.contains("\"tag\":\"rational\""));
        let bad = s.replace("\"rational\"", "\"totally_irrational\"");
        assert!(serde_json::from_str::<RotationVector>(&bad).is_err());
    }

    proptest! {
        #[test]
        fn perturbation_respects_bound(p in 0i64..50, pp in 0i64..50, q in 1i64..50, e in 1u32..40) {
            prop_assume!(p < q && pp < q && p.gcd(&pp).gcd(&q) == 1 && (p, pp) != (0, 0));
            let rho = make_rational_vector(p, pp, q).unwrap();
            let bound = 2f64.powi(-(e as i32));
            let c = perturb_to_class(&rho, TargetClass::IrrationalCollinear, bound).unwrap();
            prop_assert!(c.max_abs_diff(&rho) < bound);
            prop_assert_eq!(c.class, RotationClass::IrrationalCollinear);
            let t = perturb_to_class(&c, TargetClass::TotallyIrrational, bound).unwrap();
            prop_assert!(t.max_abs_diff(&c) < bound);
            prop_assert!(rationally_independent(&t.rho1, &t.rho2));
        }

        #[test]
        fn rational_vectors_are_exact(p in 0i64..1000, pp in 0i64..1000, q in 1i64..1000) {
            prop_assume!(p < q && pp < q && p.gcd(&pp).gcd(&q) == 1);
            let v = make_rational_vector(p, pp, q).unwrap();
            let back = RotationVector::from_surds(v.rho1, v.rho2).unwrap();
            prop_assert_eq!(back.class, RotationClass::Rational { p, p_prime: pp, q });
            let s = serde_json::to_string(&v).unwrap();
            prop_assert_eq!(serde_json::from_str::<RotationVector>(&s).unwrap(), v);
        }
    }
}
