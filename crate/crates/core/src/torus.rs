//! Points and metrics on the circle and the 2-torus.
//!
//! The torus carries the sup-metric: the distance of two points is the larger
//! of the two coordinate-wise circle distances.

use serde::{Deserialize, Serialize};

/// Reduces `x` into `[0, 1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid rounds tiny negative inputs up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed representative of `x` mod 1 in `[-1/2, 1/2)`.
#[inline]
pub fn centered(x: f64) -> f64 {
    let r = wrap(x);
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CirclePoint(f64);

impl CirclePoint {
    pub fn new(x: f64) -> Self {
        CirclePoint(wrap(x))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<f64> for CirclePoint {
    fn from(x: f64) -> Self {
        CirclePoint::new(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub x: CirclePoint,
    pub y: CirclePoint,
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        TorusPoint {
            x: CirclePoint::new(x),
            y: CirclePoint::new(y),
        }
    }

    pub fn from_array(p: [f64; 2]) -> Self {
        TorusPoint::new(p[0], p[1])
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.x.value(), self.y.value()]
    }
}

/// `min(|a-b|, 1-|a-b|)`, always in `[0, 1/2]`.
#[inline]
pub fn circle_dist(a: CirclePoint, b: CirclePoint) -> f64 {
    circle_dist_raw(a.value(), b.value())
}

/// Circle distance of two reals read mod 1.
#[inline]
pub fn circle_dist_raw(a: f64, b: f64) -> f64 {
    centered(a - b).abs()
}

#[inline]
pub fn torus_dist(p: TorusPoint, q: TorusPoint) -> f64 {
    torus_dist_raw(p.to_array(), q.to_array())
}

#[inline]
pub fn torus_dist_raw(p: [f64; 2], q: [f64; 2]) -> f64 {
    circle_dist_raw(p[0], q[0]).max(circle_dist_raw(p[1], q[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn circle_dist_examples() {
        let d = |a: f64, b: f64| circle_dist(a.into(), b.into());
        assert_eq!(d(0.0, 0.0), 0.0);
        assert!((d(0.1, 0.9) - 0.2).abs() < 1e-15);
        assert_eq!(d(0.25, 0.75), 0.5);
    }

    #[test]
    fn torus_dist_examples() {
        assert_eq!(torus_dist(TorusPoint::new(0.0, 0.0), TorusPoint::new(0.0, 0.0)), 0.0);
        assert_eq!(torus_dist(TorusPoint::new(0.0, 0.0), TorusPoint::new(0.5, 0.0)), 0.5);
        let d = torus_dist(TorusPoint::new(0.1, 0.2), TorusPoint::new(0.9, 0.3));
        assert!((d - 0.2).abs() < 1e-15);
    }

    #[test]
    fn wrap_never_returns_one() {
        assert_eq!(wrap(-1e-18), 0.0);
        assert_eq!(wrap(1.0), 0.0);
        assert_eq!(wrap(-0.25), 0.75);
    }

    proptest! {
        #[test]
        fn circle_dist_is_a_metric(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
            let (a, b, c) = (CirclePoint::new(a), CirclePoint::new(b), CirclePoint::new(c));
            let ab = circle_dist(a, b);
            prop_assert!((0.0..=0.5).contains(&ab));
            prop_assert!((ab - circle_dist(b, a)).abs() < 1e-15);
            prop_assert!(ab <= circle_dist(a, c) + circle_dist(c, b) + 1e-15);
            prop_assert_eq!(circle_dist(a, a), 0.0);
        }

        #[test]
        fn reduction_is_idempotent(x in -100.0f64..100.0) {
            let p = CirclePoint::new(x);
            prop_assert_eq!(CirclePoint::new(p.value()), p);
            prop_assert!((0.0..1.0).contains(&p.value()));
        }
    }
}
