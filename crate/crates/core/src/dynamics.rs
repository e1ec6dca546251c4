//! Orbit generation. Maps of the form `H∘R_ρ∘H⁻¹` are iterated as
//! `k ↦ H(w + kρ)`, which never evaluates the badly conditioned `H⁻¹`.

use crate::maps::{FiberedMap, Program};
use crate::torus::wrap;

#[derive(Debug, Clone)]
pub enum Dynamics {
    Map(Program),
    Conjugated { h: Program, rho: [f64; 2] },
    /// Rescaled lift of `H∘R_ρ∘H⁻¹` to `ℝ/lℤ × ℝ/mℤ`, iterated as `Ĥ(W + kâ)`
    /// with `W` reduced modulo the lattice `{(a,b) : a ∈ lℤ, aQ + b ∈ mℤ}`.
    Lifted { h: Program, a: [f64; 2], l: u32, m: u32, twist: i64 },
}

impl Dynamics {
    pub fn from_map(f: &FiberedMap) -> Self {
        match f {
            FiberedMap::Conjugate { h, rho } => Dynamics::Conjugated {
                h: h.compile(),
                rho: rho.to_f64(),
            },
            FiberedMap::RescaledLift { map, l, m, s } => match map.as_ref() {
                FiberedMap::Conjugate { h, rho } => {
                    let r = rho.to_f64();
                    let inner = f.compile_inner_lift();
                    let n = crate::maps::lift_offset(&inner, *s);
                    let twist = h.twist();
                    Dynamics::Lifted {
                        h: h.compile(),
                        a: [r[0] + n[0], r[1] + n[1] - n[0] * twist as f64],
                        l: *l,
                        m: *m,
                        twist,
                    }
                }
                _ => Dynamics::Map(f.compile()),
            },
            _ => Dynamics::Map(f.compile()),
        }
    }

    pub fn base_rotation(&self) -> f64 {
        match self {
            Dynamics::Map(p) => p.base_shift(),
            Dynamics::Conjugated { rho, .. } => rho[0],
            Dynamics::Lifted { a, l, .. } => wrap(a[0] / *l as f64),
        }
    }

    /// Orbit started from a seed. For conjugated maps the seed lives in the
    /// rotation coordinates `w`, and the orbit starts at `H(w)`.
    pub fn stepper(&self, seed: [f64; 2]) -> Stepper<'_> {
        Stepper { dynamics: self, seed: [wrap(seed[0]), wrap(seed[1])], k: 0, z: [wrap(seed[0]), wrap(seed[1])] }
    }

    pub fn orbit(&self, seed: [f64; 2], n: usize) -> Vec<[f64; 2]> {
        self.stepper(seed).take(n).collect()
    }

    /// The torus point an orbit from `seed` starts at.
    pub fn seed_point(&self, seed: [f64; 2]) -> [f64; 2] {
        match self {
            Dynamics::Map(_) => [wrap(seed[0]), wrap(seed[1])],
            Dynamics::Conjugated { h, .. } => h.eval(seed),
            Dynamics::Lifted { h, l, m, twist, .. } => lifted_point(h, *l, *m, *twist, [seed[0] * *l as f64, seed[1] * *m as f64]),
        }
    }
}

/// `Ĥ(W)` on the cover, rescaled to the unit torus, after reducing `W`.
#[inline]
fn lifted_point(h: &Program, l: u32, m: u32, twist: i64, w: [f64; 2]) -> [f64; 2] {
    let (lf, mf) = (l as f64, m as f64);
    let t = (w[0] / lf).floor();
    let x = w[0] - lf * t;
    let shift = ((l as i64 * twist).rem_euclid(m as i64) as f64 * t).rem_euclid(mf);
    let y = (w[1] + shift).rem_euclid(mf);
    let z = h.eval_lift([x, y]);
    [wrap(z[0] / lf), wrap(z[1] / mf)]
}

/// `k·a mod m`, splitting `a` into integer and fractional parts to keep precision.
#[inline]
fn split_mul(k: u64, a: f64, m: f64) -> f64 {
    let ai = a.floor();
    let af = a - ai;
    let mi = m as i128;
    let int_part = ((k as i128 * ai as i128).rem_euclid(mi)) as f64;
    (int_part + (k as f64 * af).rem_euclid(m)).rem_euclid(m)
}

pub struct Stepper<'a> {
    dynamics: &'a Dynamics,
    seed: [f64; 2],
    k: u64,
    z: [f64; 2],
}

impl Iterator for Stepper<'_> {
    type Item = [f64; 2];

    #[inline]
    fn next(&mut self) -> Option<[f64; 2]> {
        let out = match self.dynamics {
            Dynamics::Map(p) => {
                let cur = self.z;
                self.z = p.eval(cur);
                cur
            }
            Dynamics::Conjugated { h, rho } => {
                let k = self.k as f64;
                let w = [wrap(self.seed[0] + k * rho[0]), wrap(self.seed[1] + k * rho[1])];
                h.eval(w)
            }
            Dynamics::Lifted { h, a, l, m, twist } => {
                let (lf, mf) = (*l as f64, *m as f64);
                let w = [
                    self.seed[0] * lf + split_mul(self.k, a[0], lf * mf),
                    self.seed[1] * mf + split_mul(self.k, a[1], mf),
                ];
                // the x-reduction above is by a multiple of l·m, which changes y by l·m·Q ≡ 0 mod m
                lifted_point(h, *l, *m, *twist, w)
            }
        };
        self.k += 1;
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conjugacy::{build_strip_conjugacy, min_lambda_for_contraction, StripParams};
    use crate::rotation::make_rational_vector;
    use crate::torus::torus_dist_raw;

    #[test]
    fn conjugated_orbit_matches_direct_iteration() {
        let delta = 0.01;
        let lambda = min_lambda_for_contraction(delta).unwrap() * 1.1;
        let h = build_strip_conjugacy(StripParams { q: 2, p: 1, p_prime: 1, n: 1, delta, lambda }).unwrap();
        let rho = make_rational_vector(1, 2, 5).unwrap().collinear(1, 10).unwrap();
        let f = FiberedMap::conjugate(h, rho);
        let d = Dynamics::from_map(&f);
        let direct = Dynamics::Map(f.compile());
        let seed = [0.3, 0.1];
        let a = d.orbit(seed, 50);
        let b = direct.orbit(d.seed_point(seed), 50);
        for (x, y) in a.iter().zip(&b) {
            assert!(torus_dist_raw(*x, *y) < 1e-8);
        }
        assert!((d.base_rotation() - direct.base_rotation()).abs() < 1e-15);
    }

    #[test]
    fn lifted_orbit_matches_direct_iteration() {
        let delta = 0.01;
        let lambda = min_lambda_for_contraction(delta).unwrap() * 1.1;
        let h = build_strip_conjugacy(StripParams { q: 3, p: 1, p_prime: 2, n: 1, delta, lambda }).unwrap();
        let rho = make_rational_vector(1, 2, 3).unwrap().collinear(1, 8).unwrap();
        let f = FiberedMap::conjugate(h, rho);
        for (l, m, s) in [(1, 2, [0, 1]), (2, 1, [1, 0]), (2, 3, [0, 2]), (3, 2, [2, 1])] {
            let lift = FiberedMap::RescaledLift { map: Box::new(f.clone()), l, m, s };
            lift.validate().unwrap();
            let d = Dynamics::from_map(&lift);
            assert!(matches!(d, Dynamics::Lifted { .. }));
            let direct = Dynamics::Map(lift.compile());
            let seed = [0.3, 0.1];
            let a = d.orbit(seed, 40);
            let b = direct.orbit(d.seed_point(seed), 40);
            for (x, y) in a.iter().zip(&b) {
                assert!(torus_dist_raw(*x, *y) < 1e-7, "({l},{m}) {x:?} {y:?}");
            }
        }
    }
}
