//! Skew-product torus maps `(x,y) ↦ (x+β, f_x(y))` as composition trees of
//! primitive pieces, compiled to flat programs for evaluation.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugacy::{beta_prime_max, g_lift, homotopy_mu, shear_tau, strip_sigma, StripParams};
use crate::error::{Error, Result};
use crate::rotation::RotationVector;
use crate::torus::{torus_dist_raw, wrap, TorusPoint};

/// Primitive fiber maps. All have identity base action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "primitive", rename_all = "snake_case")]
pub enum Primitive {
    /// Projective stretch `g_λ`.
    Stretch { lambda: f64 },
    /// Fiber translation by `τ(x mod 1/q)`.
    Shear { q: u64, delta: f64 },
    /// The stage conjugacy on all strips.
    Strip {
        q: u64,
        p: u64,
        p_prime: u64,
        delta: f64,
        lambda: f64,
    },
    /// Dehn twist `y ↦ y + kx`.
    Twist { k: i64 },
    /// `y ↦ y + (a/2π)·sin 2π(y + m·x)`; a diffeomorphism iff `|a| < 1`.
    SineFiber { amplitude: f64, x_freq: i64 },
}

impl Primitive {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Primitive::Stretch { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                Err(Error::InvalidParams(format!("stretch needs λ > 0, got {lambda}")))
            }
            Primitive::Shear { q, delta } if q == 0 || !(delta > 0.0 && delta < 0.25 / q as f64) => {
                Err(Error::InvalidParams(format!("shear needs 0 < δ < 1/(4q), got δ = {delta}")))
            }
            Primitive::Strip { q, p, p_prime, delta, lambda } => {
                if q == 0 || p >= q || p_prime >= q || !(delta > 0.0) || !(lambda > 0.0) {
                    return Err(Error::InvalidParams("malformed strip conjugacy".into()));
                }
                if num_integer::gcd(p, q) != 1 {
                    return Err(Error::InvalidParams(format!("gcd({p}, {q}) != 1")));
                }
                Ok(())
            }
            Primitive::SineFiber { amplitude, x_freq } if amplitude.abs() >= 1.0 => {
                // f′ = 1 + a·cos(·) vanishes where cos = −1/a
                let c: f64 = (-1.0 / amplitude).acos() / (2.0 * PI);
                let x = if x_freq == 0 { 0.0 } else { wrap(c / x_freq as f64) };
                Err(Error::NonMonotoneFiber { x })
            }
            _ => Ok(()),
        }
    }

    /// Degree of `x ↦ f_x(y)`: the lift satisfies `F(x+1,Y) = F(x,Y) + twist`.
    pub fn twist(&self) -> i64 {
        match *self {
            Primitive::Shear { q, .. } | Primitive::Strip { q, .. } => q as i64,
            Primitive::Twist { k } => k,
            _ => 0,
        }
    }

    /// Sup-metric Lipschitz bounds `(L(f), L(f⁻¹))`.
    pub fn lipschitz(&self) -> (f64, f64) {
        match *self {
            Primitive::Stretch { lambda } => {
                let l = lambda.max(1.0 / lambda).powi(2);
                (l, l)
            }
            Primitive::Shear { q, delta } => {
                let t = tau_prime_bound(q, delta);
                (1.0 + t, 1.0 + t)
            }
            Primitive::Strip { q, delta, lambda, .. } => {
                let t = tau_prime_bound(q, delta);
                let l2 = lambda * lambda;
                let hom = lambda.ln().abs() * beta_prime_max() / (PI * delta);
                ((l2 + l2 * t + hom).max(1.0), (l2 + t + hom).max(1.0))
            }
            Primitive::Twist { k } => {
                let l = 1.0 + k.unsigned_abs() as f64;
                (l, l)
            }
            Primitive::SineFiber { amplitude, x_freq } => {
                let a = amplitude.abs();
                let ax = a * x_freq.unsigned_abs() as f64;
                let inv = if a < 1.0 { (1.0 + ax) / (1.0 - a) } else { f64::INFINITY };
                (1.0 + a + ax, inv)
            }
        }
    }

    fn compile(&self) -> CompiledPrim {
        let pinv = match *self {
            Primitive::Strip { q, p, p_prime, delta, lambda } => StripParams {
                q,
                p,
                p_prime,
                n: 1,
                delta,
                lambda,
            }
            .p_inverse(),
            _ => 0,
        };
        CompiledPrim { prim: self.clone(), pinv }
    }
}

fn tau_prime_bound(q: u64, delta: f64) -> f64 {
    let c = 1.0 / (1.0 / q as f64 - 2.0 * delta);
    c * (1.0 + beta_prime_max())
}
#[derive(Debug, Clone)]
struct CompiledPrim {
    prim: Primitive,
    pinv: u64,
}

impl CompiledPrim {
    /// Lifted fiber map `ℝ² → ℝ`, or its inverse.
    #[inline]
    fn lift(&self, x: f64, y: f64, inv: bool) -> f64 {
        match self.prim {
            Primitive::Stretch { lambda } => g_lift(if inv { 1.0 / lambda } else { lambda }, y),
            Primitive::Shear { q, delta } => {
                let (j, s) = strip_coords(q, x);
                let t = shear_tau(q, delta, s) + j;
                if inv {
                    y - t
                } else {
                    y + t
                }
            }
            Primitive::Strip { q, p_prime, delta, lambda, .. } => {
                let (j, s) = strip_coords(q, x);
                let k = ((j as i64).rem_euclid(q as i64) as u128 * self.pinv as u128) % q as u128;
                let shift = ((k * p_prime as u128) % q as u128) as f64 / q as f64;
                let tau = shear_tau(q, delta, s);
                let mu = homotopy_mu(lambda, strip_sigma(q, delta, s));
                if inv {
                    g_lift(1.0 / mu, y - shift - j) + shift - tau
                } else {
                    g_lift(mu, y - shift + tau) + shift + j
                }
            }
            Primitive::Twist { k } => {
                if inv {
                    y - k as f64 * x
                } else {
                    y + k as f64 * x
                }
            }
            Primitive::SineFiber { amplitude, x_freq } => {
                let f = |v: f64| v + amplitude / (2.0 * PI) * (2.0 * PI * (v + x_freq as f64 * x)).sin();
                if !inv {
                    return f(y);
                }
                let r = amplitude.abs() / (2.0 * PI);
                let (mut lo, mut hi) = (y - r - 1e-12, y + r + 1e-12);
                while hi - lo > 1e-12 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) < y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

/// Strip index `j = ⌊xq⌋` (as a float) and offset `s = x − j/q ∈ [0,1/q]`.
#[inline]
fn strip_coords(q: u64, x: f64) -> (f64, f64) {
    let qf = q as f64;
    let j = (x * qf).floor();
    let s = (x - j / qf).clamp(0.0, 1.0 / qf);
    (j, s)
}

#[derive(Debug, Clone)]
enum Op {
    Translate([f64; 2]),
    Fiber(Arc<CompiledPrim>, bool),
    Repeat(Arc<Program>, u64),
    /// `(x,y) ↦ h_{(l,m)}(F(lx, my) + n)`: a lift rescaled to the unit torus.
    Rescaled { inner: Arc<Program>, l: f64, m: f64, offset: [f64; 2] },
}

/// A flattened map: operations applied in order.
#[derive(Debug, Clone, Default)]
pub struct Program {
    ops: Vec<Op>,
}

impl Program {
    pub fn identity() -> Self {
        Program::default()
    }

    pub fn translation(v: [f64; 2]) -> Self {
        Program { ops: vec![Op::Translate(v)] }
    }

    /// `self` followed by `next`.
    pub fn then(mut self, next: &Program) -> Program {
        self.ops.extend(next.ops.iter().cloned());
        self
    }

    pub fn inverse(&self) -> Program {
        let ops = self
            .ops
            .iter()
            .rev()
            .map(|op| match op {
                Op::Translate(v) => Op::Translate([-v[0], -v[1]]),
                Op::Fiber(p, inv) => Op::Fiber(p.clone(), !inv),
                Op::Repeat(p, k) => Op::Repeat(Arc::new(p.inverse()), *k),
                Op::Rescaled { inner, l, m, offset } => Op::Rescaled {
                    inner: Arc::new(Program::translation([-offset[0], -offset[1]]).then(&inner.inverse())),
                    l: *l,
                    m: *m,
                    offset: [0.0, 0.0],
                },
            })
            .collect();
        Program { ops }
    }

    pub fn repeat(&self, j: i64) -> Program {
        let base = if j < 0 { self.inverse() } else { self.clone() };
        let k = j.unsigned_abs();
        if k <= 16 {
            let mut out = Program::identity();
            for _ in 0..k {
                out = out.then(&base);
            }
            out
        } else {
            Program { ops: vec![Op::Repeat(Arc::new(base), k)] }
        }
    }

    /// Evaluation on 𝕋²; the result is reduced mod 1.
    #[inline]
    pub fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        let mut z = [wrap(p[0]), wrap(p[1])];
        self.run(&mut z, true);
        z
    }

    /// Evaluation of the continuous lift on ℝ² assembled from the primitive lifts.
    #[inline]
    pub fn eval_lift(&self, p: [f64; 2]) -> [f64; 2] {
        let mut z = p;
        self.run(&mut z, false);
        z
    }

    fn run(&self, z: &mut [f64; 2], reduce: bool) {
        for op in &self.ops {
            match op {
                Op::Translate(v) => {
                    z[0] += v[0];
                    z[1] += v[1];
                }
                Op::Fiber(p, inv) => z[1] = p.lift(z[0], z[1], *inv),
                Op::Repeat(p, k) => {
                    for _ in 0..*k {
                        p.run(z, reduce);
                    }
                }
                Op::Rescaled { inner, l, m, offset } => {
                    let w = inner.eval_lift([z[0] * l, z[1] * m]);
                    z[0] = (w[0] + offset[0]) / l;
                    z[1] = (w[1] + offset[1]) / m;
                    if reduce {
                        z[0] = wrap(z[0]);
                        z[1] = wrap(z[1]);
                    }
                }
            }
            if reduce {
                z[0] = wrap(z[0]);
                z[1] = wrap(z[1]);
            }
        }
    }

    /// Total base translation mod 1.
    pub fn base_shift(&self) -> f64 {
        wrap(self.base_shift_raw())
    }

    fn base_shift_raw(&self) -> f64 {
        self.ops
            .iter()
            .map(|op| match op {
                Op::Translate(v) => v[0],
                Op::Fiber(..) => 0.0,
                Op::Repeat(p, k) => wrap(p.base_shift_raw()) * *k as f64,
                Op::Rescaled { inner, l, offset, .. } => (inner.base_shift_raw() + offset[0]) / l,
            })
            .sum()
    }

    /// `N` points `z, f(z), …, f^{N−1}(z)`.
    pub fn orbit(&self, p: [f64; 2], n: usize) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(n);
        let mut z = [wrap(p[0]), wrap(p[1])];
        for _ in 0..n {
            out.push(z);
            self.run(&mut z, true);
        }
        out
    }
}

/// Sup-metric Lipschitz bounds for a map and its inverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzLedger {
    pub forward: f64,
    pub inverse: f64,
}

impl LipschitzLedger {
    pub const ONE: LipschitzLedger = LipschitzLedger { forward: 1.0, inverse: 1.0 };

    pub fn compose(self, o: LipschitzLedger) -> LipschitzLedger {
        LipschitzLedger {
            forward: self.forward * o.forward,
            inverse: self.inverse * o.inverse,
        }
    }

    pub fn swap(self) -> LipschitzLedger {
        LipschitzLedger { forward: self.inverse, inverse: self.forward }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FiberedMap {
    Identity,
    Rotation { rho: RotationVector },
    Primitive(Primitive),
    /// `maps[0]` is applied first.
    Compose { maps: Vec<FiberedMap> },
    /// `H ∘ R_ρ ∘ H⁻¹`.
    Conjugate { h: Box<FiberedMap>, rho: RotationVector },
    Inverse { map: Box<FiberedMap> },
    Iterate { map: Box<FiberedMap>, j: i64 },
    /// Lift to the cover `ℝ/lℤ × ℝ/mℤ` with `L(0) ∈ [s₁,s₁+1)×[s₂,s₂+1)`,
    /// rescaled back to the unit torus.
    RescaledLift { map: Box<FiberedMap>, l: u32, m: u32, s: [u32; 2] },
}

impl FiberedMap {
    pub fn rotation(rho: RotationVector) -> Self {
        FiberedMap::Rotation { rho }
    }

    pub fn conjugate(h: FiberedMap, rho: RotationVector) -> Self {
        FiberedMap::Conjugate { h: Box::new(h), rho }
    }

    pub fn inverse(self) -> Self {
        FiberedMap::Inverse { map: Box::new(self) }
    }

    pub fn iterate(self, j: i64) -> Self {
        FiberedMap::Iterate { map: Box::new(self), j }
    }

    /// `f_1 ∘ f_2 ∘ … ∘ f_k` for `maps = [f_1, …, f_k]` (`f_k` applied first).
    pub fn compose_right_to_left(maps: &[FiberedMap]) -> Self {
        FiberedMap::Compose { maps: maps.iter().rev().cloned().collect() }
    }

    pub fn compile(&self) -> Program {
        match self {
            FiberedMap::Identity => Program::identity(),
            FiberedMap::Rotation { rho } => Program::translation(rho.to_f64()),
            FiberedMap::Primitive(p) => Program {
                ops: vec![Op::Fiber(Arc::new(p.compile()), false)],
            },
            FiberedMap::Compose { maps } => maps
                .iter()
                .fold(Program::identity(), |acc, m| acc.then(&m.compile())),
            FiberedMap::Conjugate { h, rho } => {
                let hp = h.compile();
                hp.inverse().then(&Program::translation(rho.to_f64())).then(&hp)
            }
            FiberedMap::Inverse { map } => map.compile().inverse(),
            FiberedMap::Iterate { map, j } => map.compile().repeat(*j),
            FiberedMap::RescaledLift { map, l, m, s } => {
                let inner = map.compile();
                let offset = lift_offset(&inner, *s);
                Program {
                    ops: vec![Op::Rescaled { inner: Arc::new(inner), l: *l as f64, m: *m as f64, offset }],
                }
            }
        }
    }

    /// For a `RescaledLift`, the compiled (unrescaled) inner map.
    pub fn compile_inner_lift(&self) -> Program {
        match self {
            FiberedMap::RescaledLift { map, .. } => map.compile(),
            _ => self.compile(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FiberedMap::Primitive(p) => p.validate(),
            FiberedMap::Compose { maps } => maps.iter().try_for_each(|m| m.validate()),
            FiberedMap::Conjugate { h, .. } => h.validate(),
            FiberedMap::Inverse { map } | FiberedMap::Iterate { map, .. } => map.validate(),
            FiberedMap::RescaledLift { map, l, m, s } => {
                if *l == 0 || *m == 0 || s[0] >= *l || s[1] >= *m {
                    return Err(Error::InvalidParams(format!("bad cover index ({l},{m};{s:?})")));
                }
                if map.twist() != 0 {
                    return Err(Error::InvalidParams("lifts need maps homotopic to the identity".into()));
                }
                map.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, p: TorusPoint) -> TorusPoint {
        TorusPoint::from_array(self.compile().eval(p.to_array()))
    }

    pub fn eval_inverse(&self, p: TorusPoint) -> Result<TorusPoint> {
        self.validate()?;
        Ok(TorusPoint::from_array(self.compile().inverse().eval(p.to_array())))
    }

    pub fn lipschitz(&self) -> LipschitzLedger {
        match self {
            FiberedMap::Identity | FiberedMap::Rotation { .. } => LipschitzLedger::ONE,
            FiberedMap::Primitive(p) => {
                let (forward, inverse) = p.lipschitz();
                LipschitzLedger { forward, inverse }
            }
            FiberedMap::Compose { maps } => maps
                .iter()
                .fold(LipschitzLedger::ONE, |acc, m| acc.compose(m.lipschitz())),
            FiberedMap::Conjugate { h, .. } => {
                let l = h.lipschitz();
                let c = l.forward * l.inverse;
                LipschitzLedger { forward: c, inverse: c }
            }
            FiberedMap::Inverse { map } => map.lipschitz().swap(),
            FiberedMap::Iterate { map, j } => {
                let l = map.lipschitz();
                let l = if *j < 0 { l.swap() } else { l };
                let k = j.unsigned_abs() as i32;
                LipschitzLedger { forward: l.forward.powi(k), inverse: l.inverse.powi(k) }
            }
            FiberedMap::RescaledLift { map, l, m, .. } => {
                // the lift has the same local stretch; rescaling distorts by max(l,m)/min(l,m)
                let r = (*l).max(*m) as f64 / (*l).min(*m) as f64;
                let b = map.lipschitz();
                LipschitzLedger { forward: b.forward * r, inverse: b.inverse * r }
            }
        }
    }

    /// Total fiber twist (degree of `x ↦ f_x(y)` read on the lift).
    pub fn twist(&self) -> i64 {
        match self {
            FiberedMap::Identity | FiberedMap::Rotation { .. } | FiberedMap::Conjugate { .. } => 0,
            FiberedMap::Primitive(p) => p.twist(),
            FiberedMap::Compose { maps } => maps.iter().map(|m| m.twist()).sum(),
            FiberedMap::Inverse { map } => -map.twist(),
            FiberedMap::Iterate { map, j } => map.twist() * j,
            FiberedMap::RescaledLift { .. } => 0,
        }
    }
}

/// Integer offset making the lift send the origin into `[s₁,s₁+1)×[s₂,s₂+1)`.
pub fn lift_offset(inner: &Program, s: [u32; 2]) -> [f64; 2] {
    let f0 = inner.eval_lift([0.0, 0.0]);
    [s[0] as f64 - f0[0].floor(), s[1] as f64 - f0[1].floor()]
}

fn grid_points(grid_n: usize) -> Vec<[f64; 2]> {
    let n = grid_n as f64;
    (0..grid_n * grid_n)
        .map(|k| [(k / grid_n) as f64 / n, (k % grid_n) as f64 / n])
        .collect()
}

/// Grid estimate of `d₀(f,g)` (maps and inverses) with a Lipschitz-certified
/// upper bound.
pub fn sup_distance_certified(f: &FiberedMap, g: &FiberedMap, grid_n: usize) -> (f64, f64) {
    let (pf, pg) = (f.compile(), g.compile());
    let (pfi, pgi) = (pf.inverse(), pg.inverse());
    let lower = grid_points(grid_n)
        .par_iter()
        .map(|&z| torus_dist_raw(pf.eval(z), pg.eval(z)).max(torus_dist_raw(pfi.eval(z), pgi.eval(z))))
        .reduce(|| 0.0, f64::max);
    let (lf, lg) = (f.lipschitz(), g.lipschitz());
    let slack = (lf.forward + lg.forward + lf.inverse + lg.inverse) / grid_n as f64;
    (lower, (lower + slack).min(0.5))
}

/// Central-difference Jacobian of a lifted program, `[[∂x/∂x, ∂x/∂y], [∂y/∂x, ∂y/∂y]]`.
pub fn jacobian(p: &Program, z: [f64; 2], h: f64) -> [[f64; 2]; 2] {
    let d = |e: [f64; 2]| {
        let a = p.eval_lift([z[0] + h * e[0], z[1] + h * e[1]]);
        let b = p.eval_lift([z[0] - h * e[0], z[1] - h * e[1]]);
        [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h)]
    };
    let cx = d([1.0, 0.0]);
    let cy = d([0.0, 1.0]);
    [[cx[0], cy[0]], [cx[1], cy[1]]]
}

fn mat_dist(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> f64 {
    (0..2)
        .map(|i| (a[i][0] - b[i][0]).abs() + (a[i][1] - b[i][1]).abs())
        .fold(0.0, f64::max)
}

/// Sampled `C¹` discrepancy: max over the grid of the ∞-operator-norm
/// difference of Jacobians of the maps and of their inverses.
pub fn sampled_d1_distance(f: &FiberedMap, g: &FiberedMap, grid_n: usize, h: f64) -> f64 {
    let (pf, pg) = (f.compile(), g.compile());
    let (pfi, pgi) = (pf.inverse(), pg.inverse());
    grid_points(grid_n)
        .par_iter()
        .map(|&z| {
            mat_dist(jacobian(&pf, z, h), jacobian(&pg, z, h))
                .max(mat_dist(jacobian(&pfi, z, h), jacobian(&pgi, z, h)))
        })
        .reduce(|| 0.0, f64::max)
}
