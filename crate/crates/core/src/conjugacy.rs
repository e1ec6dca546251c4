//! The stage conjugacy `h_{n+1}`: projective stretch, plateau homotopy, shear,
//! their assembly on the strip `[0,1/q]×𝕋¹`, equivariant extension to 𝕋², and
//! the curve estimates that drive mean equicontinuity.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::{Certificate, CertificateKind, Relation};
use crate::error::{Error, Result};
use crate::maps::{FiberedMap, Primitive, Program};
use crate::torus::{circle_dist_raw, wrap};

/// Lift of the projective stretch `g_μ` to ℝ: attractor at 0, repeller at 1/2,
/// `g′(0) = μ⁻²`, `g′(1/2) = μ²`. `g_{1/μ}` is the inverse.
#[inline]
pub fn g_lift(mu: f64, y: f64) -> f64 {
    if mu == 1.0 {
        return y;
    }
    let n = y.round();
    let u = y - n;
    // cos πu written as sin π(1/2−|u|): exact zero at the repeller
    let c = (PI * (0.5 - u.abs())).sin();
    n + ((PI * u).sin() / (mu * mu)).atan2(c) / PI
}

#[inline]
pub fn g(mu: f64, y: f64) -> f64 {
    wrap(g_lift(mu, y))
}

pub fn projective_stretch(lambda: f64) -> FiberedMap {
    FiberedMap::Primitive(Primitive::Stretch { lambda })
}

/// Grid check of `g_λ(𝕋¹∖B_δ(1/2)) ⊆ B_δ(0)`.
pub fn contraction_holds(lambda: f64, delta: f64, grid: usize) -> bool {
    (0..grid).into_par_iter().all(|i| {
        let y = i as f64 / grid as f64;
        circle_dist_raw(y, 0.5) < delta || circle_dist_raw(g(lambda, y), 0.0) < delta
    })
}

pub const CONTRACTION_GRID: usize = 100_000;

/// Smallest λ (bisection to 1e−6) for which the contraction holds on the
/// 10⁵-point grid.
pub fn min_lambda_for_contraction(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 0.25) {
        return Err(Error::InvalidParams(format!("δ = {delta} not in (0, 1/4]")));
    }
    let holds = |l: f64| contraction_holds(l, delta, CONTRACTION_GRID);
    let mut lo = 1.0;
    let mut hi = 2.0;
    while !holds(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::InvalidParams(format!("no contraction λ for δ = {delta}")));
        }
    }
    while hi - lo > 1e-6 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Smooth step: 0 on (−∞,1/4], 1 on [3/4,∞).
pub fn beta(x: f64) -> f64 {
    if x <= 0.25 {
        return 0.0;
    }
    if x >= 0.75 {
        return 1.0;
    }
    let a = (-1.0 / (x - 0.25)).exp();
    let b = (-1.0 / (0.75 - x)).exp();
    a / (a + b)
}

pub fn beta_prime(x: f64) -> f64 {
    if x <= 0.25 || x >= 0.75 {
        return 0.0;
    }
    let u = x - 0.25;
    let v = 0.75 - x;
    // β = 1/(1 + e^{1/u − 1/v})
    let e = (1.0 / u - 1.0 / v).exp();
    if !e.is_finite() {
        return 0.0;
    }
    let de = e * (-1.0 / (u * u) - 1.0 / (v * v));
    -de / ((1.0 + e) * (1.0 + e))
}

/// Upper bound for `max β′`, sampled finely and padded.
pub fn beta_prime_max() -> f64 {
    static M: OnceLock<f64> = OnceLock::new();
    *M.get_or_init(|| {
        let n = 200_000;
        let m = (1..n)
            .map(|i| beta_prime(0.25 + 0.5 * i as f64 / n as f64))
            .fold(0.0, f64::max);
        m * 1.01
    })
}

/// `G_x = g_{λ^{β(x)}}`.
pub fn plateau_homotopy(lambda: f64, x: f64) -> FiberedMap {
    projective_stretch(homotopy_mu(lambda, x))
}

#[inline]
pub fn homotopy_mu(lambda: f64, x: f64) -> f64 {
    let b = beta(x);
    if b == 0.0 {
        1.0
    } else if b == 1.0 {
        lambda
    } else {
        (b * lambda.ln()).exp()
    }
}

/// Shear profile on `[0,1/q]`: 0 near 0, linear `(s−δ)/(1/q−2δ)` on
/// `[δ,1/q−δ]`, 1 near `1/q`.
#[inline]
pub fn shear_tau(q: u64, delta: f64, s: f64) -> f64 {
    let w = 1.0 / q as f64;
    let c = 1.0 / (w - 2.0 * delta);
    if s <= delta {
        c * (s - delta) * beta(s / delta)
    } else if s < w - delta {
        c * (s - delta)
    } else {
        1.0 + c * (s - (w - delta)) * beta((w - s) / delta)
    }
}

pub fn shear_tau_prime(q: u64, delta: f64, s: f64) -> f64 {
    let w = 1.0 / q as f64;
    let c = 1.0 / (w - 2.0 * delta);
    if s <= delta {
        c * (beta(s / delta) + (s - delta) / delta * beta_prime(s / delta))
    } else if s < w - delta {
        c
    } else {
        let r = (w - s) / delta;
        c * (beta(r) - (s - (w - delta)) / delta * beta_prime(r))
    }
}

/// The shear `T` as a map of 𝕋²: fiber translation by `τ(x mod 1/q)`.
pub fn shear_map(q: u64, delta: f64) -> Result<FiberedMap> {
    if q == 0 || !(delta > 0.0 && delta < 0.25 / q as f64) {
        return Err(Error::InvalidParams(format!("shear needs 0 < δ < 1/(4q), got δ = {delta}, q = {q}")));
    }
    Ok(FiberedMap::Primitive(Primitive::Shear { q, delta }))
}

/// Homotopy parameter across the strip: ramps 0→1 on `[0,δ]`, 1 in the
/// middle, 1→0 on `[1/q−δ,1/q]`.
#[inline]
pub fn strip_sigma(q: u64, delta: f64, s: f64) -> f64 {
    let w = 1.0 / q as f64;
    if s < delta {
        s / delta
    } else if s > w - delta {
        (w - s) / delta
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripParams {
    pub q: u64,
    pub p: u64,
    pub p_prime: u64,
    pub n: u64,
    pub delta: f64,
    pub lambda: f64,
}

impl StripParams {
    /// The largest δ admitted by the stage rule, shrunk by `safety`.
    pub fn delta_rule(n: u64, p: u64, q: u64) -> f64 {
        let d = 1.0 / (24.0 * n as f64 * p.max(1) as f64 * q as f64);
        d.min(0.25 / q as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.q == 0 || self.n == 0 {
            return bad("q and n must be positive".into());
        }
        if self.p >= self.q || self.p_prime >= self.q {
            return bad(format!("p = {}, p' = {} must be < q = {}", self.p, self.p_prime, self.q));
        }
        if self.p.gcd(&self.q) != 1 {
            return bad(format!(
                "strip extension needs gcd(p, q) = 1, got p = {}, q = {}",
                self.p, self.q
            ));
        }
        if !(self.delta > 0.0 && self.delta <= 0.25 / self.q as f64) {
            return bad(format!("δ = {} outside (0, 1/(4q)]", self.delta));
        }
        let rule = 1.0 / (24.0 * self.n as f64 * self.p.max(1) as f64 * self.q as f64);
        if self.delta >= rule {
            return bad(format!("δ = {} violates δ < 1/(24npq) = {}", self.delta, rule));
        }
        if !(self.lambda > 1.0) || !contraction_holds(self.lambda, self.delta, CONTRACTION_GRID) {
            return bad(format!("λ = {} does not contract 𝕋¹∖B_δ(1/2) into B_δ(0)", self.lambda));
        }
        Ok(())
    }

    /// `p⁻¹ mod q`.
    pub fn p_inverse(&self) -> u64 {
        if self.q == 1 {
            return 0;
        }
        let e = (self.p as i64).extended_gcd(&(self.q as i64));
        e.x.rem_euclid(self.q as i64) as u64
    }
}

/// `h_{n+1}` on 𝕋²: on the strip `S = [0,1/q]×𝕋¹` the fiber map is
/// `G_{σ(s)}(y + τ(s))`, extended to the other strips by commuting with `R_ρ`.
pub fn build_strip_conjugacy(params: StripParams) -> Result<FiberedMap> {
    params.validate()?;
    Ok(FiberedMap::Primitive(Primitive::Strip {
        q: params.q,
        p: params.p,
        p_prime: params.p_prime,
        delta: params.delta,
        lambda: params.lambda,
    }))
}

/// Fraction of `x ∈ [0,1)` where the images of the curves `ℓ_{ρ,t}`, `ℓ_{ρ,t′}`
/// under `h` are at least `2δ` apart.
pub fn verify_curve_gap_estimate(
    h: &Program,
    params: &StripParams,
    t: f64,
    t_prime: f64,
    grid_n: usize,
) -> f64 {
    let (p, pp) = (params.p as f64, params.p_prime as f64);
    let bad = (0..grid_n)
        .into_par_iter()
        .filter(|&i| {
            let x = (i as f64 + 0.5) / grid_n as f64;
            let a = h.eval([x * p, t + x * pp]);
            let b = h.eval([x * p, t_prime + x * pp]);
            circle_dist_raw(a[1], b[1]) >= 2.0 * params.delta
        })
        .count();
    bad as f64 / grid_n as f64
}

pub fn curve_gap_bound(params: &StripParams, grid_n: usize) -> f64 {
    6.0 * params.delta * params.p as f64 * params.q as f64 + 2.0 / grid_n as f64
}

/// `∫₀¹ d(H∘ℓ_{ρ,t}(x), H∘ℓ_{ρ,t′}(x)) dx` by the midpoint rule.
pub fn curve_integral(h: &Program, p: u64, p_prime: u64, t: f64, t_prime: f64, x_grid: usize) -> f64 {
    let (p, pp) = (p as f64, p_prime as f64);
    let s: f64 = (0..x_grid)
        .map(|i| {
            let x = (i as f64 + 0.5) / x_grid as f64;
            let a = h.eval([x * p, t + x * pp]);
            let b = h.eval([x * p, t_prime + x * pp]);
            crate::torus::torus_dist_raw(a, b)
        })
        .sum();
    s / x_grid as f64
}

/// Checks `∫F_{n,t,t′} < 1/(2n)` for all pairs on a `t_grid × t_grid` grid.
pub fn verify_integral_estimate(
    h_next: &Program,
    params: &StripParams,
    t_grid: usize,
    x_grid: usize,
) -> Certificate {
    let pairs: Vec<(usize, usize)> = (0..t_grid)
        .flat_map(|i| (i..t_grid).map(move |j| (i, j)))
        .collect();
    let (worst, wi, wj) = pairs
        .par_iter()
        .map(|&(i, j)| {
            let t = i as f64 / t_grid as f64;
            let tp = j as f64 / t_grid as f64;
            (curve_integral(h_next, params.p, params.p_prime, t, tp, x_grid), i, j)
        })
        .reduce(
            || (f64::NEG_INFINITY, 0, 0),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) { b } else { a },
        );
    let threshold = 1.0 / (2.0 * params.n as f64);
    Certificate::new(CertificateKind::IntegralEstimate, params.n, worst, threshold, Relation::Lt, (t_grid * x_grid) as u64)
        .param("t_grid", t_grid)
        .param("x_grid", x_grid)
        .param("q", params.q)
        .param("p", params.p)
        .param("p_prime", params.p_prime)
        .param("delta", params.delta)
        .param("worst_t", wi as f64 / t_grid as f64)
        .param("worst_t_prime", wj as f64 / t_grid as f64)
}
