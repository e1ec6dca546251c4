//! Koopman-spectrum probes: Birkhoff sums, twisted averages, autocorrelations,
//! and the cyclic-approximation (capt) bookkeeping.

use std::f64::consts::TAU;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::maps::Program;
use crate::torus::wrap;
use crate::{Error, Result};

/// Observables `e^{2πi(kx+ly)}` and the constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "snake_case")]
pub enum Observable {
    One,
    Exp { k: i64, l: i64 },
}

impl Observable {
    pub fn exp_x() -> Self {
        Observable::Exp { k: 1, l: 0 }
    }

    pub fn exp_y() -> Self {
        Observable::Exp { k: 0, l: 1 }
    }

    #[inline]
    pub fn eval(&self, z: [f64; 2]) -> Complex64 {
        match self {
            Observable::One => Complex64::new(1.0, 0.0),
            Observable::Exp { k, l } => {
                let ph = TAU * wrap(*k as f64 * z[0] + *l as f64 * z[1]);
                Complex64::new(ph.cos(), ph.sin())
            }
        }
    }

    pub fn id(&self) -> String {
        match self {
            Observable::One => "one".into(),
            Observable::Exp { k: 1, l: 0 } => "exp_x".into(),
            Observable::Exp { k: 0, l: 1 } => "exp_y".into(),
            Observable::Exp { k, l } => format!("exp:{k},{l}"),
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    /// `one`, `exp_x`, `exp_y`, or `exp:k,l`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(Observable::One),
            "exp_x" => Ok(Observable::exp_x()),
            "exp_y" => Ok(Observable::exp_y()),
            _ => {
                let bad = || Error::Config(format!("unknown observable '{s}'"));
                let rest = s.strip_prefix("exp:").ok_or_else(bad)?;
                let (k, l) = rest.split_once(',').ok_or_else(bad)?;
                Ok(Observable::Exp {
                    k: k.trim().parse().map_err(|_| bad())?,
                    l: l.trim().parse().map_err(|_| bad())?,
                })
            }
        }
    }
}

pub fn birkhoff_average(f: Observable, dynamics: &Dynamics, seed: [f64; 2], n: u64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for z in dynamics.stepper(seed).take(n as usize) {
        acc += f.eval(z);
    }
    acc / n.max(1) as f64
}

#[inline]
fn twist(theta: f64, n: u64) -> Complex64 {
    // θn mod 1 computed from the split θ = ⌊θ⌋ + frac to keep the phase accurate
    let ph = -TAU * wrap(wrap(theta) * n as f64);
    Complex64::new(ph.cos(), ph.sin())
}

/// `a_N(θ) = |(1/N) Σ_{n<N} e^{−2πiθn} f(ψⁿx)|²`.
pub fn eigenvalue_amplitude(f: Observable, dynamics: &Dynamics, theta: f64, seed: [f64; 2], n: u64) -> f64 {
    amplitude_profile(f, dynamics, &[theta], seed, &[n])[0][0]
}

/// `a_N(θ)` for several `θ` and several checkpoints `N` from a single orbit.
/// Result is indexed `[θ][N]`.
pub fn amplitude_profile(f: Observable, dynamics: &Dynamics, thetas: &[f64], seed: [f64; 2], ns: &[u64]) -> Vec<Vec<f64>> {
    let n_max = ns.iter().copied().max().unwrap_or(0);
    let mut sums = vec![Complex64::new(0.0, 0.0); thetas.len()];
    let mut out = vec![vec![0.0; ns.len()]; thetas.len()];
    let mut it = dynamics.stepper(seed);
    for n in 0..n_max {
        let v = f.eval(it.next().expect("orbit is infinite"));
        for (s, &t) in sums.iter_mut().zip(thetas) {
            *s += twist(t, n) * v;
        }
        for (j, &nn) in ns.iter().enumerate() {
            if nn == n + 1 {
                for (i, s) in sums.iter().enumerate() {
                    out[i][j] = (s / nn as f64).norm_sqr();
                }
            }
        }
    }
    out
}

/// `(2/(N·|1−e^{2πi(α−θ)}|))²`: the largest `a_N(θ)` an exact eigenfunction
/// with eigenvalue `e^{2πiα}` can produce away from `θ = α`.
pub fn geometric_amplitude_bound(alpha: f64, theta: f64, n: u64) -> f64 {
    let gap = Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, TAU * (alpha - theta));
    (2.0 / (n as f64 * gap.norm())).powi(2)
}

/// Centres of a `g×g` grid, used as starting points for averaged amplitudes.
pub fn seed_centers(g: usize) -> Vec<[f64; 2]> {
    (0..g * g)
        .map(|i| [((i / g) as f64 + 0.5) / g as f64, ((i % g) as f64 + 0.5) / g as f64])
        .collect()
}

/// [`amplitude_profile`] averaged over several starting points. Single orbits
/// fluctuate once `a_N` reaches the `|S_N|²/N²` floor; the mean has the same limit.
pub fn mean_amplitude_profile(f: Observable, dynamics: &Dynamics, thetas: &[f64], seeds: &[[f64; 2]], ns: &[u64]) -> Vec<Vec<f64>> {
    let per: Vec<Vec<Vec<f64>>> = seeds.par_iter().map(|&s| amplitude_profile(f, dynamics, thetas, s, ns)).collect();
    let mut out = vec![vec![0.0; ns.len()]; thetas.len()];
    // summed in seed order so the result does not depend on the thread count
    for p in &per {
        for (o, v) in out.iter_mut().zip(p) {
            for (a, b) in o.iter_mut().zip(v) {
                *a += b;
            }
        }
    }
    let k = seeds.len().max(1) as f64;
    out.iter_mut().flatten().for_each(|a| *a /= k);
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub observable: String,
    pub n: u64,
    pub k: usize,
    /// `c_k` for `0 ≤ k ≤ K` as `[re, im]`; `c_{−k} = conj(c_k)`.
    pub autocorrelation: Vec<[f64; 2]>,
    pub amplitudes: Vec<[f64; 2]>,
    pub cesaro: f64,
    /// Fejér-smoothed spectral density at `FEJER_POINTS` equally spaced frequencies.
    pub density: Vec<f64>,
}

pub const FEJER_POINTS: usize = 512;

impl SpectralEstimate {
    pub fn c(&self, k: i64) -> Complex64 {
        let [re, im] = self.autocorrelation[k.unsigned_abs() as usize];
        let c = Complex64::new(re, im);
        if k < 0 {
            c.conj()
        } else {
            c
        }
    }
}

pub fn autocorrelation_scan(f: Observable, dynamics: &Dynamics, seed: [f64; 2], n: u64, k: usize) -> Result<SpectralEstimate> {
    if k == 0 || k as u64 >= n {
        return Err(Error::InvalidParams(format!("need 0 < K < N, got K={k}, N={n}")));
    }
    let vals: Vec<Complex64> = dynamics.stepper(seed).take(n as usize + k).map(|z| f.eval(z)).collect();
    let nn = n as usize;
    let c: Vec<Complex64> = (0..=k)
        .into_par_iter()
        .map(|j| {
            let mut s = Complex64::new(0.0, 0.0);
            for i in 0..nn {
                s += vals[i + j] * vals[i].conj();
            }
            s / n as f64
        })
        .collect();
    let cesaro = c[..k].iter().map(|v| v.norm_sqr()).sum::<f64>() / k as f64;
    let density: Vec<f64> = (0..FEJER_POINTS)
        .into_par_iter()
        .map(|i| {
            let th = i as f64 / FEJER_POINTS as f64;
            let mut s = c[0].re;
            for (j, cj) in c.iter().enumerate().take(k).skip(1) {
                let w = 1.0 - j as f64 / k as f64;
                let e = Complex64::from_polar(1.0, -TAU * th * j as f64);
                s += 2.0 * w * (cj * e).re;
            }
            s
        })
        .collect();
    Ok(SpectralEstimate {
        observable: f.id(),
        n,
        k,
        autocorrelation: c.iter().map(|v| [v.re, v.im]).collect(),
        amplitudes: Vec::new(),
        cesaro,
        density,
    })
}

/// Cesàro means `(1/K)Σ|c_k|²` for increasing `K`; a decreasing trend flags a
/// continuous spectral component.
pub fn cesaro_trend(f: Observable, dynamics: &Dynamics, seed: [f64; 2], n: u64, ks: &[usize]) -> Result<Vec<f64>> {
    let k_max = ks.iter().copied().max().unwrap_or(1);
    let est = autocorrelation_scan(f, dynamics, seed, n, k_max)?;
    Ok(ks
        .iter()
        .map(|&k| (0..k).map(|j| est.c(j as i64).norm_sqr()).sum::<f64>() / k as f64)
        .collect())
}

/// `s(n) = 1/(n·log₂(n+2))`.
pub fn capt_speed(n: f64) -> f64 {
    1.0 / (n * (n + 2.0).log2())
}

/// Cycle type of `(i,j) ↦ (i+p, j+p′)` on the `q×q` grid as `(length, count)` pairs.
pub fn grid_cycle_type(p: i64, p_prime: i64, q: i64) -> Vec<[u64; 2]> {
    let qq = q as usize;
    let mut seen = vec![false; qq * qq];
    let mut counts = std::collections::BTreeMap::<u64, u64>::new();
    for start in 0..qq * qq {
        if seen[start] {
            continue;
        }
        let mut len = 0u64;
        let mut c = start;
        while !seen[c] {
            seen[c] = true;
            len += 1;
            let (i, j) = ((c / qq) as i64, (c % qq) as i64);
            let (i2, j2) = ((i + p).rem_euclid(q), (j + p_prime).rem_euclid(q));
            c = i2 as usize * qq + j2 as usize;
        }
        *counts.entry(len).or_default() += 1;
    }
    counts.into_iter().map(|(l, c)| [l, c]).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptReport {
    pub stage: u64,
    pub q: i64,
    pub p: i64,
    pub p_prime: i64,
    /// `(cycle length, number of cycles)` of the grid permutation induced by `R_{ρ_n}`.
    pub cycle_type: Vec<[u64; 2]>,
    pub orbit_n: u64,
    /// Estimated `Σ μ(φ̂_n(P) Δ φ_n(P))` over the stage-`n` partition.
    pub sigma: f64,
    /// The same estimate with the latest built `φ̂` in place of `φ̂_n`.
    pub sigma_latest: Option<f64>,
    pub latest_stage: Option<u64>,
    /// Extreme per-cell empirical visit frequencies and their total.
    pub visit_min: f64,
    pub visit_max: f64,
    pub visit_total: f64,
    pub s_q: f64,
    pub s_q2: f64,
    pub pass_k_q: bool,
    pub pass_k_q2: bool,
    /// Ledger tail bound on the distance from the latest `φ̂` to the limit.
    pub eta_tail: f64,
}

#[inline]
fn cell_of(v: [f64; 2], q: f64) -> usize {
    let qi = q as usize;
    let i = ((wrap(v[0]) * q) as usize).min(qi - 1);
    let j = ((wrap(v[1]) * q) as usize).min(qi - 1);
    i * qi + j
}

/// Σ estimate for `φ_best = H_{m+1}∘R_{ρ_best}∘H_{m+1}⁻¹` against
/// `φ_n = H_{n+1}∘R_{ρ_n}∘H_{n+1}⁻¹` on the cells `H_n(grid)`. With
/// `inner = h_{n+1}` and `tail = h_{n+2}∘…∘h_{m+1}` (identity when `m = n`)
/// everything is evaluated forward along the `w`-orbit of `R_{ρ_best}`:
/// `z ∈ φ_best(P_c)` iff `h(tail(w − ρ_best)) ∈ c` and `z ∈ φ_n(P_c)` iff
/// `h(tail(w) − ρ_n) ∈ c`.
pub fn capt_sigma(
    inner: &Program,
    tail: &Program,
    rho_n: [f64; 2],
    rho_best: [f64; 2],
    q: i64,
    seed: [f64; 2],
    orbit_n: u64,
) -> (f64, Vec<u64>) {
    let qf = q as f64;
    let mut visits = vec![0u64; (q * q) as usize];
    let mut mismatched = 0u64;
    let mut prev = tail.eval(seed);
    for k in 1..=orbit_n {
        let kf = k as f64;
        let w = [wrap(seed[0] + kf * rho_best[0]), wrap(seed[1] + kf * rho_best[1])];
        let tw = tail.eval(w);
        let a = cell_of(inner.eval(prev), qf);
        let b = cell_of(inner.eval([tw[0] - rho_n[0], tw[1] - rho_n[1]]), qf);
        visits[cell_of(inner.eval(tw), qf)] += 1;
        if a != b {
            mismatched += 1;
        }
        prev = tw;
    }
    (2.0 * mismatched as f64 / orbit_n as f64, visits)
}

/// Tent collar: `1` within `w/2` of the boundary, linear to `0` at `w`.
#[inline]
fn tent(d: f64, w: f64) -> f64 {
    if d <= 0.5 * w {
        1.0
    } else if d < w {
        2.0 * (1.0 - d / w)
    } else {
        0.0
    }
}

/// Circle distance from `t` to the arc `[a, a + len]`.
#[inline]
fn dist_to_arc(t: f64, a: f64, len: f64) -> f64 {
    let u = wrap(t - a);
    if u <= len {
        0.0
    } else {
        (u - len).min(1.0 - u)
    }
}

/// Sup-metric distance from `v` to the boundary of grid cell `(i, j)`.
#[inline]
fn dist_to_cell_boundary(v: [f64; 2], i: i64, j: i64, q: f64) -> f64 {
    let side = 1.0 / q;
    let (a, b) = (i as f64 / q, j as f64 / q);
    let dx = dist_to_arc(v[0], a, side);
    let dy = dist_to_arc(v[1], b, side);
    if dx == 0.0 && dy == 0.0 {
        let ux = wrap(v[0] - a);
        let uy = wrap(v[1] - b);
        ux.min(side - ux).min(uy).min(side - uy)
    } else {
        dx.max(dy)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollarBudget {
    pub stage: u64,
    pub q: i64,
    /// Collar width in the coordinates `H_n⁻¹`, where the cells are squares.
    pub width: f64,
    pub bound: f64,
    pub max_cell_integral: f64,
    pub grid: [usize; 2],
    /// `(M, max over seeds and cells of the M-step collar average)`.
    pub m_sweep: Vec<(u64, f64)>,
    pub m_n: Option<u64>,
}

/// Largest per-cell `∫ f_c dμ` with `μ = h_*Leb`, estimated on a `gx × gy` grid.
pub fn max_collar_integral(h: &Program, q: i64, w: f64, gx: usize, gy: usize) -> f64 {
    let qf = q as f64;
    let cells = (q * q) as usize;
    // fixed blocks summed in order keep the result bit-reproducible
    const BLOCK: usize = 256;
    let partial: Vec<Vec<f64>> = (0..gx.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0f64; cells];
            for ix in b * BLOCK..((b + 1) * BLOCK).min(gx) {
                let x = (ix as f64 + 0.5) / gx as f64;
                for iy in 0..gy {
                    let v = h.eval([x, (iy as f64 + 0.5) / gy as f64]);
                    add_collars(&mut acc, v, q, qf, w, 1.0);
                }
            }
            acc
        })
        .collect();
    let mut sums = vec![0.0f64; cells];
    for p in partial {
        sums.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    sums.into_iter().fold(0.0, f64::max) / (gx * gy) as f64
}

/// Adds `weight·f_c(v)` for every cell `c` whose collar reaches `v`.
#[inline]
fn add_collars(acc: &mut [f64], v: [f64; 2], q: i64, qf: f64, w: f64, weight: f64) {
    let i0 = ((v[0] * qf) as i64).min(q - 1);
    let j0 = ((v[1] * qf) as i64).min(q - 1);
    let mut done: [usize; 9] = [usize::MAX; 9];
    let mut nd = 0;
    for di in -1..=1 {
        for dj in -1..=1 {
            let (i, j) = ((i0 + di).rem_euclid(q), (j0 + dj).rem_euclid(q));
            let c = (i * q + j) as usize;
            if done[..nd].contains(&c) {
                continue;
            }
            done[nd] = c;
            nd += 1;
            let d = dist_to_cell_boundary(v, i, j, qf);
            if d < w {
                acc[c] += weight * tent(d, w);
            }
        }
    }
}

/// Collar width for the stage-`n` partition with `μ_n = (H_{n+1})_*Leb`,
/// working in `H_n⁻¹` coordinates so only `h = h_{n+1}` is evaluated.
/// Halves `w` from `1/(2q)` until the per-cell bound `s(q²)/q²` holds, then
/// bisects back up. `rho_hat` drives the `M_n` sweep of orbit averages.
#[allow(clippy::too_many_arguments)]
pub fn f_budget_functions(
    h: &Program,
    q: i64,
    stage: u64,
    rho_hat: [f64; 2],
    grid: [usize; 2],
    m_list: &[u64],
    seeds_per_axis: usize,
) -> Result<CollarBudget> {
    let q2 = (q * q) as f64;
    let bound = capt_speed(q2) / q2;
    let integral = |w: f64| max_collar_integral(h, q, w, grid[0], grid[1]);
    let mut w = 0.5 / q as f64;
    let mut val = integral(w);
    while val >= bound {
        w *= 0.5;
        if w < 1e-6 {
            return Err(Error::WidthUnderflow { min_width: w });
        }
        val = integral(w);
    }
    let (mut lo, mut hi) = (w, (2.0 * w).min(0.5 / q as f64));
    if hi > lo {
        for _ in 0..12 {
            let mid = 0.5 * (lo + hi);
            let v = integral(mid);
            if v < bound {
                lo = mid;
                val = v;
            } else {
                hi = mid;
            }
        }
    }
    let w = lo;
    let m_sweep = collar_orbit_sweep(h, q, w, rho_hat, m_list, seeds_per_axis);
    let m_n = m_sweep.iter().find(|(_, v)| *v < bound).map(|(m, _)| *m);
    Ok(CollarBudget { stage, q, width: w, bound, max_cell_integral: val, grid, m_sweep, m_n })
}

/// `max_{x, c} (1/M)Σ_{l<M} f_c(φ̂ˡ x)` along `R_{ρ̂}`-orbits seen through `h`.
pub fn collar_orbit_sweep(h: &Program, q: i64, w: f64, rho_hat: [f64; 2], m_list: &[u64], seeds_per_axis: usize) -> Vec<(u64, f64)> {
    let qf = q as f64;
    let cells = (q * q) as usize;
    let m_max = m_list.iter().copied().max().unwrap_or(0);
    let seeds: Vec<[f64; 2]> = crate::certificates::seed_grid(seeds_per_axis);
    let per_seed: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|s| {
            let mut acc = vec![0.0f64; cells];
            let mut out = Vec::with_capacity(m_list.len());
            for l in 0..m_max {
                let lf = l as f64;
                let v = h.eval([wrap(s[0] + lf * rho_hat[0]), wrap(s[1] + lf * rho_hat[1])]);
                add_collars(&mut acc, v, q, qf, w, 1.0);
                if m_list.contains(&(l + 1)) {
                    out.push(acc.iter().copied().fold(0.0, f64::max) / (l + 1) as f64);
                }
            }
            out
        })
        .collect();
    let mut sorted: Vec<u64> = m_list.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted
        .iter()
        .enumerate()
        .map(|(i, &m)| (m, per_seed.iter().map(|v| v[i]).fold(0.0, f64::max)))
        .collect()
}
