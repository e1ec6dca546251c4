//! The stage cascade `φ_n → φ̃_n → φ̂_n → φ_{n+1}`: builds `h_{n+1}`, picks the
//! rotation vectors, runs the certificates and keeps the η-ledger.
//!
//! Two profiles. `Strict` enforces every closeness condition and the capt
//! denominator floor, failing with `BudgetExhausted` when the retry schedule
//! runs out. `Desk` sizes the perturbations so that the certificates are
//! reachable with desk-sized orbits and *records* the closeness conditions
//! (they are generally violated, since `L(H_n)` grows super-exponentially).

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certificates::{
    mean_equi_certificate, minimality_certificate, trig_family, ue_variation_certificate, Certificate, CertificateKind,
    Relation,
};
use crate::conjugacy::{
    build_strip_conjugacy, curve_gap_bound, min_lambda_for_contraction, verify_curve_gap_estimate,
    verify_integral_estimate, StripParams,
};
use crate::dynamics::Dynamics;
use crate::maps::{FiberedMap, LipschitzLedger, Program};
use crate::rotation::{make_rational_vector, perturb_to_class, RotationVector, TargetClass};
use crate::spectral::{capt_sigma, capt_speed, f_budget_functions, grid_cycle_type, CaptReport, CollarBudget};
use crate::torus::{centered, torus_dist_raw, wrap};
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Desk,
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub stages: u64,
    pub seed: u64,
    /// `ρ₁ = (p/q, p′/q)` as `[p, p′, q]`.
    pub rho1: [i64; 3],
    pub profile: Profile,
    /// Seeds per axis for the minimality and UE certificates.
    pub cert_grid: usize,
    /// Mean-equicontinuity pairs: `x_grid` base points × `fiber_grid` fibre points.
    pub x_grid: usize,
    pub fiber_grid: usize,
    /// `(t,t′)` grid and `x`-quadrature of the integral estimate.
    pub t_grid: usize,
    pub x_quadrature: usize,
    pub curve_gap_grid: usize,
    pub curve_gap_pairs: usize,
    /// Grid per axis for sampled map distances.
    pub distance_grid: usize,
    pub equivariance_points: usize,
    pub minimality_m_max: usize,
    pub ue_k_max: usize,
    pub mean_equi_k_max: usize,
    pub capt_orbit: u64,
    pub collar_grid: [usize; 2],
    pub collar_m: Vec<u64>,
    /// `δ_n = delta_safety · min(1/(24npq), 1/(4q))` unless overridden.
    pub delta_safety: f64,
    /// `λ_n = lambda_margin · λ*(δ_n)` unless overridden.
    pub lambda_margin: f64,
    pub delta_override: Option<f64>,
    pub lambda_override: Option<f64>,
    /// Desk profile: `q_{n+1} = q_growth · q_n`.
    pub q_growth: i64,
    /// Desk profile: the collinear step moves the base by about one strip per
    /// `kappa_sweep` iterates.
    pub kappa_sweep: f64,
    pub retry_cap: u32,
    pub singular: bool,
    pub covers: Vec<[u32; 2]>,
    /// Largest iterate in the lifted constraints; defaults to the stage index.
    pub j_max: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            stages: 3,
            seed: 0,
            rho1: [1, 1, 2],
            profile: Profile::Desk,
            cert_grid: 8,
            x_grid: 8,
            fiber_grid: 8,
            t_grid: 16,
            x_quadrature: 512,
            curve_gap_grid: 4096,
            curve_gap_pairs: 10,
            distance_grid: 64,
            equivariance_points: 10_000,
            minimality_m_max: 1 << 17,
            ue_k_max: 100_000,
            mean_equi_k_max: 1 << 17,
            capt_orbit: 1_000_000,
            collar_grid: [1 << 16, 16],
            collar_m: vec![1_000, 10_000, 100_000],
            delta_safety: 0.9,
            lambda_margin: 1.01,
            delta_override: None,
            lambda_override: None,
            q_growth: 4,
            kappa_sweep: 16_384.0,
            retry_cap: 40,
            singular: false,
            covers: Vec::new(),
            j_max: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=8).contains(&self.stages) {
            return bad(format!("stages must lie in [1, 8], got {}", self.stages));
        }
        for (name, v) in [
            ("cert_grid", self.cert_grid),
            ("x_grid", self.x_grid),
            ("fiber_grid", self.fiber_grid),
            ("t_grid", self.t_grid),
            ("x_quadrature", self.x_quadrature),
            ("curve_gap_grid", self.curve_gap_grid),
            ("distance_grid", self.distance_grid),
            ("collar_grid[0]", self.collar_grid[0]),
            ("collar_grid[1]", self.collar_grid[1]),
        ] {
            if v < 8 {
                return bad(format!("{name} must be at least 8, got {v}"));
            }
        }
        if self.curve_gap_pairs == 0 || self.equivariance_points == 0 {
            return bad("curve_gap_pairs and equivariance_points must be positive".into());
        }
        if self.minimality_m_max == 0 || self.ue_k_max == 0 || self.mean_equi_k_max == 0 || self.capt_orbit == 0 {
            return bad("orbit lengths must be positive".into());
        }
        if !(self.delta_safety > 0.0 && self.delta_safety < 1.0) {
            return bad(format!("delta_safety must lie in (0,1), got {}", self.delta_safety));
        }
        if !(self.lambda_margin >= 1.0) {
            return bad(format!("lambda_margin must be ≥ 1, got {}", self.lambda_margin));
        }
        if self.q_growth < 2 {
            return bad("q_growth must be at least 2".into());
        }
        if !(self.kappa_sweep >= 1.0) {
            return bad("kappa_sweep must be ≥ 1".into());
        }
        for c in &self.covers {
            if c[0] == 0 || c[1] == 0 {
                return bad(format!("cover {c:?} needs positive sizes"));
            }
        }
        let [p, pp, q] = self.rho1;
        make_rational_vector(p, pp, q).map_err(|e| Error::Config(format!("rho1: {e}")))?;
        Ok(())
    }

    /// Hash of everything that affects the construction (not `stages`).
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.stages = 0;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Per-stage bookkeeping beyond the certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub n: u64,
    pub strip: StripParams,
    /// `L(h_{n+1})` and `L(H_{n+1})`.
    pub lipschitz_h: LipschitzLedger,
    pub lipschitz_big_h: LipschitzLedger,
    /// `|ρ̃_n − ρ_n|` and `|ρ̂_n − ρ̃_n|` (sup over coordinates).
    pub kappa: f64,
    pub hat_shift: f64,
    /// `[lower, upper]` for `d₀(φ_n,φ̃_n)`, `d₀(φ̃_n,φ̂_n)`, `d₀(φ̂_n,φ_{n+1})`.
    pub steps: [[f64; 2]; 3],
    pub thresholds: [f64; 3],
    pub mean_equi_k: u64,
    pub mean_equi_witness: f64,
    pub minimality_m: f64,
    pub ue_k: u64,
    pub q_next: i64,
    pub q_floor: f64,
    pub collar: Option<CollarBudget>,
    pub capt: Option<CaptReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageState {
    pub version: u32,
    pub config_digest: String,
    /// Index of the current rational vector: `ρ_n` and `H_n` are defined.
    pub n: u64,
    /// `h_1, …, h_n` with `h_1 = id`.
    pub chain: Vec<FiberedMap>,
    pub rho_list: Vec<RotationVector>,
    pub rho_tilde_list: Vec<RotationVector>,
    pub rho_hat_list: Vec<RotationVector>,
    pub eta_se: Vec<f64>,
    pub eta_me: Vec<f64>,
    pub delta_list: Vec<f64>,
    pub certificates: Vec<Certificate>,
    /// `(l, m, j)` lifted constraints in force.
    pub cover_targets: Vec<[u32; 3]>,
    pub records: Vec<StageRecord>,
}

impl PartialEq for CaptReport {
    fn eq(&self, o: &Self) -> bool {
        serde_json::to_string(self).ok() == serde_json::to_string(o).ok()
    }
}

impl PartialEq for CollarBudget {
    fn eq(&self, o: &Self) -> bool {
        serde_json::to_string(self).ok() == serde_json::to_string(o).ok()
    }
}

pub fn init_stage(cfg: &RunConfig) -> Result<StageState> {
    cfg.validate()?;
    let [p, pp, q] = cfg.rho1;
    Ok(StageState {
        version: CHECKPOINT_VERSION,
        config_digest: cfg.digest(),
        n: 1,
        chain: vec![FiberedMap::Identity],
        rho_list: vec![make_rational_vector(p, pp, q)?],
        rho_tilde_list: Vec::new(),
        rho_hat_list: Vec::new(),
        eta_se: Vec::new(),
        eta_me: Vec::new(),
        delta_list: Vec::new(),
        certificates: Vec::new(),
        cover_targets: Vec::new(),
        records: Vec::new(),
    })
}

impl StageState {
    /// Number of completed stages.
    pub fn completed(&self) -> u64 {
        self.n - 1
    }

    /// `H_k = h_1∘…∘h_k`.
    pub fn big_h(&self, k: u64) -> FiberedMap {
        FiberedMap::compose_right_to_left(&self.chain[..k as usize])
    }

    pub fn rho(&self, k: u64) -> &RotationVector {
        &self.rho_list[k as usize - 1]
    }

    /// `φ_k = H_k∘R_{ρ_k}∘H_k⁻¹`, written with `H_{k+1}` when available
    /// (same map, since `h_{k+1}` commutes with `R_{ρ_k}`).
    pub fn phi(&self, k: u64) -> FiberedMap {
        let h = if (k as usize) < self.chain.len() { self.big_h(k + 1) } else { self.big_h(k) };
        FiberedMap::conjugate(h, self.rho(k).clone())
    }

    pub fn phi_tilde(&self, k: u64) -> FiberedMap {
        FiberedMap::conjugate(self.big_h(k + 1), self.rho_tilde_list[k as usize - 1].clone())
    }

    pub fn phi_hat(&self, k: u64) -> FiberedMap {
        FiberedMap::conjugate(self.big_h(k + 1), self.rho_hat_list[k as usize - 1].clone())
    }

    /// The latest totally irrational stage map.
    pub fn latest_map(&self) -> Option<FiberedMap> {
        (self.completed() > 0).then(|| self.phi_hat(self.completed()))
    }

    pub fn stage_certificates(&self, k: u64) -> Vec<&Certificate> {
        self.certificates.iter().filter(|c| c.stage == k).collect()
    }

    pub fn record(&self, k: u64) -> Option<&StageRecord> {
        self.records.iter().find(|r| r.n == k)
    }

    /// Upper bound on `d₀(φ̂_m, φ̂_k)` for `m ≤ k` by the triangle inequality
    /// along the recorded steps.
    pub fn hat_chain_distance(&self, m: u64, k: u64) -> f64 {
        let mut s = 0.0;
        for j in m..k {
            s += self.record(j).map_or(0.5, |r| r.steps[2][1]);
            if let Some(r) = self.record(j + 1) {
                s += r.steps[0][1] + r.steps[1][1];
            }
        }
        s
    }

    /// Upper bound on `d₀(φ̃_m, φ̃_k)`.
    fn tilde_chain_distance(&self, m: u64, k_steps: &[[f64; 2]; 3], k: u64) -> f64 {
        let mut s = 0.0;
        for j in m..k {
            let r = self.record(j);
            s += r.map_or(0.5, |r| r.steps[1][1] + r.steps[2][1]);
            s += if j + 1 == k { k_steps[0][1] } else { self.record(j + 1).map_or(0.5, |r| r.steps[0][1]) };
        }
        s
    }
}

/// `d₀(H∘R_a∘H⁻¹, H∘R_b∘H⁻¹)`: grid value of
/// `sup_w max(d(H(w+a),H(w+b)), d(H(w−a),H(w−b)))` and an upper bound
/// `min(L(H)·|a−b|, grid + L(H)/G)`.
pub fn conj_distance(h: &Program, lip: LipschitzLedger, a: [f64; 2], b: [f64; 2], grid: usize) -> [f64; 2] {
    let d = [centered(b[0] - a[0]), centered(b[1] - a[1])];
    if d == [0.0, 0.0] {
        return [0.0, 0.0];
    }
    let g = grid as f64;
    let lower = (0..grid * grid)
        .into_par_iter()
        .map(|k| {
            let w = [(k / grid) as f64 / g, (k % grid) as f64 / g];
            let fa = h.eval([w[0] + a[0], w[1] + a[1]]);
            let fb = h.eval([w[0] + b[0], w[1] + b[1]]);
            let ia = h.eval([w[0] - a[0], w[1] - a[1]]);
            let ib = h.eval([w[0] - b[0], w[1] - b[1]]);
            torus_dist_raw(fa, fb).max(torus_dist_raw(ia, ib))
        })
        .reduce(|| 0.0, f64::max);
    let sound = lip.forward * d[0].abs().max(d[1].abs());
    let upper = sound.min(lower + lip.forward / g).min(0.5).max(lower);
    [lower, upper]
}

/// The same distance for the `j`-th iterates of the `(l,m)` rescaled lifts:
/// `sup_V d(h_{(l,m)}Ĥ(V + jΔ), h_{(l,m)}Ĥ(V))` over the cover, `Δ = b − a`.
pub fn lifted_conj_distance(h: &Program, lip: LipschitzLedger, delta: [f64; 2], j: u64, l: u32, m: u32, grid: usize) -> [f64; 2] {
    let (lf, mf) = (l as f64, m as f64);
    let jd = [j as f64 * delta[0], j as f64 * delta[1]];
    if jd == [0.0, 0.0] {
        return [0.0, 0.0];
    }
    let g = grid as f64;
    let lower = (0..grid * grid)
        .into_par_iter()
        .map(|k| {
            let v = [lf * (k / grid) as f64 / g, mf * (k % grid) as f64 / g];
            let a = h.eval_lift(v);
            let b = h.eval_lift([v[0] + jd[0], v[1] + jd[1]]);
            let dx = centered((b[0] - a[0]) / lf).abs();
            let dy = centered((b[1] - a[1]) / mf).abs();
            dx.max(dy)
        })
        .reduce(|| 0.0, f64::max);
    let scale = 1.0 / lf.min(mf);
    let sound = lip.forward * jd[0].abs().max(jd[1].abs()) * scale;
    let slack = lip.forward * lf.max(mf) * scale / g;
    [lower, sound.min(lower + slack).min(0.5).max(lower)]
}

fn hard(c: &Certificate) -> Result<()> {
    if c.pass {
        Ok(())
    } else {
        Err(Error::CertificateFailure(serde_json::to_string(c).unwrap_or_else(|_| c.to_string())))
    }
}

fn closeness_certificate(stage: u64, which: &str, d: [f64; 2], threshold: f64, grid: usize) -> Certificate {
    Certificate::new(CertificateKind::Closeness, stage, d[1], threshold, Relation::Le, (grid * grid) as u64)
        .param("condition", which)
        .param("grid_value", d[0])
}

/// Nearest `p` to `target·q` with `gcd(p, q) = 1`, `0 < p < q`.
fn nearest_coprime(target: f64, q: i64) -> i64 {
    use num_integer::Integer;
    // circularly closest numerator; ties go to the smaller one
    (1..q.max(2))
        .filter(|p| p.gcd(&q) == 1)
        .min_by(|a, b| {
            let da = crate::torus::circle_dist_raw(target, *a as f64 / q as f64);
            let db = crate::torus::circle_dist_raw(target, *b as f64 / q as f64);
            da.partial_cmp(&db).unwrap().then(a.cmp(b))
        })
        .unwrap_or(1)
}

/// Rational approximation of `ρ̂` with denominator `q`.
fn rational_near(rho_hat: &RotationVector, q: i64) -> Result<RotationVector> {
    let v = rho_hat.to_f64();
    let p = nearest_coprime(v[0], q);
    let pp = ((v[1] * q as f64).round() as i64).rem_euclid(q);
    make_rational_vector(p, pp, q)
}

/// Smallest `q_{n+1}` allowed by the partition-diameter rule `q ≥ 2·L(H_{n+1})·(n+1)`.
pub fn choose_capt_denominator(lip_big_h: f64, n: u64) -> f64 {
    (2.0 * lip_big_h * (n + 1) as f64).ceil()
}

struct Thresholds {
    eta: [f64; 3],
}

fn eta_thresholds(state: &StageState, eta_me_n: Option<f64>, eta_se_n: Option<f64>) -> Thresholds {
    let n = state.n as usize;
    let prev = |v: &Vec<f64>| if n >= 2 { v[n - 2].max(0.0) } else { 1.5 };
    let (se_prev, me_prev) = (prev(&state.eta_se), prev(&state.eta_me));
    let cap = |x: f64| (x / 3.0).min(0.5);
    Thresholds {
        eta: [
            cap(se_prev.min(me_prev)),
            cap(se_prev.min(eta_me_n.unwrap_or(me_prev).max(0.0))),
            cap(eta_se_n.unwrap_or(se_prev).max(0.0).min(eta_me_n.unwrap_or(me_prev).max(0.0))),
        ],
    }
}

/// Extra singular-mode bound `(1/3)·min_m (δ_m − d₀(φ̂_m, ·))` on the next steps.
fn ball_threshold(state: &StageState) -> f64 {
    let n = state.n;
    (1..n)
        .map(|m| {
            let dm = state.delta_list.get(m as usize - 1).copied().unwrap_or(0.0);
            (dm - state.hat_chain_distance(m, n - 1)) / 3.0
        })
        .fold(0.5, f64::min)
        .max(0.0)
}

/// η-ledger update: at most `2^{-n}`, half the certificate margin, the unused
/// budget of every earlier stage, and strictly below the previous value.
fn next_eta(prev: &[f64], margin: f64, consumed: impl Fn(usize) -> f64, n: u64) -> f64 {
    let mut eta = 0.5f64.powi(n as i32).min(margin / 2.0);
    for (k, e) in prev.iter().enumerate() {
        eta = eta.min(e - consumed(k));
    }
    if let Some(&last) = prev.last() {
        let strict = if last > 0.0 { 0.5 * last } else { last - 0.5f64.powi(n as i32) };
        eta = eta.min(strict);
    }
    eta
}

/// Runs stage `n = state.n` and returns the state with `ρ_{n+1}`.
pub fn run_stage(state: &StageState, cfg: &RunConfig) -> Result<StageState> {
    cfg.validate()?;
    if state.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch { found: state.version, expected: CHECKPOINT_VERSION });
    }
    if state.config_digest != cfg.digest() {
        return Err(Error::Config("checkpoint was produced with a different configuration".into()));
    }
    let n = state.n;
    let strict = cfg.profile == Profile::Strict;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ n.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut certs: Vec<Certificate> = Vec::new();
    let rho = state.rho(n).clone();
    let (p, pp, q) = rho
        .rational_parts()
        .ok_or_else(|| Error::InvalidRotation(format!("ρ_{n} must be rational")))?;
    let rho_f = rho.to_f64();

    // h_{n+1}
    let delta = cfg
        .delta_override
        .unwrap_or(StripParams::delta_rule(n, p as u64, q as u64) * cfg.delta_safety);
    let lambda_star = min_lambda_for_contraction(delta)?;
    let lambda = cfg.lambda_override.unwrap_or(lambda_star * cfg.lambda_margin);
    let params = StripParams { q: q as u64, p: p as u64, p_prime: pp as u64, n, delta, lambda };
    let h = build_strip_conjugacy(params)?;
    let hp = h.compile();
    certs.push(
        Certificate::new(CertificateKind::Contraction, n, lambda_star, lambda, Relation::Le, crate::conjugacy::CONTRACTION_GRID as u64)
            .param("delta", delta),
    );
    let equi = (0..cfg.equivariance_points)
        .map(|_| [rng.gen::<f64>(), rng.gen::<f64>()])
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&z| torus_dist_raw(hp.eval([z[0] + rho_f[0], z[1] + rho_f[1]]), {
            let v = hp.eval(z);
            [wrap(v[0] + rho_f[0]), wrap(v[1] + rho_f[1])]
        }))
        .reduce(|| 0.0, f64::max);
    certs.push(Certificate::new(CertificateKind::Equivariance, n, equi, 1e-9, Relation::Le, cfg.equivariance_points as u64));
    let gap_bound = curve_gap_bound(&params, cfg.curve_gap_grid);
    let pairs: Vec<(f64, f64)> = (0..cfg.curve_gap_pairs).map(|_| (rng.gen(), rng.gen())).collect();
    let gap = pairs
        .iter()
        .map(|&(t, tp)| verify_curve_gap_estimate(&hp, &params, t, tp, cfg.curve_gap_grid))
        .fold(0.0, f64::max);
    certs.push(
        Certificate::new(CertificateKind::CurveGap, n, gap, gap_bound, Relation::Le, cfg.curve_gap_grid as u64)
            .param("pairs", cfg.curve_gap_pairs),
    );
    let mut chain = state.chain.clone();
    chain.push(h.clone());
    let big_h = FiberedMap::compose_right_to_left(&chain);
    let big_hp = big_h.compile();
    let lip_h = h.lipschitz();
    let lip_big = big_h.lipschitz();
    certs.push(verify_integral_estimate(&big_hp, &params, cfg.t_grid, cfg.x_quadrature));
    for c in &certs {
        hard(c)?;
    }

    let ball = if cfg.singular { ball_threshold(state) } else { 0.5 };
    let thr = eta_thresholds(state, None, None);
    let singular_cap = |t: f64| if cfg.singular { t.min(ball) } else { t };

    // ρ̃_n = αρ_n
    let drift_target = 1.0 / (q as f64 * cfg.kappa_sweep);
    let base = perturb_to_class(&rho, TargetClass::IrrationalCollinear, drift_target * rho_f[0].max(rho_f[1]) / rho_f[0].max(1e-300))?;
    let mut rho_tilde = base;
    let mut d1 = conj_distance(&big_hp, lip_big, rho_f, rho_tilde.to_f64(), cfg.distance_grid);
    let thr1 = singular_cap(thr.eta[0]);
    if strict {
        let mut bound = rho.max_abs_diff(&rho_tilde);
        let mut tries = 0;
        while d1[1] > thr1 {
            tries += 1;
            if tries > cfg.retry_cap {
                return Err(Error::BudgetExhausted { constraint: "d(φ_n, φ̃_n)".into(), best: d1[1], threshold: thr1 });
            }
            bound *= 0.5;
            rho_tilde = perturb_to_class(&rho, TargetClass::IrrationalCollinear, bound)?;
            d1 = conj_distance(&big_hp, lip_big, rho_f, rho_tilde.to_f64(), cfg.distance_grid);
        }
    }
    certs.push(closeness_certificate(n, "phi_n~phi_tilde_n", d1, thr1, cfg.distance_grid));
    let rt_f = rho_tilde.to_f64();

    let tilde_map = FiberedMap::conjugate(big_h.clone(), rho_tilde.clone());
    let tilde_dyn = Dynamics::from_map(&tilde_map);
    let eps = 1.0 / n as f64;
    let me = mean_equi_certificate(&tilde_dyn, eps, cfg.mean_equi_k_max, cfg.x_grid, cfg.fiber_grid, n);
    hard(&me)?;
    let me_k = me.params.get("k").and_then(|v| v.as_u64()).unwrap_or(0);
    let me_witness = me.witness;
    certs.push(me.clone());

    // η^me_n: consumption d₀(φ̃_k, φ̃_n) along recorded steps
    let partial_steps = [d1, [0.0, 0.0], [0.0, 0.0]];
    let eta_me = next_eta(&state.eta_me, eps - me_witness, |k| state.tilde_chain_distance(k as u64 + 1, &partial_steps, n), n);

    // ρ̂_n: totally irrational, well inside the collinear step
    let hat_bound = (rho.max_abs_diff(&rho_tilde) / 16.0).max(1e-300);
    let mut rho_hat = perturb_to_class(&rho_tilde, TargetClass::TotallyIrrational, hat_bound)?;
    let mut d2 = conj_distance(&big_hp, lip_big, rt_f, rho_hat.to_f64(), cfg.distance_grid);
    let thr2 = singular_cap(eta_thresholds(state, Some(eta_me), None).eta[1]);
    if strict {
        let mut bound = hat_bound;
        let mut tries = 0;
        while d2[1] > thr2 {
            tries += 1;
            if tries > cfg.retry_cap {
                return Err(Error::BudgetExhausted { constraint: "d(φ̃_n, φ̂_n)".into(), best: d2[1], threshold: thr2 });
            }
            bound *= 0.5;
            rho_hat = perturb_to_class(&rho_tilde, TargetClass::TotallyIrrational, bound)?;
            d2 = conj_distance(&big_hp, lip_big, rt_f, rho_hat.to_f64(), cfg.distance_grid);
        }
    }
    certs.push(closeness_certificate(n, "phi_tilde_n~phi_hat_n", d2, thr2, cfg.distance_grid));
    let rh_f = rho_hat.to_f64();

    let hat_map = FiberedMap::conjugate(big_h.clone(), rho_hat.clone());
    let hat_dyn = Dynamics::from_map(&hat_map);
    let mini = minimality_certificate(&hat_dyn, eps, cfg.minimality_m_max, cfg.cert_grid, n);
    hard(&mini)?;
    let mini_m = mini.witness;
    certs.push(mini);
    let funcs = trig_family(3);
    let mut ue_k = 1usize << 12;
    let ue = loop {
        let k = ue_k.min(cfg.ue_k_max);
        let c = ue_variation_certificate(&hat_dyn, &funcs, eps, k, cfg.cert_grid, n);
        if c.pass || k >= cfg.ue_k_max {
            ue_k = k;
            break c;
        }
        ue_k *= 4;
    };
    hard(&ue)?;
    let ue_margin = eps - ue.witness;
    certs.push(ue);

    let eta_se = next_eta(&state.eta_se, ue_margin, |k| state.hat_chain_distance(k as u64 + 1, n - 1) + d1[1] + d2[1], n);

    // ρ_{n+1}
    let q_floor = choose_capt_denominator(lip_big.forward, n);
    let thr3 = singular_cap(eta_thresholds(state, Some(eta_me), Some(eta_se)).eta[2]);
    let mut q_next = q * cfg.q_growth;
    if strict {
        if !(q_floor < 1e15) {
            return Err(Error::BudgetExhausted {
                constraint: "q_{n+1} ≥ 2·L(H_{n+1})·(n+1)".into(),
                best: q_next as f64,
                threshold: q_floor,
            });
        }
        q_next = q_next.max(q_floor as i64);
    }
    let mut rho_next = rational_near(&rho_hat, q_next)?;
    let mut d3 = conj_distance(&big_hp, lip_big, rh_f, rho_next.to_f64(), cfg.distance_grid);
    if strict {
        let mut tries = 0;
        while d3[1] > thr3 {
            tries += 1;
            if tries > cfg.retry_cap || q_next > (1i64 << 52) {
                return Err(Error::BudgetExhausted { constraint: "d(φ̂_n, φ_{n+1})".into(), best: d3[1], threshold: thr3 });
            }
            q_next *= 2;
            rho_next = rational_near(&rho_hat, q_next)?;
            d3 = conj_distance(&big_hp, lip_big, rh_f, rho_next.to_f64(), cfg.distance_grid);
        }
    }
    certs.push(closeness_certificate(n, "phi_hat_n~phi_n+1", d3, thr3, cfg.distance_grid));
    certs.push(
        Certificate::new(CertificateKind::PartitionDiameter, n, q_floor, q_next as f64, Relation::Le, 0)
            .param("lipschitz_H", lip_big.forward),
    );

    // lifted constraints
    let mut cover_targets = state.cover_targets.clone();
    let j_max = cfg.j_max.unwrap_or(n);
    for &[l, m] in &cfg.covers {
        for j in 1..=j_max {
            for (which, a, b, t) in [
                ("lift:phi_n~phi_tilde_n", rho_f, rt_f, thr1),
                ("lift:phi_tilde_n~phi_hat_n", rt_f, rh_f, thr2),
                ("lift:phi_hat_n~phi_n+1", rh_f, rho_next.to_f64(), thr3),
            ] {
                let delta = [centered(b[0] - a[0]), centered(b[1] - a[1])];
                let d = lifted_conj_distance(&big_hp, lip_big, delta, j, l, m, cfg.distance_grid);
                let c = Certificate::new(CertificateKind::LiftedCloseness, n, d[1], t, Relation::Le, (cfg.distance_grid * cfg.distance_grid) as u64)
                    .param("condition", which)
                    .param("l", l)
                    .param("m", m)
                    .param("j", j)
                    .param("grid_value", d[0]);
                if strict {
                    hard(&c).map_err(|_| Error::BudgetExhausted { constraint: which.into(), best: d[1], threshold: t })?;
                }
                certs.push(c);
            }
            if !cover_targets.contains(&[l, m, j as u32]) {
                cover_targets.push([l, m, j as u32]);
            }
        }
    }

    // singular-spectrum mode: collars, capt, δ_n
    let mut delta_list = state.delta_list.clone();
    let (mut collar, mut capt) = (None, None);
    if cfg.singular {
        let seeds = 4;
        match f_budget_functions(&hp, q, n, rh_f, cfg.collar_grid, &cfg.collar_m, seeds) {
            Ok(b) => {
                certs.push(
                    Certificate::new(CertificateKind::CollarBudget, n, b.max_cell_integral, b.bound, Relation::Lt, (b.grid[0] * b.grid[1]) as u64)
                        .param("condition", "integral")
                        .param("width", b.width),
                );
                let best = b.m_sweep.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
                certs.push(
                    Certificate::new(CertificateKind::CollarBudget, n, best, b.bound, Relation::Lt, (seeds * seeds) as u64)
                        .param("condition", "orbit_average")
                        .param("m_sweep", &b.m_sweep),
                );
                collar = Some(b);
            }
            Err(Error::WidthUnderflow { min_width }) => {
                certs.push(
                    Certificate::new(CertificateKind::CollarBudget, n, f64::INFINITY, capt_speed((q * q) as f64) / (q * q) as f64, Relation::Lt, 0)
                        .param("condition", "integral")
                        .param("width_underflow", min_width),
                );
                if strict {
                    return Err(Error::WidthUnderflow { min_width });
                }
            }
            Err(e) => return Err(e),
        }
        let report = capt_report_parts(&hp, &Program::identity(), (p, pp, q), rho_f, rh_f, n, cfg.capt_orbit, None);
        certs.push(
            Certificate::new(CertificateKind::Capt, n, report.sigma, report.s_q2, Relation::Le, cfg.capt_orbit)
                .param("s_q", report.s_q)
                .param("pass_k_q", report.pass_k_q),
        );
        capt = Some(report);
        // δ_n: collar plateau seen through H_n⁻¹, minus the current displacement
        let lip_hn_inv = state.big_h(n).lipschitz().inverse;
        let disp = d1[1] + d2[1];
        let radius = collar.as_ref().map_or(0.0, |b| b.width / (2.0 * lip_hn_inv));
        certs.push(
            Certificate::new(CertificateKind::SingularBall, n, disp, radius, Relation::Lt, 0)
                .param("ball", n)
                .param("condition", "self"),
        );
        delta_list.push(radius - disp);
        for m in 1..n {
            let dm = state.delta_list[m as usize - 1];
            let dist = state.hat_chain_distance(m, n - 1)
                + state.record(n - 1).map_or(0.0, |r| r.steps[2][1])
                + d1[1]
                + d2[1];
            certs.push(
                Certificate::new(CertificateKind::SingularBall, n, dist, dm.max(0.0), Relation::Le, 0)
                    .param("ball", m)
                    .param("condition", "future"),
            );
        }
    }

    certs.push(
        Certificate::new(CertificateKind::EtaBudget, n, -eta_se.min(eta_me), 0.0, Relation::Lt, 0)
            .param("eta_se", eta_se)
            .param("eta_me", eta_me),
    );

    let record = StageRecord {
        n,
        strip: params,
        lipschitz_h: lip_h,
        lipschitz_big_h: lip_big,
        kappa: rho.max_abs_diff(&rho_tilde),
        hat_shift: rho_tilde.max_abs_diff(&rho_hat),
        steps: [d1, d2, d3],
        thresholds: [thr1, thr2, thr3],
        mean_equi_k: me_k,
        mean_equi_witness: me_witness,
        minimality_m: mini_m,
        ue_k: ue_k as u64,
        q_next,
        q_floor,
        collar,
        capt,
    };

    let mut next = state.clone();
    next.n = n + 1;
    next.chain = chain;
    next.rho_list.push(rho_next);
    next.rho_tilde_list.push(rho_tilde);
    next.rho_hat_list.push(rho_hat);
    next.eta_se.push(eta_se);
    next.eta_me.push(eta_me);
    next.delta_list = delta_list;
    next.certificates.extend(certs);
    next.cover_targets = cover_targets;
    next.records.push(record);
    Ok(next)
}

pub const CAPT_SEED: [f64; 2] = [0.123_456_789, 0.618_033_988];

#[allow(clippy::too_many_arguments)]
fn capt_report_parts(
    inner: &Program,
    tail: &Program,
    rat: (i64, i64, i64),
    rho_n: [f64; 2],
    rho_best: [f64; 2],
    stage: u64,
    orbit_n: u64,
    latest: Option<(u64, &Program, [f64; 2])>,
) -> CaptReport {
    let (p, pp, q) = rat;
    let (sigma, visits) = capt_sigma(inner, tail, rho_n, rho_best, q, CAPT_SEED, orbit_n);
    let (sigma_latest, latest_stage) = match latest {
        Some((m, t, r)) => (Some(capt_sigma(inner, t, rho_n, r, q, CAPT_SEED, orbit_n).0), Some(m)),
        None => (None, None),
    };
    let freq: Vec<f64> = visits.iter().map(|&v| v as f64 / orbit_n as f64).collect();
    let s_q = capt_speed(q as f64);
    let s_q2 = capt_speed((q * q) as f64);
    CaptReport {
        stage,
        q,
        p,
        p_prime: pp,
        cycle_type: grid_cycle_type(p, pp, q),
        orbit_n,
        sigma,
        sigma_latest,
        latest_stage,
        visit_min: freq.iter().copied().fold(f64::INFINITY, f64::min),
        visit_max: freq.iter().copied().fold(0.0, f64::max),
        visit_total: freq.iter().sum(),
        s_q,
        s_q2,
        pass_k_q: sigma <= s_q,
        pass_k_q2: sigma <= s_q2,
        eta_tail: 0.5f64.powi(stage as i32 - 1),
    }
}

/// Capt report for completed stage `k`, with `φ̂_k` as the approximated map
/// and, when later stages exist, the latest `φ̂` as a second estimate.
pub fn capt_check(state: &StageState, k: u64, orbit_n: u64) -> Result<CaptReport> {
    if k == 0 || k > state.completed() {
        return Err(Error::MissingArtifact(format!("stage {k} has not been completed")));
    }
    let rat = state.rho(k).rational_parts().expect("ρ_k is rational");
    let inner = state.chain[k as usize].compile();
    let last = state.completed();
    let tail_map = FiberedMap::compose_right_to_left(&state.chain[k as usize + 1..=last as usize]);
    let tail = tail_map.compile();
    let latest = (last > k).then(|| (last, &tail, state.rho_hat_list[last as usize - 1].to_f64()));
    Ok(capt_report_parts(
        &inner,
        &Program::identity(),
        rat,
        state.rho(k).to_f64(),
        state.rho_hat_list[k as usize - 1].to_f64(),
        k,
        orbit_n,
        latest,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub stage: u64,
    pub q: i64,
    pub rho: String,
    pub mean_equi_k: u64,
    pub mean_equi_witness: f64,
    pub minimality_m: f64,
    pub ue_k: u64,
    pub capt: Option<bool>,
    pub hard_pass: bool,
    pub recorded_failures: usize,
}

pub fn summary(state: &StageState) -> Vec<SummaryRow> {
    state
        .records
        .iter()
        .map(|r| {
            let certs = state.stage_certificates(r.n);
            SummaryRow {
                stage: r.n,
                q: r.strip.q as i64,
                rho: state.rho(r.n).to_string(),
                mean_equi_k: r.mean_equi_k,
                mean_equi_witness: r.mean_equi_witness,
                minimality_m: r.minimality_m,
                ue_k: r.ue_k,
                capt: r.capt.as_ref().map(|c| c.pass_k_q),
                hard_pass: certs.iter().filter(|c| is_hard(c.kind)).all(|c| c.pass),
                recorded_failures: certs.iter().filter(|c| !c.pass).count(),
            }
        })
        .collect()
}

/// Certificates whose failure aborts a desk run.
pub fn is_hard(kind: CertificateKind) -> bool {
    matches!(
        kind,
        CertificateKind::Contraction
            | CertificateKind::Equivariance
            | CertificateKind::CurveGap
            | CertificateKind::IntegralEstimate
            | CertificateKind::MeanEquiFiniteTime
            | CertificateKind::MinimalityEpsDense
            | CertificateKind::UEVariation
    )
}

pub fn checkpoint_path(dir: &Path, stage: u64) -> PathBuf {
    dir.join(format!("stage_{stage}.json"))
}

pub fn save_checkpoint(state: &StageState, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = checkpoint_path(dir, state.completed());
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(state)?)?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

pub fn load_checkpoint(path: &Path) -> Result<StageState> {
    let bytes = std::fs::read(path).map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    let found = v.get("version").and_then(|x| x.as_u64()).ok_or_else(|| Error::CorruptCheckpoint("no version field".into()))?;
    if found != CHECKPOINT_VERSION as u64 {
        return Err(Error::VersionMismatch { found: found as u32, expected: CHECKPOINT_VERSION });
    }
    let state: StageState = serde_json::from_value(v).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    if state.n == 0
        || state.chain.len() != state.n as usize
        || state.rho_list.len() != state.n as usize
        || state.rho_hat_list.len() != state.completed() as usize
        || state.rho_tilde_list.len() != state.completed() as usize
    {
        return Err(Error::CorruptCheckpoint("inconsistent stage lists".into()));
    }
    for m in &state.chain {
        m.validate().map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    }
    Ok(state)
}

/// Latest `stage_k.json` in `dir`, if any.
pub fn latest_checkpoint(dir: &Path) -> Option<PathBuf> {
    let mut best: Option<(u64, PathBuf)> = None;
    for e in std::fs::read_dir(dir).ok()?.flatten() {
        let name = e.file_name().to_string_lossy().to_string();
        if let Some(k) = name.strip_prefix("stage_").and_then(|s| s.strip_suffix(".json")).and_then(|s| s.parse::<u64>().ok()) {
            if best.as_ref().map_or(true, |b| k > b.0) {
                best = Some((k, e.path()));
            }
        }
    }
    best.map(|b| b.1)
}

/// Runs stages until `cfg.stages` are complete, calling `on_stage` after each.
pub fn run(cfg: &RunConfig, resume: Option<StageState>, mut on_stage: impl FnMut(&StageState) -> Result<()>) -> Result<StageState> {
    cfg.validate()?;
    let mut state = match resume {
        Some(s) => s,
        None => init_stage(cfg)?,
    };
    while state.completed() < cfg.stages {
        state = run_stage(&state, cfg)?;
        on_stage(&state)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capt_denominator_examples() {
        assert_eq!(choose_capt_denominator(1.0, 1), 4.0);
        assert_eq!(choose_capt_denominator(10.0, 3), 80.0);
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        let c = RunConfig { stages: 0, ..RunConfig::default() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = RunConfig { stages: 9, ..RunConfig::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { fiber_grid: 4, ..RunConfig::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { rho1: [2, 2, 4], ..RunConfig::default() };
        assert!(c.validate().is_err());
        let json = serde_json::to_string(&RunConfig::default()).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, RunConfig::default());
        assert!(serde_json::from_str::<RunConfig>(r#"{"stagez": 3}"#).is_err());
    }

    #[test]
    fn nearest_coprime_numerators() {
        assert_eq!(nearest_coprime(0.5, 8), 3);
        assert_eq!(nearest_coprime(0.5, 7), 4);
        assert_eq!(nearest_coprime(0.01, 5), 1);
    }

    #[test]
    fn eta_is_capped_and_strictly_decreasing() {
        let e1 = next_eta(&[], 1.0, |_| 0.0, 1);
        assert_eq!(e1, 0.5);
        let e2 = next_eta(&[e1], 1.0, |_| 0.0, 2);
        assert!(e2 < e1 && e2 <= 0.25);
        let e3 = next_eta(&[e1, -0.1], 1.0, |_| 0.0, 3);
        assert!(e3 < -0.1);
    }

    #[test]
    fn conj_distance_bounds() {
        let h = crate::conjugacy::build_strip_conjugacy(StripParams { q: 2, p: 1, p_prime: 1, n: 1, delta: 0.01, lambda: 40.0 }).unwrap();
        let hp = h.compile();
        let lip = h.lipschitz();
        let a = [0.5, 0.5];
        assert_eq!(conj_distance(&hp, lip, a, a, 16), [0.0, 0.0]);
        let d = conj_distance(&hp, lip, a, [0.5 + 1e-7, 0.5 + 1e-7], 32);
        assert!(d[0] <= d[1] && d[1] <= lip.forward * 1e-7 * 1.000001);
        let id = conj_distance(&Program::identity(), LipschitzLedger::ONE, a, [0.6, 0.45], 8);
        assert!((id[0] - 0.1).abs() < 1e-12 && (id[1] - 0.1).abs() < 1e-12);
    }
}
