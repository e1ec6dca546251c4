//! Finite, machine-checkable witnesses: minimality, unique ergodicity and
//! mean equicontinuity, plus the record type shared by every other check.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CertificateKind {
    MinimalityEpsDense,
    UEVariation,
    MeanEquiFiniteTime,
    IntegralEstimate,
    CurveGap,
    Capt,
    EtaBudget,
    Contraction,
    Equivariance,
    Closeness,
    LiftedCloseness,
    SingularBall,
    CollarBudget,
    PartitionDiameter,
}

/// How `witness` must compare with `threshold` for the certificate to pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
}

impl Relation {
    pub fn holds(self, witness: f64, threshold: f64) -> bool {
        match self {
            Relation::Lt => witness < threshold,
            Relation::Le => witness <= threshold,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub stage: u64,
    pub params: BTreeMap<String, serde_json::Value>,
    pub witness: f64,
    pub threshold: f64,
    pub relation: Relation,
    pub grid_resolution: u64,
    pub pass: bool,
}

impl Certificate {
    pub fn new(
        kind: CertificateKind,
        stage: u64,
        witness: f64,
        threshold: f64,
        relation: Relation,
        grid_resolution: u64,
    ) -> Self {
        // non-finite witnesses never pass and are stored as +∞ surrogates
        let w = if witness.is_finite() { witness } else { f64::MAX };
        Certificate {
            kind,
            stage,
            params: BTreeMap::new(),
            witness: w,
            threshold,
            relation,
            grid_resolution,
            pass: witness.is_finite() && relation.holds(witness, threshold),
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.params.insert(key.to_string(), v);
        self
    }

    /// Recomputes `pass` from the witness and threshold.
    pub fn consistent(&self) -> bool {
        self.pass == self.relation.holds(self.witness, self.threshold)
    }

    pub fn verdict(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:?} stage {}: witness {:.6e} {} {:.6e} (grid {})",
            if self.pass { "PASS" } else { "FAIL" },
            self.kind,
            self.stage,
            self.witness,
            self.relation.symbol(),
            self.threshold,
            self.grid_resolution
        )
    }
}

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dynamics::Dynamics;
use crate::torus::{circle_dist_raw, torus_dist_raw};

pub fn seed_grid(n: usize) -> Vec<[f64; 2]> {
    (0..n * n)
        .map(|k| [(k / n) as f64 / n as f64, (k % n) as f64 / n as f64])
        .collect()
}

/// Centred net points per axis for the ε-density check; covering radius
/// `1/(2N)`. Fixed (not ε-dependent) so that passing is monotone in ε.
pub const MINIMALITY_NET: usize = 32;

/// First `M` for which `{z_0..z_M}` comes within `ε − 1/(2N)` of every net
/// point, hence within `ε` of every point of 𝕋².
fn first_dense_time(orbit: impl Iterator<Item = [f64; 2]>, eps: f64, m_max: usize) -> Option<usize> {
    let n = MINIMALITY_NET;
    if eps <= 0.5 / n as f64 {
        return None;
    }
    let reach = eps - 0.5 / n as f64;
    let span = (reach * n as f64).ceil() as i64 + 1;
    let mut covered = vec![false; n * n];
    let mut remaining = n * n;
    let near = |c: f64, n: usize| -> Vec<usize> {
        let centre = (c * n as f64 - 0.5).round() as i64;
        let mut v: Vec<usize> = (centre - span..=centre + span)
            .map(|a| a.rem_euclid(n as i64) as usize)
            .filter(|&a| circle_dist_raw((a as f64 + 0.5) / n as f64, c) < reach)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    for (m, z) in orbit.take(m_max + 1).enumerate() {
        let xs = near(z[0], n);
        let ys = near(z[1], n);
        for &a in &xs {
            for &b in &ys {
                let c = &mut covered[a * n + b];
                if !*c {
                    *c = true;
                    remaining -= 1;
                }
            }
        }
        if remaining == 0 {
            return Some(m);
        }
    }
    None
}

/// Smallest `M ≤ M_max` such that every grid-seeded orbit segment of length
/// `M+1` is ε-dense.
pub fn minimality_certificate(dynamics: &Dynamics, eps: f64, m_max: usize, grid_n: usize, stage: u64) -> Certificate {
    let times: Vec<Option<usize>> = seed_grid(grid_n)
        .par_iter()
        .map(|&s| first_dense_time(dynamics.stepper(s), eps, m_max))
        .collect();
    let m = times.iter().try_fold(0usize, |acc, t| t.map(|t| acc.max(t)));
    let witness = m.map_or(m_max as f64 + 1.0, |m| m as f64);
    Certificate::new(CertificateKind::MinimalityEpsDense, stage, witness, m_max as f64, Relation::Le, (grid_n * grid_n) as u64)
        .param("eps", eps)
        .param("m_max", m_max)
        .param("net", MINIMALITY_NET)
        .param("failed_seeds", times.iter().filter(|t| t.is_none()).count())
}

/// Observables used for the unique-ergodicity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "snake_case")]
pub enum TestFunction {
    Constant { c: f64 },
    /// `cos 2π(kx+ly)` or `sin 2π(kx+ly)`.
    Trig { k: i32, l: i32, cos: bool },
}

impl TestFunction {
    pub fn eval(&self, z: [f64; 2]) -> f64 {
        match *self {
            TestFunction::Constant { c } => c,
            TestFunction::Trig { k, l, cos } => {
                let a = 2.0 * PI * (k as f64 * z[0] + l as f64 * z[1]);
                if cos {
                    a.cos()
                } else {
                    a.sin()
                }
            }
        }
    }
}

/// `{cos, sin}(2π(kx+ly))` for `|k|,|l| ≤ r`, one representative per `±(k,l)`.
pub fn trig_family(r: i32) -> Vec<TestFunction> {
    let mut v = Vec::new();
    for k in 0..=r {
        for l in -r..=r {
            if k == 0 && l <= 0 {
                continue;
            }
            v.push(TestFunction::Trig { k, l, cos: true });
            v.push(TestFunction::Trig { k, l, cos: false });
        }
    }
    v
}

/// Variation over grid seeds of `A_K s = (1/K)Σ_{i<K} s∘ψ^i`, maximised over
/// the test functions; passes iff `< β`.
pub fn ue_variation_certificate(
    dynamics: &Dynamics,
    funcs: &[TestFunction],
    beta: f64,
    k: usize,
    grid_n: usize,
    stage: u64,
) -> Certificate {
    let avgs: Vec<Vec<f64>> = seed_grid(grid_n)
        .par_iter()
        .map(|&s| {
            let mut acc = vec![0.0; funcs.len()];
            for z in dynamics.stepper(s).take(k) {
                trig_accumulate(funcs, z, &mut acc);
            }
            acc.iter().map(|a| a / k as f64).collect()
        })
        .collect();
    let (witness, worst) = (0..funcs.len())
        .map(|i| {
            let (lo, hi) = avgs
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(a[i]), hi.max(a[i])));
            (hi - lo, i)
        })
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
    let mut c = Certificate::new(CertificateKind::UEVariation, stage, witness, beta, Relation::Lt, (grid_n * grid_n) as u64)
        .param("k", k)
        .param("functions", funcs.len());
    if let Some(f) = funcs.get(worst) {
        c = c.param("worst_function", f);
    }
    c
}

fn trig_accumulate(funcs: &[TestFunction], z: [f64; 2], acc: &mut [f64]) {
    const R: usize = 8;
    let ex = Complex64::from_polar(1.0, 2.0 * PI * z[0]);
    let ey = Complex64::from_polar(1.0, 2.0 * PI * z[1]);
    let mut px = [Complex64::new(1.0, 0.0); R + 1];
    let mut py = [Complex64::new(1.0, 0.0); R + 1];
    for i in 1..=R {
        px[i] = px[i - 1] * ex;
        py[i] = py[i - 1] * ey;
    }
    let pow = |p: &[Complex64; R + 1], k: i32| -> Option<Complex64> {
        let a = k.unsigned_abs() as usize;
        (a <= R).then(|| if k < 0 { p[a].conj() } else { p[a] })
    };
    for (f, a) in funcs.iter().zip(acc.iter_mut()) {
        *a += match *f {
            TestFunction::Trig { k, l, cos } => match (pow(&px, k), pow(&py, l)) {
                (Some(u), Some(v)) => {
                    let e = u * v;
                    if cos {
                        e.re
                    } else {
                        e.im
                    }
                }
                _ => f.eval(z),
            },
            _ => f.eval(z),
        };
    }
}

/// Searches `K ∈ {1, 2, 4, …} ≤ K_max` for the first `K` with
/// `max (1/K)Σ_{i<K} d(φ^i z, φ^i z′) < ε` over sampled same-fiber pairs.
pub fn mean_equi_certificate(
    dynamics: &Dynamics,
    eps: f64,
    k_max: usize,
    x_grid: usize,
    fiber_grid: usize,
    stage: u64,
) -> Certificate {
    let levels: Vec<usize> = (0..).map(|j| 1usize << j).take_while(|&k| k <= k_max).collect();
    let per_x: Vec<Vec<f64>> = (0..x_grid)
        .into_par_iter()
        .map(|i| {
            let x = i as f64 / x_grid as f64;
            let mut steppers: Vec<_> = (0..fiber_grid)
                .map(|j| dynamics.stepper([x, j as f64 / fiber_grid as f64]))
                .collect();
            let npairs = fiber_grid * (fiber_grid - 1) / 2;
            let mut sums = vec![0.0; npairs];
            let mut out = Vec::with_capacity(levels.len());
            let mut pts = vec![[0.0; 2]; fiber_grid];
            let mut next_level = 0;
            for step in 1..=*levels.last().unwrap_or(&1) {
                for (p, s) in pts.iter_mut().zip(steppers.iter_mut()) {
                    *p = s.next().unwrap();
                }
                let mut idx = 0;
                for a in 0..fiber_grid {
                    for b in a + 1..fiber_grid {
                        sums[idx] += torus_dist_raw(pts[a], pts[b]);
                        idx += 1;
                    }
                }
                if step == levels[next_level] {
                    out.push(sums.iter().fold(0.0f64, |m, s| m.max(s / step as f64)));
                    next_level += 1;
                }
            }
            out
        })
        .collect();
    let maxima: Vec<f64> = (0..levels.len())
        .map(|l| per_x.iter().map(|v| v[l]).fold(0.0, f64::max))
        .collect();
    let hit = maxima.iter().position(|&m| m < eps);
    let (k, witness) = match hit {
        Some(i) => (levels[i], maxima[i]),
        None => (k_max, maxima.last().copied().unwrap_or(f64::INFINITY)),
    };
    Certificate::new(CertificateKind::MeanEquiFiniteTime, stage, witness, eps, Relation::Lt, (x_grid * fiber_grid) as u64)
        .param("k", k)
        .param("k_max", k_max)
        .param("x_grid", x_grid)
        .param("fiber_grid", fiber_grid)
        .param("averages_by_k", maxima)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conjugacy::{build_strip_conjugacy, min_lambda_for_contraction, StripParams};
    use crate::maps::FiberedMap;
    use crate::rotation::{make_rational_vector, perturb_to_class, TargetClass};
    use proptest::prelude::*;

    fn totally_irrational() -> Dynamics {
        let rho = make_rational_vector(0, 0, 1).unwrap();
        let rho = perturb_to_class(&rho, TargetClass::TotallyIrrational, 0.5).unwrap();
        Dynamics::from_map(&FiberedMap::rotation(rho))
    }

    fn stage_one_map(j: u32) -> FiberedMap {
        let delta = 0.9 / 48.0;
        let lambda = min_lambda_for_contraction(delta).unwrap() * 1.01;
        let h = build_strip_conjugacy(StripParams { q: 2, p: 1, p_prime: 1, n: 1, delta, lambda }).unwrap();
        let rho = make_rational_vector(1, 1, 2).unwrap().collinear(1, j).unwrap();
        FiberedMap::conjugate(h, rho)
    }

    /// Covering radius of a finite set, by brute force on a fine grid.
    fn covering_radius(pts: &[[f64; 2]]) -> f64 {
        let n = 200;
        (0..n * n)
            .map(|k| {
                let c = [(k / n) as f64 / n as f64, (k % n) as f64 / n as f64];
                pts.iter().map(|&p| torus_dist_raw(p, c)).fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn minimality_examples() {
        let c = minimality_certificate(&totally_irrational(), 0.3, 10_000, 4, 1);
        assert!(c.pass, "{c}");
        let id = Dynamics::from_map(&FiberedMap::Identity);
        assert!(!minimality_certificate(&id, 0.3, 1000, 4, 1).pass);
        let half = Dynamics::from_map(&FiberedMap::rotation(make_rational_vector(1, 1, 2).unwrap()));
        let c = minimality_certificate(&half, 0.6, 10, 4, 1);
        let seeds = seed_grid(4);
        let oracle = (0..=10)
            .find(|&m| seeds.iter().all(|&s| covering_radius(&half.orbit(s, m + 1)) < 0.6))
            .unwrap();
        assert!(c.pass);
        assert_eq!(c.witness, oracle as f64);
    }

    #[test]
    fn ue_examples() {
        let d = totally_irrational();
        let c = ue_variation_certificate(&d, &[TestFunction::Constant { c: 3.0 }], 0.1, 100, 4, 1);
        assert_eq!(c.witness, 0.0);
        let cos = [TestFunction::Trig { k: 1, l: 0, cos: true }];
        let c = ue_variation_certificate(&d, &cos, 0.05, 10_000, 4, 1);
        let r1 = d.base_rotation();
        let bound = 2.0 * 2.0 / (10_000.0 * (Complex64::from_polar(1.0, 2.0 * PI * r1) - 1.0).norm());
        assert!(c.pass && c.witness <= bound + 1e-12, "{c} vs {bound}");
        let id = Dynamics::from_map(&FiberedMap::Identity);
        let c = ue_variation_certificate(&id, &cos, 1.9, 50, 4, 1);
        assert!(!c.pass);
        assert!((c.witness - 2.0).abs() < 1e-12);
        assert_eq!(trig_family(3).len(), 48);
    }

    #[test]
    fn trig_fast_path_matches_direct_evaluation() {
        let f = trig_family(3);
        let z = [0.123, 0.789];
        let mut acc = vec![0.0; f.len()];
        trig_accumulate(&f, z, &mut acc);
        for (t, a) in f.iter().zip(&acc) {
            assert!((t.eval(z) - a).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_equi_examples() {
        let rot = Dynamics::from_map(&FiberedMap::rotation(make_rational_vector(1, 2, 5).unwrap()));
        let c = mean_equi_certificate(&rot, 0.25, 1024, 4, 8, 1);
        assert!(!c.pass);
        assert!((c.witness - 0.5).abs() < 1e-12);
        let c = mean_equi_certificate(&rot, 0.25, 1024, 4, 1, 1);
        assert!(c.pass && c.witness == 0.0);
    }

    #[test]
    fn mean_equi_averages_settle() {
        let d = Dynamics::from_map(&stage_one_map(12));
        let c = mean_equi_certificate(&d, 0.5, 1 << 15, 8, 8, 2);
        let v: Vec<f64> = serde_json::from_value(c.params["averages_by_k"].clone()).unwrap();
        for w in v.windows(2).skip(6) {
            assert!(w[1] <= w[0] * 1.1 + 1e-3, "{v:?}");
        }
        assert!(c.pass, "{c}");
    }

    #[test]
    fn certificate_json_round_trip() {
        let c = minimality_certificate(&totally_irrational(), 0.3, 10_000, 4, 1);
        let s = serde_json::to_string(&c).unwrap();
        let d: Certificate = serde_json::from_str(&s).unwrap();
        assert_eq!(c, d);
        assert!(d.consistent());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn minimality_is_monotone(eps in 0.2f64..0.5, de in 0.0f64..0.2, dm in 0usize..500) {
            let d = totally_irrational();
            let c = minimality_certificate(&d, eps, 5000, 2, 1);
            if c.pass {
                let m = c.witness as usize;
                let c2 = minimality_certificate(&d, eps + de, m + dm, 2, 1);
                prop_assert!(c2.pass);
            }
        }
    }
}
