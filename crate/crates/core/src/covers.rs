//! Finite covers `ℝ/lℤ × ℝ/mℤ`, lifts, rescaled lifts and invariant-graph
//! estimation.

use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::maps::{lift_offset, FiberedMap, Program};
use crate::rotation::RotationVector;
use crate::surd::{Surd, Q};
use crate::torus::wrap;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverIndex {
    pub l: u32,
    pub m: u32,
    pub s: [u32; 2],
}

impl CoverIndex {
    pub fn new(l: u32, m: u32, s: [u32; 2]) -> Result<Self> {
        if l == 0 || m == 0 {
            return Err(Error::InvalidParams(format!("cover ({l},{m}) needs positive sizes")));
        }
        if s[0] >= l || s[1] >= m {
            return Err(Error::InvalidParams(format!("deck index {s:?} outside (Z/{l})x(Z/{m})")));
        }
        Ok(CoverIndex { l, m, s })
    }

    pub fn trivial() -> Self {
        CoverIndex { l: 1, m: 1, s: [0, 0] }
    }
}

/// `L^ψ_{(l,m;s)}` on `ℝ/lℤ × ℝ/mℤ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiftedMap {
    pub base: FiberedMap,
    pub cover: CoverIndex,
    /// Integer translation added to the assembled lift so `L(0)` lands in the box.
    pub normalization: [i64; 2],
    #[serde(skip)]
    program: Option<Program>,
}

impl LiftedMap {
    /// Evaluates on the cover; the result is reduced mod `(l, m)`.
    pub fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        let z = match &self.program {
            Some(prog) => prog.eval_lift(p),
            None => self.base.compile().eval_lift(p),
        };
        [
            (z[0] + self.normalization[0] as f64).rem_euclid(self.cover.l as f64),
            (z[1] + self.normalization[1] as f64).rem_euclid(self.cover.m as f64),
        ]
    }

    /// `L(0)`, unreduced; lies in `[s₁,s₁+1)×[s₂,s₂+1)`.
    pub fn at_origin(&self) -> [f64; 2] {
        let z = match &self.program {
            Some(prog) => prog.eval_lift([0.0, 0.0]),
            None => self.base.compile().eval_lift([0.0, 0.0]),
        };
        [z[0] + self.normalization[0] as f64, z[1] + self.normalization[1] as f64]
    }
}

fn require_homotopic(psi: &FiberedMap) -> Result<()> {
    psi.validate()?;
    if psi.twist() != 0 {
        return Err(Error::InvalidParams("lifts need maps homotopic to the identity".into()));
    }
    Ok(())
}

/// The lift fixed by the normalization box. Lifts are assembled from exact
/// lifts of the primitives, so they are continuous by construction.
pub fn lift_map(psi: &FiberedMap, cover: CoverIndex) -> Result<LiftedMap> {
    require_homotopic(psi)?;
    let program = psi.compile();
    let off = lift_offset(&program, cover.s);
    Ok(LiftedMap {
        base: psi.clone(),
        cover,
        normalization: [off[0] as i64, off[1] as i64],
        program: Some(program),
    })
}

/// `ℓ^ψ = h_{(l,m)}∘L^ψ∘h⁻¹_{(l,m)}` on the standard torus.
pub fn rescaled_lift(psi: &FiberedMap, cover: CoverIndex) -> Result<FiberedMap> {
    require_homotopic(psi)?;
    if cover.l == 1 && cover.m == 1 {
        return Ok(psi.clone());
    }
    if let FiberedMap::Rotation { rho } = psi {
        return Ok(FiberedMap::rotation(rescaled_rotation(rho, cover)?));
    }
    Ok(FiberedMap::RescaledLift { map: Box::new(psi.clone()), l: cover.l, m: cover.m, s: cover.s })
}

/// `((ρ₁+s₁)/l, (ρ₂+s₂)/m)` with `ρ` reduced to `[0,1)²`.
pub fn rescaled_rotation(rho: &RotationVector, cover: CoverIndex) -> Result<RotationVector> {
    let part = |x: &Surd, s: u32, d: u32| -> Surd {
        let fl = x.to_f64().floor() as i128;
        let reduced = x.clone() - Surd::from_rational(Q::from_integer(fl - s as i128));
        reduced.scale(Q::new(1, d as i128))
    };
    RotationVector::from_surds(part(&rho.rho1, cover.s[0], cover.l), part(&rho.rho2, cover.s[1], cover.m))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphBin {
    pub x_center: f64,
    pub points: usize,
    pub centers: Vec<f64>,
}

impl GraphBin {
    pub fn count(&self) -> usize {
        self.centers.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphEstimate {
    pub m: u32,
    pub n: u64,
    pub noise_fraction: f64,
    pub bins: Vec<GraphBin>,
}

impl GraphEstimate {
    /// Fraction of bins holding exactly `m` clusters.
    pub fn multiplicity_fraction(&self) -> f64 {
        let ok = self.bins.iter().filter(|b| b.count() == self.m as usize).count();
        ok as f64 / self.bins.len() as f64
    }

    /// Fraction of bins with exactly two clusters whose centres are `1/2 ± tol` apart.
    pub fn half_spacing_fraction(&self, tol: f64) -> f64 {
        let ok = self
            .bins
            .iter()
            .filter(|b| b.count() == 2 && (crate::torus::circle_dist_raw(b.centers[0], b.centers[1]) - 0.5).abs() <= tol)
            .count();
        ok as f64 / self.bins.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let width = self.bins.iter().map(|b| b.count()).max().unwrap_or(0);
        let mut out = String::from("x_bin,x_center,points,count");
        for j in 0..width {
            out.push_str(&format!(",center_{j}"));
        }
        out.push('\n');
        for (i, b) in self.bins.iter().enumerate() {
            out.push_str(&format!("{i},{:.6},{},{}", b.x_center, b.points, b.count()));
            for j in 0..width {
                match b.centers.get(j) {
                    Some(c) => out.push_str(&format!(",{c:.9}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Histogram resolution used to discard sparse y-values before gap splitting.
const NOISE_HIST: usize = 64;
pub const DEFAULT_NOISE_FRACTION: f64 = 0.05;

/// Clusters circle values: sparse values are dropped (histogram cells holding
/// less than `noise` of the points), the rest are split at gaps `> gap`.
/// Clusters wider than `max_extent` are rejected.
pub fn circle_clusters(ys: &[f64], gap: f64, noise: f64, max_extent: f64) -> Vec<f64> {
    if ys.is_empty() {
        return Vec::new();
    }
    let mut hist = [0usize; NOISE_HIST];
    let cell = |y: f64| ((y * NOISE_HIST as f64) as usize).min(NOISE_HIST - 1);
    for &y in ys {
        hist[cell(y)] += 1;
    }
    let floor = noise * ys.len() as f64;
    let mut kept: Vec<f64> = ys.iter().copied().filter(|&y| hist[cell(y)] as f64 >= floor).collect();
    if kept.is_empty() {
        return Vec::new();
    }
    kept.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = kept.len();
    // start right after the widest gap so no cluster straddles the cut
    let mut widest = (0usize, 0.0f64);
    for i in 0..n {
        let g = if i + 1 < n { kept[i + 1] - kept[i] } else { kept[0] + 1.0 - kept[n - 1] };
        if g > widest.1 {
            widest = (i, g);
        }
    }
    if widest.1 <= gap {
        return Vec::new(); // no gap anywhere: the values wind around the circle
    }
    let start = (widest.0 + 1) % n;
    let mut centers = Vec::new();
    let mut run: Vec<f64> = Vec::new();
    let mut flush = |run: &mut Vec<f64>| {
        if run.is_empty() {
            return;
        }
        let extent = run[run.len() - 1] - run[0];
        if extent <= max_extent {
            let mean = run.iter().sum::<f64>() / run.len() as f64;
            centers.push(wrap(mean));
        }
        run.clear();
    };
    for k in 0..n {
        let i = (start + k) % n;
        // unwrap past the cut so runs are monotone
        let y = if i < start { kept[i] + 1.0 } else { kept[i] };
        if let Some(&last) = run.last() {
            if y - last > gap {
                flush(&mut run);
            }
        }
        run.push(y);
    }
    flush(&mut run);
    centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
    centers
}

/// Bins an `N`-point orbit by `x` and clusters the fibre values in each bin.
pub fn invariant_graph_estimate(psi: &FiberedMap, m: u32, n: u64, bins: usize, seed: [f64; 2]) -> Result<GraphEstimate> {
    let dynamics = Dynamics::from_map(psi);
    graph_estimate_from(&dynamics, m, n, bins, seed, DEFAULT_NOISE_FRACTION)
}

pub fn graph_estimate_from(
    dynamics: &Dynamics,
    m: u32,
    n: u64,
    bins: usize,
    seed: [f64; 2],
    noise: f64,
) -> Result<GraphEstimate> {
    if m == 0 || bins == 0 {
        return Err(Error::InvalidParams("graph estimate needs m ≥ 1 and bins ≥ 1".into()));
    }
    let mut cells: Vec<Vec<f64>> = vec![Vec::new(); bins];
    for z in dynamics.stepper(seed).take(n as usize) {
        let b = ((z[0] * bins as f64) as usize).min(bins - 1);
        cells[b].push(z[1]);
    }
    let gap = 1.0 / (4.0 * m as f64);
    let max_extent = 1.0 / (2.0 * m as f64);
    use rayon::prelude::*;
    let out: Vec<GraphBin> = cells
        .par_iter()
        .enumerate()
        .map(|(i, ys)| GraphBin {
            x_center: (i as f64 + 0.5) / bins as f64,
            points: ys.len(),
            centers: circle_clusters(ys, gap, noise, max_extent),
        })
        .collect();
    let est = GraphEstimate { m, n, noise_fraction: noise, bins: out };
    let bad = est.bins.iter().filter(|b| b.count() != m as usize).count();
    if bad * 5 > bins {
        return Err(Error::ClusterAmbiguity { bad, total: bins, expected: m as usize });
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::make_rational_vector;
    use crate::torus::torus_dist_raw;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rescaled_rotation_formula() {
        let r = make_rational_vector(1, 1, 2).unwrap();
        let f = rescaled_lift(&FiberedMap::rotation(r), CoverIndex::new(1, 2, [0, 0]).unwrap()).unwrap();
        let FiberedMap::Rotation { rho } = f else { panic!() };
        assert_eq!(rho.to_f64(), [0.5, 0.25]);
        let r = make_rational_vector(2, 1, 3).unwrap();
        let f = rescaled_lift(&FiberedMap::rotation(r), CoverIndex::new(2, 3, [1, 2]).unwrap()).unwrap();
        let FiberedMap::Rotation { rho } = f else { panic!() };
        let v = rho.to_f64();
        assert!((v[0] - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-15);
        assert!((v[1] - (1.0 / 3.0 + 2.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identity_lifts_to_identity_and_trivial_cover_is_noop() {
        let c = CoverIndex::new(2, 3, [0, 0]).unwrap();
        let l = lift_map(&FiberedMap::Identity, c).unwrap();
        assert_eq!(l.eval([1.25, 2.5]), [1.25, 2.5]);
        let f = FiberedMap::Primitive(crate::maps::Primitive::SineFiber { amplitude: 0.1, x_freq: 1 });
        assert_eq!(rescaled_lift(&f, CoverIndex::trivial()).unwrap(), f);
    }

    #[test]
    fn normalization_box_and_deck_translations() {
        let f = FiberedMap::compose_right_to_left(&[
            FiberedMap::rotation(make_rational_vector(2, 3, 5).unwrap()),
            FiberedMap::Primitive(crate::maps::Primitive::SineFiber { amplitude: 0.2, x_freq: 1 }),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = lift_map(&f, CoverIndex::new(2, 2, [0, 0]).unwrap()).unwrap();
        for s in [[0, 1], [1, 0], [1, 1]] {
            let c = CoverIndex::new(2, 2, s).unwrap();
            let l = lift_map(&f, c).unwrap();
            let o = l.at_origin();
            assert!(o[0] >= s[0] as f64 && o[0] < s[0] as f64 + 1.0);
            assert!(o[1] >= s[1] as f64 && o[1] < s[1] as f64 + 1.0);
            let shift = [l.normalization[0] - base.normalization[0], l.normalization[1] - base.normalization[1]];
            for _ in 0..100 {
                let p = [rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0];
                let a = l.eval(p);
                let b = base.eval(p);
                assert!(((a[0] - b[0] - shift[0] as f64).rem_euclid(2.0)).min(2.0 - (a[0] - b[0] - shift[0] as f64).rem_euclid(2.0)) < 1e-12);
                assert!(((a[1] - b[1] - shift[1] as f64).rem_euclid(2.0)).min(2.0 - (a[1] - b[1] - shift[1] as f64).rem_euclid(2.0)) < 1e-12);
            }
        }
    }

    #[test]
    fn iterate_of_lift_vs_lift_of_iterate() {
        let f = FiberedMap::compose_right_to_left(&[
            FiberedMap::rotation(make_rational_vector(1, 2, 5).unwrap()),
            FiberedMap::Primitive(crate::maps::Primitive::SineFiber { amplitude: 0.3, x_freq: 2 }),
        ]);
        let c = CoverIndex::new(1, 2, [0, 0]).unwrap();
        let l = rescaled_lift(&f, c).unwrap();
        let lj = l.iterate(3).compile();
        let l_of_j = rescaled_lift(&f.iterate(3), c).unwrap().compile();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut diffs = Vec::new();
        for _ in 0..50 {
            let p = [rng.gen::<f64>(), rng.gen::<f64>()];
            let a = lj.eval(p);
            let b = l_of_j.eval(p);
            diffs.push([wrap(a[0] - b[0]), wrap(a[1] - b[1])]);
        }
        for d in &diffs {
            // differences are constant multiples of (1/l, 1/m)
            assert!(torus_dist_raw(*d, diffs[0]) < 1e-10);
            assert!((d[1] * 2.0 - (d[1] * 2.0).round()).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_equivariance() {
        let f = FiberedMap::compose_right_to_left(&[
            FiberedMap::rotation(make_rational_vector(1, 2, 7).unwrap()),
            FiberedMap::Primitive(crate::maps::Primitive::SineFiber { amplitude: 0.3, x_freq: 1 }),
        ]);
        let l = rescaled_lift(&f, CoverIndex::new(2, 3, [1, 0]).unwrap()).unwrap().compile();
        let r = l.base_shift();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = [rng.gen::<f64>(), rng.gen::<f64>()];
            assert!(crate::torus::circle_dist_raw(l.eval(p)[0], p[0] + r) < 1e-12);
        }
    }

    #[test]
    fn rejects_twisted_maps() {
        let f = FiberedMap::Primitive(crate::maps::Primitive::Twist { k: 1 });
        assert!(lift_map(&f, CoverIndex::new(1, 2, [0, 0]).unwrap()).is_err());
        assert!(CoverIndex::new(1, 2, [0, 2]).is_err());
    }

    #[test]
    fn clusters_on_the_circle() {
        let ys: Vec<f64> = (0..1000).map(|i| wrap(0.99 + 0.01 * (i as f64 / 1000.0))).collect();
        let c = circle_clusters(&ys, 0.25, 0.05, 0.5);
        assert_eq!(c.len(), 1);
        assert!(crate::torus::circle_dist_raw(c[0], 0.995) < 1e-3);
        let mut two = ys.clone();
        two.extend(ys.iter().map(|y| wrap(y + 0.5)));
        assert_eq!(circle_clusters(&two, 0.125, 0.05, 0.25).len(), 2);
        // uniform fill: no cluster
        let uni: Vec<f64> = (0..5000).map(|i| (i as f64 * 0.618_033_988_7).fract()).collect();
        assert!(circle_clusters(&uni, 0.25, 0.05, 0.5).is_empty());
        // a sparse bridge does not merge or split the main cluster
        let mut bridged = ys.clone();
        bridged.extend((0..20).map(|i| i as f64 / 20.0));
        assert_eq!(circle_clusters(&bridged, 0.25, 0.05, 0.5).len(), 1);
    }

    #[test]
    fn irrational_rotation_is_ambiguous() {
        let rho = make_rational_vector(1, 1, 2).unwrap().shifted(Q::new(1, 7), Q::new(1, 5)).unwrap();
        let r = invariant_graph_estimate(&FiberedMap::rotation(rho), 1, 100_000, 50, [0.1, 0.2]);
        assert!(matches!(r, Err(Error::ClusterAmbiguity { .. })));
    }
}
