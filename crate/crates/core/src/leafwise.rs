//! Disintegrated measures on M × K: one fiber measure per base-grid leaf and
//! the marginal density, with the weak norm ‖·‖_∞, the strong norm ‖·‖_{S^∞}
//! and the Hölder constant of the leaf path γ ↦ μ|_γ.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::base_map::{cell_center, circle_dist, DensityOnGrid};
use crate::error::{param, Error, Result};
use crate::measure_kit::{AtomicMeasure, WkMetric};

#[derive(Clone, Debug, PartialEq)]
pub struct LeafwiseMeasure {
    fibers: Vec<AtomicMeasure>,
    marginal: DensityOnGrid,
    /// Base points where the leaf path is allowed to jump. Leaf pairs are
    /// compared along an arc that avoids them.
    cuts: Vec<f64>,
}

const MASS_TOL: f64 = 1e-9;

impl LeafwiseMeasure {
    pub fn new(fibers: Vec<AtomicMeasure>, marginal: DensityOnGrid) -> Result<Self> {
        if fibers.len() != marginal.n() {
            return Err(Error::GridMismatch(format!(
                "{} fibers for {} leaves",
                fibers.len(),
                marginal.n()
            )));
        }
        for (j, (fib, phi)) in fibers.iter().zip(marginal.values()).enumerate() {
            if fib.zeta() != marginal.zeta() {
                return Err(Error::GridMismatch(format!("leaf {j}: zeta differs from marginal")));
            }
            let m = fib.total_mass();
            if (m - phi).abs() > MASS_TOL * (1.0 + phi.abs()) {
                return Err(param(
                    "fiber mass",
                    format!("leaf {j} carries {m}, marginal says {phi}"),
                ));
            }
        }
        Ok(LeafwiseMeasure {
            fibers,
            marginal,
            cuts: Vec::new(),
        })
    }

    pub(crate) fn from_parts(fibers: Vec<AtomicMeasure>, marginal: DensityOnGrid, cuts: Vec<f64>) -> Self {
        LeafwiseMeasure {
            fibers,
            marginal,
            cuts,
        }
    }

    pub fn zero(n_base: usize, zeta: f64) -> Result<Self> {
        let marginal = DensityOnGrid::constant(n_base, zeta, 0.0)?;
        Ok(LeafwiseMeasure {
            fibers: vec![AtomicMeasure::zero(zeta); n_base],
            marginal,
            cuts: Vec::new(),
        })
    }

    pub fn with_cuts(mut self, mut cuts: Vec<f64>) -> Self {
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        self.cuts = cuts;
        self
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn fibers(&self) -> &[AtomicMeasure] {
        &self.fibers
    }

    pub fn fiber(&self, j: usize) -> &AtomicMeasure {
        &self.fibers[j]
    }

    pub fn marginal(&self) -> &DensityOnGrid {
        &self.marginal
    }

    pub fn zeta(&self) -> f64 {
        self.marginal.zeta()
    }

    pub fn n_base(&self) -> usize {
        self.fibers.len()
    }

    pub fn leaf(&self, j: usize) -> f64 {
        cell_center(j, self.fibers.len())
    }

    /// μ(M × K) = Σ φⱼ h.
    pub fn total_mass(&self) -> f64 {
        self.marginal.integral()
    }

    /// Largest atom count over leaves.
    pub fn max_atoms(&self) -> usize {
        self.fibers.iter().map(|f| f.len()).max().unwrap_or(0)
    }

    /// `leaf,position,weight,phi` rows, one per atom.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("leaf,position,weight,phi\n");
        for (j, fib) in self.fibers.iter().enumerate() {
            let x = crate::sig12(self.leaf(j));
            let phi = crate::sig12(self.marginal.values()[j]);
            for &(p, w) in fib.atoms() {
                let _ = writeln!(out, "{x},{},{},{phi}", crate::sig12(p), crate::sig12(w));
            }
        }
        out
    }

    /// Distance between leaves i and j along an arc free of cuts, or `None`
    /// when both arcs cross a cut.
    pub fn leaf_distance(&self, i: usize, j: usize) -> Option<f64> {
        let a = self.leaf(i);
        let b = self.leaf(j);
        if self.cuts.is_empty() {
            return Some(circle_dist(a, b));
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let inner_clear = !self.cuts.iter().any(|&c| c > lo && c < hi);
        let outer_clear = !self.cuts.iter().any(|&c| c < lo || c > hi);
        let inner = hi - lo;
        let outer = 1.0 - inner;
        match (inner_clear, outer_clear) {
            (true, true) => Some(inner.min(outer)),
            (true, false) => Some(inner),
            (false, true) => Some(outer),
            (false, false) => None,
        }
    }
}

fn same_grid(a: &LeafwiseMeasure, b: &LeafwiseMeasure) -> Result<()> {
    if a.n_base() != b.n_base() {
        return Err(Error::GridMismatch(format!(
            "{} leaves vs {} leaves",
            a.n_base(),
            b.n_base()
        )));
    }
    if a.zeta() != b.zeta() {
        return Err(Error::GridMismatch("different zeta".into()));
    }
    Ok(())
}

/// Every leaf carries ν scaled by φ(leaf).
pub fn product_seed(phi: &DensityOnGrid, nu: &AtomicMeasure) -> Result<LeafwiseMeasure> {
    if nu.atoms().iter().any(|a| a.1 < 0.0) || (nu.total_mass() - 1.0).abs() > 1e-9 {
        return Err(param("seed measure", "must be a probability measure"));
    }
    let nu = AtomicMeasure::new(nu.atoms().to_vec(), phi.zeta())?;
    let fibers = phi.values().iter().map(|&v| nu.scaled(v)).collect();
    Ok(LeafwiseMeasure::from_parts(fibers, phi.clone(), Vec::new()))
}

/// maxⱼ W(A|ⱼ, B|ⱼ).
pub fn linf_distance(a: &LeafwiseMeasure, b: &LeafwiseMeasure) -> Result<f64> {
    linf_distance_with(&WkMetric::new(a.zeta()), a, b)
}

pub fn linf_distance_with(metric: &WkMetric, a: &LeafwiseMeasure, b: &LeafwiseMeasure) -> Result<f64> {
    same_grid(a, b)?;
    let per_leaf = leaf_distances_with(metric, a, b)?;
    Ok(per_leaf.into_iter().fold(0.0, f64::max))
}

/// W(A|ⱼ, B|ⱼ) for every leaf.
pub fn leaf_distances_with(metric: &WkMetric, a: &LeafwiseMeasure, b: &LeafwiseMeasure) -> Result<Vec<f64>> {
    same_grid(a, b)?;
    a.fibers
        .par_iter()
        .zip(b.fibers.par_iter())
        .map(|(fa, fb)| metric.distance(fa, fb))
        .collect()
}

/// ‖A‖_∞ = maxⱼ ‖A|ⱼ‖_W.
pub fn linf_norm(a: &LeafwiseMeasure) -> Result<f64> {
    linf_norm_with(&WkMetric::new(a.zeta()), a)
}

pub fn linf_norm_with(metric: &WkMetric, a: &LeafwiseMeasure) -> Result<f64> {
    let norms: Vec<f64> = a
        .fibers
        .par_iter()
        .map(|f| metric.norm(f))
        .collect::<Result<_>>()?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}

/// ‖A‖_{S^∞} = (H_ζ(φ) + |φ|_∞) + ‖A‖_∞.
pub fn sinf_norm(a: &LeafwiseMeasure) -> Result<f64> {
    sinf_norm_with(&WkMetric::new(a.zeta()), a)
}

pub fn sinf_norm_with(metric: &WkMetric, a: &LeafwiseMeasure) -> Result<f64> {
    Ok(a.marginal.holder_norm() + linf_norm_with(metric, a)?)
}

/// Sampled Hölder constant of the leaf path.
#[derive(Clone, Debug, PartialEq)]
pub struct HolderEstimate {
    pub value: f64,
    pub pair_budget: usize,
    pub min_separation: f64,
    /// Pairs actually compared (adjacent plus random, minus pairs split by
    /// cuts on both arcs).
    pub pairs: usize,
}

/// max ‖A|ᵢ − A|ⱼ‖_W / d(i, j)^ζ over all adjacent leaf pairs plus
/// `pair_budget` seeded random pairs.
pub fn holder_constant(a: &LeafwiseMeasure, pair_budget: usize, seed: u64) -> Result<HolderEstimate> {
    holder_constant_with(&WkMetric::new(a.zeta()), a, pair_budget, seed)
}

pub fn holder_constant_with(
    metric: &WkMetric,
    a: &LeafwiseMeasure,
    pair_budget: usize,
    seed: u64,
) -> Result<HolderEstimate> {
    let n = a.n_base();
    if n < 2 {
        return Err(param("n_base", "Hölder constant needs at least 2 leaves"));
    }
    let mut pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    if n == 2 {
        pairs.truncate(1);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..pair_budget {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        pairs.push((i, j));
    }
    holder_over_pairs(metric, a, &pairs, pair_budget)
}

/// Exhaustive O(n²) scan over all leaf pairs.
pub fn holder_constant_full(metric: &WkMetric, a: &LeafwiseMeasure) -> Result<HolderEstimate> {
    let n = a.n_base();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let budget = pairs.len();
    holder_over_pairs(metric, a, &pairs, budget)
}

fn holder_over_pairs(
    metric: &WkMetric,
    a: &LeafwiseMeasure,
    pairs: &[(usize, usize)],
    budget: usize,
) -> Result<HolderEstimate> {
    let zeta = a.zeta();
    let ratios: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| match a.leaf_distance(i, j) {
            Some(d) => {
                let w = metric.distance(&a.fibers[i], &a.fibers[j])?;
                Ok(Some(w / d.powf(zeta)))
            }
            None => Ok(None),
        })
        .collect::<Result<_>>()?;
    let used = ratios.iter().filter(|r| r.is_some()).count();
    let value = ratios.into_iter().flatten().fold(0.0, f64::max);
    Ok(HolderEstimate {
        value,
        pair_budget: budget,
        min_separation: 1.0 / a.n_base() as f64,
        pairs: used,
    })
}

/// a·A + b·B leafwise: atom lists concatenated with scaled weights.
pub fn signed_combine(a: &LeafwiseMeasure, b: &LeafwiseMeasure, ca: f64, cb: f64) -> Result<LeafwiseMeasure> {
    same_grid(a, b)?;
    let fibers = a
        .fibers
        .iter()
        .zip(&b.fibers)
        .map(|(fa, fb)| fa.scaled(ca).plus(&fb.scaled(cb)))
        .collect();
    let vals = a
        .marginal
        .values()
        .iter()
        .zip(b.marginal.values())
        .map(|(x, y)| ca * x + cb * y)
        .collect();
    let marginal = DensityOnGrid::new(vals, a.zeta())?;
    let mut cuts = a.cuts.clone();
    cuts.extend_from_slice(&b.cuts);
    Ok(LeafwiseMeasure::from_parts(fibers, marginal, Vec::new()).with_cuts(cuts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure_kit::FiberGrid;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn ones(n: usize) -> DensityOnGrid {
        DensityOnGrid::constant(n, 1.0, 1.0).unwrap()
    }

    #[test]
    fn product_seed_examples() {
        let m = product_seed(&ones(16), &AtomicMeasure::dirac(0.5, 1.0).unwrap()).unwrap();
        assert!(m.fibers().iter().all(|f| f.atoms() == [(0.5, 1.0)]));
        assert_abs_diff_eq!(m.total_mass(), 1.0, epsilon = 1e-12);

        let grid = FiberGrid::new(64).unwrap();
        let u = product_seed(&ones(32), &AtomicMeasure::uniform(&grid, 1.0)).unwrap();
        assert_eq!(holder_constant(&u, 50, 1).unwrap().value, 0.0);

        let phi = DensityOnGrid::from_fn(32, 1.0, |x| 1.0 + 0.1 * (2.0 * PI * x).cos()).unwrap();
        let t = product_seed(&phi, &AtomicMeasure::dirac(0.0, 1.0).unwrap()).unwrap();
        for j in 0..32 {
            assert_abs_diff_eq!(t.fiber(j).total_mass(), phi.values()[j], epsilon = 1e-15);
        }
        assert!(product_seed(&phi, &AtomicMeasure::dirac(0.0, 1.0).unwrap().scaled(2.0)).is_err());
    }

    #[test]
    fn linf_examples() {
        let n = 16;
        let a = product_seed(&ones(n), &AtomicMeasure::dirac(0.2, 1.0).unwrap()).unwrap();
        assert_eq!(linf_distance(&a, &a).unwrap(), 0.0);
        let t = 0.3;
        let b = product_seed(&ones(n), &AtomicMeasure::dirac(0.2 + t, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(linf_distance(&a, &b).unwrap(), t, epsilon = 1e-12);

        let a5 = LeafwiseMeasure::new(
            a.fibers().iter().map(|f| AtomicMeasure::new(f.atoms().to_vec(), 0.5).unwrap()).collect(),
            DensityOnGrid::constant(n, 0.5, 1.0).unwrap(),
        )
        .unwrap();
        let b5 = product_seed(
            &DensityOnGrid::constant(n, 0.5, 1.0).unwrap(),
            &AtomicMeasure::dirac(0.2 + t, 0.5).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(linf_distance(&a5, &b5).unwrap(), t.powf(0.5), epsilon = 1e-9);

        let mut fibers = a.fibers().to_vec();
        fibers[5] = AtomicMeasure::dirac(0.9, 1.0).unwrap();
        let c = LeafwiseMeasure::new(fibers, ones(n)).unwrap();
        assert_abs_diff_eq!(linf_distance(&a, &c).unwrap(), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn sinf_examples() {
        let m = product_seed(&ones(64), &AtomicMeasure::dirac(0.5, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(sinf_norm(&m).unwrap(), 2.0, epsilon = 1e-12);
        let z = LeafwiseMeasure::zero(64, 1.0).unwrap();
        assert_eq!(sinf_norm(&z).unwrap(), 0.0);
    }

    #[test]
    fn holder_of_dirac_graph() {
        let n = 128;
        let fibers = (0..n)
            .map(|j| AtomicMeasure::dirac(0.3 * cell_center(j, n), 1.0).unwrap())
            .collect();
        let m = LeafwiseMeasure::new(fibers, ones(n)).unwrap().with_cuts(vec![0.0]);
        let h = holder_constant(&m, 500, 3).unwrap();
        assert_abs_diff_eq!(h.value, 0.3, epsilon = 1e-9);
        // Without the cut the wrap pair sees the jump of the graph at 0.
        let wrapped = LeafwiseMeasure::new(m.fibers().to_vec(), ones(n)).unwrap();
        assert!(holder_constant(&wrapped, 0, 3).unwrap().value > 10.0);
    }

    #[test]
    fn holder_is_monotone_in_budget() {
        let n = 64;
        let fibers = (0..n)
            .map(|j| {
                let x = cell_center(j, n);
                AtomicMeasure::dirac(0.5 + 0.4 * (6.0 * x).sin() * x.sqrt(), 1.0).unwrap()
            })
            .collect();
        let m = LeafwiseMeasure::new(fibers, ones(n)).unwrap();
        let mut last = 0.0;
        for b in [0, 10, 100, 1000] {
            let v = holder_constant(&m, b, 11).unwrap().value;
            assert!(v >= last);
            last = v;
        }
        let full = holder_constant_full(&WkMetric::new(1.0), &m).unwrap().value;
        assert!(full >= last - 1e-15);
    }

    #[test]
    fn combine_examples() {
        let a = product_seed(&ones(8), &AtomicMeasure::dirac(0.4, 1.0).unwrap()).unwrap();
        let z = signed_combine(&a, &a, 1.0, -1.0).unwrap();
        assert!(z.fibers().iter().all(|f| f.total_mass() == 0.0));
        assert_eq!(linf_norm(&z).unwrap(), 0.0);
        let zero = LeafwiseMeasure::zero(8, 1.0).unwrap();
        let d = signed_combine(&a, &zero, 2.0, 0.0).unwrap();
        assert!(d.fibers().iter().all(|f| f.total_mass() == 2.0));
        assert!(signed_combine(&a, &LeafwiseMeasure::zero(4, 1.0).unwrap(), 1.0, 1.0).is_err());
    }

    #[test]
    fn leaf_distance_respects_cuts() {
        let m = LeafwiseMeasure::zero(10, 1.0).unwrap().with_cuts(vec![0.0]);
        // Leaves 0.05 and 0.95: the short arc crosses 0.
        assert_abs_diff_eq!(m.leaf_distance(0, 9).unwrap(), 0.9, epsilon = 1e-12);
        let two = LeafwiseMeasure::zero(10, 1.0).unwrap().with_cuts(vec![0.0, 0.5]);
        assert!(two.leaf_distance(2, 7).is_none());
        assert_abs_diff_eq!(two.leaf_distance(1, 3).unwrap(), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn csv_has_one_row_per_atom() {
        let m = product_seed(&ones(3), &AtomicMeasure::new(vec![(0.0, 0.5), (1.0, 0.5)], 1.0).unwrap()).unwrap();
        let csv = m.to_csv();
        assert_eq!(csv.lines().count(), 1 + 6);
        assert!(csv.starts_with("leaf,position,weight,phi\n"));
    }
}
