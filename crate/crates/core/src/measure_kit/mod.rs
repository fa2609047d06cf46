//! Signed atomic measures on the fiber K = [0,1] and the bounded-Hölder
//! transport metric W between them.
//!
//! W(μ, ν) = sup { ∫g d(μ−ν) : |g| ≤ 1, H_ζ(g) ≤ 1 }. Restricted to the
//! support of μ−ν this is a finite LP in the values of g. Two exact solvers
//! live here: a revised simplex on the flow dual (any ζ), and a chain dynamic
//! program that is only valid for ζ = 1 where the pairwise constraints reduce
//! to consecutive ones.

mod chain;
mod lp;

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub use lp::LpStats;

/// Default bound on the combined support handed to the simplex.
pub const DEFAULT_LP_CAP: usize = 2048;

/// Finite signed measure on [0,1]: a list of weighted atoms.
///
/// Atoms are not required to be sorted or distinct; the metric merges them.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicMeasure {
    atoms: Vec<(f64, f64)>,
    zeta: f64,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<(f64, f64)>, zeta: f64) -> Result<Self> {
        check_zeta(zeta)?;
        for &(p, w) in &atoms {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain {
                    what: "atom position",
                    value: p,
                    domain: "[0,1]",
                });
            }
            if !w.is_finite() {
                return Err(Error::Domain {
                    what: "atom weight",
                    value: w,
                    domain: "finite reals",
                });
            }
        }
        Ok(AtomicMeasure { atoms, zeta })
    }

    pub fn zero(zeta: f64) -> Self {
        AtomicMeasure {
            atoms: Vec::new(),
            zeta,
        }
    }

    pub fn dirac(position: f64, zeta: f64) -> Result<Self> {
        Self::new(vec![(position, 1.0)], zeta)
    }

    /// Equal weights 1/n at the nodes of `grid`.
    pub fn uniform(grid: &FiberGrid, zeta: f64) -> Self {
        let w = 1.0 / grid.n_fiber() as f64;
        AtomicMeasure {
            atoms: (0..grid.n_fiber()).map(|j| (grid.node(j), w)).collect(),
            zeta,
        }
    }

    pub(crate) fn from_raw(atoms: Vec<(f64, f64)>, zeta: f64) -> Self {
        AtomicMeasure { atoms, zeta }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.1.abs()).sum()
    }

    /// ∫ y dμ.
    pub fn first_moment(&self) -> f64 {
        self.atoms.iter().map(|&(p, w)| p * w).sum()
    }

    pub fn scaled(&self, a: f64) -> Self {
        AtomicMeasure {
            atoms: self.atoms.iter().map(|&(p, w)| (p, a * w)).collect(),
            zeta: self.zeta,
        }
    }

    /// Concatenation of atom lists, i.e. the sum of measures.
    pub fn plus(&self, other: &AtomicMeasure) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        AtomicMeasure {
            atoms,
            zeta: self.zeta,
        }
    }

    /// Sorted, merged copy with zero-weight atoms removed.
    pub fn canonical(&self) -> Self {
        AtomicMeasure {
            atoms: merge_atoms(self.atoms.clone()),
            zeta: self.zeta,
        }
    }

    /// `position,weight` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("position,weight\n");
        for &(p, w) in &self.atoms {
            let _ = writeln!(out, "{},{}", crate::sig12(p), crate::sig12(w));
        }
        out
    }
}

pub(crate) fn check_zeta(zeta: f64) -> Result<()> {
    if zeta > 0.0 && zeta <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "zeta",
            value: zeta,
            domain: "(0,1]",
        })
    }
}

/// Uniform grid of `n_fiber` nodes on [0,1], endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FiberGrid {
    n_fiber: usize,
}

impl FiberGrid {
    pub fn new(n_fiber: usize) -> Result<Self> {
        if n_fiber < 2 {
            return Err(crate::error::param("n_fiber", "need at least 2 nodes"));
        }
        Ok(FiberGrid { n_fiber })
    }

    pub fn n_fiber(&self) -> usize {
        self.n_fiber
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.n_fiber - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j + 1 == self.n_fiber {
            1.0
        } else {
            j as f64 / (self.n_fiber - 1) as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_fiber).map(|j| self.node(j)).collect()
    }

    /// Splits mass `w` at `p` linearly between the two enclosing nodes.
    #[inline]
    pub(crate) fn deposit(&self, acc: &mut [f64], p: f64, w: f64) {
        let u = p * (self.n_fiber - 1) as f64;
        let j = (u.floor() as usize).min(self.n_fiber - 2);
        let t = u - j as f64;
        if t <= 0.0 {
            acc[j] += w;
        } else if t >= 1.0 {
            acc[j + 1] += w;
        } else {
            let right = w * t;
            acc[j] += w - right;
            acc[j + 1] += right;
        }
    }

    /// Reads a node accumulator back as a measure, skipping empty nodes.
    pub(crate) fn collect(&self, acc: &[f64], zeta: f64) -> AtomicMeasure {
        let atoms = acc
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(j, &w)| (self.node(j), w))
            .collect();
        AtomicMeasure::from_raw(atoms, zeta)
    }
}

/// Moves each atom's mass onto the two nearest fiber nodes, proportionally to
/// proximity. Mass and first moment are preserved.
pub fn quantize(mu: &AtomicMeasure, grid: &FiberGrid) -> AtomicMeasure {
    let mut acc = vec![0.0; grid.n_fiber()];
    for &(p, w) in &mu.atoms {
        grid.deposit(&mut acc, p, w);
    }
    grid.collect(&acc, mu.zeta)
}

/// Image measure under a fiber map: (p, w) ↦ (F(p), w).
pub fn push_fiber<F: Fn(f64) -> f64>(f: F, mu: &AtomicMeasure) -> Result<AtomicMeasure> {
    let mut atoms = Vec::with_capacity(mu.atoms.len());
    for &(p, w) in &mu.atoms {
        let q = f(p);
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::FiberRange {
                x: f64::NAN,
                y: p,
                value: q,
            });
        }
        atoms.push((q, w));
    }
    Ok(AtomicMeasure::from_raw(atoms, mu.zeta))
}

/// Which exact solver evaluates the metric LP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LpRoute {
    /// Closed forms where exact, the chain program for ζ = 1, simplex otherwise.
    #[default]
    Auto,
    /// Always the revised simplex (reference route).
    Simplex,
}

/// The metric with its exponent and solver settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WkMetric {
    pub zeta: f64,
    pub lp_cap: usize,
    pub route: LpRoute,
}

impl WkMetric {
    pub fn new(zeta: f64) -> Self {
        WkMetric {
            zeta,
            lp_cap: DEFAULT_LP_CAP,
            route: LpRoute::Auto,
        }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.lp_cap = cap;
        self
    }

    pub fn with_route(mut self, route: LpRoute) -> Self {
        self.route = route;
        self
    }

    pub fn distance(&self, mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<f64> {
        let mut atoms = Vec::with_capacity(mu.atoms.len() + nu.atoms.len());
        atoms.extend_from_slice(&mu.atoms);
        atoms.extend(nu.atoms.iter().map(|&(p, w)| (p, -w)));
        self.signed_norm(atoms)
    }

    pub fn norm(&self, mu: &AtomicMeasure) -> Result<f64> {
        self.signed_norm(mu.atoms.clone())
    }

    /// ‖Σ wᵢ δ_{pᵢ}‖_W for an arbitrary signed atom list.
    pub fn signed_norm(&self, atoms: Vec<(f64, f64)>) -> Result<f64> {
        check_zeta(self.zeta)?;
        let merged = merge_atoms(atoms);
        if merged.is_empty() {
            return Ok(0.0);
        }
        if self.route == LpRoute::Auto {
            let pos = merged.iter().all(|a| a.1 > 0.0);
            let neg = merged.iter().all(|a| a.1 < 0.0);
            if pos || neg {
                // g ≡ ±1 is feasible and attains the trivial bound |Σw|.
                return Ok(merged.iter().map(|a| a.1).sum::<f64>().abs());
            }
            if self.zeta == 1.0 {
                return Ok(chain::solve(&merged));
            }
        }
        if merged.len() > self.lp_cap {
            return Err(Error::LpCap {
                size: merged.len(),
                cap: self.lp_cap,
            });
        }
        let (pos, c): (Vec<f64>, Vec<f64>) = merged.into_iter().unzip();
        let all_pairs = self.zeta < 1.0;
        lp::solve(&pos, &c, self.zeta, all_pairs).map(|s| s.value)
    }
}

/// W(μ, ν) with the default LP cap.
pub fn wk_distance(mu: &AtomicMeasure, nu: &AtomicMeasure, zeta: f64) -> Result<f64> {
    WkMetric::new(zeta).distance(mu, nu)
}

/// ‖μ‖_W = W(0, μ).
pub fn wk_norm(mu: &AtomicMeasure, zeta: f64) -> Result<f64> {
    WkMetric::new(zeta).norm(mu)
}

/// Runs the simplex on a signed atom list and returns the solution details.
pub fn simplex_norm(atoms: Vec<(f64, f64)>, zeta: f64) -> Result<LpStats> {
    check_zeta(zeta)?;
    let merged = merge_atoms(atoms);
    let (pos, c): (Vec<f64>, Vec<f64>) = merged.into_iter().unzip();
    lp::solve(&pos, &c, zeta, zeta < 1.0)
}

fn merge_atoms(mut atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (p, w) in atoms {
        match out.last_mut() {
            Some(last) if last.0 == p => last.1 += w,
            _ => out.push((p, w)),
        }
    }
    out.retain(|a| a.1 != 0.0);
    out
}
