//! The pushforward F_* on leafwise measures.
//!
//! Output leaf γ receives Σᵢ ρ(γᵢ)·(G(γᵢ, ·))_* μ|_{γᵢ} over the preimages
//! γᵢ = f⁻¹ᵢ(γ), and the marginal becomes P_f φ. Input leaves are read at the
//! preimage by linear interpolation between neighbouring cell centers, the
//! same rule the density transfer uses, so the fiber masses keep matching the
//! marginal. Atoms are deposited straight onto the fiber grid, which is the
//! single quantization per step.

use rayon::prelude::*;

use crate::base_map::{cell_center, interp_weights, BaseMapSpec, DensityOnGrid};
use crate::error::{Error, Result};
use crate::fiber_map::FiberMapSpec;
use crate::leafwise::{holder_constant_with, linf_distance_with, product_seed, LeafwiseMeasure};
use crate::measure_kit::{AtomicMeasure, FiberGrid, WkMetric};

/// Upper bound on tracked path discontinuities.
const MAX_CUTS: usize = 32;

pub const DEFAULT_N_BASE: usize = 1024;
pub const DEFAULT_N_FIBER: usize = 257;

#[derive(Clone, Debug, PartialEq)]
pub struct SkewSystem {
    pub base: BaseMapSpec,
    pub fiber: FiberMapSpec,
    pub zeta: f64,
    pub grid: FiberGrid,
    /// Number of base leaves used when a seed measure is built.
    pub n_base: usize,
    pub metric: WkMetric,
}

impl SkewSystem {
    pub fn new(base: BaseMapSpec, fiber: FiberMapSpec, zeta: f64, grid: FiberGrid) -> Result<Self> {
        crate::measure_kit::check_zeta(zeta)?;
        if fiber.deg() != base.deg() {
            return Err(Error::GridMismatch(format!(
                "fiber map has {} branches, base has degree {}",
                fiber.deg(),
                base.deg()
            )));
        }
        if fiber.partition() != base.partition().as_slice() {
            return Err(Error::GridMismatch(
                "fiber branches do not match the base partition".into(),
            ));
        }
        if fiber.zeta != zeta {
            return Err(Error::GridMismatch("fiber map zeta differs from system zeta".into()));
        }
        Ok(SkewSystem {
            base,
            fiber,
            zeta,
            grid,
            n_base: DEFAULT_N_BASE,
            metric: WkMetric::new(zeta),
        })
    }

    pub fn with_n_base(mut self, n_base: usize) -> Result<Self> {
        if n_base < 2 {
            return Err(crate::error::param("n_base", "need at least 2 leaves"));
        }
        self.n_base = n_base;
        Ok(self)
    }

    /// m₁ × ν on the configured base grid.
    pub fn seed_measure(&self, nu: &AtomicMeasure) -> Result<LeafwiseMeasure> {
        product_seed(&DensityOnGrid::constant(self.n_base, self.zeta, 1.0)?, nu)
    }

    pub fn with_metric(mut self, metric: WkMetric) -> Self {
        self.metric = metric;
        self
    }

    /// (α·L)^ζ, which must be < 1 for the path regularity estimates.
    pub fn regularity_beta(&self) -> f64 {
        (self.fiber.alpha * self.base.meta.l_const).powf(self.zeta)
    }

    pub fn regularity_hypothesis_holds(&self) -> bool {
        self.regularity_beta() < 1.0
    }

    /// Images under f of the points where G jumps in x: the places where
    /// F_*μ may jump even when μ has a continuous path.
    pub fn cuts(&self) -> Vec<f64> {
        self.fiber
            .x_discontinuities()
            .into_iter()
            .map(|d| self.base.eval_unchecked(d))
            .collect()
    }

    pub fn h_fib(&self) -> f64 {
        self.grid.spacing()
    }

    pub fn h_base(&self) -> f64 {
        1.0 / self.n_base as f64
    }
}

fn single_signed(atoms: &[(f64, f64)]) -> bool {
    atoms.iter().all(|a| a.1 >= 0.0) || atoms.iter().all(|a| a.1 <= 0.0)
}

/// Linear weights for reading leaf data at base point `x`. Across a path
/// discontinuity the near-side leaf is used, rescaled to the interpolated
/// mass.
#[inline]
fn lookup(a: &LeafwiseMeasure, x: f64, out: &mut Vec<(usize, f64)>) {
    out.clear();
    let n = a.n_base();
    let (j0, j1, t) = interp_weights(x, n);
    let phi = a.marginal().values();
    if !a.cuts().is_empty() {
        let h = 1.0 / n as f64;
        let x0 = cell_center(j0, n);
        let off_x = (x - x0).rem_euclid(1.0);
        let split = a
            .cuts()
            .iter()
            .map(|&c| (c - x0).rem_euclid(1.0))
            .find(|&oc| oc > 0.0 && oc < h);
        if let Some(oc) = split {
            let side = if off_x < oc { j0 } else { j1 };
            let mass = phi[j0] + t * (phi[j1] - phi[j0]);
            let scale = mass / phi[side];
            // A signed leaf with near-zero mass would be blown up by the
            // rescale; fall back to interpolation unless the norm is safe.
            if scale.is_finite() && scale >= 0.0 && (scale <= 1.0 || single_signed(a.fiber(side).atoms())) {
                out.push((side, scale));
                return;
            }
        }
    }
    if t < 1.0 {
        out.push((j0, 1.0 - t));
    }
    if t > 0.0 {
        out.push((j1, t));
    }
}

/// One application of F_*, followed by quantization onto the fiber grid.
pub fn apply_transfer(sys: &SkewSystem, a: &LeafwiseMeasure) -> Result<LeafwiseMeasure> {
    if a.zeta() != sys.zeta {
        return Err(Error::GridMismatch("measure zeta differs from system zeta".into()));
    }
    let n = a.n_base();
    let nf = sys.grid.n_fiber();
    let marg = a.marginal();

    let leaves: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = cell_center(j, n);
            let mut acc = vec![0.0; nf];
            let mut phi_out = 0.0;
            let mut err = None;
            let mut look = Vec::with_capacity(2);
            sys.base.for_each_preimage(x, |_, g, rho| {
                if err.is_some() {
                    return;
                }
                phi_out += rho * marg.interpolate(g);
                lookup(a, g, &mut look);
                let slope = sys.fiber.slope_at(g);
                let off = sys.fiber.offset_at(g);
                for &(m, w) in &look {
                    let coef = rho * w;
                    for &(p, wt) in a.fiber(m).atoms() {
                        let q = slope * p + off;
                        if !(0.0..=1.0).contains(&q) {
                            err = Some(Error::FiberRange { x: g, y: p, value: q });
                            return;
                        }
                        sys.grid.deposit(&mut acc, q, coef * wt);
                    }
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok((acc, phi_out)),
            }
        })
        .collect::<Result<_>>()?;

    let mut fibers = Vec::with_capacity(n);
    let mut phi = Vec::with_capacity(n);
    for (acc, p) in leaves {
        fibers.push(sys.grid.collect(&acc, sys.zeta));
        phi.push(p);
    }
    let marginal = DensityOnGrid::new(phi, sys.zeta)?;

    let mut cuts = sys.cuts();
    for &c in a.cuts() {
        if cuts.len() >= MAX_CUTS {
            break;
        }
        cuts.push(sys.base.eval_unchecked(c));
    }
    Ok(LeafwiseMeasure::from_parts(fibers, marginal, Vec::new()).with_cuts(cuts))
}

/// Per-step diagnostics of an orbit.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// ‖F_*^{k}A − F_*^{k−1}A‖_∞.
    pub change: f64,
    pub holder: f64,
    pub mass: f64,
    /// Accumulated quantization allowance k·h_fib^ζ / (1 − α^ζ).
    pub quantization_bound: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterateOptions {
    pub holder_budget: usize,
    pub seed: u64,
}

impl Default for IterateOptions {
    fn default() -> Self {
        IterateOptions {
            holder_budget: 256,
            seed: 0,
        }
    }
}

pub fn iterate_transfer(
    sys: &SkewSystem,
    a: &LeafwiseMeasure,
    n: usize,
) -> Result<(LeafwiseMeasure, Vec<StepRecord>)> {
    iterate_transfer_with(sys, a, n, IterateOptions::default())
}

pub fn iterate_transfer_with(
    sys: &SkewSystem,
    a: &LeafwiseMeasure,
    n: usize,
    opts: IterateOptions,
) -> Result<(LeafwiseMeasure, Vec<StepRecord>)> {
    let mut cur = a.clone();
    let mut records = Vec::with_capacity(n);
    let per_step = sys.h_fib().powf(sys.zeta) / (1.0 - sys.fiber.alpha.powf(sys.zeta));
    for k in 1..=n {
        let next = apply_transfer(sys, &cur)?;
        let change = linf_distance_with(&sys.metric, &next, &cur)?;
        let holder = holder_constant_with(&sys.metric, &next, opts.holder_budget, opts.seed)?.value;
        records.push(StepRecord {
            step: k,
            change,
            holder,
            mass: next.total_mass(),
            quantization_bound: k as f64 * per_step,
        });
        cur = next;
    }
    Ok((cur, records))
}
