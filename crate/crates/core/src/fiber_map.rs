//! Fiber dynamics G: M × K → K and sampled estimates of its contraction rate
//! and branchwise Hölder constants.
//!
//! Shipped family: G(x, y) = (a + b·sin 2πx)·y + o(x) + s with an offset o
//! that is constant, linear in x, or constant on each base branch.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::base_map::{Arc, BaseMapSpec};
use crate::error::{param, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Offset {
    Const(f64),
    /// o(x) = a·x on [0,1); jumps at x = 0 when a ≠ 0.
    LinearX(f64),
    /// o(x) = cᵢ on the base branch Pᵢ.
    PerBranch(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiberMapSpec {
    /// Constant part of ∂G/∂y.
    pub slope: f64,
    /// Amplitude of the sin 2πx modulation of ∂G/∂y.
    pub wobble: f64,
    pub offset: Offset,
    /// Translation added to every branch (perturbation parameter).
    pub shift: f64,
    /// Declared contraction rate α.
    pub alpha: f64,
    pub zeta: f64,
    /// Declared |G|_ζ.
    pub holder_g: f64,
    partition: Vec<Arc>,
}

/// Points per axis used to validate the range condition.
const RANGE_SAMPLES: usize = 4096;

impl FiberMapSpec {
    /// Affine fiber map over the branches of `base`. `alpha` defaults to the
    /// exact sup of |∂G/∂y| and the declared Hölder constant to the exact
    /// branchwise one when `None`.
    pub fn affine(
        base: &BaseMapSpec,
        slope: f64,
        wobble: f64,
        offset: Offset,
        zeta: f64,
    ) -> Result<Self> {
        crate::measure_kit::check_zeta(zeta)?;
        if let Offset::PerBranch(cs) = &offset {
            if cs.len() != base.deg() {
                return Err(param(
                    "offset",
                    format!("{} branch constants for a degree {} base", cs.len(), base.deg()),
                ));
            }
        }
        let alpha = slope.abs() + wobble.abs();
        let holder_g = match &offset {
            Offset::Const(_) | Offset::PerBranch(_) => 0.0,
            Offset::LinearX(a) => a.abs(),
        } + if wobble != 0.0 {
            // |b|·2π·|y| bound on the x-derivative of the slope term.
            2.0 * PI * wobble.abs()
        } else {
            0.0
        };
        let g = FiberMapSpec {
            slope,
            wobble,
            offset,
            shift: 0.0,
            alpha,
            zeta,
            holder_g,
            partition: base.partition(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_declared(mut self, alpha: f64, holder_g: f64) -> Self {
        self.alpha = alpha;
        self.holder_g = holder_g;
        self
    }

    pub fn shifted(&self, delta: f64) -> Result<Self> {
        let mut g = self.clone();
        g.shift += delta;
        g.validate()?;
        Ok(g)
    }

    /// Same map re-attached to the branches of another base (e.g. after a
    /// rotation of the base map).
    pub fn over(&self, base: &BaseMapSpec) -> Result<Self> {
        let mut g = self.clone();
        if g.partition.len() != base.deg() {
            return Err(Error::GridMismatch(format!(
                "fiber map has {} branches, base has degree {}",
                g.partition.len(),
                base.deg()
            )));
        }
        g.partition = base.partition();
        g.validate()?;
        Ok(g)
    }

    pub fn deg(&self) -> usize {
        self.partition.len()
    }

    pub fn partition(&self) -> &[Arc] {
        &self.partition
    }

    fn branch_of(&self, x: f64) -> usize {
        self.partition
            .iter()
            .position(|a| a.contains(x))
            .unwrap_or(0)
    }

    #[inline]
    pub fn slope_at(&self, x: f64) -> f64 {
        if self.wobble == 0.0 {
            self.slope
        } else {
            self.slope + self.wobble * (2.0 * PI * x).sin()
        }
    }

    #[inline]
    pub fn offset_at(&self, x: f64) -> f64 {
        let o = match &self.offset {
            Offset::Const(c) => *c,
            Offset::LinearX(a) => a * x,
            Offset::PerBranch(cs) => cs[self.branch_of(x)],
        };
        o + self.shift
    }

    /// G(x, y) without the range check.
    #[inline]
    pub fn eval_raw(&self, x: f64, y: f64) -> f64 {
        self.slope_at(x) * y + self.offset_at(x)
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::Domain {
                what: "base point",
                value: x,
                domain: "[0,1)",
            });
        }
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::Domain {
                what: "fiber point",
                value: y,
                domain: "[0,1]",
            });
        }
        let v = self.eval_raw(x, y);
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(Error::FiberRange { x, y, value: v })
        }
    }

    /// The fiber map is affine in y, so the range is checked at y ∈ {0, 1}
    /// on a dense x grid plus the branch endpoints.
    pub fn validate(&self) -> Result<()> {
        let mut xs: Vec<f64> = (0..RANGE_SAMPLES)
            .map(|s| s as f64 / RANGE_SAMPLES as f64)
            .collect();
        for a in &self.partition {
            xs.push(a.start);
            let end = (a.start + a.len).rem_euclid(1.0);
            xs.push((end - 1e-12).rem_euclid(1.0));
        }
        xs.push(1.0 - 1e-12);
        for x in xs {
            for y in [0.0, 1.0] {
                self.eval(x, y)?;
            }
        }
        Ok(())
    }

    /// Base points where G jumps in x.
    pub fn x_discontinuities(&self) -> Vec<f64> {
        match &self.offset {
            Offset::Const(_) => Vec::new(),
            Offset::LinearX(a) => {
                if *a != 0.0 {
                    vec![0.0]
                } else {
                    Vec::new()
                }
            }
            Offset::PerBranch(cs) => {
                let k = cs.len();
                (0..k)
                    .filter(|&i| cs[i] != cs[(i + k - 1) % k])
                    .map(|i| self.partition[i].start)
                    .collect()
            }
        }
    }
}

pub fn eval_fiber(g: &FiberMapSpec, x: f64, y: f64) -> Result<f64> {
    g.eval(x, y)
}

/// Sampled sup of |G(x,z₁) − G(x,z₂)| / |z₁ − z₂|.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaEstimate {
    pub value: f64,
    pub samples: usize,
    /// value ≤ declared α + 1e−9.
    pub consistent: bool,
}

pub fn estimate_alpha(g: &FiberMapSpec, n_samples: usize, seed: u64) -> Result<AlphaEstimate> {
    if n_samples < 100 {
        return Err(param("n_samples", "need at least 100 samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..n_samples {
        let x: f64 = rng.gen_range(0.0..1.0);
        let z1: f64 = rng.gen_range(0.0..=1.0);
        let z2: f64 = rng.gen_range(0.0..=1.0);
        if z1 == z2 {
            continue;
        }
        let r = (g.eval(x, z1)? - g.eval(x, z2)?).abs() / (z1 - z2).abs();
        best = best.max(r);
    }
    Ok(AlphaEstimate {
        value: best,
        samples: n_samples,
        consistent: best <= g.alpha + 1e-9,
    })
}

/// Branchwise sampled Hölder constants of x ↦ G(x, y).
#[derive(Clone, Debug, PartialEq)]
pub struct FiberHolder {
    pub per_branch: Vec<f64>,
    pub overall: f64,
    pub samples: usize,
}

/// Pairs are drawn inside a single branch arc, so jumps across branch
/// boundaries never enter.
pub fn estimate_fiber_holder(g: &FiberMapSpec, n_samples: usize, seed: u64) -> Result<FiberHolder> {
    let deg = g.deg();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_branch = vec![0.0f64; deg];
    for s in 0..n_samples {
        let i = s % deg;
        let arc = g.partition[i];
        let u1: f64 = rng.gen_range(0.0..arc.len);
        let u2: f64 = rng.gen_range(0.0..arc.len);
        let y: f64 = rng.gen_range(0.0..=1.0);
        if u1 == u2 {
            continue;
        }
        let x1 = (arc.start + u1).rem_euclid(1.0);
        let x2 = (arc.start + u2).rem_euclid(1.0);
        let d = (u1 - u2).abs().powf(g.zeta);
        let r = (g.eval(x1.min(1.0 - f64::EPSILON), y)? - g.eval(x2.min(1.0 - f64::EPSILON), y)?)
            .abs()
            / d;
        per_branch[i] = per_branch[i].max(r);
    }
    let overall = per_branch.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(FiberHolder {
        per_branch,
        overall,
        samples: n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn doubling() -> BaseMapSpec {
        BaseMapSpec::doubling()
    }

    #[test]
    fn eval_examples() {
        let g = FiberMapSpec::affine(&doubling(), 0.5, 0.0, Offset::Const(0.25), 1.0).unwrap();
        assert_abs_diff_eq!(g.eval(0.1, 0.5).unwrap(), 0.5);
        assert_abs_diff_eq!(g.eval(0.9, 0.0).unwrap(), 0.25);
        let graph = FiberMapSpec::affine(&doubling(), 0.5, 0.0, Offset::LinearX(0.5), 1.0).unwrap();
        assert_abs_diff_eq!(graph.eval(0.5, 1.0).unwrap(), 0.75);
    }

    #[test]
    fn range_violation_is_a_fault() {
        let g = FiberMapSpec::affine(&doubling(), 0.5, 0.0, Offset::Const(0.25), 1.0).unwrap();
        assert!(g.shifted(0.1).is_ok());
        assert!(matches!(g.shifted(0.3), Err(Error::FiberRange { .. })));
        assert!(FiberMapSpec::affine(&doubling(), 0.9, 0.0, Offset::Const(0.2), 1.0).is_err());
    }

    #[test]
    fn alpha_examples() {
        let g = FiberMapSpec::affine(&doubling(), 0.5, 0.0, Offset::LinearX(0.3), 1.0).unwrap();
        let a = estimate_alpha(&g, 1000, 1).unwrap();
        assert_abs_diff_eq!(a.value, 0.5, epsilon = 1e-12);
        assert!(a.consistent);

        let w = FiberMapSpec::affine(&doubling(), 0.25, 0.1, Offset::Const(0.0), 1.0).unwrap();
        let a = estimate_alpha(&w, 5000, 2).unwrap();
        assert!(a.value <= 0.35 + 1e-12 && a.value > 0.34);

        let c = FiberMapSpec::affine(&doubling(), 0.0, 0.0, Offset::LinearX(0.8), 1.0).unwrap();
        assert_eq!(estimate_alpha(&c, 200, 3).unwrap().value, 0.0);
        assert!(estimate_alpha(&c, 99, 3).is_err());
    }

    #[test]
    fn holder_examples() {
        let g = FiberMapSpec::affine(&doubling(), 0.5, 0.0, Offset::Const(0.25), 1.0).unwrap();
        assert_eq!(estimate_fiber_holder(&g, 500, 4).unwrap().overall, 0.0);

        let graph = FiberMapSpec::affine(&doubling(), 0.5, 0.0, Offset::LinearX(0.5), 1.0).unwrap();
        let h = estimate_fiber_holder(&graph, 2000, 4).unwrap();
        for v in &h.per_branch {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-9);
        }

        let jump = FiberMapSpec::affine(
            &doubling(),
            0.5,
            0.0,
            Offset::PerBranch(vec![0.1, 0.4]),
            1.0,
        )
        .unwrap();
        let h = estimate_fiber_holder(&jump, 2000, 4).unwrap();
        assert_eq!(h.per_branch, vec![0.0, 0.0]);
        assert_eq!(jump.x_discontinuities(), vec![0.0, 0.5]);
    }

    #[test]
    fn estimators_grow_with_samples() {
        let w = FiberMapSpec::affine(&doubling(), 0.25, 0.1, Offset::LinearX(0.2), 0.5).unwrap();
        let mut last_a = 0.0;
        let mut last_h = 0.0;
        for n in [100, 200, 400, 800] {
            let a = estimate_alpha(&w, n, 9).unwrap().value;
            let h = estimate_fiber_holder(&w, n, 9).unwrap().overall;
            assert!(a >= last_a && h >= last_h);
            last_a = a;
            last_h = h;
        }
    }
}
