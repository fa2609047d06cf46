//! Numerical toolkit for skew products F(x, y) = (f(x), G(x, y)) over the
//! circle with fibers in [0,1]: fiberwise transfer operators, invariant
//! measures, anisotropic norms built on a bounded-Hölder transport metric,
//! and quantitative statistical stability under deterministic perturbations.

pub mod base_map;
pub mod equilibrium;
pub mod error;
pub mod fiber_map;
pub mod leafwise;
pub mod measure_kit;
pub mod report;
pub mod stability;
pub mod transfer;

pub use error::{Error, Result};
pub use measure_kit::{
    push_fiber, quantize, wk_distance, wk_norm, AtomicMeasure, FiberGrid, LpRoute, WkMetric,
};
pub use report::{sig12, Check, Report};
pub use base_map::{
    check_base_hypotheses, estimate_spectral_constants, eval_base, inverse_branches,
    transfer_density, BaseMapSpec, DensityOnGrid, SpectralEstimate, Topology,
};
pub use fiber_map::{estimate_alpha, estimate_fiber_holder, eval_fiber, FiberMapSpec, Offset};
pub use leafwise::{
    holder_constant, linf_distance, linf_norm, product_seed, signed_combine, sinf_norm,
    HolderEstimate, LeafwiseMeasure,
};
pub use transfer::{apply_transfer, iterate_transfer, SkewSystem, StepRecord};
pub use equilibrium::{
    default_tol, fixed_point, measured_equilibrium_rate, regularity_certificate, ConvergenceConstants,
    FixedPointResult, RateResult, RegularityConstants,
};
pub use stability::{
    certified_stability_bound, check_admissibility, compute_r, operator_gap, stability_sweep, uniform_holder_bound,
    PerturbationFamily, PerturbationKind, StabilityConstants, SweepConfig, SweepResult, SweepRow,
};
