//! Invariant measure as a fixed point of F_*, convergence rates and the
//! Hölder regularity certificate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::base_map::{estimate_spectral_constants, DensityOnGrid};
use crate::error::{param, Result};
use crate::fiber_map::estimate_fiber_holder;
use crate::leafwise::{
    holder_constant_with, linf_distance_with, linf_norm_with, product_seed, signed_combine, sinf_norm_with,
    LeafwiseMeasure,
};
use crate::measure_kit::AtomicMeasure;
use crate::report::{sig12, Report};
use crate::transfer::{apply_transfer, SkewSystem};

/// Constants of the exponential convergence estimate
/// ‖F_*^n μ‖_∞ ≤ D_conv β₁^n ‖μ‖_{S^∞} for zero-average μ.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceConstants {
    pub r: f64,
    pub d: f64,
    pub alpha: f64,
    pub zeta: f64,
    pub beta1: f64,
    pub d_conv: f64,
    pub alpha_bar: f64,
}

impl ConvergenceConstants {
    pub fn new(r: f64, d: f64, alpha: f64, zeta: f64) -> Result<Self> {
        crate::measure_kit::check_zeta(zeta)?;
        if !(r > 0.0 && r < 1.0) {
            return Err(param("r", format!("{r} is not in (0,1)")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(param("alpha", format!("{alpha} is not in (0,1)")));
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(param("D", format!("{d} is not a positive number")));
        }
        let az = alpha.powf(zeta);
        let alpha_bar = 1.0 / (1.0 - az);
        Ok(ConvergenceConstants {
            r,
            d,
            alpha,
            zeta,
            beta1: r.sqrt().max(az.sqrt()),
            d_conv: 1.0 / az.sqrt() + alpha_bar * d / r.sqrt(),
            alpha_bar,
        })
    }

    pub fn envelope(&self, n: usize, strong_norm: f64) -> f64 {
        self.d_conv * self.beta1.powi(n as i32) * strong_norm
    }
}

/// Constants of the path regularity estimate |F_*^n m|_ζ ≤ β^n|m|_ζ + D‖m‖_∞.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularityConstants {
    pub beta: f64,
    pub d_reg: f64,
    pub bound: f64,
}

impl RegularityConstants {
    pub fn new(alpha: f64, l_const: f64, eps_rho: f64, holder_g: f64, zeta: f64) -> Self {
        let lz = l_const.powf(zeta);
        let beta = (alpha * l_const).powf(zeta);
        let d_reg = eps_rho * lz + holder_g * lz;
        let bound = if beta < 1.0 { d_reg / (1.0 - beta) } else { f64::INFINITY };
        RegularityConstants { beta, d_reg, bound }
    }

    pub fn hypothesis_holds(&self) -> bool {
        self.beta < 1.0
    }
}

/// Regularity constants of a system, with |G|_ζ the larger of the declared
/// and the sampled branchwise constant.
pub fn regularity_constants(sys: &SkewSystem, seed: u64) -> Result<(RegularityConstants, f64)> {
    let sampled = estimate_fiber_holder(&sys.fiber, 4096, seed)?.overall;
    let g = sys.fiber.holder_g.max(sampled);
    let m = &sys.base.meta;
    Ok((RegularityConstants::new(sys.fiber.alpha, m.l_const, m.eps_rho, g, sys.zeta), g))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointResult {
    pub measure: LeafwiseMeasure,
    /// residuals[k] = ‖F_*^{k+1}m − F_*^k m‖_∞.
    pub residuals: Vec<f64>,
    pub holder_estimates: Vec<f64>,
    pub masses: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub tol: f64,
}

impl FixedPointResult {
    /// CSV with columns iteration, residual, holder_estimate, mass.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iteration,residual,holder_estimate,mass\n");
        for k in 0..self.residuals.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                k + 1,
                sig12(self.residuals[k]),
                sig12(self.holder_estimates[k]),
                sig12(self.masses[k])
            ));
        }
        s
    }

    /// Steps after which residuals are expected to decrease:
    /// ⌈log h_fib / log α^ζ⌉.
    pub fn burn_in(sys: &SkewSystem) -> usize {
        let az = sys.fiber.alpha.powf(sys.zeta);
        if az <= 0.0 || az >= 1.0 {
            return 0;
        }
        (sys.h_fib().ln() / az.ln()).ceil().max(0.0) as usize
    }
}

/// max(1e−6, 2h_fib^ζ): iteration cannot resolve below the quantization.
pub fn default_tol(sys: &SkewSystem) -> f64 {
    (2.0 * sys.h_fib().powf(sys.zeta)).max(1e-6)
}

pub const DEFAULT_MAX_ITER: usize = 200;
pub const FIXPOINT_HOLDER_BUDGET: usize = 256;

/// Iterates F_* from m₁ × ν until the ‖·‖_∞ step is below `tol`.
pub fn fixed_point(sys: &SkewSystem, seed_nu: &AtomicMeasure, tol: f64, max_iter: usize) -> Result<FixedPointResult> {
    if !(tol > 0.0) {
        return Err(param("tol", "must be positive"));
    }
    let mut cur = sys.seed_measure(seed_nu)?;
    let mut res = FixedPointResult {
        measure: cur.clone(),
        residuals: Vec::new(),
        holder_estimates: Vec::new(),
        masses: Vec::new(),
        iterations: 0,
        converged: false,
        tol,
    };
    for k in 0..max_iter {
        let next = apply_transfer(sys, &cur)?;
        let r = linf_distance_with(&sys.metric, &next, &cur)?;
        let h = holder_constant_with(&sys.metric, &next, FIXPOINT_HOLDER_BUDGET, k as u64)?.value;
        res.residuals.push(r);
        res.holder_estimates.push(h);
        res.masses.push(next.total_mass());
        res.iterations = k + 1;
        cur = next;
        if r < tol {
            res.converged = true;
            break;
        }
    }
    res.measure = cur;
    Ok(res)
}

/// Random probability on [0,1] with a handful of atoms.
pub fn random_probability(rng: &mut impl Rng, atoms: usize, zeta: f64) -> Result<AtomicMeasure> {
    let pos: Vec<f64> = (0..atoms).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let w: Vec<f64> = (0..atoms).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    AtomicMeasure::new(pos.into_iter().zip(w.into_iter().map(|v| v / total)).collect(), zeta)
}

/// Random positive probability density 1 + a·cos(2πmx + θ), a ≤ 0.5.
pub fn random_density(rng: &mut impl Rng, n_base: usize, zeta: f64) -> Result<DensityOnGrid> {
    let m = rng.gen_range(1..=4) as f64;
    let a = rng.gen_range(0.0..0.5);
    let th = rng.gen_range(0.0..2.0 * PI);
    let phi = DensityOnGrid::from_fn(n_base, zeta, |x| 1.0 + a * (2.0 * PI * m * x + th).cos())?;
    let mass = phi.integral();
    Ok(phi.scaled(1.0 / mass))
}

/// A zero-average measure m_ν,φ − m_ν′,φ′ from two seeded product seeds.
/// Pair 0 shares the Lebesgue marginal.
pub fn zero_average_pair(sys: &SkewSystem, seed: u64, pair: usize) -> Result<LeafwiseMeasure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (pair as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let nu_a = random_probability(&mut rng, 4, sys.zeta)?;
    let nu_b = random_probability(&mut rng, 4, sys.zeta)?;
    let (phi_a, phi_b) = if pair == 0 {
        let one = DensityOnGrid::constant(sys.n_base, sys.zeta, 1.0)?;
        (one.clone(), one)
    } else {
        (
            random_density(&mut rng, sys.n_base, sys.zeta)?,
            random_density(&mut rng, sys.n_base, sys.zeta)?,
        )
    };
    signed_combine(&product_seed(&phi_a, &nu_a)?, &product_seed(&phi_b, &nu_b)?, 1.0, -1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginRow {
    pub pair: usize,
    pub n: usize,
    pub measured: f64,
    pub envelope: f64,
    pub grid_allowance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateResult {
    /// Largest per-pair fitted geometric rate.
    pub empirical_rate: f64,
    pub per_pair_rate: Vec<f64>,
    pub constants: ConvergenceConstants,
    pub table: Vec<MarginRow>,
    pub initial_strong: Vec<f64>,
}

impl RateResult {
    pub fn all_pass(&self) -> bool {
        self.table.iter().all(|r| r.pass)
    }

    pub fn table_csv(&self) -> String {
        let mut s = String::from("pair,n,measured,envelope,grid_allowance,pass\n");
        for r in &self.table {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.pair,
                r.n,
                sig12(r.measured),
                sig12(r.envelope),
                sig12(r.grid_allowance),
                r.pass
            ));
        }
        s
    }
}

/// Least-squares slope of log y against n, over y > floor; None with fewer
/// than two usable points.
pub fn fit_log_rate(series: &[(usize, f64)], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(_, y)| *y > floor)
        .map(|&(n, y)| (n as f64, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some((sxy / sxx).exp())
}

pub const SPECTRAL_TRIALS: usize = 16;

/// Measures ‖F_*^n μ‖_∞ for `pairs` zero-average inputs and compares with
/// the theoretical envelope plus the accumulated quantization allowance.
/// The rate fit only uses values above 4h_fib^ζ, where quantization noise
/// is small against the signal.
pub fn measured_equilibrium_rate(sys: &SkewSystem, pairs: usize, n_steps: usize, seed: u64) -> Result<RateResult> {
    if pairs == 0 {
        return Err(param("pairs", "need at least one pair"));
    }
    let spec = estimate_spectral_constants(&sys.base, sys.zeta, SPECTRAL_TRIALS, seed)?;
    let constants = ConvergenceConstants::new(spec.r, spec.d, sys.fiber.alpha, sys.zeta)?;
    let hz = sys.h_fib().powf(sys.zeta);
    let per_step = hz / (1.0 - sys.fiber.alpha.powf(sys.zeta));

    let runs: Vec<(f64, Vec<f64>)> = (0..pairs)
        .into_par_iter()
        .map(|p| -> Result<(f64, Vec<f64>)> {
            let mut mu = zero_average_pair(sys, seed, p)?;
            let strong = sinf_norm_with(&sys.metric, &mu)?;
            let mut norms = Vec::with_capacity(n_steps);
            for _ in 0..n_steps {
                mu = apply_transfer(sys, &mu)?;
                norms.push(linf_norm_with(&sys.metric, &mu)?);
            }
            Ok((strong, norms))
        })
        .collect::<Result<_>>()?;

    let mut table = Vec::new();
    let mut per_pair_rate = Vec::new();
    let mut initial_strong = Vec::new();
    for (p, (strong, norms)) in runs.into_iter().enumerate() {
        initial_strong.push(strong);
        let series: Vec<(usize, f64)> = norms.iter().enumerate().map(|(k, &v)| (k + 1, v)).collect();
        let rate = fit_log_rate(&series, 4.0 * hz)
            .or_else(|| fit_log_rate(&series, 1e-12))
            .unwrap_or(0.0);
        per_pair_rate.push(rate);
        for (n, v) in series {
            let env = constants.envelope(n, strong);
            let allow = n as f64 * per_step;
            table.push(MarginRow {
                pair: p,
                n,
                measured: v,
                envelope: env,
                grid_allowance: allow,
                pass: v <= env + allow,
            });
        }
    }
    Ok(RateResult {
        empirical_rate: per_pair_rate.iter().cloned().fold(0.0, f64::max),
        per_pair_rate,
        constants,
        table,
        initial_strong,
    })
}

pub const CERTIFICATE_HOLDER_BUDGET: usize = 4096;

/// Compares the sampled |μ̂₀|_ζ with D_reg/(1−β) + 2h_base^ζ.
pub fn regularity_certificate(sys: &SkewSystem, fp: &FixedPointResult, seed: u64) -> Result<Report> {
    let mut rep = Report::new("regularity certificate");
    let (k, g) = regularity_constants(sys, seed)?;
    rep.check(
        "(alpha L)^zeta < 1",
        Some(k.beta),
        String::new(),
        k.hypothesis_holds(),
    );
    rep.check("fixed point converged", None, format!("{} iterations", fp.iterations), fp.converged);
    let est = holder_constant_with(&sys.metric, &fp.measure, CERTIFICATE_HOLDER_BUDGET, seed)?;
    let tol = 2.0 * sys.h_base().powf(sys.zeta);
    rep.check(
        "holder(mu0) <= D_reg/(1-beta) + tol",
        Some(est.value),
        format!("bound {} tol {} pairs {}", sig12(k.bound), sig12(tol), est.pairs),
        est.value <= k.bound + tol,
    );
    rep.note(format!(
        "beta = {}, D_reg = {}, |G|_zeta = {}, eps_rho = {}, L = {}",
        sig12(k.beta),
        sig12(k.d_reg),
        sig12(g),
        sig12(sys.base.meta.eps_rho),
        sig12(sys.base.meta.l_const)
    ));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_map::BaseMapSpec;
    use crate::fiber_map::{FiberMapSpec, Offset};
    use crate::measure_kit::FiberGrid;
    use approx::assert_abs_diff_eq;

    fn system(offset: Offset, n_base: usize, n_fiber: usize) -> SkewSystem {
        let base = BaseMapSpec::doubling();
        let fiber = FiberMapSpec::affine(&base, 0.5, 0.0, offset, 1.0).unwrap();
        SkewSystem::new(base, fiber, 1.0, FiberGrid::new(n_fiber).unwrap())
            .unwrap()
            .with_n_base(n_base)
            .unwrap()
    }

    #[test]
    fn convergence_constants_for_doubling() {
        let c = ConvergenceConstants::new(0.5, 1.0, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(c.beta1, 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(c.alpha_bar, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.d_conv, 2f64.sqrt() + 2.0 * 2f64.sqrt(), epsilon = 1e-12);
        assert!(ConvergenceConstants::new(1.0, 1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn regularity_constants_arithmetic() {
        let k = RegularityConstants::new(0.5, 1.0, 0.01, 0.5, 1.0);
        assert_abs_diff_eq!(k.bound, 1.02, epsilon = 1e-12);
        let k2 = RegularityConstants::new(0.5, 1.0, 0.01, 1.0, 1.0);
        assert_abs_diff_eq!(k2.d_reg, 1.01, epsilon = 1e-12);
        let flat = RegularityConstants::new(0.5, 1.0, 0.0, 0.0, 1.0);
        assert_eq!(flat.bound, 0.0);
        assert!(!RegularityConstants::new(0.9, 1.2, 0.01, 0.0, 1.0).hypothesis_holds());
    }

    #[test]
    fn pure_contraction_settles_at_zero() {
        let sys = system(Offset::Const(0.0), 64, 65);
        let nu = AtomicMeasure::uniform(&sys.grid, 1.0);
        let fp = fixed_point(&sys, &nu, 1e-9, 200).unwrap();
        assert!(fp.converged);
        for f in fp.measure.fibers() {
            let far: f64 = f.atoms().iter().filter(|a| a.0 > sys.h_fib() + 1e-12).map(|a| a.1).sum();
            assert!(far < 1e-12, "mass {far} away from 0");
        }
    }

    #[test]
    fn affine_fixed_point_is_half() {
        let sys = system(Offset::Const(0.25), 64, 65);
        let nu = AtomicMeasure::uniform(&sys.grid, 1.0);
        let fp = fixed_point(&sys, &nu, default_tol(&sys), 100).unwrap();
        assert!(fp.converged);
        let target = AtomicMeasure::dirac(0.5, 1.0).unwrap();
        for f in fp.measure.fibers() {
            assert!(crate::wk_distance(f, &target, 1.0).unwrap() <= 2.0 * sys.h_fib());
        }
        assert!(fp.masses.iter().all(|m| (m - 1.0).abs() < 1e-9));
    }

    #[test]
    fn fixed_points_from_different_seeds_agree() {
        let sys = system(Offset::LinearX(0.5), 64, 65);
        let tol = default_tol(&sys);
        let a = fixed_point(&sys, &AtomicMeasure::dirac(0.0, 1.0).unwrap(), tol, 200).unwrap();
        let b = fixed_point(&sys, &AtomicMeasure::dirac(1.0, 1.0).unwrap(), tol, 200).unwrap();
        assert!(a.converged && b.converged);
        let d = crate::linf_distance(&a.measure, &b.measure).unwrap();
        assert!(d <= 2.0 * tol + sys.h_fib(), "{d}");
    }

    #[test]
    fn history_csv_has_one_row_per_iteration() {
        let sys = system(Offset::Const(0.25), 16, 17);
        let fp = fixed_point(&sys, &AtomicMeasure::dirac(0.0, 1.0).unwrap(), 1e-3, 5).unwrap();
        let csv = fp.history_csv();
        assert_eq!(csv.lines().count(), fp.iterations + 1);
        assert!(csv.starts_with("iteration,residual,holder_estimate,mass\n"));
    }

    #[test]
    fn zero_input_stays_zero() {
        let sys = system(Offset::Const(0.25), 32, 33);
        let nu = AtomicMeasure::dirac(0.3, 1.0).unwrap();
        let m = sys.seed_measure(&nu).unwrap();
        let mut mu = signed_combine(&m, &m, 1.0, -1.0).unwrap();
        for _ in 0..5 {
            mu = apply_transfer(&sys, &mu).unwrap();
            assert_eq!(crate::linf_norm(&mu).unwrap(), 0.0);
        }
    }

    #[test]
    fn fit_log_rate_recovers_geometric_series() {
        let s: Vec<(usize, f64)> = (1..=10).map(|n| (n, 3.0 * 0.7f64.powi(n as i32))).collect();
        assert_abs_diff_eq!(fit_log_rate(&s, 0.0).unwrap(), 0.7, epsilon = 1e-12);
        assert!(fit_log_rate(&s[..1], 0.0).is_none());
    }

    #[test]
    fn x_independent_rate_is_at_most_alpha() {
        let sys = system(Offset::Const(0.25), 128, 257);
        let res = measured_equilibrium_rate(&sys, 3, 12, 5).unwrap();
        assert!(res.all_pass());
        assert!(res.per_pair_rate[0] <= 0.5 + 0.02, "{:?}", res.per_pair_rate);
    }
}
