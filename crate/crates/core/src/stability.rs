//! Deterministic perturbation families F_δ and the quantitative stability
//! of their invariant measures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::base_map::{circle_dist, estimate_spectral_constants, transfer_density, DensityOnGrid};
use crate::equilibrium::{
    default_tol, fixed_point, regularity_constants, ConvergenceConstants, FixedPointResult, DEFAULT_MAX_ITER,
};
use crate::error::{param, Result};
use crate::leafwise::{holder_constant_with, linf_distance_with, LeafwiseMeasure};
use crate::measure_kit::AtomicMeasure;
use crate::report::{sig12, Report};
use crate::transfer::{apply_transfer, SkewSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbationKind {
    /// G_δ = G + δ.
    FiberTranslation,
    /// f_δ = f + δ (mod 1), G re-attached to the rotated branches.
    BaseRotation,
    /// Both of the above.
    Composite,
    /// G_δ = G − δy.
    FiberSlope,
}

impl PerturbationKind {
    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::FiberTranslation => "fiber-translation",
            PerturbationKind::BaseRotation => "base-rotation",
            PerturbationKind::Composite => "composite",
            PerturbationKind::FiberSlope => "fiber-slope",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            PerturbationKind::FiberTranslation,
            PerturbationKind::BaseRotation,
            PerturbationKind::Composite,
            PerturbationKind::FiberSlope,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

pub const DEFAULT_DELTA_MAX: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationFamily {
    pub unperturbed: SkewSystem,
    pub kind: PerturbationKind,
    pub delta_max: f64,
}

impl PerturbationFamily {
    /// Checks that F_δ is well defined (fiber range inside K) at δ_max.
    pub fn new(unperturbed: SkewSystem, kind: PerturbationKind, delta_max: f64) -> Result<Self> {
        if !(delta_max > 0.0 && delta_max < 1.0) {
            return Err(param("delta_max", format!("{delta_max} is not in (0,1)")));
        }
        let fam = PerturbationFamily {
            unperturbed,
            kind,
            delta_max,
        };
        fam.system(delta_max)?;
        Ok(fam)
    }

    fn check_delta(&self, delta: f64) -> Result<()> {
        if !(0.0..=self.delta_max).contains(&delta) {
            return Err(param(
                "delta",
                format!("{delta} is outside [0, {}]", self.delta_max),
            ));
        }
        Ok(())
    }

    pub fn system(&self, delta: f64) -> Result<SkewSystem> {
        self.check_delta(delta)?;
        let s0 = &self.unperturbed;
        if delta == 0.0 {
            return Ok(s0.clone());
        }
        let mut s = s0.clone();
        match self.kind {
            PerturbationKind::FiberTranslation => {
                s.fiber = s0.fiber.shifted(delta)?;
            }
            PerturbationKind::BaseRotation => {
                s.base = s0.base.rotated(delta);
                s.fiber = s0.fiber.over(&s.base)?;
            }
            PerturbationKind::Composite => {
                s.base = s0.base.rotated(delta);
                s.fiber = s0.fiber.over(&s.base)?.shifted(delta)?;
            }
            PerturbationKind::FiberSlope => {
                let mut g = s0.fiber.clone();
                g.slope -= delta;
                g.alpha = g.slope.abs() + g.wobble.abs();
                g.validate()?;
                s.fiber = g;
            }
        }
        Ok(s)
    }

    /// R(δ) as declared for the shipped families.
    pub fn r_declared(&self, delta: f64) -> f64 {
        let k = self.unperturbed.base.deg() as f64;
        match self.kind {
            PerturbationKind::FiberTranslation | PerturbationKind::FiberSlope => delta,
            PerturbationKind::BaseRotation => delta / k,
            PerturbationKind::Composite => delta.max(delta / k),
        }
    }
}

/// Sampled maxima of the three closeness conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct RBreakdown {
    /// Σᵢ |ρ_δ(γ_{δ,i}) − ρ₀(γ_{0,i})|.
    pub jacobian: f64,
    /// maxᵢ d(γ_{0,i}, γ_{δ,i}).
    pub branches: f64,
    /// sup |G₀ − G_δ|.
    pub fiber: f64,
    pub r: f64,
}

pub fn compute_r(fam: &PerturbationFamily, delta: f64, n_samples: usize, seed: u64) -> Result<RBreakdown> {
    let s0 = &fam.unperturbed;
    let sd = fam.system(delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut jac, mut br, mut fib) = (0.0f64, 0.0f64, 0.0f64);
    let mut p0 = Vec::with_capacity(s0.base.deg());
    let mut pd = Vec::with_capacity(s0.base.deg());
    for s in 0..n_samples.max(1) {
        let x: f64 = if s == 0 { 0.0 } else { rng.gen_range(0.0..1.0) };
        p0.clear();
        pd.clear();
        s0.base.for_each_preimage(x, |_, g, r| p0.push((g, r)));
        sd.base.for_each_preimage(x, |_, g, r| pd.push((g, r)));
        if p0.len() == pd.len() {
            jac = jac.max(p0.iter().zip(&pd).map(|(a, b)| (a.1 - b.1).abs()).sum());
            br = p0
                .iter()
                .zip(&pd)
                .map(|(a, b)| circle_dist(a.0, b.0))
                .fold(br, f64::max);
        } else {
            jac = f64::INFINITY;
            br = f64::INFINITY;
        }
        let y: f64 = match s % 3 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.0..=1.0),
        };
        fib = fib.max((s0.fiber.eval_raw(x, y) - sd.fiber.eval_raw(x, y)).abs());
    }
    Ok(RBreakdown {
        jacobian: jac,
        branches: br,
        fiber: fib,
        r: jac.max(br).max(fib),
    })
}

/// sup over probes and sampled x of 1/(|det Df_δ|·|det Df₀|) = ρ_δ·ρ₀.
pub fn sample_k5(fam: &PerturbationFamily, probes: &[f64], n_samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k5 = 0.0f64;
    for &d in probes {
        let sd = fam.system(d)?;
        for _ in 0..n_samples.max(1) {
            let x = rng.gen_range(0.0..1.0);
            k5 = k5.max(sd.base.rho(x) * fam.unperturbed.base.rho(x));
        }
    }
    Ok(k5)
}

/// Constants of the (R(δ), ζ)-family and of the uniform Hölder bound.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityConstants {
    /// Bound on ‖μ_δ‖_{S^∞}.
    pub m: f64,
    pub rho2: f64,
    pub c2: f64,
    pub m2: f64,
    pub k5: f64,
    pub g0_holder: f64,
    pub beta_u: f64,
    pub d_u: f64,
}

impl StabilityConstants {
    pub fn b_u(&self) -> f64 {
        if self.beta_u < 1.0 {
            self.d_u / (1.0 - self.beta_u)
        } else {
            f64::INFINITY
        }
    }

    /// C₁ = |G₀|_ζ + 1 + K₅ + B_u.
    pub fn c1(&self) -> f64 {
        self.g0_holder + 1.0 + self.k5 + self.b_u()
    }

    /// The constant of the operator closeness condition; equal to C₁.
    pub fn c(&self) -> f64 {
        self.c1()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifiedBound {
    pub n: u32,
    pub bound_n: f64,
    pub bound_closed: f64,
}

/// N = ⌊log δ / log ρ₂⌋, the bound before and after closing the sum with
/// N ≤ log δ / log ρ₂ and ρ₂^N ≤ δ/ρ₂.
pub fn certified_stability_bound(k: &StabilityConstants, zeta: f64, delta: f64, r_delta: f64) -> Result<CertifiedBound> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(param("delta", format!("{delta} is not in (0,1)")));
    }
    if !(k.rho2 > 0.0 && k.rho2 < 1.0) {
        return Err(param("rho2", format!("{} is not in (0,1)", k.rho2)));
    }
    let q = delta.ln() / k.rho2.ln();
    // The epsilon keeps δ = ρ₂^k from landing on k − 1 through rounding.
    let n = (q + 1e-9).floor().max(0.0);
    let rz = r_delta.powf(zeta);
    let c = k.c();
    let bound_n = rz * c * k.m2 * n + 2.0 * k.c2 * k.rho2.powf(n) * k.m;
    let bound_closed =
        rz * delta.ln().abs() * (c * k.m2 / k.rho2.ln().abs() + 2.0 * k.c2 * k.m / k.rho2);
    Ok(CertifiedBound {
        n: n as u32,
        bound_n,
        bound_closed,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    /// Defaults to min(max(1e−6, 2h_fib^ζ), 0.01·R(δ)^ζ) per row, so the
    /// stopping error stays small against the gap being measured; μ₀ uses
    /// the smallest row tolerance.
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub seed: u64,
    pub holder_budget: usize,
    pub r_samples: usize,
    pub spectral_trials: usize,
    /// δ values where the uniform constants are sampled; 0 is always added.
    pub probes: Vec<f64>,
    /// Rows with measured gap at or below this are left out of the fit.
    pub fit_min_gap: f64,
    /// Fiber seed ν; uniform on the fiber grid when `None`.
    pub seed_nu: Option<AtomicMeasure>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            tol: None,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
            holder_budget: 1024,
            r_samples: 2048,
            spectral_trials: 16,
            probes: vec![0.05, 0.1],
            fit_min_gap: 0.0,
            seed_nu: None,
        }
    }
}

impl SweepConfig {
    fn tol_for(&self, sys: &SkewSystem) -> f64 {
        self.tol.unwrap_or_else(|| default_tol(sys))
    }

    fn tol_for_row(&self, sys: &SkewSystem, r: f64) -> f64 {
        self.tol
            .unwrap_or_else(|| default_tol(sys).min(1e-2 * r.powf(sys.zeta)).max(1e-12))
    }

    fn nu_for(&self, sys: &SkewSystem) -> AtomicMeasure {
        self.seed_nu
            .clone()
            .unwrap_or_else(|| AtomicMeasure::uniform(&sys.grid, sys.zeta))
    }

    fn probes_with_zero(&self, fam: &PerturbationFamily) -> Vec<f64> {
        let mut p: Vec<f64> = std::iter::once(0.0)
            .chain(self.probes.iter().cloned().filter(|&d| d > 0.0 && d <= fam.delta_max))
            .collect();
        p.sort_by(f64::total_cmp);
        p.dedup();
        p
    }
}

/// Per-probe record of the uniform constants.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConstants {
    pub delta: f64,
    pub deg: usize,
    pub r: f64,
    pub d: f64,
    pub fit_ok: bool,
    pub beta: f64,
    pub d_reg: f64,
    pub holder_g: f64,
    pub marginal_defect: f64,
}

pub fn probe_constants(fam: &PerturbationFamily, probes: &[f64], cfg: &SweepConfig) -> Result<Vec<ProbeConstants>> {
    probes
        .par_iter()
        .map(|&d| {
            let s = fam.system(d)?;
            let spec = estimate_spectral_constants(&s.base, s.zeta, cfg.spectral_trials, cfg.seed)?;
            let (reg, g) = regularity_constants(&s, cfg.seed)?;
            let one = DensityOnGrid::constant(s.n_base, s.zeta, 1.0)?;
            let p1 = transfer_density(&s.base, &one)?;
            let defect = p1.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
            Ok(ProbeConstants {
                delta: d,
                deg: s.base.deg(),
                r: spec.r,
                d: spec.d,
                fit_ok: spec.fit_ok,
                beta: reg.beta,
                d_reg: reg.d_reg,
                holder_g: g,
                marginal_defect: defect,
            })
        })
        .collect()
}

/// Assembles the family constants from sampled per-probe quantities:
/// ρ₂ = β₁ and C₂ = D_conv from the worst probe, M = D + 1, M₂ = 1.
pub fn stability_constants(fam: &PerturbationFamily, cfg: &SweepConfig) -> Result<(StabilityConstants, Vec<ProbeConstants>)> {
    let probes = cfg.probes_with_zero(fam);
    let pcs = probe_constants(fam, &probes, cfg)?;
    let r = pcs.iter().map(|p| p.r).fold(0.0, f64::max);
    let d = pcs.iter().map(|p| p.d).fold(0.0, f64::max);
    let alpha = probes
        .iter()
        .map(|&p| fam.system(p).map(|s| s.fiber.alpha))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let conv = ConvergenceConstants::new(r, d, alpha, fam.unperturbed.zeta)?;
    let k5 = sample_k5(fam, &probes, cfg.r_samples, cfg.seed)?;
    let k = StabilityConstants {
        m: d + 1.0,
        rho2: conv.beta1,
        c2: conv.d_conv,
        m2: 1.0,
        k5,
        g0_holder: pcs[0].holder_g,
        beta_u: pcs.iter().map(|p| p.beta).fold(0.0, f64::max),
        d_u: pcs.iter().map(|p| p.d_reg).fold(0.0, f64::max),
    };
    Ok((k, pcs))
}

/// Hypotheses of admissible R(δ)-perturbations on the probe values.
pub fn check_admissibility(fam: &PerturbationFamily, cfg: &SweepConfig) -> Result<Report> {
    let mut rep = Report::new(format!("admissibility: {}", fam.kind.name()));
    let (k, pcs) = stability_constants(fam, cfg)?;
    let r_max = pcs.iter().map(|p| p.r).fold(0.0, f64::max);
    let d_max = pcs.iter().map(|p| p.d).fold(0.0, f64::max);
    let spread = pcs.iter().map(|p| p.r).fold(f64::INFINITY, f64::min);
    rep.check(
        "A1 uniform spectral constants",
        Some(r_max),
        format!("lambda in [{}, {}], D <= {}", sig12(spread), sig12(r_max), sig12(d_max)),
        pcs.iter().all(|p| p.fit_ok) && r_max < 1.0 && d_max.is_finite(),
    );
    rep.check("A2 sup beta_delta < 1", Some(k.beta_u), String::new(), k.beta_u < 1.0);
    rep.check("A2 sup D_2,delta < inf", Some(k.d_u), String::new(), k.d_u.is_finite());
    let deg0 = fam.unperturbed.base.deg();
    rep.check(
        "U1 deg(f_delta) = deg(f_0)",
        None,
        format!("degrees {:?}", pcs.iter().map(|p| p.deg).collect::<Vec<_>>()),
        pcs.iter().all(|p| p.deg == deg0),
    );
    rep.check("U1 K5 < inf", Some(k.k5), String::new(), k.k5.is_finite());
    let defect = pcs.iter().map(|p| p.marginal_defect).fold(0.0, f64::max);
    rep.check("m1 invariant under f_delta", Some(defect), String::new(), defect < 1e-9);
    let mut r_ok = true;
    let mut worst = 0.0f64;
    for p in &pcs {
        let rb = compute_r(fam, p.delta, cfg.r_samples, cfg.seed)?;
        worst = worst.max(rb.r - fam.r_declared(p.delta));
        r_ok &= rb.r <= fam.r_declared(p.delta) + 1e-9;
    }
    rep.check("U2 sampled R <= declared R", Some(worst), "largest excess".to_string(), r_ok);
    rep.check("P3 rho2 < 1", Some(k.rho2), format!("C2 = {}", sig12(k.c2)), k.rho2 < 1.0);
    rep.note(format!(
        "C1 = {} (|G0| {} + 1 + K5 {} + B_u {}), M = {}, M2 = {}",
        sig12(k.c1()),
        sig12(k.g0_holder),
        sig12(k.k5),
        sig12(k.b_u()),
        sig12(k.m),
        sig12(k.m2)
    ));
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorGap {
    pub gap: f64,
    pub bound: f64,
}

/// ‖(F₀* − F_δ*)μ_δ‖_∞ against C₁R̂(δ)^ζ.
pub fn operator_gap(
    fam: &PerturbationFamily,
    delta: f64,
    mu_delta: &LeafwiseMeasure,
    k: &StabilityConstants,
    r_hat: f64,
) -> Result<OperatorGap> {
    let s0 = &fam.unperturbed;
    let sd = fam.system(delta)?;
    let a = apply_transfer(s0, mu_delta)?;
    let b = apply_transfer(&sd, mu_delta)?;
    Ok(OperatorGap {
        gap: linf_distance_with(&s0.metric, &a, &b)?,
        bound: k.c1() * r_hat.powf(s0.zeta),
    })
}

/// 2(h_base^ζ + h_fib^ζ).
pub fn grid_tolerance(sys: &SkewSystem) -> f64 {
    2.0 * (sys.h_base().powf(sys.zeta) + sys.h_fib().powf(sys.zeta))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub r: f64,
    pub n: u32,
    pub measured_gap: f64,
    pub certified_n: f64,
    pub certified_closed: f64,
    pub operator_gap: f64,
    pub operator_bound: f64,
    pub holder_delta: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepFit {
    /// c in measured ≈ c·R(δ)^ζ|log δ|, fitted in log space.
    pub c: f64,
    pub residuals: Vec<f64>,
    /// Free log-log slope of measured against δ.
    pub slope: f64,
    pub rows_used: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub constants: StabilityConstants,
    pub probes: Vec<ProbeConstants>,
    pub fit: Option<SweepFit>,
    pub grid_tol: f64,
    pub zeta: f64,
    pub mu0_converged: bool,
}

impl SweepResult {
    pub fn rows_within_certified(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.measured_gap <= r.certified_closed + self.grid_tol)
    }

    pub fn operator_gaps_within_bound(&self) -> bool {
        self.rows.iter().all(|r| r.operator_gap <= r.operator_bound + self.grid_tol)
    }

    pub fn holder_within_uniform_bound(&self) -> bool {
        let b = self.constants.b_u();
        self.rows.iter().all(|r| r.holder_delta <= b + self.grid_tol)
    }

    pub fn all_converged(&self) -> bool {
        self.mu0_converged && self.rows.iter().all(|r| r.converged)
    }

    pub fn all_pass(&self) -> bool {
        self.all_converged()
            && self.rows_within_certified()
            && self.operator_gaps_within_bound()
            && self.holder_within_uniform_bound()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "delta,R,measured_gap,certified_N,certified_closed,operator_gap,operator_bound,holder_delta,converged\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                sig12(r.delta),
                sig12(r.r),
                sig12(r.measured_gap),
                sig12(r.certified_n),
                sig12(r.certified_closed),
                sig12(r.operator_gap),
                sig12(r.operator_bound),
                sig12(r.holder_delta),
                r.converged
            ));
        }
        s
    }

    /// log10 δ, log10 measured, log10 certified_closed.
    pub fn plot_data(&self) -> String {
        let mut s = String::from("# log10(delta) log10(measured_gap) log10(certified_closed)\n");
        for r in &self.rows {
            if r.measured_gap > 0.0 && r.certified_closed > 0.0 {
                s.push_str(&format!(
                    "{} {} {}\n",
                    sig12(r.delta.log10()),
                    sig12(r.measured_gap.log10()),
                    sig12(r.certified_closed.log10())
                ));
            }
        }
        s
    }
}

fn fit_rows(rows: &[SweepRow], zeta: f64, min_gap: f64) -> Option<SweepFit> {
    let used: Vec<&SweepRow> = rows
        .iter()
        .filter(|r| r.converged && r.measured_gap > min_gap && r.measured_gap > 0.0 && r.r > 0.0)
        .collect();
    if used.len() < 2 {
        return None;
    }
    let k = used.len() as f64;
    let model = |r: &SweepRow| r.r.powf(zeta) * r.delta.ln().abs();
    let log_c = used.iter().map(|r| r.measured_gap.ln() - model(r).ln()).sum::<f64>() / k;
    let residuals = used
        .iter()
        .map(|r| r.measured_gap.ln() - model(r).ln() - log_c)
        .collect();
    let xs: Vec<f64> = used.iter().map(|r| r.delta.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|r| r.measured_gap.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(SweepFit {
        c: log_c.exp(),
        residuals,
        slope: sxy / sxx,
        rows_used: used.len(),
    })
}

/// Fixed point of F_δ for each δ, compared with μ₀ and the certified bound.
pub fn stability_sweep(fam: &PerturbationFamily, deltas: &[f64], cfg: &SweepConfig) -> Result<SweepResult> {
    for &d in deltas {
        if !(d > 0.0 && d <= fam.delta_max) {
            return Err(param("delta", format!("{d} is outside (0, {}]", fam.delta_max)));
        }
    }
    let s0 = &fam.unperturbed;
    let (k, probes) = stability_constants(fam, cfg)?;
    let rbs: Vec<RBreakdown> = deltas
        .iter()
        .map(|&d| compute_r(fam, d, cfg.r_samples, cfg.seed))
        .collect::<Result<_>>()?;
    let tol0 = rbs
        .iter()
        .map(|rb| cfg.tol_for_row(s0, rb.r))
        .fold(cfg.tol_for(s0), f64::min);
    let fp0 = fixed_point(s0, &cfg.nu_for(s0), tol0, cfg.max_iter)?;

    let rows: Vec<SweepRow> = deltas
        .par_iter()
        .zip(rbs.par_iter())
        .map(|(&d, rb)| -> Result<SweepRow> {
            let sd = fam.system(d)?;
            let fp = fixed_point(&sd, &cfg.nu_for(&sd), cfg.tol_for_row(&sd, rb.r), cfg.max_iter)?;
            let measured = linf_distance_with(&s0.metric, &fp.measure, &fp0.measure)?;
            let og = operator_gap(fam, d, &fp.measure, &k, rb.r)?;
            let cb = certified_stability_bound(&k, s0.zeta, d, rb.r)?;
            let h = holder_constant_with(&sd.metric, &fp.measure, cfg.holder_budget, cfg.seed)?.value;
            Ok(SweepRow {
                delta: d,
                r: rb.r,
                n: cb.n,
                measured_gap: measured,
                certified_n: cb.bound_n,
                certified_closed: cb.bound_closed,
                operator_gap: og.gap,
                operator_bound: og.bound,
                holder_delta: h,
                converged: fp.converged && fp0.converged,
            })
        })
        .collect::<Result<_>>()?;
    let fit = fit_rows(&rows, s0.zeta, cfg.fit_min_gap);
    Ok(SweepResult {
        rows,
        constants: k,
        probes,
        fit,
        grid_tol: grid_tolerance(s0),
        zeta: s0.zeta,
        mu0_converged: fp0.converged,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniformHolder {
    pub b_u: f64,
    pub beta_u: f64,
    pub d_u: f64,
    /// (δ, sampled |μ̂_δ|_ζ, converged).
    pub estimates: Vec<(f64, f64, bool)>,
    pub tol: f64,
}

impl UniformHolder {
    pub fn hypothesis_holds(&self) -> bool {
        self.beta_u < 1.0
    }

    pub fn pass(&self) -> bool {
        self.hypothesis_holds()
            && self
                .estimates
                .iter()
                .all(|&(_, h, c)| c && h <= self.b_u + self.tol)
    }
}

/// B_u = D_u/(1 − β_u) from sup-based constants over the probes, and the
/// sampled Hölder constant of each μ̂_δ.
pub fn uniform_holder_bound(fam: &PerturbationFamily, probes: &[f64], cfg: &SweepConfig) -> Result<UniformHolder> {
    let mut cfg = cfg.clone();
    cfg.probes = probes.to_vec();
    let all = cfg.probes_with_zero(fam);
    let pcs: Vec<(f64, f64)> = all
        .iter()
        .map(|&d| {
            let s = fam.system(d)?;
            let (reg, _) = regularity_constants(&s, cfg.seed)?;
            Ok((reg.beta, reg.d_reg))
        })
        .collect::<Result<_>>()?;
    let beta_u = pcs.iter().map(|p| p.0).fold(0.0, f64::max);
    let d_u = pcs.iter().map(|p| p.1).fold(0.0, f64::max);
    let b_u = if beta_u < 1.0 { d_u / (1.0 - beta_u) } else { f64::INFINITY };
    let estimates: Vec<(f64, f64, bool)> = all
        .par_iter()
        .map(|&d| {
            let s = fam.system(d)?;
            let fp: FixedPointResult = fixed_point(&s, &cfg.nu_for(&s), cfg.tol_for(&s), cfg.max_iter)?;
            let h = holder_constant_with(&s.metric, &fp.measure, cfg.holder_budget, cfg.seed)?.value;
            Ok((d, h, fp.converged))
        })
        .collect::<Result<_>>()?;
    Ok(UniformHolder {
        b_u,
        beta_u,
        d_u,
        estimates,
        tol: grid_tolerance(&fam.unperturbed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_map::BaseMapSpec;
    use crate::fiber_map::{FiberMapSpec, Offset};
    use crate::measure_kit::FiberGrid;
    use approx::assert_abs_diff_eq;

    fn family(kind: PerturbationKind, offset: Offset, n_base: usize, n_fiber: usize) -> PerturbationFamily {
        let base = BaseMapSpec::doubling();
        let fiber = FiberMapSpec::affine(&base, 0.5, 0.0, offset, 1.0).unwrap();
        let sys = SkewSystem::new(base, fiber, 1.0, FiberGrid::new(n_fiber).unwrap())
            .unwrap()
            .with_n_base(n_base)
            .unwrap();
        PerturbationFamily::new(sys, kind, DEFAULT_DELTA_MAX).unwrap()
    }

    fn unit_constants(rho2: f64) -> StabilityConstants {
        StabilityConstants {
            m: 1.0,
            rho2,
            c2: 1.0,
            m2: 1.0,
            k5: 0.0,
            g0_holder: 0.0,
            beta_u: 0.0,
            d_u: 0.0,
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [
            PerturbationKind::FiberTranslation,
            PerturbationKind::BaseRotation,
            PerturbationKind::Composite,
            PerturbationKind::FiberSlope,
        ] {
            assert_eq!(PerturbationKind::parse(k.name()), Some(k));
        }
        assert_eq!(PerturbationKind::parse("noise"), None);
    }

    #[test]
    fn translation_breakdown() {
        let fam = family(PerturbationKind::FiberTranslation, Offset::Const(0.25), 16, 17);
        let rb = compute_r(&fam, 0.03, 500, 1).unwrap();
        assert_eq!(rb.jacobian, 0.0);
        assert_eq!(rb.branches, 0.0);
        assert_abs_diff_eq!(rb.fiber, 0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(rb.r, fam.r_declared(0.03), epsilon = 1e-15);
    }

    #[test]
    fn rotation_breakdown() {
        let fam = family(PerturbationKind::BaseRotation, Offset::Const(0.25), 16, 17);
        let rb = compute_r(&fam, 0.04, 500, 2).unwrap();
        assert_eq!(rb.jacobian, 0.0);
        assert_abs_diff_eq!(rb.branches, 0.02, epsilon = 1e-12);
        assert_eq!(rb.fiber, 0.0);
    }

    #[test]
    fn zero_delta_gives_zero_r() {
        for kind in [PerturbationKind::FiberTranslation, PerturbationKind::Composite] {
            let fam = family(kind, Offset::Const(0.25), 16, 17);
            assert_eq!(compute_r(&fam, 0.0, 100, 3).unwrap().r, 0.0);
        }
        let fam = family(PerturbationKind::FiberSlope, Offset::LinearX(0.5), 16, 17);
        assert_eq!(compute_r(&fam, 0.0, 100, 3).unwrap().r, 0.0);
    }

    #[test]
    fn translation_must_fit_inside_k() {
        let base = BaseMapSpec::doubling();
        let fiber = FiberMapSpec::affine(&base, 0.5, 0.0, Offset::LinearX(0.5), 1.0).unwrap();
        let sys = SkewSystem::new(base, fiber, 1.0, FiberGrid::new(9).unwrap()).unwrap();
        assert!(PerturbationFamily::new(sys.clone(), PerturbationKind::FiberTranslation, 0.1).is_err());
        assert!(PerturbationFamily::new(sys, PerturbationKind::FiberSlope, 0.1).is_ok());
    }

    #[test]
    fn certified_bound_arithmetic() {
        let k = unit_constants(0.5);
        let d = 2f64.powi(-10);
        let b = certified_stability_bound(&k, 1.0, d, d).unwrap();
        assert_eq!(b.n, 10);
        assert_eq!(b.bound_n, 12.0 * d);
        for e in 1..=20 {
            let d = 2f64.powi(-e);
            let b = certified_stability_bound(&k, 1.0, d, d).unwrap();
            assert_eq!(b.n, e as u32);
            assert!(b.bound_n <= b.bound_closed);
        }
        assert!(certified_stability_bound(&k, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn certified_bound_shrinks_with_delta() {
        let k = StabilityConstants {
            m: 2.0,
            rho2: 0.7,
            c2: 3.0,
            m2: 1.0,
            k5: 0.25,
            g0_holder: 0.0,
            beta_u: 0.5,
            d_u: 0.01,
        };
        // R(δ)|log δ| = δ|log δ| decreases once δ < 1/e.
        let mut prev = f64::INFINITY;
        for e in 3..30 {
            let d = 0.7f64.powi(e);
            let b = certified_stability_bound(&k, 1.0, d, d).unwrap();
            assert!(b.bound_closed <= prev);
            prev = b.bound_closed;
        }
    }

    #[test]
    fn c1_is_assembled_from_parts() {
        let mut k = unit_constants(0.5);
        k.g0_holder = 0.5;
        k.k5 = 0.25;
        k.beta_u = 0.5;
        k.d_u = 0.51;
        assert_abs_diff_eq!(k.b_u(), 1.02, epsilon = 1e-12);
        assert_abs_diff_eq!(k.c1(), 0.5 + 1.0 + 0.25 + 1.02, epsilon = 1e-12);
    }

    #[test]
    fn translation_admissibility() {
        let fam = family(PerturbationKind::FiberTranslation, Offset::Const(0.25), 64, 33);
        let rep = check_admissibility(&fam, &SweepConfig::default()).unwrap();
        assert!(rep.all_pass(), "{rep}");
        let (k, _) = stability_constants(&fam, &SweepConfig::default()).unwrap();
        assert_abs_diff_eq!(k.k5, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(k.b_u(), 0.02, epsilon = 1e-12);
    }

    #[test]
    fn operator_gap_for_translation() {
        let fam = family(PerturbationKind::FiberTranslation, Offset::Const(0.25), 32, 257);
        let (k, _) = stability_constants(&fam, &SweepConfig::default()).unwrap();
        let mu = fam.unperturbed.seed_measure(&AtomicMeasure::dirac(0.5, 1.0).unwrap()).unwrap();
        let zero = operator_gap(&fam, 0.0, &mu, &k, 0.0).unwrap();
        assert_eq!(zero.gap, 0.0);
        // 0.25 + 0.25 + δ and 0.5 + δ both land on nodes for δ = 1/64.
        let d = 1.0 / 64.0;
        let og = operator_gap(&fam, d, &mu, &k, d).unwrap();
        assert_abs_diff_eq!(og.gap, d, epsilon = 1e-12);
        assert!(og.gap <= og.bound);
    }

    #[test]
    fn small_translation_sweep() {
        let fam = family(PerturbationKind::FiberTranslation, Offset::Const(0.25), 32, 257);
        let deltas: Vec<f64> = (4..=7).map(|k| 2f64.powi(-k)).collect();
        let res = stability_sweep(&fam, &deltas, &SweepConfig::default()).unwrap();
        assert!(res.all_pass());
        for r in &res.rows {
            assert_abs_diff_eq!(r.measured_gap, 2.0 * r.delta, epsilon = res.grid_tol);
        }
        let fit = res.fit.clone().unwrap();
        assert_abs_diff_eq!(fit.slope, 1.0, epsilon = 0.05);
        assert_eq!(res.to_csv().lines().count(), 5);
    }
}
