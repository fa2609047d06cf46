//! Expanding circle maps, their Perron-Frobenius operator on grid densities,
//! and the hypothesis checks on the base.
//!
//! The shipped family is the linear k-branch map f(x) = kx + c mod 1, which
//! preserves Lebesgue measure, so m₁ = Leb and ρ ≡ 1/k.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param, Error, Result};
use crate::report::Report;

/// Arc of the circle starting at `start` with length `len`, half open.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arc {
    pub start: f64,
    pub len: f64,
}

impl Arc {
    pub fn contains(&self, x: f64) -> bool {
        let off = (x - self.start).rem_euclid(1.0);
        off < self.len || self.len >= 1.0
    }

    /// Offset of `x` from the arc start, going counterclockwise.
    pub fn offset(&self, x: f64) -> f64 {
        (x - self.start).rem_euclid(1.0)
    }
}

/// Shortest distance on the circle [0,1).
#[inline]
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(1.0);
    d.min(1.0 - d)
}

#[derive(Clone, Debug, PartialEq)]
pub enum BaseFamily {
    /// f(x) = kx + shift mod 1.
    Linear { k: usize, shift: f64 },
}

/// Constants entering (f1)-(f3): σ, L, ε_ρ, the covering count q and the
/// region 𝒜 as a union of arcs.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisMeta {
    pub sigma: f64,
    pub l_const: f64,
    pub eps_rho: f64,
    pub q_cover: usize,
    pub region_a: Vec<Arc>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseMapSpec {
    pub family: BaseFamily,
    pub meta: HypothesisMeta,
}

impl BaseMapSpec {
    /// Linear k-branch map with metadata σ = k, L = 1, ε_ρ = 0.01, q = 1 and
    /// 𝒜 = the whole circle.
    pub fn linear(k: usize, shift: f64) -> Result<Self> {
        if k < 2 {
            return Err(param("k", "an expanding linear map needs k >= 2"));
        }
        if !shift.is_finite() {
            return Err(param("c", "shift must be finite"));
        }
        Ok(BaseMapSpec {
            family: BaseFamily::Linear {
                k,
                shift: shift.rem_euclid(1.0),
            },
            meta: HypothesisMeta {
                sigma: k as f64,
                l_const: 1.0,
                eps_rho: 0.01,
                q_cover: 1,
                region_a: vec![Arc {
                    start: 0.0,
                    len: 1.0,
                }],
            },
        })
    }

    pub fn doubling() -> Self {
        Self::linear(2, 0.0).expect("valid")
    }

    pub fn with_meta(mut self, meta: HypothesisMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn deg(&self) -> usize {
        match self.family {
            BaseFamily::Linear { k, .. } => k,
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        check_point(x)?;
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        match self.family {
            BaseFamily::Linear { k, shift } => wrap(k as f64 * x + shift),
        }
    }

    /// Preimages γᵢ ∈ Pᵢ of `x`, in branch order, with ρ(γᵢ).
    pub fn inverse_branches(&self, x: f64) -> Result<Vec<(f64, f64)>> {
        check_point(x)?;
        let mut out = Vec::with_capacity(self.deg());
        self.for_each_preimage(x, |_, g, r| out.push((g, r)));
        Ok(out)
    }

    #[inline]
    pub(crate) fn for_each_preimage(&self, x: f64, mut f: impl FnMut(usize, f64, f64)) {
        match self.family {
            BaseFamily::Linear { k, shift } => {
                let kf = k as f64;
                for i in 0..k {
                    f(i, wrap((x - shift + i as f64) / kf), 1.0 / kf);
                }
            }
        }
    }

    /// ρ = 1/|f'|.
    pub fn rho(&self, x: f64) -> f64 {
        match self.family {
            BaseFamily::Linear { k, .. } => {
                let _ = x;
                1.0 / k as f64
            }
        }
    }

    /// ‖Df(x)⁻¹‖, the local contraction of inverse branches.
    pub fn local_contraction(&self, x: f64) -> f64 {
        self.rho(x)
    }

    /// Index i with x ∈ Pᵢ.
    pub fn branch_of(&self, x: f64) -> usize {
        match self.family {
            BaseFamily::Linear { k, shift } => {
                let u = (k as f64 * x + shift).floor() as i64;
                u.rem_euclid(k as i64) as usize
            }
        }
    }

    /// The partition P₀, …, P_{deg−1} into injectivity arcs.
    pub fn partition(&self) -> Vec<Arc> {
        match self.family {
            BaseFamily::Linear { k, shift } => {
                let kf = k as f64;
                (0..k)
                    .map(|i| Arc {
                        start: ((i as f64 - shift) / kf).rem_euclid(1.0),
                        len: 1.0 / kf,
                    })
                    .collect()
            }
        }
    }

    /// The same map post-composed with a rotation by `delta`.
    pub fn rotated(&self, delta: f64) -> Self {
        match self.family {
            BaseFamily::Linear { k, shift } => BaseMapSpec {
                family: BaseFamily::Linear {
                    k,
                    shift: (shift + delta).rem_euclid(1.0),
                },
                meta: self.meta.clone(),
            },
        }
    }
}

#[inline]
fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(1.0);
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

fn check_point(x: f64) -> Result<()> {
    if (0.0..1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "base point",
            value: x,
            domain: "[0,1)",
        })
    }
}

pub fn eval_base(f: &BaseMapSpec, x: f64) -> Result<f64> {
    f.eval(x)
}

pub fn inverse_branches(f: &BaseMapSpec, x: f64) -> Result<Vec<(f64, f64)>> {
    f.inverse_branches(x)
}

/// How distances between grid points are measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Topology {
    #[default]
    Circle,
    /// Plain |x − y| on [0,1], no wrap.
    Interval,
}

/// Real values at the cell centers (j + ½)/n of a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOnGrid {
    values: Vec<f64>,
    zeta: f64,
    topology: Topology,
}

impl DensityOnGrid {
    pub fn new(values: Vec<f64>, zeta: f64) -> Result<Self> {
        crate::measure_kit::check_zeta(zeta)?;
        if values.is_empty() {
            return Err(param("n_base", "empty grid"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain {
                what: "density value",
                value: *v,
                domain: "finite reals",
            });
        }
        Ok(DensityOnGrid {
            values,
            zeta,
            topology: Topology::Circle,
        })
    }

    pub fn from_fn(n: usize, zeta: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..n).map(|j| f(cell_center(j, n))).collect();
        Self::new(values, zeta)
    }

    pub fn constant(n: usize, zeta: f64, value: f64) -> Result<Self> {
        Self::new(vec![value; n], zeta)
    }

    pub fn with_topology(mut self, topology: Topology) -> Self {
        self.topology = topology;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.values.len() as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        cell_center(j, self.values.len())
    }

    /// Cell-average integral Σ φⱼ h.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spacing()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// H_ζ over the grid.
    pub fn holder(&self) -> f64 {
        holder_seminorm(&self.values, self.zeta, self.topology)
    }

    /// |φ|_ζ = H_ζ(φ) + |φ|_∞.
    pub fn holder_norm(&self) -> f64 {
        self.holder() + self.sup()
    }

    pub fn scaled(&self, a: f64) -> Self {
        DensityOnGrid {
            values: self.values.iter().map(|v| a * v).collect(),
            zeta: self.zeta,
            topology: self.topology,
        }
    }

    /// Periodic linear interpolation between cell centers.
    pub fn interpolate(&self, x: f64) -> f64 {
        let (j0, j1, t) = interp_weights(x, self.values.len());
        self.values[j0] + t * (self.values[j1] - self.values[j0])
    }
}

#[inline]
pub(crate) fn cell_center(j: usize, n: usize) -> f64 {
    (j as f64 + 0.5) / n as f64
}

/// Neighbouring cell indices around `x` and the weight of the second one,
/// with periodic wrap.
#[inline]
pub(crate) fn interp_weights(x: f64, n: usize) -> (usize, usize, f64) {
    let u = x * n as f64 - 0.5;
    let fl = u.floor();
    let t = u - fl;
    let j0 = (fl as i64).rem_euclid(n as i64) as usize;
    let j1 = if j0 + 1 == n { 0 } else { j0 + 1 };
    (j0, j1, t)
}

/// max |vᵢ − vⱼ| / d(i, j)^ζ over grid pairs. For ζ = 1 adjacent pairs
/// suffice (the grid function extends piecewise linearly), otherwise all pairs
/// are scanned.
pub fn holder_seminorm(values: &[f64], zeta: f64, topology: Topology) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let h = 1.0 / n as f64;
    if zeta == 1.0 {
        let mut best = values
            .windows(2)
            .fold(0.0f64, |m, w| m.max((w[1] - w[0]).abs()));
        if topology == Topology::Circle {
            best = best.max((values[0] - values[n - 1]).abs());
        }
        return best / h;
    }
    let mut best = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let steps = j - i;
            let steps = match topology {
                Topology::Circle => steps.min(n - steps),
                Topology::Interval => steps,
            };
            let d = (steps as f64 * h).powf(zeta);
            best = best.max((values[i] - values[j]).abs() / d);
        }
    }
    best
}

/// P_f φ(x) = Σᵢ φ(γᵢ) ρ(γᵢ), evaluated at cell centers with φ read by
/// periodic linear interpolation.
pub fn transfer_density(f: &BaseMapSpec, phi: &DensityOnGrid) -> Result<DensityOnGrid> {
    if phi.topology != Topology::Circle {
        return Err(Error::GridMismatch(
            "transfer needs a density on the circle grid".into(),
        ));
    }
    let n = phi.n();
    let mut out = vec![0.0; n];
    for (j, o) in out.iter_mut().enumerate() {
        let x = cell_center(j, n);
        let mut acc = 0.0;
        f.for_each_preimage(x, |_, g, r| acc += r * phi.interpolate(g));
        *o = acc;
    }
    Ok(DensityOnGrid {
        values: out,
        zeta: phi.zeta,
        topology: Topology::Circle,
    })
}

/// Left side of the smallness condition linking ε_ρ and L:
/// exp(ε_ρ)·((deg − q)σ^{−ζ} + qL^ζ[1 + (L − 1)^ζ]) / deg.
pub fn hypothesis_lhs(deg: usize, q: usize, sigma: f64, l: f64, eps_rho: f64, zeta: f64) -> f64 {
    let d = deg as f64;
    let q = q as f64;
    eps_rho.exp() * ((d - q) * sigma.powf(-zeta) + q * l.powf(zeta) * (1.0 + (l - 1.0).powf(zeta))) / d
}

/// Samples per hypothesis check.
const HYP_SAMPLES: usize = 10_000;

/// Evaluates (f1), (f2), (f3) and the smallness condition on ε_ρ and L.
pub fn check_base_hypotheses(f: &BaseMapSpec, zeta: f64) -> Report {
    let m = &f.meta;
    let deg = f.deg();
    let mut rep = Report::new("base map hypotheses");

    rep.check("sigma > 1", Some(m.sigma), "", m.sigma > 1.0);
    rep.check("L >= 1", Some(m.l_const), "", m.l_const >= 1.0);

    let mut worst_in = 0.0f64;
    let mut worst_out = 0.0f64;
    for s in 0..HYP_SAMPLES {
        let x = (s as f64 + 0.5) / HYP_SAMPLES as f64;
        let lx = f.local_contraction(x);
        if m.region_a.iter().any(|a| a.contains(x)) {
            worst_in = worst_in.max(lx);
        } else {
            worst_out = worst_out.max(lx);
        }
    }
    rep.check(
        "f1 L(x) <= L on A",
        Some(worst_in),
        format!("sup over A, L = {}", m.l_const),
        worst_in <= m.l_const,
    );
    let any_out = (0..HYP_SAMPLES)
        .map(|s| (s as f64 + 0.5) / HYP_SAMPLES as f64)
        .any(|x| !m.region_a.iter().any(|a| a.contains(x)));
    rep.check(
        "f1 L(x) < 1/sigma off A",
        Some(worst_out),
        if any_out {
            format!("sup over complement, 1/sigma = {}", 1.0 / m.sigma)
        } else {
            "complement of A is empty".into()
        },
        !any_out || worst_out < 1.0 / m.sigma,
    );
    rep.check(
        "f2 q < deg",
        Some(m.q_cover as f64),
        format!("deg = {deg}; q taken as declared"),
        m.q_cover < deg,
    );

    let (osc, hol, inf) = rho_regularity(f, zeta);
    rep.check(
        "f3 osc log rho < eps",
        Some(osc),
        format!("eps_rho = {}", m.eps_rho),
        osc < m.eps_rho,
    );
    rep.check(
        "f3 H(rho) < eps inf rho",
        Some(hol),
        format!("eps_rho * inf rho = {}", m.eps_rho * inf),
        hol < m.eps_rho * inf,
    );

    let lhs = hypothesis_lhs(deg, m.q_cover, m.sigma, m.l_const, m.eps_rho, zeta);
    rep.check("smallness of eps and L", Some(lhs), "must be < 1", lhs < 1.0);
    rep.note("the smallness condition is evaluated with exponent zeta");
    rep
}

// sup log ρ − inf log ρ, branchwise H_ζ(ρ), inf ρ.
fn rho_regularity(f: &BaseMapSpec, zeta: f64) -> (f64, f64, f64) {
    let per_branch = HYP_SAMPLES / f.deg();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut hol = 0.0f64;
    for arc in f.partition() {
        let xs: Vec<f64> = (0..per_branch)
            .map(|s| (arc.start + (s as f64 + 0.5) / per_branch as f64 * arc.len).rem_euclid(1.0))
            .collect();
        let vals: Vec<f64> = xs.iter().map(|&x| f.rho(x)).collect();
        for &v in &vals {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let spacing = arc.len / per_branch as f64;
        for w in 1..vals.len() {
            let d = (spacing).powf(zeta);
            hol = hol.max((vals[w] - vals[w - 1]).abs() / d);
        }
    }
    (hi.ln() - lo.ln(), hol, lo)
}

/// Constant check for the torus example: a linear expanding f₀ with
/// eigenvalues 1 < 1 + a < λ deformed near a fixed point, with L = 1/(1−a),
/// σ = 1 + 2a and q = 1.
pub fn check_torus_example(deg0: usize, a: f64, lambda: f64, eps: f64, zeta: f64) -> Report {
    let mut rep = Report::new("torus example constants");
    rep.check(
        "1 < 1+a < lambda",
        Some(1.0 + a),
        format!("lambda = {lambda}"),
        a > 0.0 && 1.0 + a < lambda,
    );
    rep.check("a < 1", Some(a), "", a < 1.0);
    let osc = ((1.0 + a) / (1.0 - a)).ln();
    rep.check(
        "log((1+a)/(1-a)) < eps",
        Some(osc),
        format!("eps = {eps}"),
        a < 1.0 && osc < eps,
    );
    let d = deg0 as f64;
    let lhs = eps.exp()
        * ((d - 1.0) * (1.0 + a).powf(-zeta)
            + (1.0 / (1.0 - a)).powf(zeta) * (1.0 + (a / (1.0 - a)).powf(zeta)))
        / d;
    rep.check("smallness of eps and a", Some(lhs), "must be < 1", lhs < 1.0);
    rep.note(format!(
        "derived constants: L = {}, sigma = {}, q = 1",
        1.0 / (1.0 - a),
        1.0 + 2.0 * a
    ));
    rep
}

/// Empirical spectral constants of P_f on grid densities.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralEstimate {
    /// Per-step contraction of H_ζ on zero-average densities.
    pub r: f64,
    /// max |P^n φ|_ζ / (r^n |φ|_ζ) over zero-average trials.
    pub d: f64,
    /// Lasota-Yorke rate and constant: |P^n φ|_ζ ≤ β₂^n |φ|_ζ + C₂ |φ|_∞.
    pub beta2: f64,
    pub c2: f64,
    pub trials: usize,
    pub steps: usize,
    pub n_base: usize,
    /// False when no trial gave a usable contraction ratio.
    pub fit_ok: bool,
}

pub const DEFAULT_SPECTRAL_STEPS: usize = 8;
pub const DEFAULT_SPECTRAL_GRID: usize = 1024;

pub fn estimate_spectral_constants(
    f: &BaseMapSpec,
    zeta: f64,
    n_trials: usize,
    seed: u64,
) -> Result<SpectralEstimate> {
    estimate_spectral_constants_on(
        f,
        zeta,
        n_trials,
        seed,
        DEFAULT_SPECTRAL_GRID,
        DEFAULT_SPECTRAL_STEPS,
    )
}

/// Trials are single Fourier modes of frequency 1 + (t mod 16) with seeded
/// phase and amplitude; a second pass adds a seeded constant to each trial to
/// fit the Lasota-Yorke pair.
pub fn estimate_spectral_constants_on(
    f: &BaseMapSpec,
    zeta: f64,
    n_trials: usize,
    seed: u64,
    n_base: usize,
    n_steps: usize,
) -> Result<SpectralEstimate> {
    crate::measure_kit::check_zeta(zeta)?;
    if n_trials == 0 {
        return Err(param("n_trials", "need at least one trial"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut zero_avg = Vec::with_capacity(n_trials);
    let mut shifted = Vec::with_capacity(n_trials);
    for t in 0..n_trials {
        let mode = 1 + (t % 16) as u32;
        let phase = rng.gen_range(0.0..2.0 * PI);
        let amp = rng.gen_range(0.5..1.5);
        let offset = rng.gen_range(0.25..2.0);
        let phi = DensityOnGrid::from_fn(n_base, zeta, |x| {
            amp * (2.0 * PI * mode as f64 * x + phase).cos()
        })?;
        let mean = phi.integral();
        let phi = DensityOnGrid::new(phi.values.iter().map(|v| v - mean).collect(), zeta)?;
        shifted.push(DensityOnGrid::new(
            phi.values.iter().map(|v| v + offset).collect(),
            zeta,
        )?);
        zero_avg.push(phi);
    }

    let orbit = |phi: &DensityOnGrid| -> Result<Vec<(f64, f64)>> {
        let mut cur = phi.clone();
        let mut out = vec![(cur.holder(), cur.sup())];
        for _ in 0..n_steps {
            cur = transfer_density(f, &cur)?;
            out.push((cur.holder(), cur.sup()));
        }
        Ok(out)
    };

    let zero_orbits: Vec<_> = zero_avg.iter().map(&orbit).collect::<Result<_>>()?;
    let mut r = 0.0f64;
    let mut usable = false;
    for orb in &zero_orbits {
        let floor = 1e-6 * orb[0].0;
        for k in 1..orb.len() {
            if orb[k - 1].0 > floor {
                r = r.max(orb[k].0 / orb[k - 1].0);
                usable = true;
            }
        }
    }
    let mut d = 0.0f64;
    if usable && r > 0.0 {
        for orb in &zero_orbits {
            let base = orb[0].0 + orb[0].1;
            for (k, &(h, s)) in orb.iter().enumerate() {
                d = d.max((h + s) / (r.powi(k as i32) * base));
            }
        }
    }
    let beta2 = if usable { r.max(1e-3) } else { 1.0 };
    let mut c2 = 0.0f64;
    for phi in zero_avg.iter().chain(&shifted) {
        let orb = orbit(phi)?;
        let base = orb[0].0 + orb[0].1;
        let sup = orb[0].1;
        for (k, &(h, s)) in orb.iter().enumerate() {
            c2 = c2.max((h + s - beta2.powi(k as i32) * base) / sup);
        }
    }
    Ok(SpectralEstimate {
        r,
        d,
        beta2,
        c2,
        trials: n_trials,
        steps: n_steps,
        n_base,
        fit_ok: usable && r < 1.0 && d.is_finite() && c2.is_finite(),
    })
}
