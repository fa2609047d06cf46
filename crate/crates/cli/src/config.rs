//! Run configuration: a TOML file with sections `system`, `grids`, `solver`,
//! `perturbation` and `output`. Every key is optional; unknown keys are
//! rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use skewstab::base_map::HypothesisMeta;
use skewstab::stability::DEFAULT_DELTA_MAX;
use skewstab::transfer::{DEFAULT_N_BASE, DEFAULT_N_FIBER};
use skewstab::{
    BaseMapSpec, FiberGrid, FiberMapSpec, Offset, PerturbationFamily, PerturbationKind, SkewSystem, WkMetric,
};

#[derive(Debug)]
pub enum ConfigError {
    /// Missing or unreadable file, or malformed TOML.
    Parse(String),
    /// A value out of range; `key` is the dotted path of the offending key.
    Invalid { key: String, reason: String },
}

impl ConfigError {
    pub fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Parse(_) => 2,
            ConfigError::Invalid { .. } => 3,
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse(m) => write!(f, "parse error: {m}"),
            ConfigError::Invalid { key, reason } => write!(f, "invalid value for `{key}`: {reason}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    /// Only "linear" is shipped: x ↦ kx + shift (mod 1).
    pub base: String,
    pub k: usize,
    pub shift: f64,
    pub sigma: Option<f64>,
    pub l_const: f64,
    pub eps_rho: f64,
    pub q_cover: usize,
    /// "const", "linear-x" or "per-branch".
    pub fiber_offset: String,
    pub offset: f64,
    pub offsets: Vec<f64>,
    pub slope: f64,
    pub wobble: f64,
    pub zeta: f64,
    /// Declared contraction rate; the exact sup |∂G/∂y| when absent.
    pub alpha: Option<f64>,
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            base: "linear".into(),
            k: 2,
            shift: 0.0,
            sigma: None,
            l_const: 1.0,
            eps_rho: 0.01,
            q_cover: 1,
            fiber_offset: "const".into(),
            offset: 0.25,
            offsets: Vec::new(),
            slope: 0.5,
            wobble: 0.0,
            zeta: 1.0,
            alpha: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridsSection {
    pub n_base: usize,
    pub n_fiber: usize,
    /// Largest fiber support allowed; quantized fibers never exceed n_fiber.
    pub atom_cap: usize,
    pub lp_cap: usize,
}

impl Default for GridsSection {
    fn default() -> Self {
        GridsSection {
            n_base: DEFAULT_N_BASE,
            n_fiber: DEFAULT_N_FIBER,
            atom_cap: 4096,
            lp_cap: 2048,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Fixed-point tolerance; max(1e−6, 2h_fib^ζ) when absent.
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub seed: u64,
    pub holder_budget: usize,
    pub pairs: usize,
    pub n_steps: usize,
    pub spectral_trials: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tol: None,
            max_iter: 200,
            seed: 0,
            holder_budget: 1024,
            pairs: 5,
            n_steps: 25,
            spectral_trials: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaRange {
    /// δ = base^(−k) for k = k_min..=k_max.
    pub base: f64,
    pub k_min: i32,
    pub k_max: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationSection {
    pub kind: String,
    pub deltas: Vec<f64>,
    pub range: Option<DeltaRange>,
    pub delta_max: f64,
    pub probes: Vec<f64>,
}

impl Default for PerturbationSection {
    fn default() -> Self {
        PerturbationSection {
            kind: "fiber-translation".into(),
            deltas: Vec::new(),
            range: Some(DeltaRange {
                base: 2.0,
                k_min: 4,
                k_max: 10,
            }),
            delta_max: DEFAULT_DELTA_MAX,
            probes: vec![0.05, 0.1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// Any of "txt", "csv", "dat".
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            formats: vec!["txt".into(), "csv".into(), "dat".into()],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemSection,
    pub grids: GridsSection,
    pub solver: SolverSection,
    pub perturbation: PerturbationSection,
    pub output: OutputSection,
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.system;
        if s.base != "linear" {
            return Err(ConfigError::invalid("system.base", format!("unknown family {:?}", s.base)));
        }
        if s.k < 2 {
            return Err(ConfigError::invalid("system.k", "must be >= 2"));
        }
        if !(s.zeta > 0.0 && s.zeta <= 1.0) {
            return Err(ConfigError::invalid("system.zeta", format!("{} is not in (0,1]", s.zeta)));
        }
        if let Some(a) = s.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(ConfigError::invalid("system.alpha", format!("{a} is not in (0,1)")));
            }
        }
        if !(s.eps_rho > 0.0) {
            return Err(ConfigError::invalid("system.eps_rho", "must be positive"));
        }
        if !(s.l_const >= 1.0) {
            return Err(ConfigError::invalid("system.l_const", "must be >= 1"));
        }
        if !["const", "linear-x", "per-branch"].contains(&s.fiber_offset.as_str()) {
            return Err(ConfigError::invalid(
                "system.fiber_offset",
                format!("unknown offset kind {:?}", s.fiber_offset),
            ));
        }
        let g = &self.grids;
        if g.n_base < 2 {
            return Err(ConfigError::invalid("grids.n_base", "must be >= 2"));
        }
        if g.n_fiber < 2 {
            return Err(ConfigError::invalid("grids.n_fiber", "must be >= 2"));
        }
        if g.atom_cap < g.n_fiber {
            return Err(ConfigError::invalid("grids.atom_cap", "must be >= n_fiber"));
        }
        if g.lp_cap < 2 {
            return Err(ConfigError::invalid("grids.lp_cap", "must be >= 2"));
        }
        let v = &self.solver;
        if let Some(t) = v.tol {
            if !(t > 0.0) {
                return Err(ConfigError::invalid("solver.tol", "must be positive"));
            }
        }
        if v.max_iter == 0 {
            return Err(ConfigError::invalid("solver.max_iter", "must be >= 1"));
        }
        if v.pairs == 0 {
            return Err(ConfigError::invalid("solver.pairs", "must be >= 1"));
        }
        if v.spectral_trials == 0 {
            return Err(ConfigError::invalid("solver.spectral_trials", "must be >= 1"));
        }
        let p = &self.perturbation;
        if PerturbationKind::parse(&p.kind).is_none() {
            return Err(ConfigError::invalid("perturbation.kind", format!("unknown kind {:?}", p.kind)));
        }
        if !(p.delta_max > 0.0 && p.delta_max < 1.0) {
            return Err(ConfigError::invalid("perturbation.delta_max", "must be in (0,1)"));
        }
        if let Some(r) = &p.range {
            if !(r.base > 1.0) || r.k_min > r.k_max {
                return Err(ConfigError::invalid("perturbation.range", "need base > 1 and k_min <= k_max"));
            }
        }
        for &d in self.deltas().iter() {
            if !(d > 0.0 && d <= p.delta_max) {
                return Err(ConfigError::invalid(
                    "perturbation.deltas",
                    format!("{d} is outside (0, {}]", p.delta_max),
                ));
            }
        }
        for &d in &p.probes {
            if !(d > 0.0 && d <= p.delta_max) {
                return Err(ConfigError::invalid(
                    "perturbation.probes",
                    format!("{d} is outside (0, {}]", p.delta_max),
                ));
            }
        }
        for f in &self.output.formats {
            if !["txt", "csv", "dat"].contains(&f.as_str()) {
                return Err(ConfigError::invalid("output.formats", format!("unknown format {f:?}")));
            }
        }
        Ok(())
    }

    /// Explicit list followed by the range, in that order.
    pub fn deltas(&self) -> Vec<f64> {
        let p = &self.perturbation;
        let mut out = p.deltas.clone();
        if let Some(r) = &p.range {
            out.extend((r.k_min..=r.k_max).map(|k| r.base.powi(-k)));
        }
        out
    }

    pub fn base_map(&self) -> Result<BaseMapSpec, ConfigError> {
        let s = &self.system;
        let f = BaseMapSpec::linear(s.k, s.shift).map_err(|e| ConfigError::invalid("system.k", e.to_string()))?;
        let meta = HypothesisMeta {
            sigma: s.sigma.unwrap_or(s.k as f64),
            l_const: s.l_const,
            eps_rho: s.eps_rho,
            q_cover: s.q_cover,
            region_a: f.meta.region_a.clone(),
        };
        Ok(f.with_meta(meta))
    }

    pub fn system(&self) -> Result<SkewSystem, ConfigError> {
        let s = &self.system;
        let base = self.base_map()?;
        let offset = match s.fiber_offset.as_str() {
            "const" => Offset::Const(s.offset),
            "linear-x" => Offset::LinearX(s.offset),
            _ => Offset::PerBranch(s.offsets.clone()),
        };
        let mut fiber = FiberMapSpec::affine(&base, s.slope, s.wobble, offset, s.zeta)
            .map_err(|e| ConfigError::invalid("system.offset", e.to_string()))?;
        if let Some(a) = s.alpha {
            if a < fiber.alpha {
                return Err(ConfigError::invalid(
                    "system.alpha",
                    format!("{a} is below sup |dG/dy| = {}", fiber.alpha),
                ));
            }
            let g = fiber.holder_g;
            fiber = fiber.with_declared(a, g);
        }
        if !(fiber.alpha < 1.0) {
            return Err(ConfigError::invalid("system.slope", "fiber map must contract (alpha < 1)"));
        }
        let grid = FiberGrid::new(self.grids.n_fiber).map_err(|e| ConfigError::invalid("grids.n_fiber", e.to_string()))?;
        let sys = SkewSystem::new(base, fiber, s.zeta, grid)
            .map_err(|e| ConfigError::invalid("system", e.to_string()))?
            .with_n_base(self.grids.n_base)
            .map_err(|e| ConfigError::invalid("grids.n_base", e.to_string()))?;
        let metric = WkMetric::new(s.zeta).with_cap(self.grids.lp_cap);
        Ok(sys.with_metric(metric))
    }

    pub fn family(&self) -> Result<PerturbationFamily, ConfigError> {
        let p = &self.perturbation;
        let kind = PerturbationKind::parse(&p.kind)
            .ok_or_else(|| ConfigError::invalid("perturbation.kind", "unknown kind"))?;
        PerturbationFamily::new(self.system()?, kind, p.delta_max)
            .map_err(|e| ConfigError::invalid("perturbation.delta_max", e.to_string()))
    }

    /// The resolved configuration, defaults included.
    pub fn echo(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn wants(&self, format: &str) -> bool {
        self.output.formats.iter().any(|f| f == format)
    }
}
