use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use skewstab::equilibrium::regularity_constants;
use skewstab::fiber_map::{estimate_alpha, estimate_fiber_holder};
use skewstab::{
    check_admissibility, check_base_hypotheses, fixed_point, measured_equilibrium_rate, regularity_certificate,
    sig12, stability_sweep, AtomicMeasure, Report, SweepConfig,
};

use crate::config::{ConfigError, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Verb {
    Check,
    Fixpoint,
    Rate,
    Sweep,
    Report,
}

impl Verb {
    pub fn name(self) -> &'static str {
        match self {
            Verb::Check => "check",
            Verb::Fixpoint => "fixpoint",
            Verb::Rate => "rate",
            Verb::Sweep => "sweep",
            Verb::Report => "report",
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Core(skewstab::Error),
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(e) => e.exit_code(),
            RunError::Core(_) => 3,
            RunError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<skewstab::Error> for RunError {
    fn from(e: skewstab::Error) -> Self {
        RunError::Core(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    /// False when any asserted inequality failed.
    pub pass: bool,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

/// Text, CSV and plot data produced by one verb.
#[derive(Default)]
struct Section {
    text: String,
    csv: Vec<(String, String)>,
    plot: Option<String>,
    pass: bool,
}

pub fn sweep_config(cfg: &RunConfig) -> SweepConfig {
    SweepConfig {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        seed: cfg.solver.seed,
        holder_budget: cfg.solver.holder_budget,
        spectral_trials: cfg.solver.spectral_trials,
        probes: cfg.perturbation.probes.clone(),
        ..SweepConfig::default()
    }
}

fn check_rows(reports: &[&Report]) -> String {
    let mut s = String::from("section,name,value,pass\n");
    for r in reports {
        for c in &r.checks {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.title.replace(',', ";"),
                c.name.replace(',', ";"),
                c.value.map(sig12).unwrap_or_default(),
                c.pass
            );
        }
    }
    s
}

fn verb_check(cfg: &RunConfig) -> Result<Section, RunError> {
    let sys = cfg.system()?;
    let seed = cfg.solver.seed;
    let base = check_base_hypotheses(&sys.base, sys.zeta);

    let mut fiber = Report::new("fiber map");
    let a = estimate_alpha(&sys.fiber, 4096, seed)?;
    fiber.check("alpha < 1", Some(sys.fiber.alpha), String::new(), sys.fiber.alpha < 1.0);
    fiber.check(
        "sampled contraction <= declared alpha",
        Some(a.value),
        format!("declared {}", sig12(sys.fiber.alpha)),
        a.consistent,
    );
    let h = estimate_fiber_holder(&sys.fiber, 4096, seed)?;
    fiber.check(
        "branchwise |G|_zeta finite",
        Some(h.overall),
        format!("declared {}", sig12(sys.fiber.holder_g)),
        h.overall.is_finite(),
    );
    let (reg, _) = regularity_constants(&sys, seed)?;
    fiber.check(
        "(alpha L)^zeta < 1",
        Some(reg.beta),
        format!("D_reg {} bound {}", sig12(reg.d_reg), sig12(reg.bound)),
        reg.hypothesis_holds(),
    );

    let fam = cfg.family()?;
    let adm = check_admissibility(&fam, &sweep_config(cfg))?;

    let pass = base.all_pass() && fiber.all_pass() && adm.all_pass();
    Ok(Section {
        text: format!("{base}\n{fiber}\n{adm}"),
        csv: vec![("check.csv".into(), check_rows(&[&base, &fiber, &adm]))],
        plot: None,
        pass,
    })
}

fn verb_fixpoint(cfg: &RunConfig) -> Result<Section, RunError> {
    let sys = cfg.system()?;
    let tol = cfg.solver.tol.unwrap_or_else(|| skewstab::default_tol(&sys));
    let nu = AtomicMeasure::uniform(&sys.grid, sys.zeta);
    let fp = fixed_point(&sys, &nu, tol, cfg.solver.max_iter)?;
    let cert = regularity_certificate(&sys, &fp, cfg.solver.seed)?;
    let mut text = String::from("fixed point\n");
    let _ = writeln!(
        text,
        "  iterations {} converged {} tol {} last residual {}",
        fp.iterations,
        fp.converged,
        sig12(tol),
        fp.residuals.last().map(|r| sig12(*r)).unwrap_or_default()
    );
    let _ = write!(text, "\n{cert}");
    Ok(Section {
        text,
        csv: vec![("fixpoint.csv".into(), fp.history_csv())],
        plot: None,
        pass: cert.all_pass(),
    })
}

fn verb_rate(cfg: &RunConfig) -> Result<Section, RunError> {
    let sys = cfg.system()?;
    let res = measured_equilibrium_rate(&sys, cfg.solver.pairs, cfg.solver.n_steps, cfg.solver.seed)?;
    let c = &res.constants;
    let mut rep = Report::new("convergence to equilibrium");
    let failed = res.table.iter().filter(|r| !r.pass).count();
    rep.check(
        "measured <= D_conv beta1^n |mu|_S + n h^zeta/(1-alpha^zeta)",
        None,
        format!("{} rows, {failed} failed", res.table.len()),
        failed == 0,
    );
    rep.note(format!(
        "r {} D {} beta1 {} D_conv {} alpha_bar {}",
        sig12(c.r),
        sig12(c.d),
        sig12(c.beta1),
        sig12(c.d_conv),
        sig12(c.alpha_bar)
    ));
    rep.note(format!(
        "empirical rate {} (per pair {})",
        sig12(res.empirical_rate),
        res.per_pair_rate.iter().map(|r| sig12(*r)).collect::<Vec<_>>().join(" ")
    ));
    rep.note("constants follow the displayed statement: beta1 = max(sqrt r, sqrt alpha^zeta), D_conv = 1/sqrt(alpha^zeta) + alpha_bar D / sqrt r");
    Ok(Section {
        text: rep.to_string(),
        csv: vec![("rate.csv".into(), res.table_csv())],
        plot: None,
        pass: rep.all_pass(),
    })
}

fn verb_sweep(cfg: &RunConfig) -> Result<Section, RunError> {
    let fam = cfg.family()?;
    let deltas = cfg.deltas();
    let res = stability_sweep(&fam, &deltas, &sweep_config(cfg))?;
    let k = &res.constants;
    let mut rep = Report::new(format!("stability sweep: {}", fam.kind.name()));
    rep.check("fixed points converged", None, String::new(), res.all_converged());
    rep.check(
        "measured <= certified_closed + tol",
        None,
        format!("tol {}", sig12(res.grid_tol)),
        res.rows_within_certified(),
    );
    rep.check(
        "operator gap <= C1 R^zeta + tol",
        Some(k.c1()),
        String::new(),
        res.operator_gaps_within_bound(),
    );
    rep.check(
        "holder(mu_delta) <= B_u + tol",
        Some(k.b_u()),
        String::new(),
        res.holder_within_uniform_bound(),
    );
    rep.note(format!(
        "C1 {} = |G0| {} + 1 + K5 {} + B_u {}; rho2 {} C2 {} M {} M2 {}",
        sig12(k.c1()),
        sig12(k.g0_holder),
        sig12(k.k5),
        sig12(k.b_u()),
        sig12(k.rho2),
        sig12(k.c2),
        sig12(k.m),
        sig12(k.m2)
    ));
    match &res.fit {
        Some(f) => rep.note(format!(
            "fit measured = c R^zeta |log delta|: c {} over {} rows; log-log slope {}; residuals {}",
            sig12(f.c),
            f.rows_used,
            sig12(f.slope),
            f.residuals.iter().map(|r| sig12(*r)).collect::<Vec<_>>().join(" ")
        )),
        None => rep.note("fit skipped: fewer than two usable rows"),
    }
    Ok(Section {
        text: rep.to_string(),
        csv: vec![("sweep.csv".into(), res.to_csv())],
        plot: Some(res.plot_data()),
        pass: rep.all_pass(),
    })
}

/// Runs `verb` and writes its artifacts into the configured directory.
pub fn run(verb: Verb, cfg: &RunConfig) -> Result<Outcome, RunError> {
    let sections = match verb {
        Verb::Check => vec![verb_check(cfg)?],
        Verb::Fixpoint => vec![verb_fixpoint(cfg)?],
        Verb::Rate => vec![verb_rate(cfg)?],
        Verb::Sweep => vec![verb_sweep(cfg)?],
        Verb::Report => vec![verb_check(cfg)?, verb_fixpoint(cfg)?, verb_rate(cfg)?, verb_sweep(cfg)?],
    };
    let dir = &cfg.output.directory;
    fs::create_dir_all(dir)?;
    let pass = sections.iter().all(|s| s.pass);
    let mut files = Vec::new();
    let mut text = format!("skewstab {}\n\n# configuration\n{}\n", verb.name(), cfg.echo());
    for s in &sections {
        text.push_str(&s.text);
        text.push('\n');
    }
    let _ = writeln!(text, "overall: {}", if pass { "PASS" } else { "FAIL" });
    if cfg.wants("txt") {
        let p = dir.join("report.txt");
        fs::write(&p, &text)?;
        files.push(p);
    }
    for s in &sections {
        if cfg.wants("csv") {
            for (name, body) in &s.csv {
                let p = dir.join(name);
                fs::write(&p, body)?;
                files.push(p);
            }
        }
        if let (true, Some(plot)) = (cfg.wants("dat"), &s.plot) {
            let p = dir.join("sweep_plot.dat");
            fs::write(&p, plot)?;
            files.push(p);
        }
    }
    Ok(Outcome {
        pass,
        files,
        summary: text,
    })
}
