use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use skewstab_cli::{load_config, run, Verb};

/// Invariant measures and statistical stability of skew products.
#[derive(Parser, Debug)]
#[command(name = "skewstab", version)]
struct Args {
    verb: Verb,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `solver.seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let mut cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(out) = args.out {
        cfg.output.directory = out;
    }
    if let Some(seed) = args.seed {
        cfg.solver.seed = seed;
    }
    match run(args.verb, &cfg) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
