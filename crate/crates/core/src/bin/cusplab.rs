use clap::Parser;
use cusplab::config::LoadedConfig;
use cusplab::runner::{run, Command};
use std::path::PathBuf;
use std::process::ExitCode;

/// Numerical laboratory for closed geodesics, X-ray transforms and indicial
/// roots on cusped hyperbolic surfaces.
///
/// Settings come from built-in defaults, then the config file, then flags.
/// Exit codes: 0 success, 1 invalid input, 2 numerical failure (partial
/// outputs are kept).
#[derive(Parser, Debug)]
#[command(name = "cusplab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for sampled probe points (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Multiply every tolerance by this factor.
    #[arg(long, allow_negative_numbers = true)]
    tolerance_scale: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are invalid input; 2 is kept for numerical failures
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool set once");
    }
    let loaded = match &cli.config {
        Some(p) => LoadedConfig::from_path(p),
        None => Ok(LoadedConfig::defaults()),
    };
    let mut cfg = match loaded {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(o) = cli.out {
        cfg.config.output_dir = o;
    }
    if let Some(s) = cli.seed {
        cfg.config.seed = s;
    }
    if let Some(x) = cli.tolerance_scale {
        if !(x > 0.0 && x.is_finite()) {
            eprintln!("error: --tolerance-scale must be positive");
            return ExitCode::from(1);
        }
        cfg.config.tolerances = cfg.config.tolerances.scaled(x);
    }
    match run(cli.command, &cfg) {
        Ok(rec) => {
            for w in &rec.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}: wrote {} to {}", rec.command, rec.outputs.join(", "), cfg.config.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
