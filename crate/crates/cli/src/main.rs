//! `ellipslice`: run elliptical slice sampling chains, the verification
//! suite, or a dimension sweep benchmark from a TOML config.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 configuration
//! error, 3 I/O error.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use ellipslice::Variant;

use config::{Mode, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ellipslice", version, about = "Elliptical slice sampling runs, checks and benchmarks")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Shrinkage evaluation cap per step.
    #[arg(long)]
    cap: Option<usize>,
    /// `reformulated` or `murray`.
    #[arg(long)]
    variant: Option<String>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated check names for verify mode.
    #[arg(long, value_delimiter = ',')]
    tests: Option<Vec<String>>,
    /// Sample size for every check in verify mode.
    #[arg(long)]
    n: Option<usize>,
    /// Also run the negative controls in verify mode; they must fail.
    #[arg(long)]
    fault_injection: bool,
    /// Zero wall-clock fields so repeated runs produce identical files.
    #[arg(long)]
    no_timing: bool,
    /// Print the names accepted by --tests and exit.
    #[arg(long)]
    list_tests: bool,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            RunConfig::from_toml(&text).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
                other => other,
            })?
        }
        None => RunConfig::default(),
    };
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(c) = cli.cap {
        cfg.chain.cap = c;
    }
    if let Some(v) = &cli.variant {
        cfg.chain.variant = v
            .parse::<Variant>()
            .map_err(|e| CliError::config(format!("--variant: {e}")))?;
    }
    if let Some(t) = &cli.tests {
        cfg.verify.tests = Some(t.clone());
    }
    if let Some(n) = cli.n {
        cfg.verify.n = Some(n);
    }
    cfg.verify.fault_injection |= cli.fault_injection;
    if cli.no_timing {
        cfg.record_timing = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    if cli.list_tests {
        for name in ellipslice::verify::known_tests() {
            println!("{name}");
        }
        return Ok(0);
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::config(format!("--threads: {e}")))?;
    }
    let cfg = load(cli)?;
    match cfg.mode {
        Mode::Sample => commands::sample(&cfg),
        Mode::Verify => commands::verify(&cfg),
        Mode::Bench => commands::bench(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
