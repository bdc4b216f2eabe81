//! `bratteli` command-line front end.

mod commands;
mod spec;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::spec::{Example, SpecError};

#[derive(Debug, Parser)]
#[command(name = "bratteli", version, about = "Analyze Bratteli diagrams, path measures and Laplacians")]
struct Cli {
    /// Worker threads for parallel sampling.
    #[arg(long, global = true, env = "BRATTELI_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a spec file for structural errors.
    Validate {
        spec: PathBuf,
        /// Print the normalized spec instead of the report when it is valid.
        #[arg(long)]
        emit_spec: bool,
        /// Also reject vertices with a single outgoing edge.
        #[arg(long)]
        no_isolated_points: bool,
    },
    /// Print an example spec.
    Generate {
        #[arg(value_enum)]
        example: Example,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute one quantity from a spec.
    Analyze {
        #[arg(value_enum)]
        what: Analysis,
        spec: PathBuf,
        #[command(flatten)]
        opts: AnalyzeOpts,
    },
    /// Run residual checks and exit non-zero if any exceeds the tolerance.
    Check {
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Analysis {
    Pf,
    Measure,
    Markov,
    Laplacian,
    Energy,
    Walk,
    Kernels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Consistency,
    Operators,
    Laplacian,
    Kernels,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestFunction {
    /// `f_n(v) = n / N`.
    Linear,
    /// `f ≡ 1`.
    Constant,
    /// `f_n(v) = (-1)^n`.
    Alternating,
    /// `f_n(v) = v`.
    Vertex,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeOpts {
    /// Override the spec depth.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Walk start as `level,vertex` (local indices).
    #[arg(long, value_parser = parse_start, default_value = "0,0")]
    pub start: (usize, usize),
    #[arg(long, value_enum, default_value_t = TestFunction::Linear)]
    pub function: TestFunction,
    /// Horizon of the return series used for recurrence classification.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_start(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected level,vertex")?;
    Ok((a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?))
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), SpecError> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut lock = std::io::stdout().lock();
            lock.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                lock.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, SpecError> {
    match cli.command {
        Command::Validate { spec, emit_spec, no_isolated_points } => {
            let (report, file) = commands::validate(&spec, no_isolated_points)?;
            let ok = report["valid"].as_bool().unwrap_or(false);
            match (emit_spec, file) {
                (true, Some(f)) if ok => emit(&f.to_json(), None)?,
                _ => emit(&serde_json::to_string_pretty(&report)?, None)?,
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Generate { example, depth, seed } => {
            emit(&spec::example(example, depth, seed).to_json(), None)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { what, spec, opts } => {
            let text = commands::analyze(what, &spec, &opts)?;
            emit(&text, opts.out.as_ref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { spec, suite, tol, seed } => {
            let rows = commands::check(&spec, suite, seed)?;
            let mut out = format!("{:<36} {:>12} {:>10} status\n", "check", "residual", "tol");
            let mut ok = true;
            for r in &rows {
                let pass = r.residual.is_finite() && r.residual <= tol;
                ok &= pass;
                out += &format!("{:<36} {:>12.3e} {:>10.1e} {}\n", r.name, r.residual, tol, if pass { "ok" } else { "FAIL" });
            }
            emit(&out, None)?;
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).target(env_logger::Target::Stderr).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(SpecError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&body).expect("json"));
            ExitCode::FAILURE
        }
    }
}
