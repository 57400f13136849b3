//! Configuration-driven experiments over `sdrelax`.
//!
//! A run reads a TOML config, executes one subcommand and writes its
//! artifacts into `<out>/<hash>/`, where the hash covers the config text, the
//! seed and the subcommand. `manifest.json` lists every file with its SHA-256
//! and the operation that produced it, together with the invariant checks.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::Config;
pub use error::CliError;
use output::{run_hash, Artifacts, Check, Manifest, ManifestEntry};

pub const OUT_ENV: &str = "SDRELAX_OUT";

#[derive(Debug, Parser)]
#[command(name = "sdrelax", version, about = "Relaxation experiments for structured deformations")]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Artifact root; overridden by SDRELAX_OUT.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides the seed of the config file.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, value_name = "K")]
    pub jobs: Option<usize>,
    /// Treat warnings as failures.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sample the density axioms.
    CheckAxioms,
    /// Surface density h_p (or h_1 when p = 1) for each configured jump.
    #[command(name = "solve-h")]
    SolveSurface,
    /// Bulk density H_p on the A × B lattice.
    #[command(name = "solve-H")]
    SolveBulk,
    /// Tabulate H_p, h_p and the recession function.
    Tables,
    /// Evaluate the relaxed functional on the configured deformation.
    Relax,
    /// Build the approximating sequence u_n.
    Approximate,
    /// Γ-gap and rigidity diagnostics of the recovery family.
    Gamma,
    /// Brute-force 1D oracle on the A × B lattice.
    Oracle,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CheckAxioms => "check-axioms",
            Command::SolveSurface => "solve-h",
            Command::SolveBulk => "solve-H",
            Command::Tables => "tables",
            Command::Relax => "relax",
            Command::Approximate => "approximate",
            Command::Gamma => "gamma",
            Command::Oracle => "oracle",
        }
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub files: Vec<ManifestEntry>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub strict: bool,
}

impl RunReport {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// 0 iff every check passed (and, under `--strict`, nothing was warned).
    pub fn exit_code(&self) -> i32 {
        let failed = self.failed_checks().next().is_some();
        if failed || (self.strict && !self.warnings.is_empty()) {
            1
        } else {
            0
        }
    }
}

/// Output root: `SDRELAX_OUT` when set, else `--out`.
pub fn out_root(args: &Args) -> PathBuf {
    std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from).unwrap_or_else(|| args.out.clone())
}

pub fn run(args: &Args) -> Result<RunReport, CliError> {
    let path = args.config.as_ref().ok_or_else(|| CliError::config("--config PATH is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let cfg = Config::parse(&text)?;
    let seed =
        args.seed.or(cfg.seed).ok_or_else(|| CliError::config("a seed is required (config `seed` or --seed)"))?;
    if args.jobs == Some(0) {
        return Err(CliError::config("--jobs must be positive"));
    }
    let name = args.command.name();
    let dir = out_root(args).join(run_hash(&text, seed, name));
    let base = path.parent().map(PathBuf::from).unwrap_or_default();
    let mut ctx = commands::Ctx { cfg, seed, base, checks: Vec::new(), warnings: Vec::new() };
    let mut out = Artifacts::create(dir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    pool.install(|| match args.command {
        Command::CheckAxioms => commands::check_axioms(&mut ctx, &mut out),
        Command::SolveSurface => commands::solve_h_cmd(&mut ctx, &mut out),
        Command::SolveBulk => commands::solve_H_cmd(&mut ctx, &mut out),
        Command::Tables => commands::tables(&mut ctx, &mut out),
        Command::Relax => commands::relax(&mut ctx, &mut out),
        Command::Approximate => commands::approximate(&mut ctx, &mut out),
        Command::Gamma => commands::gamma(&mut ctx, &mut out),
        Command::Oracle => commands::oracle(&mut ctx, &mut out),
    })?;

    let config_hash = out.dir().file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        subcommand: name.into(),
        config_hash,
        seed,
        files: Vec::new(),
        checks: ctx.checks.clone(),
        warnings: ctx.warnings.clone(),
    };
    let (dir, files) = out.finish(manifest)?;
    Ok(RunReport { dir, files, checks: ctx.checks, warnings: ctx.warnings, strict: args.strict })
}
