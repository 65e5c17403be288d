//! `aging` command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
mod error;
pub mod output;
pub mod plot;
pub mod verify;

pub use error::CliError;

use config::{CommandKind, Overrides, RunConfig, Which};

#[derive(Debug, Parser)]
#[command(name = "aging", version, about = "Classical and quantum aging transitions in active/inactive oscillator networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Q_cl(p) for each V, with the analytic threshold.
    ClassicalSweep(Common),
    /// Mean-field Q(p) for each (V, kappa), plus knee points.
    QuantumSweep(Common),
    /// Q over the V × p grid and its p = 0.7 slice.
    Grid(Common),
    /// Wigner function of the group states at one (V, p).
    Wigner(PointArgs),
    /// Fock distribution of the group states at one (V, p).
    Fock(PointArgs),
    /// Oracle checks; exits 3 on any failure.
    Verify(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML file with any of the run settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write SVG renderings.
    #[arg(long)]
    pub plot: bool,
    #[arg(long)]
    pub knee_threshold: Option<f64>,
    #[arg(long)]
    pub cutoff: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PointArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub which: Option<Which>,
    /// Coupling strength V.
    #[arg(long)]
    pub coupling: Option<f64>,
    /// Fraction of inactive oscillators.
    #[arg(long)]
    pub p: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            output_dir: self.out.clone(),
            seed: self.seed,
            workers: self.workers,
            plot: self.plot.then_some(true),
            knee_threshold: self.knee_threshold,
            cutoff: self.cutoff,
            ..Overrides::default()
        }
    }

    fn resolve(&self, kind: CommandKind, extra: Overrides) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => Overrides::from_file(path)?,
            None => Overrides::default(),
        };
        RunConfig::resolve(kind, extra.over(self.overrides()).over(file))
    }
}

/// Parses `args` and runs the command. Usage errors map to validation
/// failures; `--help` and `--version` print and succeed.
pub fn run_from<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Validation(e.to_string().trim_end().to_string())),
    };
    run(cli)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let point = |p: &PointArgs, kind| {
        let extra = Overrides { which: p.which, coupling: p.coupling, p: p.p, ..Overrides::default() };
        p.common.resolve(kind, extra)
    };
    let written = match &cli.command {
        Command::ClassicalSweep(c) => commands::classical_sweep_cmd(&c.resolve(CommandKind::ClassicalSweep, Overrides::default())?)?,
        Command::QuantumSweep(c) => commands::quantum_sweep_cmd(&c.resolve(CommandKind::QuantumSweep, Overrides::default())?)?,
        Command::Grid(c) => commands::grid_cmd(&c.resolve(CommandKind::Grid, Overrides::default())?)?,
        Command::Wigner(p) => commands::wigner_cmd(&point(p, CommandKind::Wigner)?)?,
        Command::Fock(p) => commands::fock_cmd(&point(p, CommandKind::Fock)?)?,
        Command::Verify(c) => {
            let rc = c.resolve(CommandKind::Verify, Overrides::default())?;
            let oracles = verify::Oracles { cutoff: rc.network.cutoff, ..verify::Oracles::default() };
            let checks = oracles.run();
            print!("{}", verify::report(&checks));
            let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
            if !failed.is_empty() {
                return Err(CliError::Verify(failed.join(", ")));
            }
            Vec::new()
        }
    };
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
