//! Run configuration: a TOML file merged under command-line flags, then
//! filled with per-command defaults.

use std::path::{Path, PathBuf};

use aging_core::analysis::DEFAULT_KNEE_THRESHOLD;
use aging_core::classical::DEFAULT_SEED;
use aging_core::config::inactive_count;
use aging_core::NetworkConfig64;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Active,
    Inactive,
    Both,
}

impl Which {
    pub fn roles(self) -> &'static [aging_core::Role] {
        use aging_core::Role::*;
        match self {
            Which::Active => &[Active],
            Which::Inactive => &[Inactive],
            Which::Both => &[Active, Inactive],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    ClassicalSweep,
    QuantumSweep,
    Grid,
    Wigner,
    Fock,
    Verify,
}

/// Every recognised key, all optional. Flags are parsed into the same shape
/// so that merging is field-wise.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub n: Option<usize>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub omega: Option<f64>,
    pub kappa: Option<f64>,
    pub cutoff: Option<usize>,
    /// `V` of a single-point run (`wigner`, `fock`).
    #[serde(rename = "V")]
    pub coupling: Option<f64>,
    /// `p` of a single-point run.
    pub p: Option<f64>,
    pub which: Option<Which>,
    pub seed: Option<u64>,
    pub p_grid: Option<Vec<f64>>,
    #[serde(rename = "V_grid")]
    pub v_grid: Option<Vec<f64>>,
    pub kappa_grid: Option<Vec<f64>>,
    pub output_dir: Option<PathBuf>,
    pub knee_threshold: Option<f64>,
    pub plot: Option<bool>,
    pub workers: Option<usize>,
    pub wigner_points: Option<usize>,
}

macro_rules! prefer {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        Overrides { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Overrides {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    /// `self` wins wherever it is set.
    pub fn over(self, lower: Overrides) -> Overrides {
        prefer!(
            self, lower, n, a, b, omega, kappa, cutoff, coupling, p, which, seed, p_grid, v_grid,
            kappa_grid, output_dir, knee_threshold, plot, workers, wigner_points
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub network: NetworkConfig64,
    pub p: f64,
    pub which: Which,
    pub seed: u64,
    pub p_grid: Vec<f64>,
    pub v_grid: Vec<f64>,
    pub kappa_grid: Vec<f64>,
    pub output_dir: PathBuf,
    pub knee_threshold: f64,
    pub plot: bool,
    pub workers: usize,
    pub wigner_points: usize,
}

pub fn default_p_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}

pub fn default_v_grid(kind: CommandKind) -> Vec<f64> {
    match kind {
        CommandKind::ClassicalSweep => (1..=6).map(f64::from).collect(),
        CommandKind::Grid => (0..15).map(|k| k as f64 * 0.5).collect(),
        _ => vec![1.0, 3.0, 5.0, 7.0],
    }
}

impl RunConfig {
    pub fn resolve(kind: CommandKind, o: Overrides) -> Result<Self, CliError> {
        let base = NetworkConfig64::standard(o.coupling.unwrap_or(5.0));
        let network = NetworkConfig64 {
            n: o.n.unwrap_or(base.n),
            n_inactive: 0,
            a: o.a.unwrap_or(base.a),
            b: o.b.unwrap_or(base.b),
            omega: o.omega.unwrap_or(base.omega),
            kappa: o.kappa.unwrap_or(base.kappa),
            coupling: base.coupling,
            cutoff: o.cutoff.unwrap_or(base.cutoff),
        };
        let rc = RunConfig {
            network,
            p: o.p.unwrap_or(0.0),
            which: o.which.unwrap_or(Which::Both),
            seed: o.seed.unwrap_or(DEFAULT_SEED),
            p_grid: o.p_grid.unwrap_or_else(default_p_grid),
            v_grid: o.v_grid.unwrap_or_else(|| default_v_grid(kind)),
            kappa_grid: o.kappa_grid.unwrap_or_else(|| vec![network.kappa]),
            output_dir: o.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            knee_threshold: o.knee_threshold.unwrap_or(DEFAULT_KNEE_THRESHOLD),
            plot: o.plot.unwrap_or(false),
            workers: o.workers.unwrap_or(1),
            wigner_points: o.wigner_points.unwrap_or(101),
        };
        rc.validate(kind)?;
        Ok(rc)
    }

    fn validate(&self, kind: CommandKind) -> Result<(), CliError> {
        let mut bad = Vec::new();
        if let Err(e) = self.network.validate() {
            bad.push(e.to_string());
        }
        if self.workers == 0 {
            bad.push("workers must be positive".into());
        }
        if !(self.knee_threshold.is_finite() && self.knee_threshold >= 0.0) {
            bad.push("knee_threshold must be a nonnegative number".into());
        }
        if self.wigner_points < 3 {
            bad.push("wigner_points must be at least 3".into());
        }
        let n = self.network.n.max(1);
        match kind {
            CommandKind::ClassicalSweep | CommandKind::QuantumSweep | CommandKind::Grid => {
                check_increasing("p_grid", &self.p_grid, &mut bad);
                for &p in &self.p_grid {
                    if let Err(e) = inactive_count(n, p) {
                        bad.push(format!("p_grid: {e}"));
                    }
                }
                if kind != CommandKind::ClassicalSweep && self.p_grid.first() != Some(&0.0) {
                    bad.push("p_grid must start at 0 (normalization point)".into());
                }
                check_increasing("V_grid", &self.v_grid, &mut bad);
                if self.v_grid.iter().any(|v| !(*v >= 0.0)) {
                    bad.push("V_grid entries must be nonnegative".into());
                }
                if kind == CommandKind::QuantumSweep {
                    check_increasing("kappa_grid", &self.kappa_grid, &mut bad);
                    if self.kappa_grid.iter().any(|k| !(*k > 0.0)) {
                        bad.push("kappa_grid entries must be positive".into());
                    }
                }
            }
            CommandKind::Wigner | CommandKind::Fock => {
                if let Err(e) = inactive_count(n, self.p) {
                    bad.push(e.to_string());
                }
                let roles = self.which.roles();
                if self.p >= 1.0 && roles.contains(&aging_core::Role::Active) {
                    bad.push("no active oscillators at p = 1".into());
                }
                if self.p <= 0.0 && roles.contains(&aging_core::Role::Inactive) {
                    bad.push("no inactive oscillators at p = 0".into());
                }
            }
            CommandKind::Verify => {}
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(bad.join("; ")))
        }
    }
}

fn check_increasing(name: &str, grid: &[f64], bad: &mut Vec<String>) {
    if grid.is_empty() {
        bad.push(format!("{name} must not be empty"));
    } else if grid.iter().any(|x| !x.is_finite()) {
        bad.push(format!("{name} entries must be finite"));
    } else if grid.windows(2).any(|w| !(w[1] > w[0])) {
        bad.push(format!("{name} must be strictly increasing"));
    }
}
