//! Subcommand bodies. Grid points (series) run on a worker pool; results are
//! collected in grid order before anything is written.

use std::path::PathBuf;

use aging_core::analysis::{fock_distribution, knee_point, required_half_width, symmetric_axis, wigner};
use aging_core::classical::{classical_sweep, ClassicalControl, ClassicalRecord};
use aging_core::meanfield::{coevolve, failed_row, mean_boson, sweep_p, CoevolveControl, GroupState, SweepRecord};
use aging_core::{NetworkConfig64, Role};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{ensure_dir, write_rows, write_text, write_wigner};
use crate::plot::{heatmap, line_chart, Series};

pub const CLASSICAL_HEADER: [&str; 5] = ["V", "p", "Q_cl", "p_c_analytic", "converged"];
pub const QUANTUM_HEADER: [&str; 7] = ["V", "p", "kappa", "n_mf", "Q", "converged", "method"];
pub const KNEE_HEADER: [&str; 6] = ["sweep_param", "value", "p_cq", "Q_c", "curvature", "found"];
pub const GRID_HEADER: [&str; 4] = ["V", "p", "Q", "converged"];
pub const FOCK_HEADER: [&str; 2] = ["n", "probability"];

/// `p` of the slice written next to the V–p grid.
pub const INSET_P: f64 = 0.7;

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))
}

fn series_cfg(rc: &RunConfig, v: f64, kappa: f64) -> NetworkConfig64 {
    rc.network.with_coupling(v).with_kappa(kappa)
}

pub fn classical_sweep_cmd(rc: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(&rc.output_dir)?;
    let ctl = ClassicalControl { seed: rc.seed, ..ClassicalControl::default() };
    let series: Vec<Vec<ClassicalRecord>> = pool(rc.workers)?.install(|| {
        rc.v_grid
            .par_iter()
            .map(|&v| classical_sweep(&series_cfg(rc, v, rc.network.kappa), &rc.p_grid, &ctl))
            .collect::<Result<_, _>>()
    })?;
    let rows: Vec<ClassicalRecord> = series.iter().flatten().copied().collect();
    let meta = format!(
        "# initial amplitudes: uniform in the unit disc, ChaCha8 stream per seed\nseed = {}\ndt = {}\nt_transient = {}\nt_final = {}\n",
        ctl.seed, ctl.dt, ctl.t_transient, ctl.t_final
    );
    let mut written = vec![
        write_rows(&rc.output_dir, "classical_sweep.csv", &CLASSICAL_HEADER, &rows)?,
        write_text(&rc.output_dir, "classical_sweep_meta.toml", &meta)?,
    ];
    if rc.plot {
        let curves: Vec<Series> = series
            .iter()
            .zip(&rc.v_grid)
            .map(|(s, v)| Series {
                label: format!("V = {v}"),
                points: s.iter().map(|r| (r.p, r.q_cl)).collect(),
                marker: None,
            })
            .collect();
        let svg = line_chart("Classical aging", "p", "Q_cl", &curves);
        written.push(write_text(&rc.output_dir, "fig1.svg", &svg)?);
    }
    Ok(written)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct QuantumRow {
    #[serde(rename = "V")]
    pub v: f64,
    pub p: f64,
    pub kappa: f64,
    pub n_mf: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub converged: bool,
    pub method: &'static str,
}

impl From<&SweepRecord> for QuantumRow {
    fn from(r: &SweepRecord) -> Self {
        Self { v: r.v, p: r.p, kappa: r.kappa, n_mf: r.n_mf, q: r.q, converged: r.converged, method: r.method.as_str() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KneeRow {
    pub sweep_param: &'static str,
    pub value: f64,
    pub p_cq: f64,
    #[serde(rename = "Q_c")]
    pub q_c: f64,
    pub curvature: f64,
    pub found: bool,
}

/// Runs each series with warm starts along `p`; a failing series is kept
/// as unconverged NaN rows.
fn quantum_series(rc: &RunConfig, cfgs: &[NetworkConfig64]) -> Result<Vec<Vec<SweepRecord>>, CliError> {
    let ctl = CoevolveControl::default();
    Ok(pool(rc.workers)?.install(|| {
        cfgs.par_iter()
            .map(|c| sweep_p(c, &rc.p_grid, &ctl).unwrap_or_else(|e| failed_row(c, &rc.p_grid, &e)))
            .collect()
    }))
}

pub fn knee_row(rc: &RunConfig, param: &'static str, value: f64, series: &[SweepRecord]) -> KneeRow {
    let p: Vec<f64> = series.iter().map(|r| r.p).collect();
    let q: Vec<f64> = series.iter().map(|r| r.q).collect();
    match knee_point(&p, &q, rc.knee_threshold) {
        Ok(k) => KneeRow { sweep_param: param, value, p_cq: k.p_cq, q_c: k.q_c, curvature: k.curvature_score, found: k.found },
        Err(e) => {
            log::warn!("{param} = {value}: no knee: {e}");
            KneeRow { sweep_param: param, value, p_cq: f64::NAN, q_c: f64::NAN, curvature: f64::NAN, found: false }
        }
    }
}

pub fn quantum_sweep_cmd(rc: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(&rc.output_dir)?;
    let keys: Vec<(f64, f64)> = rc
        .v_grid
        .iter()
        .flat_map(|&v| rc.kappa_grid.iter().map(move |&k| (v, k)))
        .collect();
    let cfgs: Vec<_> = keys.iter().map(|&(v, k)| series_cfg(rc, v, k)).collect();
    let series = quantum_series(rc, &cfgs)?;
    let by_kappa = rc.v_grid.len() == 1 && rc.kappa_grid.len() > 1;
    let knees: Vec<KneeRow> = keys
        .iter()
        .zip(&series)
        .map(|(&(v, k), s)| if by_kappa { knee_row(rc, "kappa", k, s) } else { knee_row(rc, "V", v, s) })
        .collect();
    let rows: Vec<QuantumRow> = series.iter().flatten().map(QuantumRow::from).collect();
    let mut written = vec![
        write_rows(&rc.output_dir, "quantum_sweep.csv", &QUANTUM_HEADER, &rows)?,
        write_rows(&rc.output_dir, "knees.csv", &KNEE_HEADER, &knees)?,
    ];
    if rc.plot {
        let curves: Vec<Series> = keys
            .iter()
            .zip(&series)
            .zip(&knees)
            .map(|((&(v, k), s), knee)| Series {
                label: if rc.kappa_grid.len() > 1 { format!("V = {v}, κ = {k}") } else { format!("V = {v}") },
                points: s.iter().map(|r| (r.p, r.q)).collect(),
                marker: knee.found.then_some((knee.p_cq, knee.q_c)),
            })
            .collect();
        let svg = line_chart("Quantum aging", "p", "Q", &curves);
        written.push(write_text(&rc.output_dir, "fig3a.svg", &svg)?);
    }
    Ok(written)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridRow {
    #[serde(rename = "V")]
    pub v: f64,
    pub p: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub converged: bool,
}

pub fn grid_cmd(rc: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(&rc.output_dir)?;
    let cfgs: Vec<_> = rc.v_grid.iter().map(|&v| series_cfg(rc, v, rc.network.kappa)).collect();
    let series = quantum_series(rc, &cfgs)?;
    let rows: Vec<GridRow> = series
        .iter()
        .flatten()
        .map(|r| GridRow { v: r.v, p: r.p, q: r.q, converged: r.converged })
        .collect();
    let inset: Vec<GridRow> = rows.iter().filter(|r| (r.p - INSET_P).abs() < 1e-12).copied().collect();
    if inset.is_empty() {
        log::warn!("p grid has no p = {INSET_P}; inset file is empty");
    }
    let mut written = vec![
        write_rows(&rc.output_dir, "grid_vp.csv", &GRID_HEADER, &rows)?,
        write_rows(&rc.output_dir, "fig6_inset.csv", &GRID_HEADER, &inset)?,
    ];
    if rc.plot {
        let svg = heatmap("Q over V and p", "p", "V", &rc.p_grid, &rc.v_grid, |iv, ip| series[iv][ip].q);
        written.push(write_text(&rc.output_dir, "fig6.svg", &svg)?);
    }
    Ok(written)
}

/// Stationary group states at the configured single point.
pub fn solve_point(rc: &RunConfig) -> Result<GroupState<f64>, CliError> {
    let cfg = rc.network.with_p(rc.p)?;
    let (state, record) = coevolve(&cfg, &GroupState::seeded(&cfg)?, &CoevolveControl::default())?;
    if !record.converged {
        log::warn!("V = {}, p = {} did not reach stationarity", cfg.coupling, rc.p);
    }
    log::info!("n_mf = {}", mean_boson(&state));
    Ok(state)
}

fn group<'a>(state: &'a GroupState<f64>, role: Role) -> Result<&'a aging_core::DensityMatrix64, CliError> {
    state
        .get(role)
        .ok_or_else(|| CliError::Validation(format!("no {} group at this p", role.as_str())))
}

pub fn wigner_cmd(rc: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(&rc.output_dir)?;
    let state = solve_point(rc)?;
    let mut written = Vec::new();
    for &role in rc.which.roles() {
        let rho = group(&state, role)?;
        let nbar: f64 = fock_distribution(rho).iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        let axis = symmetric_axis(required_half_width(nbar), rc.wigner_points);
        let w = wigner(rho, &axis, &axis)?;
        let name = role.as_str();
        written.push(write_wigner(&rc.output_dir, &format!("wigner_{name}.csv"), &w)?);
        if rc.plot {
            let svg = heatmap(&format!("Wigner function, {name}"), "x", "y", &w.x_axis, &w.y_axis, |iy, ix| w.values[(iy, ix)]);
            written.push(write_text(&rc.output_dir, &format!("wigner_{name}.svg"), &svg)?);
        }
    }
    Ok(written)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FockRow {
    pub n: usize,
    pub probability: f64,
}

pub fn fock_cmd(rc: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(&rc.output_dir)?;
    let state = solve_point(rc)?;
    let mut written = Vec::new();
    for &role in rc.which.roles() {
        let rows: Vec<FockRow> = fock_distribution(group(&state, role)?)
            .into_iter()
            .enumerate()
            .map(|(n, probability)| FockRow { n, probability })
            .collect();
        let name = role.as_str();
        written.push(write_rows(&rc.output_dir, &format!("fock_{name}.csv"), &FOCK_HEADER, &rows)?);
        if rc.plot {
            let svg = line_chart(
                &format!("Fock distribution, {name}"),
                "n",
                "P(n)",
                &[Series { label: name.into(), points: rows.iter().map(|r| (r.n as f64, r.probability)).collect(), marker: None }],
            );
            written.push(write_text(&rc.output_dir, &format!("fock_{name}.svg"), &svg)?);
        }
    }
    Ok(written)
}
