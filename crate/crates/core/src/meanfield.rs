//! Self-consistent mean-field reduction of the quantum network.
//!
//! Under the product ansatz every oscillator sees the coherent field of all
//! the others. With group-identical parameters the network reduces exactly to
//! two single-mode density matrices, one per group, coupled through
//!
//! ```text
//! A_active   = ((N_a − 1)⟨a⟩_a + N_i ⟨a⟩_i) / N
//! A_inactive = (N_a ⟨a⟩_a + (N_i − 1)⟨a⟩_i) / N
//! ```
//!
//! Everything runs in the frame rotating at ω (shared by all nodes), where the
//! Hamiltonian drops out and a symmetry-broken solution is stationary.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{NetworkConfig, Role};
use crate::error::{Error, Result};
use crate::fockspace::{
    annihilation, coherent_state, number, DensityMatrix, OperatorMatrix, TRUNCATION_GUARD,
};
use crate::lindblad::{
    steady_state, symmetrize_in_place, trace_of, DissipatorTerm, Drive, Liouvillian,
    MasterEquation,
};
use crate::ode::{DormandPrince, Flow, StepControl};
use crate::scalar::{cabs, cr, czero, Elem, Real, C};

/// How a record's stationary state was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "co-evolution")]
    CoEvolution,
    #[serde(rename = "fixed-point")]
    FixedPoint,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::CoEvolution => "co-evolution",
            Method::FixedPoint => "fixed-point",
        }
    }
}

/// Reference frame for the single-mode equations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    Lab,
    Rotating,
}

/// Representative density matrices of the two groups.
#[derive(Clone, Debug)]
pub struct GroupState<T: Real> {
    pub rho_active: Option<DensityMatrix<T>>,
    pub rho_inactive: Option<DensityMatrix<T>>,
    pub p: T,
    pub cutoff: usize,
}

impl<T: Real> GroupState<T> {
    /// Symmetry-breaking seeds: coherent states with amplitude
    /// `α₀ = √(a/2κ)` (active) and `0.1·α₀` (inactive), on the real axis.
    pub fn seeded(cfg: &NetworkConfig<T>) -> Result<Self> {
        let alpha0 = (cfg.a / (T::lit(2.0) * cfg.kappa)).sqrt();
        let max_alpha = (T::from_usize_lossy(cfg.cutoff) / T::lit(3.0)).sqrt();
        let alpha0 = alpha0.min(max_alpha);
        let rho_active = if cfg.n_active() > 0 {
            Some(coherent_state(cfg.cutoff, cr(alpha0))?)
        } else {
            None
        };
        let rho_inactive = if cfg.n_inactive > 0 {
            Some(coherent_state(cfg.cutoff, cr(T::lit(0.1) * alpha0))?)
        } else {
            None
        };
        Ok(Self {
            rho_active,
            rho_inactive,
            p: cfg.p(),
            cutoff: cfg.cutoff,
        })
    }

    pub fn get(&self, role: Role) -> Option<&DensityMatrix<T>> {
        match role {
            Role::Active => self.rho_active.as_ref(),
            Role::Inactive => self.rho_inactive.as_ref(),
        }
    }

    fn require(&self, role: Role) -> Result<&DensityMatrix<T>> {
        self.get(role).ok_or(Error::EmptyGroup(role.as_str()))
    }

    /// Fits the state to `cfg`'s group sizes, reusing matrices where
    /// present and falling back to the seeds otherwise.
    pub fn adapted_to(&self, cfg: &NetworkConfig<T>) -> Result<Self> {
        let seeds = Self::seeded(cfg)?;
        let pick = |own: &Option<DensityMatrix<T>>, seed: Option<DensityMatrix<T>>| match seed {
            Some(s) => Some(own.clone().filter(|r| r.dim() == cfg.cutoff).unwrap_or(s)),
            None => None,
        };
        Ok(Self {
            rho_active: pick(&self.rho_active, seeds.rho_active),
            rho_inactive: pick(&self.rho_inactive, seeds.rho_inactive),
            p: cfg.p(),
            cutoff: cfg.cutoff,
        })
    }

    /// Largest top-two-level population across present groups, with the
    /// offending group's name.
    pub fn worst_truncation(&self) -> (f64, &'static str) {
        let mut worst = (0.0, "active");
        for role in [Role::Active, Role::Inactive] {
            if let Some(r) = self.get(role) {
                let t = r.top_population().as_f64();
                if t > worst.0 {
                    worst = (t, role.as_str());
                }
            }
        }
        worst
    }
}

/// Mean fields seen by a member of each group; `None` for an empty group.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupFields<T: Real> {
    pub active: Option<C<T>>,
    pub inactive: Option<C<T>>,
}

/// One `(V, p, κ)` evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    #[serde(rename = "V")]
    pub v: f64,
    pub p: f64,
    pub kappa: f64,
    pub n_mf: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub converged: bool,
    /// Simulated time for co-evolution, iteration count for fixed point.
    pub iterations_or_time: f64,
    pub method: Method,
    /// |⟨a⟩| of the active group (0 when absent).
    #[serde(skip)]
    pub coherence_active: f64,
    /// |⟨a⟩| of the inactive group (0 when absent).
    #[serde(skip)]
    pub coherence_inactive: f64,
    #[serde(skip)]
    pub max_trace_drift: f64,
    #[serde(skip)]
    pub min_eigenvalue: f64,
    #[serde(skip)]
    pub top_population: f64,
}

/// `⟨a⟩ = Σ_n √n ρ_{n,n−1}` for a column-major buffer.
#[inline]
fn coherence_of<T: Real, E: Elem<T>>(rho: &[E], dim: usize, sqrt_n: &[T]) -> E {
    let mut acc = E::zero();
    for n in 1..dim {
        acc += rho[n + (n - 1) * dim] * sqrt_n[n];
    }
    acc
}

#[inline]
fn mean_number_of<T: Real, E: Elem<T>>(rho: &[E], dim: usize) -> T {
    let mut acc = T::zero();
    for n in 1..dim {
        acc += rho[n + n * dim].real_part() * T::from_usize_lossy(n);
    }
    acc
}

fn fields_of<T: Real, E: Elem<T>>(
    cfg: &NetworkConfig<T>,
    mean_a: Option<E>,
    mean_i: Option<E>,
) -> (Option<E>, Option<E>) {
    let n = T::from_usize_lossy(cfg.n);
    let na = cfg.n_active();
    let ni = cfg.n_inactive;
    let ea = mean_a.unwrap_or_else(E::zero);
    let ei = mean_i.unwrap_or_else(E::zero);
    let w = |k: usize| T::from_usize_lossy(k) / n;
    (
        (na > 0).then(|| ea * w(na - 1) + ei * w(ni)),
        (ni > 0).then(|| ea * w(na) + ei * w(ni - 1)),
    )
}

fn fields_from<T: Real>(
    cfg: &NetworkConfig<T>,
    mean_a: Option<C<T>>,
    mean_i: Option<C<T>>,
) -> GroupFields<T> {
    let (active, inactive) = fields_of(cfg, mean_a, mean_i);
    GroupFields { active, inactive }
}

/// Fields `(A_active, A_inactive)` with the self-term excluded.
pub fn group_fields<T: Real>(gs: &GroupState<T>, cfg: &NetworkConfig<T>) -> Result<GroupFields<T>> {
    cfg.validate()?;
    let a = annihilation::<T>(gs.cutoff)?;
    let mean = |role: Role| -> Result<Option<C<T>>> {
        let count = match role {
            Role::Active => cfg.n_active(),
            Role::Inactive => cfg.n_inactive,
        };
        if count == 0 {
            return Ok(None);
        }
        Ok(Some(crate::fockspace::expectation(gs.require(role)?, &a)?))
    };
    Ok(fields_from(cfg, mean(Role::Active)?, mean(Role::Inactive)?))
}

/// Single-oscillator mean-field master equation for one group.
pub fn assemble_mf_equation<T: Real>(
    role: Role,
    cfg: &NetworkConfig<T>,
    field: C<T>,
    frame: Frame,
) -> Result<MasterEquation<T>> {
    let c = cfg.cutoff;
    let a = annihilation::<T>(c)?;
    let h = match frame {
        Frame::Lab => number::<T>(c)?.scale(cr(cfg.omega)),
        Frame::Rotating => OperatorMatrix::zeros(c)?,
    };
    let jump = match role {
        Role::Active => a.dagger(),
        Role::Inactive => a.clone(),
    };
    let terms = vec![
        DissipatorTerm::new(cfg.pump_rate(role), jump)?,
        DissipatorTerm::new(cfg.kappa, a.mul(&a)?)?,
        DissipatorTerm::new(coupling_loss(cfg), a)?,
    ];
    MasterEquation::new(
        h,
        terms,
        Some(Drive {
            field,
            strength: cfg.coupling,
        }),
    )
}

/// Local single-boson loss `2V(N−1)/N` produced by the coupling.
pub fn coupling_loss<T: Real>(cfg: &NetworkConfig<T>) -> T {
    let n = T::from_usize_lossy(cfg.n);
    T::lit(2.0) * cfg.coupling * (n - T::one()) / n
}

/// `n̄_mf = (1 − p)⟨n⟩_a + p⟨n⟩_i`.
pub fn mean_boson<T: Real>(gs: &GroupState<T>) -> T {
    let mean_n = |r: &Option<DensityMatrix<T>>| {
        r.as_ref()
            .map(|r| mean_number_of(r.matrix().as_slice(), r.dim()))
            .unwrap_or_else(T::zero)
    };
    let p = gs.p;
    let na = if gs.rho_active.is_some() { mean_n(&gs.rho_active) } else { T::zero() };
    let ni = if gs.rho_inactive.is_some() { mean_n(&gs.rho_inactive) } else { T::zero() };
    (T::one() - p) * na + p * ni
}

/// Settings for [`coevolve`].
#[derive(Clone, Copy, Debug)]
pub struct CoevolveControl<T> {
    pub step: StepControl<T>,
    pub t_final: T,
    /// Length of the averaging window for the convergence test.
    pub window: T,
    /// Relative change of consecutive window averages of n̄ that counts as
    /// stationary.
    pub rtol: T,
    /// Absolute floor of the same test (n̄ near zero).
    pub atol: T,
    /// Fail with [`Error::CutoffTooSmall`] when the final state exceeds the
    /// truncation guard.
    pub enforce_truncation_guard: bool,
}

impl<T: Real> Default for CoevolveControl<T> {
    fn default() -> Self {
        Self {
            // Looser steps let the smallest eigenvalue drift to about -3e-8.
            step: StepControl {
                atol: T::lit(1e-12),
                rtol: T::lit(1e-10),
                ..StepControl::default()
            },
            t_final: T::lit(3000.0),
            window: T::lit(10.0),
            rtol: T::lit(1e-6),
            atol: T::lit(1e-12),
            enforce_truncation_guard: true,
        }
    }
}

/// Time-domain self-consistency: both group matrices are integrated as one
/// coupled system, with the mean fields recomputed from the current state at
/// every Runge–Kutta stage.
///
/// When the seeds are real the flow never leaves the real subspace (the
/// rotating-frame generator is real), and the integration runs in real
/// arithmetic.
pub fn coevolve<T: Real>(
    cfg: &NetworkConfig<T>,
    seeds: &GroupState<T>,
    controls: &CoevolveControl<T>,
) -> Result<(GroupState<T>, SweepRecord)> {
    coevolve_with(cfg, seeds, controls, true)
}

pub(crate) fn coevolve_with<T: Real>(
    cfg: &NetworkConfig<T>,
    seeds: &GroupState<T>,
    controls: &CoevolveControl<T>,
    allow_real: bool,
) -> Result<(GroupState<T>, SweepRecord)> {
    cfg.validate()?;
    if !(controls.t_final > T::zero()) {
        return Err(Error::InvalidConfig("t_final must be positive".into()));
    }
    let dim = cfg.cutoff;
    let build = |role: Role, present: bool| -> Result<Option<(Liouvillian<T>, &DensityMatrix<T>)>> {
        if !present {
            return Ok(None);
        }
        let r = seeds.require(role)?;
        check_dim(r, dim)?;
        let eq = assemble_mf_equation(role, cfg, czero(), Frame::Rotating)?;
        Ok(Some((Liouvillian::new(&eq)?, r)))
    };
    let groups = [
        build(Role::Active, cfg.n_active() > 0)?,
        build(Role::Inactive, cfg.n_inactive > 0)?,
    ];

    let real_groups: Option<Vec<Option<(Liouvillian<T, T>, Vec<T>)>>> = if allow_real {
        groups
            .iter()
            .map(|g| match g {
                None => Some(None),
                Some((l, r)) => {
                    let data = r.matrix().as_slice();
                    if data.iter().any(|z| z.im != T::zero()) {
                        return None;
                    }
                    Some(Some((l.to_real()?, data.iter().map(|z| z.re).collect())))
                }
            })
            .collect()
    } else {
        None
    };

    let run = match real_groups {
        Some(rg) => {
            let [a, i]: [Option<(Liouvillian<T, T>, Vec<T>)>; 2] =
                rg.try_into().expect("two groups");
            integrate_groups(cfg, a, i, controls)?
        }
        None => {
            let [a, i] = groups.map(|g| g.map(|(l, r)| (l, r.matrix().as_slice().to_vec())));
            integrate_groups(cfg, a, i, controls)?
        }
    };

    let state = GroupState {
        rho_active: run.active,
        rho_inactive: run.inactive,
        p: cfg.p(),
        cutoff: dim,
    };
    let mut min_eig = run.min_eig;
    for role in [Role::Active, Role::Inactive] {
        if let Some(r) = state.get(role) {
            min_eig = min_eig.min(robust_min_eigenvalue(r));
        }
    }
    let (top, group) = state.worst_truncation();
    if controls.enforce_truncation_guard && top > TRUNCATION_GUARD {
        return Err(Error::CutoffTooSmall {
            group,
            population: top,
        });
    }
    if top > TRUNCATION_GUARD {
        log::warn!("truncation guard exceeded in {group} group: {top:e}");
    }
    let record = make_record(
        cfg,
        &state,
        run.converged,
        run.t_end,
        Method::CoEvolution,
        run.drift,
        min_eig,
    );
    Ok((state, record))
}

struct GroupRun<T: Real> {
    active: Option<DensityMatrix<T>>,
    inactive: Option<DensityMatrix<T>>,
    converged: bool,
    t_end: f64,
    drift: f64,
    min_eig: f64,
}

pub(crate) fn to_density<T: Real, E: Elem<T>>(y: &[E], dim: usize) -> DensityMatrix<T> {
    let data: Vec<C<T>> = y.iter().map(|z| z.to_complex()).collect();
    DensityMatrix::from_raw(DMatrix::from_vec(dim, dim, data))
}

/// Smallest eigenvalue, treating a failed or non-finite eigensolve as −∞.
pub(crate) fn robust_min_eigenvalue<T: Real>(r: &DensityMatrix<T>) -> f64 {
    let lam = r.min_eigenvalue().as_f64();
    if lam.is_nan() {
        f64::NEG_INFINITY
    } else {
        lam
    }
}

fn integrate_groups<T: Real, E: Elem<T>>(
    cfg: &NetworkConfig<T>,
    active: Option<(Liouvillian<T, E>, Vec<E>)>,
    inactive: Option<(Liouvillian<T, E>, Vec<E>)>,
    controls: &CoevolveControl<T>,
) -> Result<GroupRun<T>> {
    let dim = cfg.cutoff;
    let block = dim * dim;
    let has_a = active.is_some();
    let has_i = inactive.is_some();

    // State layout: [ρ_a | ρ_i] for whichever groups are present.
    let mut y: Vec<E> = Vec::with_capacity(2 * block);
    let (mut liou_a, mut liou_i) = (None, None);
    if let Some((l, r)) = active {
        y.extend_from_slice(&r);
        liou_a = Some(l);
    }
    let off_a = 0usize;
    let off_i = y.len();
    if let Some((l, r)) = inactive {
        y.extend_from_slice(&r);
        liou_i = Some(l);
    }

    let sqrt_n: Vec<T> = (0..dim).map(|n| T::from_usize_lossy(n).sqrt()).collect();
    let strength = cfg.coupling;
    let p = cfg.p();

    let nbar = |y: &[E]| {
        let na = if has_a { mean_number_of(&y[off_a..off_a + block], dim) } else { T::zero() };
        let ni = if has_i { mean_number_of(&y[off_i..off_i + block], dim) } else { T::zero() };
        (T::one() - p) * na + p * ni
    };

    let mut sys = |_t: T, y: &[E], dy: &mut [E]| {
        let ea = has_a.then(|| coherence_of(&y[off_a..off_a + block], dim, &sqrt_n));
        let ei = has_i.then(|| coherence_of(&y[off_i..off_i + block], dim, &sqrt_n));
        let (fa, fi) = fields_of(cfg, ea, ei);
        if let (Some(l), Some(field)) = (liou_a.as_mut(), fa) {
            l.set_field(Some((field, strength)));
            l.apply_hermitian(&y[off_a..off_a + block], &mut dy[off_a..off_a + block]);
        }
        if let (Some(l), Some(field)) = (liou_i.as_mut(), fi) {
            l.set_field(Some((field, strength)));
            l.apply_hermitian(&y[off_i..off_i + block], &mut dy[off_i..off_i + block]);
        }
    };

    let mut dp = DormandPrince::new(y.len(), controls.step);
    let mut window_start = T::zero();
    let mut window_integral = T::zero();
    let mut prev_t = T::zero();
    let mut prev_n = nbar(&y);
    let mut prev_avg: Option<T> = None;
    let mut converged = false;
    let mut drift = 0.0f64;
    let mut min_eig = f64::INFINITY;

    let blocks: Vec<usize> = [(has_a, off_a), (has_i, off_i)]
        .iter()
        .filter(|(h, _)| *h)
        .map(|(_, o)| *o)
        .collect();

    let stats = dp.integrate(&mut sys, T::zero(), controls.t_final, &mut y, |t, y| {
        for &o in &blocks {
            symmetrize_in_place(&mut y[o..o + block], dim);
            flush_tiny(&mut y[o..o + block]);
            let tr = trace_of(&y[o..o + block], dim);
            drift = drift.max((tr - E::from_real(T::one())).modulus().as_f64());
        }
        let n_now = nbar(y);
        window_integral += (n_now + prev_n) * T::lit(0.5) * (t - prev_t);
        prev_t = t;
        prev_n = n_now;
        if t - window_start >= controls.window {
            let avg = window_integral / (t - window_start);
            for &o in &blocks {
                min_eig = min_eig.min(robust_min_eigenvalue(&to_density(&y[o..o + block], dim)));
            }
            if let Some(prev) = prev_avg {
                if (avg - prev).abs() <= controls.rtol * avg.abs() + controls.atol {
                    converged = true;
                    return Flow::Stop;
                }
            }
            prev_avg = Some(avg);
            window_start = t;
            window_integral = T::zero();
        }
        Flow::Modified
    })?;

    Ok(GroupRun {
        active: has_a.then(|| to_density(&y[off_a..off_a + block], dim)),
        inactive: has_i.then(|| to_density(&y[off_i..off_i + block], dim)),
        converged,
        t_end: stats.t_end,
        drift,
        min_eig,
    })
}

// Entries far below any physical scale only slow the arithmetic down once
// they reach the subnormal range.
pub(crate) fn flush_tiny<T: Real, E: Elem<T>>(y: &mut [E]) {
    let floor = T::default_epsilon().powi(5);
    for z in y.iter_mut() {
        if z.modulus() < floor {
            *z = E::zero();
        }
    }
}

fn check_dim<T: Real>(r: &DensityMatrix<T>, dim: usize) -> Result<()> {
    if r.dim() == dim {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: dim,
            found: r.dim(),
        })
    }
}

fn make_record<T: Real>(
    cfg: &NetworkConfig<T>,
    state: &GroupState<T>,
    converged: bool,
    iterations_or_time: f64,
    method: Method,
    drift: f64,
    min_eig: f64,
) -> SweepRecord {
    let sqrt_n: Vec<T> = (0..state.cutoff).map(|n| T::from_usize_lossy(n).sqrt()).collect();
    let coh = |r: Option<&DensityMatrix<T>>| {
        r.map(|r| cabs(coherence_of(r.matrix().as_slice(), r.dim(), &sqrt_n)).as_f64())
            .unwrap_or(0.0)
    };
    SweepRecord {
        v: cfg.coupling.as_f64(),
        p: cfg.p().as_f64(),
        kappa: cfg.kappa.as_f64(),
        n_mf: mean_boson(state).as_f64().max(0.0),
        q: f64::NAN,
        converged,
        iterations_or_time,
        method,
        coherence_active: coh(state.get(Role::Active)),
        coherence_inactive: coh(state.get(Role::Inactive)),
        max_trace_drift: drift,
        min_eigenvalue: min_eig,
        top_population: state.worst_truncation().0,
    }
}

/// Settings for [`fixed_point`].
#[derive(Clone, Copy, Debug)]
pub struct FixedPointControl<T> {
    pub max_iterations: usize,
    /// Convergence threshold on the change of the group coherences.
    pub tol: T,
    /// Under-relaxation weight of the new coherence (1 = plain iteration).
    pub mixing: T,
}

impl<T: Real> Default for FixedPointControl<T> {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tol: T::lit(1e-9),
            mixing: T::one(),
        }
    }
}

/// Outer fixed-point iteration over the fields: each group's stationary
/// state for frozen fields comes from [`steady_state`], then the fields are
/// refreshed from the new coherences. Used as a diagnostic cross-check.
pub fn fixed_point<T: Real>(
    cfg: &NetworkConfig<T>,
    seeds: &GroupState<T>,
    controls: &FixedPointControl<T>,
) -> Result<(GroupState<T>, SweepRecord)> {
    cfg.validate()?;
    let a = annihilation::<T>(cfg.cutoff)?;
    let mean = |r: Option<&DensityMatrix<T>>| -> Result<Option<C<T>>> {
        r.map(|r| crate::fockspace::expectation(r, &a)).transpose()
    };
    let has_a = cfg.n_active() > 0;
    let has_i = cfg.n_inactive > 0;
    let mut ea = if has_a { mean(Some(seeds.require(Role::Active)?))? } else { None };
    let mut ei = if has_i { mean(Some(seeds.require(Role::Inactive)?))? } else { None };
    let mut state = seeds.adapted_to(cfg)?;
    let mut converged = false;
    let mut iterations = 0;
    let w = controls.mixing;
    for it in 1..=controls.max_iterations {
        iterations = it;
        let f = fields_from(cfg, ea, ei);
        let solve = |role: Role, field: Option<C<T>>| -> Result<Option<DensityMatrix<T>>> {
            field
                .map(|field| steady_state(&assemble_mf_equation(role, cfg, field, Frame::Rotating)?))
                .transpose()
        };
        state.rho_active = solve(Role::Active, f.active)?;
        state.rho_inactive = solve(Role::Inactive, f.inactive)?;
        let na = mean(state.rho_active.as_ref())?;
        let ni = mean(state.rho_inactive.as_ref())?;
        let mix = |old: Option<C<T>>, new: Option<C<T>>| match (old, new) {
            (Some(o), Some(n)) => Some(o * cr(T::one() - w) + n * cr(w)),
            (_, n) => n,
        };
        let change = |old: Option<C<T>>, new: Option<C<T>>| match (old, new) {
            (Some(o), Some(n)) => cabs(o - n),
            _ => T::zero(),
        };
        let delta = change(ea, na).max(change(ei, ni));
        ea = mix(ea, na);
        ei = mix(ei, ni);
        if delta < controls.tol {
            converged = true;
            break;
        }
    }
    let mut min_eig = f64::INFINITY;
    for role in [Role::Active, Role::Inactive] {
        if let Some(r) = state.get(role) {
            min_eig = min_eig.min(r.min_eigenvalue().as_f64());
        }
    }
    let record = make_record(cfg, &state, converged, iterations as f64, Method::FixedPoint, 0.0, min_eig);
    Ok((state, record))
}

/// Fills `q` of each record by the `p = 0` record's `n_mf`.
pub fn normalize(records: &mut [SweepRecord]) -> Result<()> {
    let base = records
        .iter()
        .find(|r| r.p == 0.0)
        .map(|r| r.n_mf)
        .ok_or_else(|| Error::InvalidGrid("series lacks the p = 0 normalization point".into()))?;
    if !(base > 0.0) {
        return Err(Error::DegenerateNormalization(base));
    }
    for r in records.iter_mut() {
        r.q = r.n_mf / base;
    }
    Ok(())
}

pub(crate) fn validate_p_grid<T: Real>(cfg: &NetworkConfig<T>, p_grid: &[T]) -> Result<()> {
    if p_grid.is_empty() {
        return Err(Error::InvalidGrid("empty p grid".into()));
    }
    if p_grid[0] != T::zero() {
        return Err(Error::InvalidGrid("p grid must start at 0".into()));
    }
    if p_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid("p grid must be strictly increasing".into()));
    }
    for &p in p_grid {
        cfg.with_p(p)?;
    }
    Ok(())
}

/// `Q(p)` series at fixed `V` and `κ`, warm-started along `p`.
pub fn sweep_p<T: Real>(
    cfg: &NetworkConfig<T>,
    p_grid: &[T],
    controls: &CoevolveControl<T>,
) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    validate_p_grid(cfg, p_grid)?;
    let mut out = Vec::with_capacity(p_grid.len());
    let mut previous: Option<GroupState<T>> = None;
    let coherent_floor = 1e-3;
    for &p in p_grid {
        let point = cfg.with_p(p)?;
        let seeds = match &previous {
            Some(prev) => prev.adapted_to(&point)?,
            None => GroupState::seeded(&point)?,
        };
        let (state, record) = coevolve(&point, &seeds, controls)?;
        // A collapsed field is a fixed point of the dynamics at every p, so
        // only coherent states are carried forward.
        previous = (record.coherence_active > coherent_floor).then_some(state);
        out.push(record);
    }
    normalize(&mut out)?;
    Ok(out)
}

/// Full factorial `V × p` evaluation, one row per `V`. A failing row is
/// reported as unconverged NaN cells instead of aborting the grid.
pub fn grid_vp<T: Real>(
    cfg: &NetworkConfig<T>,
    v_grid: &[T],
    p_grid: &[T],
    controls: &CoevolveControl<T>,
) -> Result<Vec<Vec<SweepRecord>>> {
    validate_p_grid(cfg, p_grid)?;
    if v_grid.is_empty() {
        return Err(Error::InvalidGrid("empty V grid".into()));
    }
    Ok(v_grid
        .iter()
        .map(|&v| {
            let row_cfg = cfg.with_coupling(v);
            sweep_p(&row_cfg, p_grid, controls)
                .unwrap_or_else(|err| failed_row(&row_cfg, p_grid, &err))
        })
        .collect())
}

pub fn failed_row<T: Real>(cfg: &NetworkConfig<T>, p_grid: &[T], err: &Error) -> Vec<SweepRecord> {
    log::warn!("V = {} row failed: {err}", cfg.coupling);
    p_grid
        .iter()
        .map(|&p| SweepRecord {
            v: cfg.coupling.as_f64(),
            p: p.as_f64(),
            kappa: cfg.kappa.as_f64(),
            n_mf: f64::NAN,
            q: f64::NAN,
            converged: false,
            iterations_or_time: 0.0,
            method: Method::CoEvolution,
            coherence_active: f64::NAN,
            coherence_inactive: f64::NAN,
            max_trace_drift: f64::NAN,
            min_eigenvalue: f64::NAN,
            top_population: f64::NAN,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::fock_state;
    use num_complex::Complex64;

    fn cfg(v: f64, p: f64) -> NetworkConfig<f64> {
        let mut c = NetworkConfig::standard(v);
        c.cutoff = 20;
        c.with_p(p).unwrap()
    }

    #[test]
    fn fields_single_group_reduction() {
        let c = cfg(1.0, 0.0);
        let gs = GroupState {
            rho_active: Some(coherent_state(20, Complex64::new(1.5, 0.0)).unwrap()),
            rho_inactive: None,
            p: 0.0,
            cutoff: 20,
        };
        let f = group_fields(&gs, &c).unwrap();
        let mean = crate::fockspace::expectation(gs.rho_active.as_ref().unwrap(), &annihilation(20).unwrap()).unwrap();
        assert!((f.active.unwrap() - mean * 0.99).norm() < 1e-14);
        assert!(f.inactive.is_none());
    }

    #[test]
    fn fields_zero_for_vacuum_and_excluded_self_sums() {
        let c = cfg(1.0, 0.5);
        let vac = GroupState {
            rho_active: Some(fock_state(20, 0).unwrap()),
            rho_inactive: Some(fock_state(20, 0).unwrap()),
            p: 0.5,
            cutoff: 20,
        };
        let f = group_fields(&vac, &c).unwrap();
        assert_eq!(f.active.unwrap().norm(), 0.0);
        assert_eq!(f.inactive.unwrap().norm(), 0.0);

        let f = fields_from(&c, Some(Complex64::new(1.0, 0.0)), Some(Complex64::new(0.0, 0.0)));
        assert!((f.active.unwrap().re - 0.49).abs() < 1e-15);
        assert!((f.inactive.unwrap().re - 0.50).abs() < 1e-15);
    }

    #[test]
    fn fields_missing_group_is_an_error() {
        let c = cfg(1.0, 0.5);
        let gs = GroupState {
            rho_active: Some(fock_state(20, 0).unwrap()),
            rho_inactive: None,
            p: 0.5,
            cutoff: 20,
        };
        assert!(matches!(group_fields(&gs, &c), Err(Error::EmptyGroup("inactive"))));
    }

    #[test]
    fn coupling_loss_coefficient() {
        assert!((coupling_loss(&NetworkConfig::<f64>::standard(5.0)) - 9.9).abs() < 1e-12);
    }

    #[test]
    fn uncoupled_equations_match_plain_oscillators() {
        let c = cfg(0.0, 0.5);
        for (role, active, pump) in [(Role::Active, true, 4.0), (Role::Inactive, false, 2.0)] {
            let mf = assemble_mf_equation(role, &c, Complex64::new(0.3, 0.0), Frame::Rotating).unwrap();
            let plain = crate::lindblad::stuart_landau(20, active, pump, 0.2, 0.0, None).unwrap();
            let rho = coherent_state(20, Complex64::new(1.0, 0.5)).unwrap();
            let d = crate::lindblad::rhs(&mf, &rho).unwrap() - crate::lindblad::rhs(&plain, &rho).unwrap();
            assert!(d.iter().all(|z| z.norm() < 1e-13));
        }
    }

    #[test]
    fn mean_boson_weights() {
        let gs = GroupState {
            rho_active: Some(fock_state(12, 10).unwrap()),
            rho_inactive: Some(fock_state(12, 2).unwrap()),
            p: 0.5,
            cutoff: 12,
        };
        assert_eq!(mean_boson(&gs), 6.0);
        let gs = GroupState { rho_active: None, rho_inactive: Some(fock_state(12, 0).unwrap()), p: 1.0, cutoff: 12 };
        assert_eq!(mean_boson(&gs), 0.0);
        let gs = GroupState { rho_active: Some(fock_state(12, 3).unwrap()), rho_inactive: None, p: 0.0, cutoff: 12 };
        assert_eq!(mean_boson(&gs), 3.0);
    }

    #[test]
    fn all_inactive_network_relaxes_to_vacuum() {
        let mut c = NetworkConfig::<f64>::standard(5.0);
        c.cutoff = 30;
        let c = c.with_p(1.0).unwrap();
        let (_, rec) = coevolve(&c, &GroupState::seeded(&c).unwrap(), &CoevolveControl::default()).unwrap();
        assert!(rec.converged);
        assert!(rec.n_mf <= 1e-8, "{}", rec.n_mf);
    }

    #[test]
    fn real_and_complex_paths_agree() {
        let mut c = cfg(3.0, 0.5);
        c.cutoff = 12;
        let seeds = GroupState::seeded(&c).unwrap();
        let ctl = CoevolveControl { t_final: 200.0, enforce_truncation_guard: false, ..CoevolveControl::default() };
        let (_, fast) = coevolve_with(&c, &seeds, &ctl, true).unwrap();
        let (_, slow) = coevolve_with(&c, &seeds, &ctl, false).unwrap();
        assert!((fast.n_mf - slow.n_mf).abs() < 1e-10, "{} vs {}", fast.n_mf, slow.n_mf);
        assert!((fast.coherence_active - slow.coherence_active).abs() < 1e-10);
    }

    #[test]
    fn uncoupled_coevolution_matches_null_space() {
        let c = cfg(0.0, 0.5);
        let ctl = CoevolveControl { enforce_truncation_guard: false, ..CoevolveControl::default() };
        let (_, rec) = coevolve(&c, &GroupState::seeded(&c).unwrap(), &ctl).unwrap();
        let ss = crate::lindblad::steady_state(&crate::lindblad::stuart_landau(20, true, 4.0, 0.2, 0.0, None).unwrap()).unwrap();
        let n_ss = crate::fockspace::expectation(&ss, &crate::fockspace::number(20).unwrap()).unwrap().re;
        assert!(rec.converged);
        assert!((rec.n_mf - 0.5 * n_ss).abs() < 1e-6, "{} vs {}", rec.n_mf, 0.5 * n_ss);
    }

    #[test]
    fn coupled_state_stays_physical() {
        let c = cfg(5.0, 0.8);
        let (gs, rec) = coevolve(&c, &GroupState::seeded(&c).unwrap(), &CoevolveControl::default()).unwrap();
        assert!(rec.converged);
        assert!(rec.max_trace_drift <= 1e-8 && rec.min_eigenvalue >= -1e-8, "{rec:?}");
        let p0 = |r: Role| gs.get(r).unwrap().populations()[0];
        assert!(p0(Role::Inactive) > 0.99 && p0(Role::Active) < 0.97);
    }

    #[test]
    fn normalization_requires_anchor() {
        let mut recs = failed_row(&cfg(1.0, 0.0), &[0.5], &Error::NoDissipators);
        assert!(normalize(&mut recs).is_err());
        assert!(validate_p_grid(&cfg(1.0, 0.0), &[0.05, 0.1]).is_err());
        assert!(validate_p_grid(&cfg(1.0, 0.0), &[0.0, 0.1, 0.1]).is_err());
    }
}
