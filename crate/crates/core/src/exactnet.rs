//! Exact master equation of a small network (up to three modes) on the
//! product Fock space, used as an oracle for the single-mode machinery and
//! the mean-field reduction:
//!
//! ```text
//! ρ̇ = −i[Σ ω a_j†a_j, ρ] + Σ_j G_j D[O_j]ρ + κ Σ_j D[a_j²]ρ
//!      + (V/N) Σ_j Σ_{j'≠j} D[a_j − a_{j'}]ρ
//! ```
//!
//! Every operator is kept in banded form on the product space, so no
//! superoperator is ever assembled.

use nalgebra::DMatrix;

use crate::config::{NetworkConfig, Role};
use crate::error::{Error, Result};
use crate::fockspace::{annihilation, coherent_state, DensityMatrix, OperatorMatrix};
use crate::lindblad::{symmetrize_in_place, trace_of, BandedOp, Liouvillian};
use crate::meanfield::{flush_tiny, robust_min_eigenvalue, to_density, Frame};
use crate::ode::{DormandPrince, Flow, StepControl};
use crate::scalar::{cr, Elem, Real, C};

/// Largest product-space dimension the dense representation accepts.
pub const MAX_TOTAL_DIM: usize = 1000;

pub const MAX_MODES: usize = 3;

/// Stationary `[⟨n⟩_active, ⟨n⟩_inactive]` of an active–inactive pair at
/// `V = 5` with the standard rates and cutoff 8: null space of the assembled
/// 4096 × 4096 generator from an independent dense eigensolver.
pub const REFERENCE_PAIR_V5: [f64; 2] = [3.455297550698993, 0.9670085048011774];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompositeSpace {
    n_modes: usize,
    cutoff: usize,
}

impl CompositeSpace {
    pub fn new(n_modes: usize, cutoff: usize) -> Result<Self> {
        if n_modes == 0 || n_modes > MAX_MODES {
            return Err(Error::InvalidConfig(format!(
                "exact network supports 1 to {MAX_MODES} modes, got {n_modes}"
            )));
        }
        if cutoff < 2 {
            return Err(Error::InvalidDimension { dim: cutoff });
        }
        let total = cutoff
            .checked_pow(n_modes as u32)
            .filter(|&t| t <= MAX_TOTAL_DIM)
            .ok_or(Error::SpaceTooLarge {
                dim: cutoff.saturating_pow(n_modes as u32),
                limit: MAX_TOTAL_DIM,
            })?;
        debug_assert!(total <= MAX_TOTAL_DIM);
        Ok(Self { n_modes, cutoff })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn total_dim(&self) -> usize {
        self.cutoff.pow(self.n_modes as u32)
    }

    /// Dimensions of the factors before and after `mode` (mode 0 is the
    /// leftmost Kronecker factor).
    fn split(&self, mode: usize) -> (usize, usize) {
        (
            self.cutoff.pow(mode as u32),
            self.cutoff.pow((self.n_modes - 1 - mode) as u32),
        )
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes {
            return Err(Error::InvalidConfig(format!(
                "mode index {mode} out of range for {} modes",
                self.n_modes
            )));
        }
        Ok(())
    }

    fn banded_mode<T: Real>(&self, mode: usize, local: &BandedOp<T>) -> Result<BandedOp<T>> {
        self.check_mode(mode)?;
        let (l, r) = self.split(mode);
        Ok(local.embedded(l, r))
    }
}

/// `I ⊗ … ⊗ local ⊗ … ⊗ I` with `local` in slot `mode`.
pub fn mode_operator<T: Real>(
    space: &CompositeSpace,
    mode: usize,
    local: &OperatorMatrix<T>,
) -> Result<OperatorMatrix<T>> {
    space.check_mode(mode)?;
    if local.dim() != space.cutoff {
        return Err(Error::DimensionMismatch {
            expected: space.cutoff,
            found: local.dim(),
        });
    }
    let (l, r) = space.split(mode);
    let left = DMatrix::<C<T>>::identity(l, l);
    let right = DMatrix::<C<T>>::identity(r, r);
    OperatorMatrix::from_matrix(left.kronecker(local.matrix()).kronecker(&right))
}

/// Compiled exact generator for one network configuration.
#[derive(Clone, Debug)]
pub struct ExactNetwork<T: Real> {
    space: CompositeSpace,
    roles: Vec<Role>,
    liouvillian: Liouvillian<T>,
}

impl<T: Real> ExactNetwork<T> {
    /// Uses `N = n_modes` with the per-mode `roles`; `cfg.n` and
    /// `cfg.n_inactive` are ignored.
    pub fn new(space: CompositeSpace, cfg: &NetworkConfig<T>, roles: &[Role], frame: Frame) -> Result<Self> {
        if roles.len() != space.n_modes {
            return Err(Error::DimensionMismatch {
                expected: space.n_modes,
                found: roles.len(),
            });
        }
        let checked = NetworkConfig {
            n: space.n_modes,
            n_inactive: 0,
            cutoff: space.cutoff,
            ..*cfg
        };
        checked.validate()?;

        let a_local = BandedOp::from_dense(annihilation::<T>(space.cutoff)?.matrix());
        let ad_local = a_local.adjoint();
        let a2_local = a_local.mul(&a_local)?;
        let n_local = ad_local.mul(&a_local)?;
        let dim = space.total_dim();

        let mut h = BandedOp::zeros(dim);
        if frame == Frame::Lab {
            for j in 0..space.n_modes {
                h = h.add(&space.banded_mode(j, &n_local.scale(cr(cfg.omega)))?)?;
            }
        }
        let modes: Vec<BandedOp<T>> = (0..space.n_modes)
            .map(|j| space.banded_mode(j, &a_local))
            .collect::<Result<_>>()?;
        let mut jumps = Vec::new();
        for (j, role) in roles.iter().enumerate() {
            let pump = match role {
                Role::Active => space.banded_mode(j, &ad_local)?,
                Role::Inactive => modes[j].clone(),
            };
            jumps.push((cfg.pump_rate(*role), pump));
            jumps.push((cfg.kappa, space.banded_mode(j, &a2_local)?));
        }
        // Ordered pairs (j, j') and (j', j) give the same dissipator.
        let pair_rate = T::lit(2.0) * cfg.coupling / T::from_usize_lossy(space.n_modes);
        for j in 0..space.n_modes {
            for k in j + 1..space.n_modes {
                let diff = modes[j].add(&modes[k].scale(cr(-T::one())))?;
                jumps.push((pair_rate, diff));
            }
        }
        Ok(Self {
            space,
            roles: roles.to_vec(),
            liouvillian: Liouvillian::from_banded(h, jumps)?,
        })
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    /// `ρ̇` for any square matrix on the product space.
    pub fn rhs_matrix(&mut self, rho: &DMatrix<C<T>>) -> Result<DMatrix<C<T>>> {
        let dim = self.space.total_dim();
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: rho.nrows(),
            });
        }
        let mut out = DMatrix::zeros(dim, dim);
        self.liouvillian.apply(rho.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Product of per-mode seeds: coherent `√(a/2κ)` (capped at `√(cutoff/3)`)
    /// for active modes, a tenth of that for inactive ones.
    pub fn seed_state(&self, cfg: &NetworkConfig<T>) -> Result<DensityMatrix<T>> {
        let d = self.space.cutoff;
        let alpha0 = (cfg.a / (T::lit(2.0) * cfg.kappa))
            .sqrt()
            .min((T::from_usize_lossy(d) / T::lit(3.0)).sqrt());
        let mut rho: Option<DensityMatrix<T>> = None;
        for role in &self.roles {
            let amp = match role {
                Role::Active => alpha0,
                Role::Inactive => alpha0 * T::lit(0.1),
            };
            let local = coherent_state(d, cr(amp))?;
            rho = Some(match rho {
                None => local,
                Some(r) => r.kron(&local),
            });
        }
        Ok(rho.expect("at least one mode"))
    }
}

/// `ρ̇` of the exact network in the lab frame.
pub fn full_rhs<T: Real>(
    space: &CompositeSpace,
    cfg: &NetworkConfig<T>,
    roles: &[Role],
    rho: &DensityMatrix<T>,
) -> Result<DMatrix<C<T>>> {
    ExactNetwork::new(*space, cfg, roles, Frame::Lab)?.rhs_matrix(rho.matrix())
}

/// Windowed stationarity settings, as in the mean-field co-evolution.
#[derive(Clone, Copy, Debug)]
pub struct ExactControl<T> {
    pub step: StepControl<T>,
    pub window: T,
    pub rtol: T,
    pub atol: T,
    /// The stationary populations do not depend on the frame, since every
    /// jump operator lowers or raises the total excitation by a fixed amount.
    pub frame: Frame,
}

impl<T: Real> Default for ExactControl<T> {
    fn default() -> Self {
        Self {
            step: StepControl {
                atol: T::lit(1e-12),
                rtol: T::lit(1e-10),
                ..StepControl::default()
            },
            window: T::lit(10.0),
            rtol: T::lit(1e-6),
            atol: T::lit(1e-12),
            frame: Frame::Rotating,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExactResult<T: Real> {
    /// `⟨a_j†a_j⟩` per mode.
    pub mean_boson: Vec<T>,
    pub converged: bool,
    pub t_end: f64,
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
    pub state: DensityMatrix<T>,
}

/// Integrates the exact network from its product seed until consecutive
/// window averages of the total boson number agree, or `t_final`.
pub fn exact_mean_boson<T: Real>(
    space: &CompositeSpace,
    cfg: &NetworkConfig<T>,
    roles: &[Role],
    t_final: T,
    controls: &ExactControl<T>,
) -> Result<ExactResult<T>> {
    if !(t_final > T::zero()) {
        return Err(Error::InvalidConfig("t_final must be positive".into()));
    }
    let net = ExactNetwork::new(*space, cfg, roles, controls.frame)?;
    let rho0 = net.seed_state(cfg)?;
    let counts = mode_counts(space);
    let real = rho0.matrix().iter().all(|z| z.im == T::zero());
    let run = match (real, net.liouvillian.to_real()) {
        (true, Some(l)) => {
            let y: Vec<T> = rho0.matrix().iter().map(|z| z.re).collect();
            windowed(l, y, &counts, t_final, controls)?
        }
        _ => {
            let y = rho0.matrix().as_slice().to_vec();
            windowed(net.liouvillian.clone(), y, &counts, t_final, controls)?
        }
    };
    let state = run.state;
    let min_eigenvalue = run.min_eig.min(robust_min_eigenvalue(&state));
    let pops = state.populations();
    let mean_boson = (0..space.n_modes)
        .map(|j| {
            pops.iter()
                .zip(&counts[j])
                .fold(T::zero(), |acc, (&p, &n)| acc + p * T::from_usize_lossy(n))
        })
        .collect();
    Ok(ExactResult {
        mean_boson,
        converged: run.converged,
        t_end: run.t_end,
        max_trace_drift: run.drift,
        min_eigenvalue,
        state,
    })
}

/// `counts[j][i]`: occupation of mode `j` in product basis state `i`.
fn mode_counts(space: &CompositeSpace) -> Vec<Vec<usize>> {
    (0..space.n_modes)
        .map(|j| {
            let (_, r) = space.split(j);
            (0..space.total_dim()).map(|i| (i / r) % space.cutoff).collect()
        })
        .collect()
}

struct Windowed<T: Real> {
    state: DensityMatrix<T>,
    converged: bool,
    t_end: f64,
    drift: f64,
    min_eig: f64,
}

fn windowed<T: Real, E: Elem<T>>(
    mut liou: Liouvillian<T, E>,
    mut y: Vec<E>,
    counts: &[Vec<usize>],
    t_final: T,
    controls: &ExactControl<T>,
) -> Result<Windowed<T>> {
    let dim = liou.dim();
    let total: Vec<T> = (0..dim)
        .map(|i| T::from_usize_lossy(counts.iter().map(|c| c[i]).sum()))
        .collect();
    let nbar = |y: &[E]| {
        (0..dim).fold(T::zero(), |acc, i| acc + y[i + i * dim].real_part() * total[i])
    };
    let mut sys = |_t: T, y: &[E], dy: &mut [E]| liou.apply_hermitian(y, dy);
    let mut dp = DormandPrince::new(y.len(), controls.step);
    let (mut window_start, mut integral) = (T::zero(), T::zero());
    let (mut prev_t, mut prev_n) = (T::zero(), nbar(&y));
    let mut prev_avg: Option<T> = None;
    let mut converged = false;
    let mut drift = 0.0f64;
    let mut min_eig = f64::INFINITY;
    let stats = dp.integrate(&mut sys, T::zero(), t_final, &mut y, |t, y| {
        symmetrize_in_place(y, dim);
        flush_tiny(y);
        let tr = trace_of(y, dim);
        drift = drift.max((tr - E::from_real(T::one())).modulus().as_f64());
        let n_now = nbar(y);
        integral += (n_now + prev_n) * T::lit(0.5) * (t - prev_t);
        prev_t = t;
        prev_n = n_now;
        if t - window_start >= controls.window {
            let avg = integral / (t - window_start);
            min_eig = min_eig.min(robust_min_eigenvalue(&to_density(y, dim)));
            if let Some(prev) = prev_avg {
                if (avg - prev).abs() <= controls.rtol * avg.abs() + controls.atol {
                    converged = true;
                    return Flow::Stop;
                }
            }
            prev_avg = Some(avg);
            window_start = t;
            integral = T::zero();
        }
        Flow::Modified
    })?;
    Ok(Windowed {
        state: to_density(&y, dim),
        converged,
        t_end: stats.t_end,
        drift,
        min_eig,
    })
}
