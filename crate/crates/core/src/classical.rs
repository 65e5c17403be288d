//! Classical network of diffusively coupled Stuart–Landau oscillators,
//!
//! ```text
//! α̇_j = (−iω + G_j/2 − κ|α_j|²) α_j + (V/N) Σ_{j'} (α_{j'} − α_j),
//! ```
//!
//! its order parameter `Q_cl = |Z(p)| / |Z(0)|` with `Z = (1/N) Σ_j α_j`, and
//! the analytic aging threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{NetworkConfig, Role};
use crate::error::{Error, Result};
use crate::ode::{rk4_step, Rk4Workspace};
use crate::scalar::{cabs, czero, Real, C};

/// Amplitude beyond which an integration is declared divergent.
pub const BLOW_UP_LIMIT: f64 = 1e6;

/// `Q_cl` below this value counts as aged.
pub const AGING_THRESHOLD: f64 = 1e-3;

pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalState<T: Real> {
    pub amplitudes: Vec<C<T>>,
    pub time: T,
}

impl<T: Real> ClassicalState<T> {
    /// Amplitudes drawn uniformly from the unit disc, reproducibly per seed.
    pub fn random_disc(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amplitudes = (0..n)
            .map(|_| {
                let r = rng.random::<f64>().sqrt();
                let theta = std::f64::consts::TAU * rng.random::<f64>();
                C::new(T::lit(r * theta.cos()), T::lit(r * theta.sin()))
            })
            .collect();
        Self {
            amplitudes,
            time: T::zero(),
        }
    }

    pub fn uniform(n: usize, alpha: C<T>) -> Self {
        Self {
            amplitudes: vec![alpha; n],
            time: T::zero(),
        }
    }

    /// Mean field `Z = (1/N) Σ α_j`.
    pub fn mean_field(&self) -> C<T> {
        mean(&self.amplitudes)
    }
}

fn mean<T: Real>(a: &[C<T>]) -> C<T> {
    let n = T::from_usize_lossy(a.len().max(1));
    a.iter().fold(czero(), |acc, z| acc + z) / n
}

/// Time stepping and stationarity protocol.
#[derive(Clone, Copy, Debug)]
pub struct ClassicalControl<T> {
    pub dt: T,
    /// Transient discarded before averaging.
    pub t_transient: T,
    /// End of the averaging window.
    pub t_final: T,
    pub seed: u64,
    /// Relative agreement required between the two halves of the averaging
    /// window for a point to count as converged.
    pub stationarity_tol: T,
}

impl<T: Real> Default for ClassicalControl<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(0.01),
            t_transient: T::lit(200.0),
            t_final: T::lit(400.0),
            seed: DEFAULT_SEED,
            stationarity_tol: T::lit(1e-3),
        }
    }
}

fn network_rhs<'a, T: Real>(
    cfg: &'a NetworkConfig<T>,
) -> impl FnMut(T, &[C<T>], &mut [C<T>]) + 'a {
    let half = T::lit(0.5);
    let gains: Vec<T> = (0..cfg.n).map(|j| cfg.gain(cfg.role(j)) * half).collect();
    let rot = C::new(T::zero(), -cfg.omega);
    move |_t, y, dy| {
        // (V/N) Σ_{j'} (α_{j'} − α_j) = V (Z − α_j)
        let z = mean(y);
        for j in 0..y.len() {
            let a = y[j];
            let lin = rot + C::new(gains[j] - cfg.kappa * a.norm_sqr(), T::zero());
            dy[j] = lin * a + (z - a) * cfg.coupling;
        }
    }
}

/// Integrates with fixed-step RK4 from `init` to `t_final`, calling `observe`
/// after every step. The last step is shortened to land on `t_final`.
pub fn integrate_with<T: Real, O>(
    cfg: &NetworkConfig<T>,
    init: &ClassicalState<T>,
    t_final: T,
    dt: T,
    mut observe: O,
) -> Result<ClassicalState<T>>
where
    O: FnMut(T, &[C<T>]),
{
    cfg.validate()?;
    if init.amplitudes.len() != cfg.n {
        return Err(Error::DimensionMismatch {
            expected: cfg.n,
            found: init.amplitudes.len(),
        });
    }
    if !(t_final > init.time) {
        return Err(Error::InvalidConfig("t_final must exceed the initial time".into()));
    }
    if !(dt > T::zero()) {
        return Err(Error::InvalidConfig("dt must be positive".into()));
    }
    let mut sys = network_rhs(cfg);
    let mut ws = Rk4Workspace::new(cfg.n);
    let mut y = init.amplitudes.clone();
    let mut t = init.time;
    let limit = T::lit(BLOW_UP_LIMIT);
    let steps = ((t_final - t) / dt).ceil().as_f64() as usize;
    for k in 0..steps {
        let h = if k + 1 == steps { t_final - t } else { dt };
        if h <= T::zero() {
            break;
        }
        rk4_step(&mut sys, &mut ws, t, h, &mut y);
        t += h;
        for z in &y {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite { t: t.as_f64() });
            }
            if cabs(*z) > limit {
                return Err(Error::BlowUp {
                    t: t.as_f64(),
                    limit: BLOW_UP_LIMIT,
                });
            }
        }
        observe(t, &y);
    }
    Ok(ClassicalState {
        amplitudes: y,
        time: t,
    })
}

/// Trajectory sampled every `sample_every` time units (plus the final state).
pub fn integrate_network<T: Real>(
    cfg: &NetworkConfig<T>,
    init: &ClassicalState<T>,
    t_final: T,
    dt: T,
    sample_every: T,
) -> Result<Vec<ClassicalState<T>>> {
    let mut out = vec![init.clone()];
    let mut next = init.time + sample_every;
    let last = integrate_with(cfg, init, t_final, dt, |t, y| {
        if t >= next - dt * T::lit(1e-6) {
            out.push(ClassicalState {
                amplitudes: y.to_vec(),
                time: t,
            });
            while next <= t + dt * T::lit(1e-6) {
                next += sample_every;
            }
        }
    })?;
    if out.last().map(|s| s.time) != Some(last.time) {
        out.push(last);
    }
    Ok(out)
}

/// Time-averaged `|Z|` over `[t_transient, t_final]` and whether its two
/// half-window averages agree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stationary<T> {
    pub mean_abs_z: T,
    pub converged: bool,
}

/// Runs the stationarity protocol from the seeded initial condition.
pub fn stationary_order<T: Real>(cfg: &NetworkConfig<T>, controls: &ClassicalControl<T>) -> Result<Stationary<T>> {
    if !(controls.t_final > controls.t_transient) || controls.t_transient < T::zero() {
        return Err(Error::InvalidConfig(
            "averaging window must satisfy 0 <= t_transient < t_final".into(),
        ));
    }
    let init = ClassicalState::random_disc(cfg.n, controls.seed);
    let mid = (controls.t_transient + controls.t_final) * T::lit(0.5);
    let (mut first, mut second) = (T::zero(), T::zero());
    let (mut w1, mut w2) = (T::zero(), T::zero());
    let mut prev: Option<(T, T)> = None;
    integrate_with(cfg, &init, controls.t_final, controls.dt, |t, y| {
        let z = cabs(mean(y));
        if t >= controls.t_transient {
            if let Some((tp, zp)) = prev {
                let seg = (z + zp) * T::lit(0.5) * (t - tp);
                if t <= mid {
                    first += seg;
                    w1 += t - tp;
                } else {
                    second += seg;
                    w2 += t - tp;
                }
            }
            prev = Some((t, z));
        }
    })?;
    let total = w1 + w2;
    let mean_abs_z = if total > T::zero() { (first + second) / total } else { T::zero() };
    let (a1, a2) = (
        if w1 > T::zero() { first / w1 } else { T::zero() },
        if w2 > T::zero() { second / w2 } else { T::zero() },
    );
    let scale = a1.abs().max(a2.abs());
    let converged = (a1 - a2).abs() <= controls.stationarity_tol * scale + T::lit(1e-12);
    Ok(Stationary {
        mean_abs_z,
        converged,
    })
}

/// `Q_cl(p) = ⟨|Z|⟩(p) / ⟨|Z|⟩(0)` with identical protocol and seed.
pub fn order_parameter_qcl<T: Real>(cfg: &NetworkConfig<T>, p: T, controls: &ClassicalControl<T>) -> Result<T> {
    let reference = stationary_order(&cfg.with_p(T::zero())?, controls)?;
    check_reference(reference.mean_abs_z)?;
    if p == T::zero() {
        return Ok(T::one());
    }
    let s = stationary_order(&cfg.with_p(p)?, controls)?;
    Ok(s.mean_abs_z / reference.mean_abs_z)
}

fn check_reference<T: Real>(z0: T) -> Result<()> {
    if z0 < T::lit(1e-12) {
        return Err(Error::DegenerateNormalization(z0.as_f64()));
    }
    Ok(())
}

/// Analytic threshold `p_c = a(2V + b) / (2(a + b)V)`, clamped to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticalFraction<T> {
    pub value: T,
    /// The raw formula exceeded 1: no aging transition at this coupling.
    pub clamped: bool,
}

pub fn critical_fraction<T: Real>(a: T, b: T, v: T) -> Result<CriticalFraction<T>> {
    if !(v > T::zero()) {
        return Err(Error::InvalidConfig(format!("critical fraction needs V > 0, got {v}")));
    }
    let raw = a * (T::lit(2.0) * v + b) / (T::lit(2.0) * (a + b) * v);
    Ok(if raw > T::one() {
        CriticalFraction {
            value: T::one(),
            clamped: true,
        }
    } else {
        CriticalFraction {
            value: raw.max(T::zero()),
            clamped: false,
        }
    })
}

/// `V_c = a / 2`.
pub fn critical_coupling<T: Real>(a: T) -> T {
    a * T::lit(0.5)
}

/// One row of a classical sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassicalRecord {
    #[serde(rename = "V")]
    pub v: f64,
    pub p: f64,
    #[serde(rename = "Q_cl")]
    pub q_cl: f64,
    pub p_c_analytic: f64,
    pub converged: bool,
}

/// `Q_cl` on every grid point, normalized by the `p = 0` run of the same
/// protocol.
pub fn classical_sweep<T: Real>(
    cfg: &NetworkConfig<T>,
    p_grid: &[T],
    controls: &ClassicalControl<T>,
) -> Result<Vec<ClassicalRecord>> {
    cfg.validate()?;
    let reference = stationary_order(&cfg.with_p(T::zero())?, controls)?;
    check_reference(reference.mean_abs_z)?;
    let pc = critical_fraction(cfg.a, cfg.b, cfg.coupling)
        .map(|c| c.value.as_f64())
        .unwrap_or(1.0);
    p_grid
        .iter()
        .map(|&p| {
            let s = if p == T::zero() {
                reference
            } else {
                stationary_order(&cfg.with_p(p)?, controls)?
            };
            Ok(ClassicalRecord {
                v: cfg.coupling.as_f64(),
                p: p.as_f64(),
                q_cl: (s.mean_abs_z / reference.mean_abs_z).as_f64(),
                p_c_analytic: pc,
                converged: s.converged,
            })
        })
        .collect()
}

/// First grid point at which the network counts as aged.
pub fn aging_onset(records: &[ClassicalRecord]) -> Option<f64> {
    records.iter().find(|r| r.q_cl < AGING_THRESHOLD).map(|r| r.p)
}

/// Radial fixed point `|α|² = a/(2κ)` of an uncoupled active node.
pub fn uncoupled_radius_sq<T: Real>(cfg: &NetworkConfig<T>) -> T {
    cfg.gain(Role::Active) / (T::lit(2.0) * cfg.kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(active: bool) -> NetworkConfig<f64> {
        let mut cfg = NetworkConfig::standard(0.0);
        cfg.n = 1;
        cfg.n_inactive = usize::from(!active);
        cfg
    }

    #[test]
    fn single_active_reaches_limit_cycle() {
        let cfg = single(true);
        let init = ClassicalState::uniform(1, C::new(0.3, -0.1));
        let last = integrate_with(&cfg, &init, 50.0, 0.01, |_, _| {}).unwrap();
        assert!((last.amplitudes[0].norm_sqr() - 10.0).abs() < 1e-6);
        assert!((uncoupled_radius_sq(&cfg) - 10.0).abs() < 1e-15);
    }

    #[test]
    fn single_inactive_decays() {
        let cfg = single(false);
        let init = ClassicalState::uniform(1, C::new(1.0, 0.0));
        let last = integrate_with(&cfg, &init, 20.0, 0.01, |_, _| {}).unwrap();
        assert!(last.amplitudes[0].norm() < 1e-8);
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = single(true);
        cfg.kappa = 1e-30;
        let init = ClassicalState::uniform(1, C::new(1.0, 0.0));
        assert!(matches!(
            integrate_with(&cfg, &init, 100.0, 0.01, |_, _| {}),
            Err(Error::BlowUp { .. })
        ));
    }

    #[test]
    fn below_critical_coupling_no_aging_at_half() {
        let cfg = NetworkConfig::standard(1.0);
        let q = order_parameter_qcl(&cfg, 0.5, &ClassicalControl::default()).unwrap();
        assert!(q > 0.05, "Q_cl = {q}");
    }

    #[test]
    fn endpoints_of_the_order_parameter() {
        let cfg = NetworkConfig::standard(4.0);
        let ctl = ClassicalControl::default();
        assert_eq!(order_parameter_qcl(&cfg, 0.0, &ctl).unwrap(), 1.0);
        assert!(order_parameter_qcl(&cfg, 1.0, &ctl).unwrap() < 1e-6);
    }

    #[test]
    fn critical_fraction_fixtures() {
        let at_vc = critical_fraction::<f64>(4.0, 2.0, 2.0).unwrap();
        assert!((at_vc.value - 1.0).abs() < 1e-15 && !at_vc.clamped);
        assert!((critical_fraction::<f64>(4.0, 2.0, 4.0).unwrap().value - 5.0 / 6.0).abs() < 1e-15);
        assert!((critical_fraction::<f64>(4.0, 2.0, 3.0).unwrap().value - 8.0 / 9.0).abs() < 1e-15);
        assert!((critical_fraction::<f64>(4.0, 2.0, 1e9).unwrap().value - 2.0 / 3.0).abs() < 1e-8);
        let below = critical_fraction::<f64>(4.0, 2.0, 1.0).unwrap();
        assert!(below.clamped && below.value == 1.0);
        assert!(critical_fraction::<f64>(4.0, 2.0, 0.0).is_err());
        assert_eq!(critical_coupling(4.0f64), 2.0);
        assert_eq!(critical_coupling(1.0f64), 0.5);
    }

    #[test]
    fn seeded_initial_conditions_are_reproducible_and_inside_the_disc() {
        let a = ClassicalState::<f64>::random_disc(100, 7);
        let b = ClassicalState::<f64>::random_disc(100, 7);
        let c = ClassicalState::<f64>::random_disc(100, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.amplitudes.iter().all(|z| z.norm() <= 1.0));
    }

    #[test]
    fn sweep_is_deterministic_and_tagged() {
        let cfg = NetworkConfig::standard(4.0);
        let mut ctl = ClassicalControl::default();
        ctl.t_transient = 20.0;
        ctl.t_final = 40.0;
        let grid = [0.0, 0.5, 1.0];
        let r1 = classical_sweep(&cfg, &grid, &ctl).unwrap();
        let r2 = classical_sweep(&cfg, &grid, &ctl).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1[0].q_cl, 1.0);
        assert!(r1.iter().all(|r| (r.p_c_analytic - 5.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn sampled_trajectory_includes_endpoints() {
        let cfg = NetworkConfig::standard(1.0);
        let init = ClassicalState::random_disc(cfg.n, 1);
        let traj = integrate_network(&cfg, &init, 1.0, 0.01, 0.25).unwrap();
        let times: Vec<f64> = traj.iter().map(|s| s.time).collect();
        assert_eq!(times.len(), 5);
        assert!((times[4] - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn critical_fraction_at_critical_coupling_is_one(a in 0.1f64..10.0, b in 0.1f64..10.0) {
            let pc = critical_fraction(a, b, critical_coupling(a)).unwrap();
            prop_assert!((pc.value - 1.0).abs() < 1e-12);
        }

        #[test]
        fn synchronized_manifold_is_invariant(re in -1.0f64..1.0, im in -1.0f64..1.0, v in 0.0f64..8.0) {
            let cfg = NetworkConfig::standard(v);
            let init = ClassicalState::uniform(cfg.n, C::new(re, im));
            let mut worst = 0.0f64;
            integrate_with(&cfg, &init, 5.0, 0.01, |_, y| {
                for z in y {
                    worst = worst.max((z - y[0]).norm());
                }
            }).unwrap();
            prop_assert!(worst <= 1e-10);
        }
    }
}
