//! Explicit Runge–Kutta integrators over flat real or complex state buffers.
//!
//! [`DormandPrince`] is the embedded 5(4) pair with FSAL and standard
//! PI-free step-size control; [`rk4_step`] is the classical fixed-step scheme.

use crate::error::{Error, Result};
use crate::scalar::{Elem, Real, C};

/// Right-hand side `dy = f(t, y)`.
pub trait OdeSystem<T: Real, E: Elem<T> = C<T>> {
    fn rhs(&mut self, t: T, y: &[E], dy: &mut [E]);
}

impl<T: Real, E: Elem<T>, F> OdeSystem<T, E> for F
where
    F: FnMut(T, &[E], &mut [E]),
{
    fn rhs(&mut self, t: T, y: &[E], dy: &mut [E]) {
        self(t, y, dy)
    }
}

/// What the caller wants after an accepted step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Continue,
    /// The observer changed the state; the FSAL derivative is recomputed.
    Modified,
    Stop,
}

#[derive(Clone, Copy, Debug)]
pub struct StepControl<T> {
    pub atol: T,
    pub rtol: T,
    pub h_init: T,
    pub h_min: T,
    pub h_max: T,
    pub max_steps: usize,
}

impl<T: Real> Default for StepControl<T> {
    fn default() -> Self {
        Self {
            atol: T::lit(1e-9),
            rtol: T::lit(1e-7),
            h_init: T::lit(1e-3),
            h_min: T::lit(1e-12),
            h_max: T::lit(0.5),
            max_steps: 50_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Time reached; equals the requested end unless the observer stopped early.
    pub t_end: f64,
    pub stopped_early: bool,
    /// Step size proposed for the next step, usable as a warm start.
    pub h_next: f64,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive Dormand–Prince integrator with reusable stage buffers.
pub struct DormandPrince<T: Real, E: Elem<T> = C<T>> {
    control: StepControl<T>,
    k: [Vec<E>; 7],
    ytmp: Vec<E>,
    ynew: Vec<E>,
}

impl<T: Real, E: Elem<T>> DormandPrince<T, E> {
    pub fn new(len: usize, control: StepControl<T>) -> Self {
        let z = vec![E::zero(); len];
        Self {
            control,
            k: std::array::from_fn(|_| z.clone()),
            ytmp: z.clone(),
            ynew: z,
        }
    }

    pub fn control(&self) -> &StepControl<T> {
        &self.control
    }

    /// Integrates `y` in place from `t0` to `t1`. `observe` runs after every
    /// accepted step with the new time and state.
    pub fn integrate<S, O>(
        &mut self,
        sys: &mut S,
        t0: T,
        t1: T,
        y: &mut [E],
        mut observe: O,
    ) -> Result<IntegrationStats>
    where
        S: OdeSystem<T, E>,
        O: FnMut(T, &mut [E]) -> Flow,
    {
        let n = y.len();
        assert_eq!(n, self.ynew.len(), "state length changed");
        let ctl = self.control;
        let mut stats = IntegrationStats::default();
        let mut t = t0;
        let mut h = ctl.h_init.min(ctl.h_max).min(t1 - t0);
        let mut fsal_valid = false;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let ytmp = &mut self.ytmp;
        let ynew = &mut self.ynew;

        let lit = |x: f64| T::lit(x);
        let (a21, a31, a32) = (lit(A21), lit(A31), lit(A32));
        let (a41, a42, a43) = (lit(A41), lit(A42), lit(A43));
        let (a51, a52, a53, a54) = (lit(A51), lit(A52), lit(A53), lit(A54));
        let (a61, a62, a63, a64, a65) = (lit(A61), lit(A62), lit(A63), lit(A64), lit(A65));
        let (b1, b3, b4, b5, b6) = (lit(B1), lit(B3), lit(B4), lit(B5), lit(B6));
        let (e1, e3, e4, e5, e6, e7) = (lit(E1), lit(E3), lit(E4), lit(E5), lit(E6), lit(E7));
        let tiny = T::lit(1e-12);

        while t < t1 {
            if stats.accepted + stats.rejected >= ctl.max_steps {
                return Err(failure(t, h, y));
            }
            if h < ctl.h_min {
                return Err(failure(t, h, y));
            }
            let last = t + h >= t1 - tiny * (T::one() + t1.abs());
            if last {
                h = t1 - t;
            }
            if !fsal_valid {
                sys.rhs(t, y, k1);
                stats.evaluations += 1;
            }
            let hc = h;

            for i in 0..n {
                ytmp[i] = y[i] + k1[i] * (hc * a21);
            }
            sys.rhs(t + h * T::lit(C2), ytmp, k2);
            for i in 0..n {
                ytmp[i] = y[i] + (k1[i] * a31 + k2[i] * a32) * hc;
            }
            sys.rhs(t + h * T::lit(C3), ytmp, k3);
            for i in 0..n {
                ytmp[i] = y[i] + (k1[i] * a41 + k2[i] * a42 + k3[i] * a43) * hc;
            }
            sys.rhs(t + h * T::lit(C4), ytmp, k4);
            for i in 0..n {
                ytmp[i] = y[i] + (k1[i] * a51 + k2[i] * a52 + k3[i] * a53 + k4[i] * a54) * hc;
            }
            sys.rhs(t + h * T::lit(C5), ytmp, k5);
            for i in 0..n {
                ytmp[i] = y[i]
                    + (k1[i] * a61 + k2[i] * a62 + k3[i] * a63 + k4[i] * a64 + k5[i] * a65) * hc;
            }
            sys.rhs(t + h, ytmp, k6);
            for i in 0..n {
                ynew[i] = y[i] + (k1[i] * b1 + k3[i] * b3 + k4[i] * b4 + k5[i] * b5 + k6[i] * b6) * hc;
            }
            sys.rhs(t + h, ynew, k7);
            stats.evaluations += 6;

            let mut acc = T::zero();
            let mut finite = true;
            for i in 0..n {
                let err = (k1[i] * e1 + k3[i] * e3 + k4[i] * e4 + k5[i] * e5 + k6[i] * e6 + k7[i] * e7)
                    * hc;
                let scale = ctl.atol + ctl.rtol * y[i].modulus().max(ynew[i].modulus());
                let r = err.modulus() / scale;
                finite &= r.is_finite();
                acc += r * r;
            }
            if !finite {
                if h <= ctl.h_min {
                    return Err(Error::NonFinite { t: t.as_f64() });
                }
                stats.rejected += 1;
                h *= T::lit(0.1);
                fsal_valid = true;
                continue;
            }
            let err = (acc / T::from_usize_lossy(n.max(1))).sqrt();

            if err <= T::one() {
                t = if last { t1 } else { t + h };
                y.copy_from_slice(ynew);
                std::mem::swap(k1, k7);
                fsal_valid = true;
                stats.accepted += 1;
                let fac = if err == T::zero() {
                    T::lit(5.0)
                } else {
                    (T::lit(0.9) * err.powf(T::lit(-0.2))).min(T::lit(5.0)).max(T::lit(0.2))
                };
                let h_prop = (h * fac).min(ctl.h_max);
                match observe(t, y) {
                    Flow::Continue => {}
                    Flow::Modified => fsal_valid = false,
                    Flow::Stop => {
                        stats.stopped_early = t < t1;
                        stats.t_end = t.as_f64();
                        stats.h_next = h_prop.as_f64();
                        return Ok(stats);
                    }
                }
                if !last {
                    h = h_prop;
                } else {
                    stats.h_next = h_prop.as_f64();
                }
            } else {
                stats.rejected += 1;
                let fac = (T::lit(0.9) * err.powf(T::lit(-0.2))).max(T::lit(0.2));
                h *= fac;
                // k1 still matches y.
                fsal_valid = true;
            }
        }
        stats.t_end = t.as_f64();
        if stats.h_next == 0.0 {
            stats.h_next = h.as_f64();
        }
        Ok(stats)
    }
}

fn failure<T: Real, E: Elem<T>>(t: T, h: T, y: &[E]) -> Error {
    Error::IntegrationFailure {
        t: t.as_f64(),
        h: h.as_f64(),
        last_state: y.iter().map(|z| z.to_c64()).collect(),
    }
}

/// Scratch space for [`rk4_step`].
pub struct Rk4Workspace<T: Real, E: Elem<T> = C<T>> {
    k: [Vec<E>; 4],
    tmp: Vec<E>,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Real, E: Elem<T>> Rk4Workspace<T, E> {
    pub fn new(len: usize) -> Self {
        let z = vec![E::zero(); len];
        Self {
            k: std::array::from_fn(|_| z.clone()),
            tmp: z,
            _scalar: std::marker::PhantomData,
        }
    }
}

/// One classical fourth-order Runge–Kutta step of size `h`, in place.
pub fn rk4_step<T: Real, E: Elem<T>, S: OdeSystem<T, E>>(
    sys: &mut S,
    ws: &mut Rk4Workspace<T, E>,
    t: T,
    h: T,
    y: &mut [E],
) {
    let n = y.len();
    let half = T::lit(0.5);
    let [k1, k2, k3, k4] = &mut ws.k;
    let tmp = &mut ws.tmp;
    sys.rhs(t, y, k1);
    for i in 0..n {
        tmp[i] = y[i] + k1[i] * (h * half);
    }
    sys.rhs(t + h * half, tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + k2[i] * (h * half);
    }
    sys.rhs(t + h * half, tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + k3[i] * h;
    }
    sys.rhs(t + h, tmp, k4);
    let sixth = h / T::lit(6.0);
    let two = T::lit(2.0);
    for i in 0..n {
        y[i] += (k1[i] + k2[i] * two + k3[i] * two + k4[i]) * sixth;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn dopri_matches_complex_exponential() {
        // y' = (−0.3 + 2i) y
        let lam = Complex64::new(-0.3, 2.0);
        let mut sys = |_t: f64, y: &[Complex64], dy: &mut [Complex64]| dy[0] = lam * y[0];
        let mut y = vec![Complex64::new(1.0, 0.0)];
        let mut dp = DormandPrince::new(1, StepControl { atol: 1e-12, rtol: 1e-10, ..Default::default() });
        let stats = dp.integrate(&mut sys, 0.0, 3.0, &mut y, |_, _| Flow::Continue).unwrap();
        let want = (lam * 3.0).exp();
        assert!((y[0] - want).norm() < 1e-9, "{:?} vs {want:?}", y[0]);
        assert_eq!(stats.t_end, 3.0);
    }

    #[test]
    fn dopri_observer_can_stop() {
        let mut sys = |_t: f64, _y: &[Complex64], dy: &mut [Complex64]| dy[0] = Complex64::new(1.0, 0.0);
        let mut y = vec![Complex64::new(0.0, 0.0)];
        let mut dp = DormandPrince::new(1, StepControl::default());
        let stats = dp
            .integrate(&mut sys, 0.0, 10.0, &mut y, |t, _| if t > 1.0 { Flow::Stop } else { Flow::Continue })
            .unwrap();
        assert!(stats.stopped_early);
        assert!(stats.t_end > 1.0 && stats.t_end < 10.0);
        assert!((y[0].re - stats.t_end).abs() < 1e-9);
    }

    #[test]
    fn dopri_step_underflow_reports_last_state() {
        // Finite-time blow-up y' = y²: steps shrink until h_min.
        let mut sys = |_t: f64, y: &[Complex64], dy: &mut [Complex64]| dy[0] = y[0] * y[0];
        let mut y = vec![Complex64::new(1.0, 0.0)];
        let mut dp = DormandPrince::new(1, StepControl { h_min: 1e-8, ..Default::default() });
        match dp.integrate(&mut sys, 0.0, 2.0, &mut y, |_, _| Flow::Continue) {
            Err(Error::IntegrationFailure { t, last_state, .. }) => {
                assert!(t < 1.0 && t > 0.9);
                assert_eq!(last_state.len(), 1);
            }
            Err(Error::NonFinite { .. }) => {}
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        let lam = Complex64::new(-1.0, 1.0);
        let run = |h: f64| {
            let mut sys = |_t: f64, y: &[Complex64], dy: &mut [Complex64]| dy[0] = lam * y[0];
            let mut ws = Rk4Workspace::new(1);
            let mut y = vec![Complex64::new(1.0, 0.0)];
            let steps = (1.0 / h).round() as usize;
            for s in 0..steps {
                rk4_step(&mut sys, &mut ws, s as f64 * h, h, &mut y);
            }
            (y[0] - lam.exp()).norm()
        };
        let e1 = run(0.1);
        let e2 = run(0.05);
        let order = (e1 / e2).log2();
        assert!((order - 4.0).abs() < 0.2, "order {order}");
    }
}
