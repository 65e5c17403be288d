//! Post-processing of order-parameter curves and single-mode states: knee
//! detection, knee tables over a swept parameter, Wigner functions and Fock
//! distributions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fockspace::DensityMatrix;
use crate::scalar::{Real, C};

/// Default minimum curvature for a knee to count as found.
pub const DEFAULT_KNEE_THRESHOLD: f64 = 2.0;

/// Shortest grid [`knee_point`] accepts.
pub const MIN_KNEE_GRID: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KneeResult<T> {
    pub p_cq: T,
    pub q_c: T,
    pub curvature_score: T,
    pub found: bool,
}

fn check_uniform<T: Real>(grid: &[T]) -> Result<T> {
    let n = grid.len();
    let h = (grid[n - 1] - grid[0]) / T::from_usize_lossy(n - 1);
    if !(h > T::zero()) {
        return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
    }
    let tol = T::lit(1e-6) * h;
    for (k, w) in grid.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > tol {
            return Err(Error::InvalidGrid(format!(
                "grid is not uniform at index {}",
                k + 1
            )));
        }
    }
    Ok(h)
}

/// Knee of `q(p)`: the interior point of maximal curvature
/// `|Q''| / (1 + Q'²)^{3/2}` after a centered three-point smoothing.
///
/// Endpoints keep their raw values under smoothing and are never candidates.
/// A non-finite curvature anywhere (failed sweep points) yields `found = false`.
pub fn knee_point<T: Real>(p_grid: &[T], q_values: &[T], threshold: T) -> Result<KneeResult<T>> {
    let n = p_grid.len();
    if n < MIN_KNEE_GRID {
        return Err(Error::GridTooShort {
            len: n,
            min: MIN_KNEE_GRID,
        });
    }
    if q_values.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: q_values.len(),
        });
    }
    let h = check_uniform(p_grid)?;
    let third = T::one() / T::lit(3.0);
    let mut s = q_values.to_vec();
    for i in 1..n - 1 {
        s[i] = (q_values[i - 1] + q_values[i] + q_values[i + 1]) * third;
    }
    let mut best = (1usize, T::zero());
    let mut all_finite = true;
    for i in 1..n - 1 {
        let d1 = (s[i + 1] - s[i - 1]) / (T::lit(2.0) * h);
        let d2 = (s[i + 1] - T::lit(2.0) * s[i] + s[i - 1]) / (h * h);
        let k = d2.abs() / (T::one() + d1 * d1).powf(T::lit(1.5));
        if !k.is_finite() {
            all_finite = false;
            continue;
        }
        if k > best.1 {
            best = (i, k);
        }
    }
    let (i, k) = best;
    Ok(KneeResult {
        p_cq: p_grid[i],
        q_c: q_values[i],
        curvature_score: k,
        found: all_finite && k >= threshold,
    })
}

/// One `Q(p)` curve tagged with the value of the parameter it was run at.
#[derive(Clone, Debug)]
pub struct SweepSeries<T> {
    pub param: T,
    pub p: Vec<T>,
    pub q: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcqRow<T> {
    pub param: T,
    pub knee: KneeResult<T>,
}

/// Knee of every series, ordered by the swept parameter. Series whose knee
/// cannot be evaluated are kept as not-found rows with NaN position.
pub fn pcq_curves<T: Real>(series: &[SweepSeries<T>], threshold: T) -> Vec<PcqRow<T>> {
    let mut rows: Vec<PcqRow<T>> = series
        .iter()
        .map(|s| {
            let knee = knee_point(&s.p, &s.q, threshold).unwrap_or(KneeResult {
                p_cq: T::lit(f64::NAN),
                q_c: T::lit(f64::NAN),
                curvature_score: T::zero(),
                found: false,
            });
            PcqRow {
                param: s.param,
                knee,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.param.partial_cmp(&b.param).unwrap_or(std::cmp::Ordering::Equal));
    rows
}

/// Wigner function sampled on a rectangular quadrature grid.
///
/// `values[(iy, ix)]` is `W(x_axis[ix], y_axis[iy])`, normalized so that
/// `∬ W dx dy = 1` with `α = (x + iy)/√2`; the vacuum is `e^{−(x²+y²)}/π`.
#[derive(Clone, Debug)]
pub struct WignerGrid<T: Real> {
    pub x_axis: Vec<T>,
    pub y_axis: Vec<T>,
    pub values: DMatrix<T>,
}

impl<T: Real> WignerGrid<T> {
    /// Riemann sum `Σ W dx dy`.
    pub fn integral(&self) -> T {
        let dx = axis_step(&self.x_axis);
        let dy = axis_step(&self.y_axis);
        self.values.iter().fold(T::zero(), |acc, &w| acc + w) * dx * dy
    }

    /// Position-quadrature marginal `∫ W dy` at each `x`.
    pub fn x_marginal(&self) -> Vec<T> {
        let dy = axis_step(&self.y_axis);
        (0..self.x_axis.len())
            .map(|ix| self.values.column(ix).iter().fold(T::zero(), |a, &w| a + w) * dy)
            .collect()
    }

    /// Grid point of the largest value, as `(x, y, W)`.
    pub fn argmax(&self) -> (T, T, T) {
        let mut best = (0, 0, T::min_value().unwrap_or_else(|| -T::one()));
        for ix in 0..self.x_axis.len() {
            for iy in 0..self.y_axis.len() {
                let w = self.values[(iy, ix)];
                if w > best.2 {
                    best = (ix, iy, w);
                }
            }
        }
        (self.x_axis[best.0], self.y_axis[best.1], best.2)
    }
}

fn axis_step<T: Real>(axis: &[T]) -> T {
    if axis.len() < 2 {
        T::one()
    } else {
        (axis[axis.len() - 1] - axis[0]) / T::from_usize_lossy(axis.len() - 1)
    }
}

/// Uniform axis of `points` samples over `[-half_width, half_width]`.
pub fn symmetric_axis<T: Real>(half_width: T, points: usize) -> Vec<T> {
    if points < 2 {
        return vec![T::zero(); points];
    }
    let last = T::from_usize_lossy(points - 1);
    // Scaling a symmetric unit grid keeps both endpoints exact.
    (0..points)
        .map(|k| half_width * (T::lit(2.0) * T::from_usize_lossy(k) / last - T::one()))
        .collect()
}

/// Half-width every quadrature axis must reach for a state with mean
/// occupation `nbar`: `√(2 n̄) + 4`.
pub fn required_half_width<T: Real>(nbar: T) -> T {
    (T::lit(2.0) * nbar.max(T::zero())).sqrt() + T::lit(4.0)
}

/// Largest `|α|` a grid corner may reach for a state of dimension `dim`:
/// `2√dim + 4`.
pub fn max_wigner_amplitude<T: Real>(dim: usize) -> T {
    T::lit(2.0) * T::from_usize_lossy(dim).sqrt() + T::lit(4.0)
}

/// `W(x, y) = (1/π) tr[ρ D(α) Π D(α)†]` by the Laguerre recursion over
/// matrix elements, which is exact for the truncated state.
pub fn wigner<T: Real>(rho: &DensityMatrix<T>, x_grid: &[T], y_grid: &[T]) -> Result<WignerGrid<T>> {
    if x_grid.len() < 2 || y_grid.len() < 2 {
        return Err(Error::GridTooShort {
            len: x_grid.len().min(y_grid.len()),
            min: 2,
        });
    }
    check_uniform(x_grid)?;
    check_uniform(y_grid)?;
    let dim = rho.dim();
    let nbar = rho
        .populations()
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (n, &p)| acc + p * T::from_usize_lossy(n));
    let need = required_half_width(nbar);
    let reach = |g: &[T]| g[0] <= -need && g[g.len() - 1] >= need;
    if !reach(x_grid) || !reach(y_grid) {
        return Err(Error::InvalidGrid(format!(
            "Wigner grid must span at least ±{need} in both quadratures"
        )));
    }
    let extent = |g: &[T]| g[0].abs().max(g[g.len() - 1].abs());
    let (xm, ym) = (extent(x_grid), extent(y_grid));
    let r2 = xm * xm + ym * ym;
    let alpha = (r2 * T::lit(0.5)).sqrt();
    let limit: T = max_wigner_amplitude(dim);
    if alpha > limit || !((-r2).exp() > T::zero()) {
        return Err(Error::PhaseSpaceRange {
            alpha: alpha.as_f64(),
            limit: limit.as_f64(),
        });
    }

    let r = rho.matrix();
    let sqrt_n: Vec<T> = (0..dim).map(|n| T::from_usize_lossy(n).sqrt()).collect();
    let inv_sqrt2 = T::lit(0.5).sqrt();
    let inv_pi = T::one() / T::pi();
    let two = T::lit(2.0);
    let mut values = DMatrix::zeros(y_grid.len(), x_grid.len());
    let mut wl: Vec<C<T>> = vec![C::new(T::zero(), T::zero()); dim];
    for (ix, &x) in x_grid.iter().enumerate() {
        for (iy, &y) in y_grid.iter().enumerate() {
            let a = C::new(x * inv_sqrt2, y * inv_sqrt2);
            let ac = a.conj();
            // W_{m n}: matrix element weights of |m⟩⟨n| in the parity kernel.
            wl[0] = C::new((-(x * x + y * y)).exp() * inv_pi, T::zero());
            let mut w = r[(0, 0)].re * wl[0].re;
            for n in 1..dim {
                wl[n] = a * wl[n - 1] * two / sqrt_n[n];
                w += two * (r[(0, n)] * wl[n]).re;
            }
            for m in 1..dim {
                let mut temp = wl[m];
                wl[m] = (ac * temp * two - wl[m - 1] * sqrt_n[m]) / sqrt_n[m];
                w += (r[(m, m)] * wl[m]).re;
                for n in m + 1..dim {
                    let next = (a * wl[n - 1] * two - temp * sqrt_n[m]) / sqrt_n[n];
                    temp = wl[n];
                    wl[n] = next;
                    w += two * (r[(m, n)] * wl[n]).re;
                }
            }
            values[(iy, ix)] = w;
        }
    }
    Ok(WignerGrid {
        x_axis: x_grid.to_vec(),
        y_axis: y_grid.to_vec(),
        values,
    })
}

/// Occupation probabilities `⟨n|ρ|n⟩`.
pub fn fock_distribution<T: Real>(rho: &DensityMatrix<T>) -> Vec<T> {
    rho.populations()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{annihilation, coherent_state, fock_state};
    use crate::lindblad::{steady_state, stuart_landau};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn straight_line_has_no_knee() {
        let p = grid(21, 0.0, 1.0);
        let q: Vec<f64> = p.iter().map(|x| 1.0 - x).collect();
        let k = knee_point(&p, &q, 2.0).unwrap();
        assert!(!k.found);
        assert!(k.curvature_score < 1e-9);
    }

    #[test]
    fn piecewise_linear_breakpoint() {
        let p = grid(21, 0.0, 1.0);
        let q: Vec<f64> = p
            .iter()
            .map(|&x| if x <= 0.5 { 1.0 - 1.8 * x } else { 0.1 - 0.2 * (x - 0.5) })
            .collect();
        let k = knee_point(&p, &q, 2.0).unwrap();
        assert!(k.found);
        assert!((k.p_cq - 0.5).abs() <= 0.05 + 1e-12);
    }

    #[test]
    fn short_or_irregular_grids_are_rejected() {
        let p = grid(6, 0.0, 1.0);
        assert!(matches!(
            knee_point(&p, &[0.0; 6], 2.0),
            Err(Error::GridTooShort { len: 6, min: 7 })
        ));
        let mut p = grid(8, 0.0, 1.0);
        p[3] += 0.01;
        assert!(matches!(knee_point(&p, &[0.0; 8], 2.0), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn nan_points_disable_the_knee() {
        let p = grid(21, 0.0, 1.0);
        let mut q: Vec<f64> = p
            .iter()
            .map(|&x| if x <= 0.5 { 1.0 - 1.8 * x } else { 0.1 - 0.2 * (x - 0.5) })
            .collect();
        q[3] = f64::NAN;
        assert!(!knee_point(&p, &q, 2.0).unwrap().found);
    }

    #[test]
    fn pcq_rows_are_sorted_and_keep_failures() {
        let p = grid(21, 0.0, 1.0);
        let kink = |b: f64| -> Vec<f64> {
            p.iter()
                .map(|&x| if x <= b { 1.0 - 1.8 * x / b * 0.5 } else { 0.1 - 0.2 * (x - b) })
                .collect()
        };
        let series = vec![
            SweepSeries { param: 5.0, p: p.clone(), q: kink(0.6) },
            SweepSeries { param: 1.0, p: p.clone(), q: p.iter().map(|x| 1.0 - x).collect() },
            SweepSeries { param: 3.0, p: p[..4].to_vec(), q: vec![1.0; 4] },
        ];
        let rows = pcq_curves(&series, 2.0);
        let params: Vec<f64> = rows.iter().map(|r| r.param).collect();
        assert_eq!(params, vec![1.0, 3.0, 5.0]);
        assert!(!rows[0].knee.found);
        assert!(!rows[1].knee.found && rows[1].knee.p_cq.is_nan());
        assert!(rows[2].knee.found);
    }

    proptest! {
        #[test]
        fn knee_shifts_with_the_grid(shift in -0.3f64..0.3, bp in 0.3f64..0.7, s1 in 1.0f64..3.0) {
            let p = grid(21, 0.0, 1.0);
            let f = |x: f64| if x <= bp { 1.0 - s1 * x } else { 1.0 - s1 * bp - 0.1 * (x - bp) };
            let q: Vec<f64> = p.iter().map(|&x| f(x)).collect();
            let shifted: Vec<f64> = p.iter().map(|x| x + shift).collect();
            let k0 = knee_point(&p, &q, 0.0).unwrap();
            let k1 = knee_point(&shifted, &q, 0.0).unwrap();
            prop_assert!((k1.p_cq - (k0.p_cq + shift)).abs() < 1e-9);
            prop_assert!((k1.curvature_score - k0.curvature_score).abs() < 1e-6 * (1.0 + k0.curvature_score));
        }

        #[test]
        fn monotone_knee_is_interior(c in prop::collection::vec(0.0f64..1.0, 9..30)) {
            let mut q = c.clone();
            q.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let p = grid(q.len(), 0.0, 1.0);
            let k = knee_point(&p, &q, 2.0).unwrap();
            prop_assert!(k.p_cq > p[0] && k.p_cq < p[p.len() - 1]);
        }

        #[test]
        fn fock_distribution_sums_to_one(re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let rho = coherent_state(30, Complex64::new(re, im)).unwrap();
            let probs = fock_distribution(&rho);
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!(probs.iter().all(|&x| x >= -1e-10));
        }
    }

    #[test]
    fn vacuum_wigner_is_gaussian() {
        let rho = fock_state::<f64>(12, 0).unwrap();
        let x = symmetric_axis(5.0, 41);
        let w = wigner(&rho, &x, &x).unwrap();
        for (ix, &xv) in x.iter().enumerate() {
            for (iy, &yv) in x.iter().enumerate() {
                let expect = (-(xv * xv + yv * yv)).exp() / std::f64::consts::PI;
                assert!((w.values[(iy, ix)] - expect).abs() < 1e-12);
            }
        }
        assert!((w.integral() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn coherent_wigner_is_a_displaced_gaussian() {
        let beta = Complex64::new(1.2, -0.7);
        let rho = coherent_state(40, beta).unwrap();
        let x = symmetric_axis(7.0, 57);
        let w = wigner(&rho, &x, &x).unwrap();
        let (x0, y0) = (beta.re * 2f64.sqrt(), beta.im * 2f64.sqrt());
        for (ix, &xv) in x.iter().enumerate() {
            for (iy, &yv) in x.iter().enumerate() {
                let expect = (-((xv - x0).powi(2) + (yv - y0).powi(2))).exp() / std::f64::consts::PI;
                assert!((w.values[(iy, ix)] - expect).abs() < 1e-9, "({xv},{yv})");
            }
        }
    }

    // Brute-force displaced parity in an enlarged space, compared with the
    // recursion on a generic mixed state.
    #[test]
    fn recursion_matches_displaced_parity() {
        let d = 6;
        let big = 120;
        let mut m = DMatrix::<Complex64>::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = Complex64::new(((i * 7 + j * 3) % 5) as f64 * 0.1, (i as f64 - j as f64) * 0.05);
            }
        }
        let m = &m * m.adjoint();
        let rho = DensityMatrix::normalized(m, 1e-12).unwrap();
        let a = annihilation::<f64>(big).unwrap().into_matrix();
        let ad = a.adjoint();
        let parity = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(big, |n, _| {
            Complex64::new(if n % 2 == 0 { 1.0 } else { -1.0 }, 0.0)
        }));
        let mut embed = DMatrix::<Complex64>::zeros(big, big);
        embed.view_mut((0, 0), (d, d)).copy_from(rho.matrix());
        let x = symmetric_axis(4.0 + (2.0f64 * 5.0).sqrt(), 9);
        let w = wigner(&rho, &x, &x).unwrap();
        for &(ix, iy) in &[(4usize, 4usize), (2, 6), (5, 3), (6, 5), (7, 7), (1, 4)] {
            let alpha = Complex64::new(x[ix], x[iy]) / 2f64.sqrt();
            let disp = (&ad * alpha - &a * alpha.conj()).exp();
            let kernel = &disp * &parity * disp.adjoint();
            let tr = (&embed * kernel).trace();
            let expect = tr.re / std::f64::consts::PI;
            assert!((w.values[(iy, ix)] - expect).abs() < 1e-10, "{} vs {}", w.values[(iy, ix)], expect);
        }
    }

    #[test]
    fn grid_guards() {
        let rho = fock_state::<f64>(10, 3).unwrap();
        let narrow = symmetric_axis(3.0, 11);
        assert!(matches!(wigner(&rho, &narrow, &narrow), Err(Error::InvalidGrid(_))));
        let huge = symmetric_axis(11.0, 11);
        assert!(matches!(wigner(&rho, &huge, &huge), Err(Error::PhaseSpaceRange { .. })));
    }

    #[test]
    fn uncoupled_steady_state_shapes() {
        let cutoff = 40;
        let active = steady_state(&stuart_landau(cutoff, true, 4.0, 0.2, 0.0, None).unwrap()).unwrap();
        let probs = fock_distribution(&active);
        let argmax = (0..cutoff).max_by(|&i, &j| probs[i].partial_cmp(&probs[j]).unwrap()).unwrap();
        assert!(argmax > 0);
        let nbar: f64 = probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        let x = symmetric_axis(required_half_width(nbar) + 0.5, 81);
        let w = wigner(&active, &x, &x).unwrap();
        assert!((w.integral() - 1.0).abs() < 1e-3);
        let (xm, ym, wmax) = w.argmax();
        assert!((xm * xm + ym * ym).sqrt() > 2.0);
        assert!(w.values[(40, 40)] < wmax);
        let marginal: f64 = w.x_marginal().iter().sum::<f64>() * (x[1] - x[0]);
        assert!((marginal - 1.0).abs() < 1e-3);

        let inactive = steady_state(&stuart_landau(cutoff, false, 2.0, 0.2, 0.0, None).unwrap()).unwrap();
        assert!(fock_distribution(&inactive)[0] > 1.0 - 1e-8);
        let x = symmetric_axis(5.0, 41);
        let w = wigner(&inactive, &x, &x).unwrap();
        let (xm, ym, _): (f64, f64, f64) = w.argmax();
        assert!(xm.abs() < 1e-12 && ym.abs() < 1e-12);
    }
}
