//! Truncated Fock-space linear algebra.
//!
//! Levels `|0⟩..|dim−1⟩` are retained. Matrices are dense and column-major
//! (nalgebra layout), which the sparse kernels in [`crate::lindblad`] rely on.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{cabs, cr, czero, Real, C};

/// Default number of retained Fock levels.
pub const DEFAULT_CUTOFF: usize = 40;

/// Population allowed in the two highest retained levels before a state is
/// considered truncation-contaminated.
pub const TRUNCATION_GUARD: f64 = 1e-6;

/// Complex square matrix acting on a truncated Fock space.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix<T: Real> {
    m: DMatrix<C<T>>,
}

impl<T: Real> OperatorMatrix<T> {
    pub fn from_matrix(m: DMatrix<C<T>>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() < 2 {
            return Err(Error::InvalidDimension { dim: m.nrows() });
        }
        Ok(Self { m })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_cutoff(dim)?;
        Ok(Self {
            m: DMatrix::identity(dim, dim),
        })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        check_cutoff(dim)?;
        Ok(Self {
            m: DMatrix::zeros(dim, dim),
        })
    }

    /// Diagonal operator with the given real entries.
    pub fn diagonal(entries: &[T]) -> Result<Self> {
        check_cutoff(entries.len())?;
        let n = entries.len();
        Ok(Self {
            m: DMatrix::from_fn(n, n, |i, j| if i == j { cr(entries[i]) } else { czero() }),
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    #[inline]
    pub fn matrix(&self) -> &DMatrix<C<T>> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C<T>> {
        self.m
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        same_dim(self.dim(), rhs.dim())?;
        Ok(Self { m: &self.m * &rhs.m })
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        same_dim(self.dim(), rhs.dim())?;
        Ok(Self { m: &self.m + &rhs.m })
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        same_dim(self.dim(), rhs.dim())?;
        Ok(Self { m: &self.m - &rhs.m })
    }

    pub fn scale(&self, factor: C<T>) -> Self {
        Self {
            m: self.m.map(|z| z * factor),
        }
    }

    /// Largest entrywise modulus of `A − A†`.
    pub fn hermiticity_defect(&self) -> T {
        hermiticity_defect(&self.m)
    }

    /// Return `[self, other] = self·other − other·self`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        same_dim(self.dim(), other.dim())?;
        Ok(Self {
            m: &self.m * &other.m - &other.m * &self.m,
        })
    }
}

/// A positive semidefinite, unit-trace, Hermitian matrix on a truncated
/// Fock space (or a small product of them).
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T: Real> {
    m: DMatrix<C<T>>,
}

/// Numerical health of a density matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDiagnostics {
    pub hermiticity: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
    pub top_population: f64,
}

impl<T: Real> DensityMatrix<T> {
    /// Validates `m` against the density-matrix invariants at the given
    /// tolerances without modifying it.
    pub fn from_matrix(m: DMatrix<C<T>>, tol: T, psd_tol: T) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        check_cutoff(m.nrows())?;
        let herm = hermiticity_defect(&m);
        if herm > tol {
            return Err(Error::InvalidState(format!(
                "not Hermitian (defect {:e})",
                herm.as_f64()
            )));
        }
        let tr = m.trace();
        if cabs(tr - cr(T::one())) > tol {
            return Err(Error::InvalidState(format!(
                "trace {} + {}i is not 1",
                tr.re, tr.im
            )));
        }
        let state = Self { m };
        let lam = state.min_eigenvalue();
        if lam < -psd_tol {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {:e}",
                lam.as_f64()
            )));
        }
        Ok(state)
    }

    /// Hermitian-symmetrizes and renormalizes `m` to unit trace, then checks
    /// positivity within `psd_tol`.
    pub fn normalized(m: DMatrix<C<T>>, psd_tol: T) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        check_cutoff(m.nrows())?;
        let mut m = symmetrized(&m);
        let tr = m.trace().re;
        if !(tr.is_finite() && tr > T::zero()) {
            return Err(Error::InvalidState("non-positive trace".into()));
        }
        m /= cr(tr);
        let state = Self { m };
        let lam = state.min_eigenvalue();
        if lam < -psd_tol {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {:e}",
                lam.as_f64()
            )));
        }
        Ok(state)
    }

    /// Wraps an integrator state: symmetrized, trace left untouched so drift
    /// stays observable.
    pub(crate) fn from_raw(m: DMatrix<C<T>>) -> Self {
        Self { m: symmetrized(&m) }
    }

    /// Pure state `|ψ⟩⟨ψ|` from an amplitude vector, normalized.
    pub fn from_pure(amplitudes: &[C<T>]) -> Result<Self> {
        check_cutoff(amplitudes.len())?;
        let norm = amplitudes
            .iter()
            .fold(T::zero(), |acc, z| acc + z.norm_sqr())
            .sqrt();
        if norm <= T::zero() {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v: Vec<C<T>> = amplitudes.iter().map(|z| *z / cr(norm)).collect();
        let n = v.len();
        Ok(Self {
            m: DMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj()),
        })
    }

    /// Tensor product `self ⊗ other`, with `self` as the slow (leftmost) factor.
    pub fn kron(&self, other: &Self) -> Self {
        Self {
            m: self.m.kronecker(&other.m),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    #[inline]
    pub fn matrix(&self) -> &DMatrix<C<T>> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C<T>> {
        self.m
    }

    pub fn trace(&self) -> C<T> {
        self.m.trace()
    }

    /// Diagonal of ρ (real parts).
    pub fn populations(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.m[(i, i)].re).collect()
    }

    /// Combined population of the two highest retained levels.
    pub fn top_population(&self) -> T {
        let d = self.dim();
        self.m[(d - 1, d - 1)].re + self.m[(d - 2, d - 2)].re
    }

    pub fn min_eigenvalue(&self) -> T {
        let eig = SymmetricEigen::new(symmetrized(&self.m));
        eig.eigenvalues
            .iter()
            .copied()
            .fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b))
    }

    pub fn diagnostics(&self) -> StateDiagnostics {
        StateDiagnostics {
            hermiticity: hermiticity_defect(&self.m).as_f64(),
            trace_error: cabs(self.trace() - cr(T::one())).as_f64(),
            min_eigenvalue: self.min_eigenvalue().as_f64(),
            top_population: self.top_population().as_f64(),
        }
    }
}

fn check_cutoff(dim: usize) -> Result<()> {
    if dim < 2 {
        Err(Error::InvalidDimension { dim })
    } else {
        Ok(())
    }
}

fn same_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn hermiticity_defect<T: Real>(m: &DMatrix<C<T>>) -> T {
    let n = m.nrows();
    let mut worst = T::zero();
    for j in 0..n {
        for i in 0..=j {
            let d = cabs(m[(i, j)] - m[(j, i)].conj());
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

pub(crate) fn symmetrized<T: Real>(m: &DMatrix<C<T>>) -> DMatrix<C<T>> {
    let half = cr(T::lit(0.5));
    (m + m.adjoint()) * half
}

/// Bosonic annihilation operator: `⟨n−1|a|n⟩ = √n`.
pub fn annihilation<T: Real>(cutoff: usize) -> Result<OperatorMatrix<T>> {
    check_cutoff(cutoff)?;
    let mut m = DMatrix::zeros(cutoff, cutoff);
    for n in 1..cutoff {
        m[(n - 1, n)] = cr(T::from_usize_lossy(n).sqrt());
    }
    Ok(OperatorMatrix { m })
}

/// Bosonic creation operator, the adjoint of [`annihilation`].
pub fn creation<T: Real>(cutoff: usize) -> Result<OperatorMatrix<T>> {
    Ok(annihilation::<T>(cutoff)?.dagger())
}

/// Number operator `a†a = diag(0, 1, …, cutoff−1)`.
pub fn number<T: Real>(cutoff: usize) -> Result<OperatorMatrix<T>> {
    let diag: Vec<T> = (0..cutoff).map(T::from_usize_lossy).collect();
    OperatorMatrix::diagonal(&diag)
}

/// Fock projector `|n⟩⟨n|`.
pub fn fock_state<T: Real>(cutoff: usize, n: usize) -> Result<DensityMatrix<T>> {
    check_cutoff(cutoff)?;
    if n >= cutoff {
        return Err(Error::OutOfRange { n, cutoff });
    }
    let mut m = DMatrix::zeros(cutoff, cutoff);
    m[(n, n)] = cr(T::one());
    Ok(DensityMatrix { m })
}

/// Coherent state `|α⟩⟨α|`, renormalized after truncation.
pub fn coherent_state<T: Real>(cutoff: usize, alpha: C<T>) -> Result<DensityMatrix<T>> {
    check_cutoff(cutoff)?;
    let norm_sqr = alpha.norm_sqr();
    let limit = T::from_usize_lossy(cutoff) / T::lit(3.0);
    if norm_sqr > limit * (T::one() + T::lit(1e-12)) {
        return Err(Error::TruncationUnsafe {
            norm_sqr: norm_sqr.as_f64(),
            limit: limit.as_f64(),
        });
    }
    let mut amps = Vec::with_capacity(cutoff);
    let mut c = cr((-norm_sqr / T::lit(2.0)).exp());
    amps.push(c);
    for n in 1..cutoff {
        c = c * alpha / cr(T::from_usize_lossy(n).sqrt());
        amps.push(c);
    }
    DensityMatrix::from_pure(&amps)
}

/// `tr(ρ·op)`.
pub fn expectation<T: Real>(rho: &DensityMatrix<T>, op: &OperatorMatrix<T>) -> Result<C<T>> {
    same_dim(rho.dim(), op.dim())?;
    Ok(trace_product(rho.matrix(), op.matrix()))
}

/// `tr(x·y)` without forming the product.
pub(crate) fn trace_product<T: Real>(x: &DMatrix<C<T>>, y: &DMatrix<C<T>>) -> C<T> {
    let n = x.nrows();
    let mut acc = czero();
    for i in 0..n {
        for k in 0..n {
            acc += x[(i, k)] * y[(k, i)];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn annihilation_cutoff_two() {
        let a = annihilation::<f64>(2).unwrap();
        assert_eq!(a.matrix()[(0, 1)], c(1.0, 0.0));
        assert_eq!(a.matrix()[(0, 0)], c(0.0, 0.0));
        assert_eq!(a.matrix()[(1, 0)], c(0.0, 0.0));
        assert_eq!(a.matrix()[(1, 1)], c(0.0, 0.0));
    }

    #[test]
    fn annihilation_sqrt_two_entry() {
        let a = annihilation::<f64>(3).unwrap();
        assert!((a.matrix()[(1, 2)].re - 1.41421356).abs() < 1e-8);
        let n = creation::<f64>(3).unwrap().mul(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { i as f64 } else { 0.0 };
                assert!((n.matrix()[(i, j)] - c(want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn creation_is_adjoint_and_raises_vacuum() {
        let ad = creation::<f64>(2).unwrap();
        assert_eq!(ad.matrix()[(1, 0)], c(1.0, 0.0));
        assert_eq!(ad.matrix()[(0, 1)], c(0.0, 0.0));

        let ad = creation::<f64>(5).unwrap();
        let vac = nalgebra::DVector::from_fn(5, |i, _| if i == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let one = ad.matrix() * vac;
        assert_eq!(one[1], c(1.0, 0.0));
        assert!(one.iter().enumerate().all(|(i, z)| i == 1 || z.norm() == 0.0));
    }

    #[test]
    fn too_small_cutoff_rejected() {
        assert!(matches!(annihilation::<f64>(1), Err(Error::InvalidDimension { dim: 1 })));
        assert!(matches!(creation::<f64>(0), Err(Error::InvalidDimension { .. })));
    }

    #[test]
    fn fock_states() {
        let r = fock_state::<f64>(4, 0).unwrap();
        assert_eq!(r.populations(), vec![1.0, 0.0, 0.0, 0.0]);
        let r = fock_state::<f64>(4, 2).unwrap();
        assert_eq!(r.populations(), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(r.trace(), c(1.0, 0.0));
        assert!(matches!(fock_state::<f64>(4, 4), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn coherent_vacuum_and_means() {
        let r = coherent_state::<f64>(6, c(0.0, 0.0)).unwrap();
        assert_eq!(r, fock_state(6, 0).unwrap());

        let n = number::<f64>(20).unwrap();
        let r = coherent_state::<f64>(20, c(1.0, 0.0)).unwrap();
        assert!((expectation(&r, &n).unwrap().re - 1.0).abs() < 1e-8);
        let a = annihilation::<f64>(20).unwrap();
        assert!((expectation(&r, &a).unwrap() - c(1.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn coherent_mean_matches_truncated_poisson() {
        // Independent route: sum the truncated Poisson weights directly.
        let lam: f64 = 10.0;
        let mut w = lam.exp().recip();
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..40 {
            if k > 0 {
                w *= lam / k as f64;
            }
            num += k as f64 * w;
            den += w;
        }
        let poisson_mean = num / den;
        assert!((poisson_mean - 10.0).abs() < 1e-6);

        let r = coherent_state::<f64>(40, c(10f64.sqrt(), 0.0)).unwrap();
        let n = expectation(&r, &number(40).unwrap()).unwrap().re;
        assert!((n - poisson_mean).abs() < 1e-10);
        assert!((n - 10.0).abs() < 1e-6);
    }

    #[test]
    fn coherent_truncation_guard() {
        assert!(matches!(
            coherent_state::<f64>(9, c(2.0, 0.0)),
            Err(Error::TruncationUnsafe { .. })
        ));
    }

    #[test]
    fn expectation_basics() {
        let n = number::<f64>(5).unwrap();
        let a = annihilation::<f64>(5).unwrap();
        assert_eq!(expectation(&fock_state(5, 2).unwrap(), &n).unwrap(), c(2.0, 0.0));
        assert_eq!(expectation(&fock_state(5, 0).unwrap(), &a).unwrap(), c(0.0, 0.0));
        let err = expectation(&fock_state::<f64>(4, 0).unwrap(), &n);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn density_validation() {
        let mut m = fock_state::<f64>(3, 1).unwrap().into_matrix();
        assert!(DensityMatrix::from_matrix(m.clone(), 1e-12, 1e-10).is_ok());
        m[(0, 1)] = c(0.3, 0.0);
        assert!(DensityMatrix::from_matrix(m.clone(), 1e-12, 1e-10).is_err());
        m[(1, 0)] = c(0.3, 0.0);
        // Hermitian, unit trace, but indefinite: diag(0,1,0) + 0.3 off-diagonal.
        assert!(DensityMatrix::from_matrix(m, 1e-12, 1e-10).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let a = annihilation::<f32>(12).unwrap();
        let r = coherent_state::<f32>(12, num_complex::Complex32::new(1.0, 0.0)).unwrap();
        let mean = expectation(&r, &a).unwrap();
        assert!((mean.re - 1.0).abs() < 1e-3);
    }

    fn hermitian(dim: usize, seed: &[f64]) -> OperatorMatrix<f64> {
        let m = DMatrix::from_fn(dim, dim, |i, j| c(seed[(i * dim + j) % seed.len()], seed[(j * 7 + i * 3) % seed.len()]));
        OperatorMatrix::from_matrix((&m + m.adjoint()) * c(0.5, 0.0)).unwrap()
    }

    proptest! {
        #[test]
        fn canonical_commutator_on_upper_block(cutoff in 2usize..40) {
            let a = annihilation::<f64>(cutoff).unwrap();
            let ad = creation::<f64>(cutoff).unwrap();
            let comm = a.commutator(&ad).unwrap();
            for i in 0..cutoff - 1 {
                for j in 0..cutoff - 1 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((comm.matrix()[(i, j)] - c(want, 0.0)).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn identity_expectation_is_unit_trace(cutoff in 6usize..30, re in -1.0f64..1.0, im in -1.0f64..1.0, n in 0usize..6) {
            let id = OperatorMatrix::<f64>::identity(cutoff).unwrap();
            let coh = coherent_state(cutoff, c(re, im)).unwrap();
            prop_assert!((expectation(&coh, &id).unwrap() - c(1.0, 0.0)).norm() < 1e-12);
            let f = fock_state(cutoff, n).unwrap();
            prop_assert!((expectation(&f, &id).unwrap() - c(1.0, 0.0)).norm() < 1e-12);
        }

        #[test]
        fn expectation_is_linear(
            seed_a in prop::collection::vec(-1.0f64..1.0, 16..32),
            seed_b in prop::collection::vec(-1.0f64..1.0, 16..32),
            x in -3.0f64..3.0,
            re in -1.0f64..1.0,
            im in -1.0f64..1.0,
        ) {
            let dim = 8;
            let a = hermitian(dim, &seed_a);
            let b = hermitian(dim, &seed_b);
            let rho = coherent_state(dim, c(re, im)).unwrap();
            let lhs = expectation(&rho, &a.scale(c(x, 0.0)).add(&b).unwrap()).unwrap();
            let rhs = expectation(&rho, &a).unwrap() * x + expectation(&rho, &b).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
