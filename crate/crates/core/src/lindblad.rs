//! Lindblad dissipators, single-mode master equations, time evolution and
//! null-space steady states.
//!
//! Time stepping goes through [`Liouvillian`], a compiled form of a
//! [`MasterEquation`] that stores every operator by its nonzero diagonals, so
//! one right-hand-side evaluation costs `O(bands · dim²)` instead of `O(dim³)`.

use std::marker::PhantomData;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fockspace::{self, annihilation, DensityMatrix, OperatorMatrix};
use crate::ode::{DormandPrince, Flow, IntegrationStats, StepControl};
use crate::scalar::{cabs, cr, czero, Elem, Real, C};

/// One `rate · D[L]` term.
#[derive(Clone, Debug)]
pub struct DissipatorTerm<T: Real> {
    rate: T,
    operator: OperatorMatrix<T>,
}

impl<T: Real> DissipatorTerm<T> {
    pub fn new(rate: T, operator: OperatorMatrix<T>) -> Result<Self> {
        if rate < T::zero() || !rate.is_finite() {
            return Err(Error::NegativeRate(rate.as_f64()));
        }
        Ok(Self { rate, operator })
    }

    pub fn rate(&self) -> T {
        self.rate
    }

    pub fn operator(&self) -> &OperatorMatrix<T> {
        &self.operator
    }
}

/// Coherent mean-field drive `V (A [a†, ρ] − A* [a, ρ])`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Drive<T: Real> {
    pub field: C<T>,
    pub strength: T,
}

/// `ρ̇ = −i[H, ρ] + Σ_k γ_k D[L_k](ρ) + drive`.
#[derive(Clone, Debug)]
pub struct MasterEquation<T: Real> {
    hamiltonian: OperatorMatrix<T>,
    dissipators: Vec<DissipatorTerm<T>>,
    drive: Option<Drive<T>>,
}

impl<T: Real> MasterEquation<T> {
    pub fn new(
        hamiltonian: OperatorMatrix<T>,
        dissipators: Vec<DissipatorTerm<T>>,
        drive: Option<Drive<T>>,
    ) -> Result<Self> {
        let defect = hamiltonian.hermiticity_defect();
        if defect > T::lit(1e-12) {
            return Err(Error::NotHermitian(defect.as_f64()));
        }
        let dim = hamiltonian.dim();
        for d in &dissipators {
            if d.operator.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: d.operator.dim(),
                });
            }
        }
        if let Some(dr) = drive {
            if dr.strength < T::zero() {
                return Err(Error::NegativeRate(dr.strength.as_f64()));
            }
        }
        Ok(Self {
            hamiltonian,
            dissipators,
            drive,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &OperatorMatrix<T> {
        &self.hamiltonian
    }

    pub fn dissipators(&self) -> &[DissipatorTerm<T>] {
        &self.dissipators
    }

    pub fn drive(&self) -> Option<Drive<T>> {
        self.drive
    }

    pub fn with_drive(mut self, drive: Option<Drive<T>>) -> Self {
        self.drive = drive;
        self
    }
}

/// `D[L](ρ) = LρL† − ½{L†L, ρ}`.
pub fn apply_dissipator<T: Real>(
    l: &OperatorMatrix<T>,
    rho: &DMatrix<C<T>>,
) -> Result<DMatrix<C<T>>> {
    if rho.nrows() != l.dim() || rho.ncols() != l.dim() {
        return Err(Error::DimensionMismatch {
            expected: l.dim(),
            found: rho.nrows(),
        });
    }
    let l = l.matrix();
    let ld = l.adjoint();
    let ldl = &ld * l;
    let half = cr(T::lit(0.5));
    Ok(l * rho * &ld - (&ldl * rho + rho * &ldl) * half)
}

/// Dense evaluation of the master-equation right-hand side for any square
/// matrix (not only physical states).
pub fn rhs_matrix<T: Real>(me: &MasterEquation<T>, rho: &DMatrix<C<T>>) -> Result<DMatrix<C<T>>> {
    let dim = me.dim();
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: rho.nrows(),
        });
    }
    let h = me.hamiltonian.matrix();
    let minus_i = C::new(T::zero(), -T::one());
    let mut out = (h * rho - rho * h) * minus_i;
    for d in &me.dissipators {
        out += apply_dissipator(&d.operator, rho)? * cr(d.rate);
    }
    if let Some(dr) = me.drive {
        let a = annihilation::<T>(dim)?.into_matrix();
        let ad = a.adjoint();
        let comm_ad = &ad * rho - rho * &ad;
        let comm_a = &a * rho - rho * &a;
        out += (comm_ad * dr.field - comm_a * dr.field.conj()) * cr(dr.strength);
    }
    Ok(out)
}

/// `ρ̇` for a density matrix.
pub fn rhs<T: Real>(me: &MasterEquation<T>, rho: &DensityMatrix<T>) -> Result<DMatrix<C<T>>> {
    rhs_matrix(me, rho.matrix())
}

/// Operator stored by diagonals: band `k` holds `S[i, i + k]` at index `i`.
///
/// Every ladder-type operator on a Fock or product-Fock space has a handful
/// of bands, and each band acts on a column-major buffer through contiguous
/// inner loops.
#[derive(Clone, Debug)]
pub struct BandedOp<T: Real, E: Elem<T> = C<T>> {
    dim: usize,
    bands: Vec<Band<E>>,
    _scalar: PhantomData<T>,
}

#[derive(Clone, Debug)]
struct Band<E> {
    offset: isize,
    lo: usize,
    hi: usize,
    values: Vec<E>,
}

fn band_range(dim: usize, offset: isize) -> (usize, usize) {
    if offset >= 0 {
        (0, dim.saturating_sub(offset as usize))
    } else {
        ((-offset) as usize, dim)
    }
}

impl<T: Real, E: Elem<T>> BandedOp<T, E> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            bands: Vec::new(),
            _scalar: PhantomData,
        }
    }

    /// Builds from `(offset, values)` pairs, `values[i] = S[i, i + offset]`.
    /// Entries outside the matrix are ignored; repeated offsets accumulate.
    pub fn from_diagonals(dim: usize, diagonals: Vec<(isize, Vec<E>)>) -> Result<Self> {
        let mut op = Self::zeros(dim);
        for (offset, values) in diagonals {
            if values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: values.len(),
                });
            }
            op.accumulate(offset, &values);
        }
        op.prune();
        Ok(op)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn offsets(&self) -> Vec<isize> {
        self.bands.iter().map(|b| b.offset).collect()
    }

    fn accumulate(&mut self, offset: isize, values: &[E]) {
        let (lo, hi) = band_range(self.dim, offset);
        if lo >= hi {
            return;
        }
        let idx = match self.bands.iter().position(|b| b.offset == offset) {
            Some(k) => k,
            None => {
                self.bands.push(Band {
                    offset,
                    lo,
                    hi,
                    values: vec![E::zero(); self.dim],
                });
                self.bands.len() - 1
            }
        };
        let band = &mut self.bands[idx];
        for i in lo..hi {
            band.values[i] += values[i];
        }
    }

    fn prune(&mut self) {
        let zero = E::zero();
        self.bands
            .retain(|b| b.values[b.lo..b.hi].iter().any(|z| *z != zero));
        self.bands.sort_by_key(|b| b.offset);
    }

    pub fn scale(&self, coef: E) -> Self {
        let mut out = self.clone();
        for b in &mut out.bands {
            b.values.iter_mut().for_each(|z| *z = *z * coef);
        }
        out.prune();
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        let mut out = self.clone();
        for b in &other.bands {
            out.accumulate(b.offset, &b.values);
        }
        out.prune();
        Ok(out)
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for b in &self.bands {
            let mut values = vec![E::zero(); self.dim];
            // S†[i, i − k] = conj(S[i − k, i])
            for i in b.lo..b.hi {
                values[(i as isize + b.offset) as usize] = b.values[i].conj();
            }
            out.accumulate(-b.offset, &values);
        }
        out.prune();
        out
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        let mut out = Self::zeros(self.dim);
        for x in &self.bands {
            for y in &other.bands {
                let offset = x.offset + y.offset;
                let mut values = vec![E::zero(); self.dim];
                for i in x.lo..x.hi {
                    let mid = (i as isize + x.offset) as usize;
                    if mid >= y.lo && mid < y.hi {
                        values[i] = x.values[i] * y.values[mid];
                    }
                }
                out.accumulate(offset, &values);
            }
        }
        out.prune();
        Ok(out)
    }

    /// `I_left ⊗ S ⊗ I_right` on the product space, built band by band.
    pub fn embedded(&self, left_dim: usize, right_dim: usize) -> Self {
        let d = self.dim;
        let dim = left_dim * d * right_dim;
        let mut out = Self::zeros(dim);
        for b in &self.bands {
            let mut values = vec![E::zero(); dim];
            for (i, v) in values.iter_mut().enumerate() {
                let m = (i / right_dim) % d;
                if m >= b.lo && m < b.hi {
                    *v = b.values[m];
                }
            }
            out.accumulate(b.offset * right_dim as isize, &values);
        }
        out.prune();
        out
    }

    fn same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    /// `out += S · x` (column-major `dim × dim` buffers).
    #[inline]
    pub fn left_mul_add(&self, x: &[E], out: &mut [E]) {
        let d = self.dim;
        for b in &self.bands {
            let vs = &b.values[b.lo..b.hi];
            let src = (b.lo as isize + b.offset) as usize;
            for j in 0..d {
                let col = j * d;
                let os = &mut out[col + b.lo..col + b.hi];
                let xs = &x[col + src..col + src + vs.len()];
                for ((o, &v), &xv) in os.iter_mut().zip(vs).zip(xs) {
                    *o += v * xv;
                }
            }
        }
    }

    /// `out += x · S`.
    #[inline]
    pub fn right_mul_add(&self, x: &[E], out: &mut [E]) {
        let d = self.dim;
        for b in &self.bands {
            // (xS)[:, l + k] += S[l, l + k] · x[:, l]
            for l in b.lo..b.hi {
                let v = b.values[l];
                let dst = (l as isize + b.offset) as usize * d;
                axpy(v, &x[l * d..l * d + d], &mut out[dst..dst + d]);
            }
        }
    }

    /// `out += x · S†`.
    #[inline]
    pub fn right_mul_adjoint_add(&self, x: &[E], out: &mut [E]) {
        let d = self.dim;
        for b in &self.bands {
            // (xS†)[:, j] += conj(S[j, j + k]) · x[:, j + k]
            for j in b.lo..b.hi {
                let v = b.values[j].conj();
                let src = (j as isize + b.offset) as usize * d;
                axpy(v, &x[src..src + d], &mut out[j * d..j * d + d]);
            }
        }
    }

    /// `out += rate · S x S†`, without an intermediate product.
    #[inline]
    pub fn sandwich_add(&self, rate: T, x: &[E], out: &mut [E]) {
        let d = self.dim;
        for (bi, bj) in self.bands.iter().flat_map(|p| self.bands.iter().map(move |q| (p, q))) {
            // (S x S†)[i, j] += S[i, i + ki] x[i + ki, j + kj] conj(S[j, j + kj])
            let vs = &bi.values[bi.lo..bi.hi];
            let row_src = (bi.lo as isize + bi.offset) as usize;
            for j in bj.lo..bj.hi {
                let cj = bj.values[j].conj() * rate;
                let src = (j as isize + bj.offset) as usize * d + row_src;
                let dst = j * d + bi.lo;
                let xs = &x[src..src + vs.len()];
                let os = &mut out[dst..dst + vs.len()];
                for ((o, &v), &xv) in os.iter_mut().zip(vs).zip(xs) {
                    *o += cj * (v * xv);
                }
            }
        }
    }
}

impl<T: Real> BandedOp<T> {
    pub fn from_dense(m: &DMatrix<C<T>>) -> Self {
        let dim = m.nrows();
        let mut op = Self::zeros(dim);
        for offset in -(dim as isize) + 1..dim as isize {
            let (lo, hi) = band_range(dim, offset);
            let mut values = vec![czero(); dim];
            for i in lo..hi {
                values[i] = m[(i, (i as isize + offset) as usize)];
            }
            op.accumulate(offset, &values);
        }
        op.prune();
        op
    }

    pub fn to_dense(&self) -> DMatrix<C<T>> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for b in &self.bands {
            for i in b.lo..b.hi {
                m[(i, (i as isize + b.offset) as usize)] += b.values[i];
            }
        }
        m
    }

    /// Real copy when every stored entry has zero imaginary part.
    pub fn to_real(&self) -> Option<BandedOp<T, T>> {
        let mut bands = Vec::with_capacity(self.bands.len());
        for b in &self.bands {
            if b.values.iter().any(|z| z.im != T::zero()) {
                return None;
            }
            bands.push(Band {
                offset: b.offset,
                lo: b.lo,
                hi: b.hi,
                values: b.values.iter().map(|z| z.re).collect(),
            });
        }
        Some(BandedOp {
            dim: self.dim,
            bands,
            _scalar: PhantomData,
        })
    }
}

#[inline]
fn axpy<T: Real, E: Elem<T>>(coef: E, x: &[E], out: &mut [E]) {
    for (o, &xv) in out.iter_mut().zip(x) {
        *o += coef * xv;
    }
}

/// Compiled master equation: `ρ̇ = Mρ + ρM† + Σ γ LρL†` with
/// `M = −iH − ½ Σ γ L†L + X` and `X = V(A a† − A* a)` for the drive.
#[derive(Clone, Debug)]
pub struct Liouvillian<T: Real, E: Elem<T> = C<T>> {
    dim: usize,
    m_static: BandedOp<T, E>,
    m: BandedOp<T, E>,
    jumps: Vec<(T, BandedOp<T, E>)>,
    field: Option<(E, T)>,
    scratch: Vec<E>,
}

impl<T: Real> Liouvillian<T> {
    pub fn new(me: &MasterEquation<T>) -> Result<Self> {
        let jumps = me
            .dissipators
            .iter()
            .map(|d| (d.rate, BandedOp::from_dense(d.operator.matrix())))
            .collect();
        let mut liou = Self::from_banded(BandedOp::from_dense(me.hamiltonian.matrix()), jumps)?;
        liou.set_drive(me.drive);
        Ok(liou)
    }

    /// Builds directly from banded operators; the Hamiltonian is trusted to
    /// be Hermitian.
    pub fn from_banded(hamiltonian: BandedOp<T>, jumps: Vec<(T, BandedOp<T>)>) -> Result<Self> {
        let dim = hamiltonian.dim();
        let mut m = hamiltonian.scale(C::new(T::zero(), -T::one()));
        let mut kept = Vec::new();
        for (rate, l) in jumps {
            if rate < T::zero() || !rate.is_finite() {
                return Err(Error::NegativeRate(rate.as_f64()));
            }
            if l.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: l.dim(),
                });
            }
            if rate == T::zero() {
                continue;
            }
            let ldl = l.adjoint().mul(&l)?;
            m = m.add(&ldl.scale(cr(-rate * T::lit(0.5))))?;
            kept.push((rate, l));
        }
        Ok(Self {
            dim,
            m: m.clone(),
            m_static: m,
            jumps: kept,
            field: None,
            scratch: vec![czero(); dim * dim],
        })
    }

    pub fn drive(&self) -> Option<Drive<T>> {
        self.field.map(|(field, strength)| Drive { field, strength })
    }

    pub fn set_drive(&mut self, drive: Option<Drive<T>>) {
        self.set_field(drive.map(|d| (d.field, d.strength)));
    }

    /// Real-arithmetic copy, available when `H`, every jump operator and the
    /// current drive are real. Real states then stay real under the flow.
    pub fn to_real(&self) -> Option<Liouvillian<T, T>> {
        let field = match self.field {
            None => None,
            Some((f, s)) if f.im == T::zero() => Some((f.re, s)),
            Some(_) => return None,
        };
        let mut jumps = Vec::with_capacity(self.jumps.len());
        for (rate, l) in &self.jumps {
            jumps.push((*rate, l.to_real()?));
        }
        let mut out = Liouvillian {
            dim: self.dim,
            m_static: self.m_static.to_real()?,
            m: BandedOp::zeros(self.dim),
            jumps,
            field: None,
            scratch: vec![T::zero(); self.dim * self.dim],
        };
        out.set_field(field);
        Some(out)
    }

    /// Dense `dim² × dim²` superoperator in column-major vectorization.
    pub fn superoperator(&mut self) -> DMatrix<C<T>> {
        let n = self.dim * self.dim;
        let mut s = DMatrix::zeros(n, n);
        let mut basis = vec![czero(); n];
        let mut col = vec![czero(); n];
        for k in 0..n {
            basis[k] = cr(T::one());
            self.apply(&basis, &mut col);
            basis[k] = czero();
            s.column_mut(k).copy_from_slice(&col);
        }
        s
    }
}

impl<T: Real, E: Elem<T>> Liouvillian<T, E> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_dissipators(&self) -> bool {
        !self.jumps.is_empty()
    }

    /// Sets the mean-field drive `V (A [a†, ρ] − A* [a, ρ])` as `(A, V)`.
    pub fn set_field(&mut self, field: Option<(E, T)>) {
        self.field = field;
        let mut m = self.m_static.clone();
        if let Some((f, strength)) = field {
            let va = f * strength;
            let vac = f.conj() * strength;
            let d = self.dim;
            let lower: Vec<E> = (0..d).map(|i| va * T::from_usize_lossy(i).sqrt()).collect();
            let upper: Vec<E> = (0..d).map(|i| -vac * T::from_usize_lossy(i + 1).sqrt()).collect();
            m.accumulate(-1, &lower);
            m.accumulate(1, &upper);
        }
        self.m = m;
    }

    /// Writes `ρ̇` for the column-major buffer `rho` into `out`. Valid for
    /// any square matrix.
    pub fn apply(&mut self, rho: &[E], out: &mut [E]) {
        out.iter_mut().for_each(|z| *z = E::zero());
        self.m.left_mul_add(rho, out);
        self.m.adjoint().right_mul_add(rho, out);
        for (rate, l) in &self.jumps {
            l.sandwich_add(*rate, rho, out);
        }
    }

    /// Same as [`apply`](Self::apply) for Hermitian `rho`, using
    /// `ρM† = (Mρ)†`.
    pub fn apply_hermitian(&mut self, rho: &[E], out: &mut [E]) {
        let d = self.dim;
        self.scratch.iter_mut().for_each(|z| *z = E::zero());
        self.m.left_mul_add(rho, &mut self.scratch);
        let y = &self.scratch;
        for j in 0..d {
            for i in 0..d {
                out[i + j * d] = y[i + j * d] + y[j + i * d].conj();
            }
        }
        for (rate, l) in &self.jumps {
            l.sandwich_add(*rate, rho, out);
        }
    }
}

/// Integration settings for [`evolve`].
#[derive(Clone, Copy, Debug)]
pub struct EvolveControl<T> {
    pub step: StepControl<T>,
    /// Record the state at the first accepted step after each multiple of
    /// this interval. `None` records nothing.
    pub sample_every: Option<T>,
    /// Check positivity at each sample (one Hermitian eigensolve per sample).
    pub check_positivity: bool,
}

impl<T: Real> Default for EvolveControl<T> {
    fn default() -> Self {
        Self {
            step: StepControl::default(),
            sample_every: None,
            check_positivity: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Evolution<T: Real> {
    pub state: DensityMatrix<T>,
    pub samples: Vec<(T, DensityMatrix<T>)>,
    pub stats: IntegrationStats,
    /// Largest `|tr ρ − 1|` over accepted steps.
    pub max_trace_drift: f64,
    /// Smallest eigenvalue over samples (and the final state), when checked.
    pub min_eigenvalue: Option<f64>,
}

/// Integrates the master equation from `rho0` to `t_final`.
pub fn evolve<T: Real>(
    me: &MasterEquation<T>,
    rho0: &DensityMatrix<T>,
    t_final: T,
    controls: &EvolveControl<T>,
) -> Result<Evolution<T>> {
    if rho0.dim() != me.dim() {
        return Err(Error::DimensionMismatch {
            expected: me.dim(),
            found: rho0.dim(),
        });
    }
    if !(t_final > T::zero()) {
        return Err(Error::InvalidConfig("t_final must be positive".into()));
    }
    let dim = me.dim();
    let mut liou = Liouvillian::new(me)?;
    let mut y: Vec<C<T>> = rho0.matrix().as_slice().to_vec();
    let mut dp = DormandPrince::new(y.len(), controls.step);
    let mut samples = Vec::new();
    let mut next_sample = controls.sample_every;
    let mut drift = 0.0f64;
    let mut min_eig: Option<f64> = None;
    let check = controls.check_positivity;

    let mut sys = |_t: T, y: &[C<T>], dy: &mut [C<T>]| liou.apply_hermitian(y, dy);
    let stats = dp.integrate(&mut sys, T::zero(), t_final, &mut y, |t, y| {
        symmetrize_in_place(y, dim);
        let tr = trace_of(y, dim);
        drift = drift.max(cabs(tr - cr(T::one())).as_f64());
        if let (Some(every), Some(next)) = (controls.sample_every, next_sample) {
            if t >= next {
                let rho = DensityMatrix::from_raw(DMatrix::from_column_slice(dim, dim, y));
                if check {
                    let lam = rho.min_eigenvalue().as_f64();
                    min_eig = Some(min_eig.map_or(lam, |m| m.min(lam)));
                }
                samples.push((t, rho));
                let mut n = next;
                while n <= t {
                    n += every;
                }
                next_sample = Some(n);
            }
        }
        Flow::Modified
    })?;
    let state = DensityMatrix::from_raw(DMatrix::from_column_slice(dim, dim, &y));
    if check {
        let lam = state.min_eigenvalue().as_f64();
        min_eig = Some(min_eig.map_or(lam, |m| m.min(lam)));
    }
    Ok(Evolution {
        state,
        samples,
        stats,
        max_trace_drift: drift,
        min_eigenvalue: min_eig,
    })
}

pub(crate) fn symmetrize_in_place<T: Real, E: Elem<T>>(y: &mut [E], dim: usize) {
    let half = T::lit(0.5);
    for j in 0..dim {
        let d = y[j + j * dim];
        y[j + j * dim] = E::from_real(d.real_part());
        for i in 0..j {
            let upper = y[i + j * dim];
            let lower = y[j + i * dim];
            let avg = (upper + lower.conj()) * half;
            y[i + j * dim] = avg;
            y[j + i * dim] = avg.conj();
        }
    }
}

pub(crate) fn trace_of<T: Real, E: Elem<T>>(y: &[E], dim: usize) -> E {
    (0..dim).fold(E::zero(), |acc, i| acc + y[i + i * dim])
}

/// Unique stationary state from the null space of the dense superoperator.
///
/// The `(0,0)` population equation is replaced by the trace constraint; that
/// row is redundant for any trace-preserving generator, so the bordered
/// system is regular exactly when the null space is one-dimensional.
pub fn steady_state<T: Real>(me: &MasterEquation<T>) -> Result<DensityMatrix<T>> {
    if me.dissipators.iter().all(|d| d.rate == T::zero()) {
        return Err(Error::NoDissipators);
    }
    let dim = me.dim();
    let mut liou = Liouvillian::new(me)?;
    let mut s = liou.superoperator();
    let scale = s.iter().fold(T::zero(), |m, z| m.max(cabs(*z)));
    let n = dim * dim;
    for k in 0..n {
        s[(0, k)] = czero();
    }
    for i in 0..dim {
        s[(0, i + i * dim)] = cr(T::one());
    }
    let lu = s.lu();
    let u = lu.u();
    let (mut umin, mut umax) = (T::max_value().unwrap_or_else(T::one), T::zero());
    for i in 0..n {
        let v = cabs(u[(i, i)]);
        umin = umin.min(v);
        umax = umax.max(v);
    }
    let ratio = if umax > T::zero() { umin / umax } else { T::zero() };
    if ratio < T::lit(1e-13) {
        return Err(Error::DegenerateSteadyState {
            pivot_ratio: ratio.as_f64(),
        });
    }
    let mut b = DVector::zeros(n);
    b[0] = cr(T::one());
    let x = lu
        .solve(&b)
        .ok_or(Error::DegenerateSteadyState { pivot_ratio: 0.0 })?;
    let rho = DensityMatrix::normalized(DMatrix::from_column_slice(dim, dim, x.as_slice()), T::lit(1e-10))?;
    let res = residual(me, &rho)?;
    let tol = T::lit(1e-10).max(T::lit(100.0) * T::default_epsilon() * scale);
    if res > tol {
        return Err(Error::SteadyStateResidual(res.as_f64()));
    }
    Ok(rho)
}

/// `max |ρ̇|` entrywise.
pub fn residual<T: Real>(me: &MasterEquation<T>, rho: &DensityMatrix<T>) -> Result<T> {
    let r = rhs(me, rho)?;
    Ok(r.iter().fold(T::zero(), |m, z| m.max(cabs(*z))))
}

/// Stationary `⟨a†a⟩` of an uncoupled active oscillator with `a = 4`,
/// `κ = 0.2` at the default cutoff of 40, from an independent dense
/// eigensolver.
pub const REFERENCE_ACTIVE_MEAN_BOSON: f64 = 10.500912009288044;

/// Quantum Stuart–Landau oscillator in the frame rotating at its own
/// frequency (`H = 0`), with gain (`pump` on `a†`) or loss (`pump` on `a`),
/// two-boson absorption `κ D[a²]` and an optional extra single-boson loss.
pub fn stuart_landau<T: Real>(
    cutoff: usize,
    active: bool,
    pump: T,
    kappa: T,
    extra_loss: T,
    omega: Option<T>,
) -> Result<MasterEquation<T>> {
    let a = annihilation::<T>(cutoff)?;
    let ad = a.dagger();
    let h = match omega {
        Some(w) => fockspace::number::<T>(cutoff)?.scale(cr(w)),
        None => OperatorMatrix::zeros(cutoff)?,
    };
    let mut terms = vec![
        DissipatorTerm::new(pump, if active { ad } else { a.clone() })?,
        DissipatorTerm::new(kappa, a.mul(&a)?)?,
    ];
    if extra_loss > T::zero() {
        terms.push(DissipatorTerm::new(extra_loss, a)?);
    }
    MasterEquation::new(h, terms, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{coherent_state, creation, expectation, fock_state, number};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_abs(m: &DMatrix<Complex64>) -> f64 {
        m.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    fn proj(dim: usize, n: usize) -> DMatrix<Complex64> {
        fock_state::<f64>(dim, n).unwrap().into_matrix()
    }

    #[test]
    fn dissipator_fixtures() {
        let d = 5;
        let a = annihilation::<f64>(d).unwrap();
        let ad = creation::<f64>(d).unwrap();
        let a2 = a.mul(&a).unwrap();

        let out = apply_dissipator(&a, &proj(d, 1)).unwrap();
        assert!(max_abs(&(out - (proj(d, 0) - proj(d, 1)))) < 1e-14);

        let out = apply_dissipator(&ad, &proj(d, 0)).unwrap();
        assert!(max_abs(&(out - (proj(d, 1) - proj(d, 0)))) < 1e-14);

        let out = apply_dissipator(&a2, &proj(d, 2)).unwrap();
        assert!(max_abs(&(out - (proj(d, 0) * c(2.0, 0.0) - proj(d, 2) * c(2.0, 0.0)))) < 1e-14);

        assert!(matches!(
            apply_dissipator(&a, &proj(4, 0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn vacuum_is_dark_for_pure_loss() {
        let d = 6;
        let me = MasterEquation::new(
            OperatorMatrix::zeros(d).unwrap(),
            vec![DissipatorTerm::new(1.0, annihilation(d).unwrap()).unwrap()],
            None,
        )
        .unwrap();
        let out = rhs(&me, &fock_state(d, 0).unwrap()).unwrap();
        assert_eq!(max_abs(&out), 0.0);
    }

    #[test]
    fn free_evolution_conserves_number() {
        let d = 20;
        let h = number::<f64>(d).unwrap().scale(c(2.0, 0.0));
        let me = MasterEquation::new(h, vec![], None).unwrap();
        let rho = coherent_state(d, c(1.0, 0.5)).unwrap();
        let out = rhs(&me, &rho).unwrap();
        let n = number::<f64>(d).unwrap();
        let dn = crate::fockspace::trace_product(&out, n.matrix());
        assert!(dn.norm() < 1e-14);
    }

    #[test]
    fn sparse_kernel_matches_dense_rhs() {
        let d = 12;
        let a = annihilation::<f64>(d).unwrap();
        let h = number::<f64>(d).unwrap().scale(c(2.0, 0.0));
        let me = MasterEquation::new(
            h,
            vec![
                DissipatorTerm::new(4.0, a.dagger()).unwrap(),
                DissipatorTerm::new(0.2, a.mul(&a).unwrap()).unwrap(),
                DissipatorTerm::new(1.3, a.clone()).unwrap(),
            ],
            Some(Drive { field: c(0.4, -0.7), strength: 2.5 }),
        )
        .unwrap();
        let rho = coherent_state(d, c(0.8, 0.3)).unwrap();
        let dense = rhs(&me, &rho).unwrap();
        let mut liou = Liouvillian::new(&me).unwrap();
        let mut out = vec![c(0.0, 0.0); d * d];
        liou.apply(rho.matrix().as_slice(), &mut out);
        let sparse = DMatrix::from_column_slice(d, d, &out);
        assert!(max_abs(&(sparse - dense)) < 1e-13);
    }

    #[test]
    fn pure_loss_decay_of_one_boson() {
        let d = 6;
        let me = MasterEquation::new(
            OperatorMatrix::zeros(d).unwrap(),
            vec![DissipatorTerm::new(1.0, annihilation(d).unwrap()).unwrap()],
            None,
        )
        .unwrap();
        let ev = evolve(&me, &fock_state(d, 1).unwrap(), 5.0, &EvolveControl::default()).unwrap();
        assert!((ev.state.populations()[1] - (-5.0f64).exp()).abs() < 1e-6);
        assert!(ev.max_trace_drift < 1e-8);
    }

    #[test]
    fn free_rotation_period() {
        let d = 20;
        let omega = 2.0;
        let me = MasterEquation::new(number::<f64>(d).unwrap().scale(c(omega, 0.0)), vec![], None).unwrap();
        let rho0 = coherent_state(d, c(1.0, 0.0)).unwrap();
        let a = annihilation::<f64>(d).unwrap();
        let ctl = EvolveControl {
            step: StepControl { atol: 1e-12, rtol: 1e-11, ..Default::default() },
            ..Default::default()
        };
        let ev = evolve(&me, &rho0, 2.0 * std::f64::consts::PI / omega, &ctl).unwrap();
        let before = expectation(&rho0, &a).unwrap();
        let after = expectation(&ev.state, &a).unwrap();
        assert!((before - after).norm() < 1e-8, "{before} vs {after}");
    }

    #[test]
    fn steady_state_of_loss_is_vacuum() {
        let d = 8;
        let me = MasterEquation::new(
            number::<f64>(d).unwrap().scale(c(2.0, 0.0)),
            vec![DissipatorTerm::new(0.7, annihilation(d).unwrap()).unwrap()],
            None,
        )
        .unwrap();
        let ss = steady_state(&me).unwrap();
        assert!(max_abs(&(ss.matrix() - proj(d, 0))) < 1e-12);
    }

    #[test]
    fn inactive_uncoupled_steady_state_is_vacuum() {
        let me = stuart_landau(20, false, 2.0, 0.2, 0.0, None).unwrap();
        let ss = steady_state(&me).unwrap();
        let n: f64 = expectation(&ss, &number(20).unwrap()).unwrap().re;
        assert!(n.abs() <= 1e-10);
    }

    #[test]
    fn steady_state_requires_dissipation() {
        let me = MasterEquation::new(number::<f64>(5).unwrap(), vec![], None).unwrap();
        assert!(matches!(steady_state(&me), Err(Error::NoDissipators)));
    }

    #[test]
    fn degenerate_steady_state_detected() {
        // Dephasing only: every diagonal state is stationary.
        let d = 4;
        let me = MasterEquation::new(
            OperatorMatrix::zeros(d).unwrap(),
            vec![DissipatorTerm::new(1.0, number(d).unwrap()).unwrap()],
            None,
        )
        .unwrap();
        assert!(matches!(steady_state(&me), Err(Error::DegenerateSteadyState { .. })));
    }

    #[test]
    fn active_steady_state_is_fixed_point_of_rhs_and_evolve() {
        let d = 24;
        let me = stuart_landau(d, true, 4.0, 0.2, 0.0, None).unwrap();
        let ss = steady_state(&me).unwrap();
        let out = rhs(&me, &ss).unwrap();
        assert!(max_abs(&out) <= 1e-8);
        let ev = evolve(&me, &ss, 1.0, &EvolveControl::default()).unwrap();
        assert!(max_abs(&(ev.state.matrix() - ss.matrix())) < 1e-7);
    }

    #[test]
    fn active_steady_state_matches_reference_constant() {
        let d = crate::fockspace::DEFAULT_CUTOFF;
        let ss = steady_state(&stuart_landau(d, true, 4.0, 0.2, 0.0, None).unwrap()).unwrap();
        let n = expectation(&ss, &number(d).unwrap()).unwrap().re;
        assert!((n - REFERENCE_ACTIVE_MEAN_BOSON).abs() < 1e-9, "{n}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            DissipatorTerm::new(-1.0, annihilation::<f64>(3).unwrap()),
            Err(Error::NegativeRate(_))
        ));
        let mut h = OperatorMatrix::<f64>::zeros(3).unwrap().into_matrix();
        h[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(
            MasterEquation::new(OperatorMatrix::from_matrix(h).unwrap(), vec![], None),
            Err(Error::NotHermitian(_))
        ));
        let me = stuart_landau::<f64>(4, true, 1.0, 0.1, 0.0, None).unwrap();
        assert!(evolve(&me, &fock_state(5, 0).unwrap(), 1.0, &EvolveControl::default()).is_err());
        assert!(evolve(&me, &fock_state(4, 0).unwrap(), 0.0, &EvolveControl::default()).is_err());
    }

    fn random_state(d: usize, seed: &[f64]) -> DensityMatrix<f64> {
        let g = DMatrix::from_fn(d, d, |i, j| {
            c(seed[(i * d + j) % seed.len()], seed[(3 * i + 5 * j + 1) % seed.len()])
        });
        DensityMatrix::normalized(&g * g.adjoint(), 1e-10).unwrap()
    }

    fn random_op(d: usize, seed: &[f64]) -> OperatorMatrix<f64> {
        OperatorMatrix::from_matrix(DMatrix::from_fn(d, d, |i, j| {
            c(seed[(7 * i + j) % seed.len()], seed[(i + 11 * j + 2) % seed.len()])
        }))
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn dissipator_output_traceless_hermitian(
            ls in prop::collection::vec(-1.0f64..1.0, 20..40),
            rs in prop::collection::vec(-1.0f64..1.0, 20..40),
        ) {
            let d = 6;
            let out = apply_dissipator(&random_op(d, &ls), random_state(d, &rs).matrix()).unwrap();
            prop_assert!(out.trace().norm() < 1e-10);
            prop_assert!(crate::fockspace::hermiticity_defect(&out) < 1e-10);
        }

        #[test]
        fn rhs_is_linear(
            s1 in prop::collection::vec(-1.0f64..1.0, 20..40),
            s2 in prop::collection::vec(-1.0f64..1.0, 20..40),
            w in 0.0f64..1.0,
        ) {
            let d = 8;
            let me = stuart_landau(d, true, 4.0, 0.2, 1.0, Some(2.0)).unwrap()
                .with_drive(Some(Drive { field: c(0.3, 0.2), strength: 1.5 }));
            let r1 = random_state(d, &s1);
            let r2 = random_state(d, &s2);
            let mix = r1.matrix() * c(w, 0.0) + r2.matrix() * c(1.0 - w, 0.0);
            let lhs = rhs_matrix(&me, &mix).unwrap();
            let rhs_ = rhs(&me, &r1).unwrap() * c(w, 0.0) + rhs(&me, &r2).unwrap() * c(1.0 - w, 0.0);
            prop_assert!(max_abs(&(lhs - rhs_)) < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn evolution_preserves_positivity(
            s in prop::collection::vec(-1.0f64..1.0, 30..50),
            gain in 0.5f64..4.0,
            field_re in -1.0f64..1.0,
        ) {
            let d = 10;
            let me = stuart_landau(d, true, gain, 0.3, 0.5, None).unwrap()
                .with_drive(Some(Drive { field: c(field_re, 0.1), strength: 1.0 }));
            let ctl = EvolveControl { sample_every: Some(0.25), check_positivity: true, ..Default::default() };
            let ev = evolve(&me, &random_state(d, &s), 3.0, &ctl).unwrap();
            prop_assert!(ev.min_eigenvalue.unwrap() >= -1e-8);
            prop_assert!(ev.max_trace_drift <= 1e-8);
        }
    }
}
