//! Scalar abstraction shared by every numerical module.
//!
//! All math is written against [`Real`], which both `f32` and `f64` satisfy.
//! The tolerances quoted throughout the crate assume `f64`.

use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::RealField;
use num_complex::{Complex, Complex64};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable by the solvers.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("integer representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}

/// Complex number over a [`Real`] scalar.
pub type C<T> = Complex<T>;

#[inline]
pub(crate) fn cr<T: Real>(re: T) -> C<T> {
    Complex::new(re, T::zero())
}

#[inline]
pub(crate) fn czero<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub(crate) fn cabs<T: Real>(z: C<T>) -> T {
    z.norm_sqr().sqrt()
}

/// Entry type of a state buffer: a [`Real`] itself or its complex extension.
///
/// Real buffers halve memory and cost a quarter of the arithmetic for
/// problems whose dynamics never leave the real subspace.
pub trait Elem<T: Real>:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Mul<T, Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn zero() -> Self;
    fn from_real(x: T) -> Self;
    fn conj(self) -> Self;
    fn modulus(self) -> T;
    fn real_part(self) -> T;
    fn to_complex(self) -> C<T>;
    fn to_c64(self) -> Complex64;
}

impl<T: Real> Elem<T> for T {
    #[inline]
    fn zero() -> Self {
        T::zero()
    }
    #[inline]
    fn from_real(x: T) -> Self {
        x
    }
    #[inline]
    fn conj(self) -> Self {
        self
    }
    #[inline]
    fn modulus(self) -> T {
        self.abs()
    }
    #[inline]
    fn real_part(self) -> T {
        self
    }
    #[inline]
    fn to_complex(self) -> C<T> {
        cr(self)
    }
    fn to_c64(self) -> Complex64 {
        Complex64::new(self.as_f64(), 0.0)
    }
}

impl<T: Real> Elem<T> for C<T> {
    #[inline]
    fn zero() -> Self {
        czero()
    }
    #[inline]
    fn from_real(x: T) -> Self {
        cr(x)
    }
    #[inline]
    fn conj(self) -> Self {
        Complex::conj(&self)
    }
    #[inline]
    fn modulus(self) -> T {
        cabs(self)
    }
    #[inline]
    fn real_part(self) -> T {
        self.re
    }
    #[inline]
    fn to_complex(self) -> C<T> {
        self
    }
    fn to_c64(self) -> Complex64 {
        Complex64::new(self.re.as_f64(), self.im.as_f64())
    }
}
