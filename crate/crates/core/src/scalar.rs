//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, LowerExp};

use nalgebra as na;
use num_complex::Complex;
use num_traits as nt;

/// Real floating-point type the simulation kernels are generic over.
///
/// Implemented for `f32` and `f64`. All tolerances quoted in the docs
/// assume `f64`; single precision is available for quick exploratory runs.
pub trait Real:
    na::RealField + Copy + nt::FloatConst + nt::FromPrimitive + nt::ToPrimitive + LowerExp + Debug
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;
}

macro_rules! impl_real {
    ($f:ty) => {
        impl Real for $f {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $f
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Complex amplitude over a [`Real`] scalar.
pub type C<T> = Complex<T>;

#[inline]
pub(crate) fn czero<T: Real>() -> C<T> {
    C::new(T::zero(), T::zero())
}

#[inline]
pub(crate) fn cre<T: Real>(re: T) -> C<T> {
    C::new(re, T::zero())
}

/// `exp(i * phase)`.
#[inline]
pub(crate) fn cis<T: Real>(phase: T) -> C<T> {
    C::new(phase.cos(), phase.sin())
}

#[inline]
pub(crate) fn cabs<T: Real>(z: C<T>) -> T {
    z.norm_sqr().sqrt()
}
