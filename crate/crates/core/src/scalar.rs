//! Scalar abstraction shared by every numerical module.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type the engine can run on: `f32` or `f64`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + rustfft::FftNum + Default + Send + Sync
{
    /// Absolute slack on symplectic eigenvalues before a state is called unphysical.
    fn physicality_tol() -> Self;

    /// Relative slack used when checking covariance symmetry.
    fn symmetry_tol() -> Self;

    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal out of range for scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn physicality_tol() -> Self {
        1e-9
    }
    fn symmetry_tol() -> Self {
        1e-10
    }
}

// Single precision accumulates ~1e-6 relative error per dense product,
// so the bounds are loosened accordingly.
impl Real for f32 {
    fn physicality_tol() -> Self {
        1e-3
    }
    fn symmetry_tol() -> Self {
        1e-5
    }
}

/// Shorthand for [`Real::lit`].
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::lit(x)
}

/// 10·log10 of a variance ratio.
pub fn to_db<T: Real>(ratio: T) -> T {
    lit::<T>(10.0) * ratio.log10()
}

pub fn from_db<T: Real>(db: T) -> T {
    lit::<T>(10.0).powf(db / lit(10.0))
}
