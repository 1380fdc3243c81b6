//! Scalar abstraction shared by the kinematics, dynamics and control laws.
//!
//! Everything numeric in those modules is written against [`Real`], so the
//! same code runs in `f32` (for cheap embedded-style checks) and `f64` (the
//! default used by the simulator and the wire format).

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the rigid-body and control code.
pub trait Real: nalgebra::RealField + Copy + FromPrimitive + ToPrimitive {
    /// Converts an `f64` literal. Every supported scalar can represent (a
    /// rounded version of) any finite `f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("scalar cannot represent literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not convertible to f64")
    }

    #[inline]
    fn finite(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f32 {}
impl Real for f64 {}
