//! Floating-point scalar abstraction: f32 or f64.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Scalar type the numerical kernels are generic over.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Conversion from a literal; panics only for values the target type
    /// cannot represent at all.
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn to_f64_lossy(self) -> f64 {
        self
    }
}
