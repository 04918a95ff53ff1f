use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Floating-point type the learning code is generic over (`f32` or `f64`).
pub trait Scalar: Float + Sum + Debug + Display + Default + Send + Sync + 'static {
    fn of_f64(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f64 {
    fn of_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    fn of_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}
