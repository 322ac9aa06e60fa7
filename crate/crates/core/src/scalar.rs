//! Floating-point scalar abstraction shared by the state-vector simulator and
//! the belief-propagation decoder.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Real scalar usable for amplitudes and log-likelihood ratios.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Default + Send + Sync + 'static {
    /// Tolerance on `|Σ|a|² − 1|` accepted as normalized.
    const NORM_TOLERANCE: Self;

    /// Lossy conversion used for probabilities coming out of the rng.
    fn from_f64_lossy(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;
}

impl Real for f64 {
    const NORM_TOLERANCE: Self = 1e-12;

    fn from_f64_lossy(x: f64) -> Self {
        x
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }
}

impl Real for f32 {
    const NORM_TOLERANCE: Self = 1e-5;

    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }

    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}
