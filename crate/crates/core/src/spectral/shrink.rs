use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShrinkMode {
    /// Shrinks the modulus and keeps the phase.
    #[default]
    ComplexMagnitude,
    /// Shrinks real and imaginary parts independently.
    SeparableReal,
}

#[inline]
pub fn shrink_real<T: Scalar>(v: T, theta: T) -> T {
    let a = v.abs() - theta;
    if a > T::zero() {
        a.copysign(v)
    } else {
        T::zero()
    }
}

#[inline]
pub fn shrink_complex<T: Scalar>(z: Complex<T>, theta: T, mode: ShrinkMode) -> Complex<T> {
    match mode {
        ShrinkMode::ComplexMagnitude => {
            let m = z.norm();
            if m > theta {
                z * ((m - theta) / m)
            } else {
                Complex::new(T::zero(), T::zero())
            }
        }
        ShrinkMode::SeparableReal => Complex::new(shrink_real(z.re, theta), shrink_real(z.im, theta)),
    }
}

/// Soft-thresholds every sample with one threshold.
pub fn soft_threshold<T: Scalar>(x: &[Complex<T>], theta: T, mode: ShrinkMode) -> Result<Vec<Complex<T>>> {
    if !(theta >= T::zero()) {
        return Err(Error::invalid("theta", "threshold must be non-negative"));
    }
    Ok(x.iter().map(|&z| shrink_complex(z, theta, mode)).collect())
}

/// Channel-wise soft-thresholding of a real feature map laid out channel-major
/// (`channels[c * len + p]`).
pub fn soft_threshold_channels<T: Scalar>(channels: &[T], len: usize, theta: &[T]) -> Result<Vec<T>> {
    if channels.len() != theta.len() * len {
        return Err(Error::Shape(format!(
            "{} values for {} channels of length {len}",
            channels.len(),
            theta.len()
        )));
    }
    if theta.iter().any(|t| !(*t >= T::zero())) {
        return Err(Error::invalid("theta", "threshold must be non-negative"));
    }
    Ok(channels
        .chunks_exact(len.max(1))
        .zip(theta)
        .flat_map(|(ch, &t)| ch.iter().map(move |&v| shrink_real(v, t)))
        .collect())
}
