use num_complex::Complex;

use super::series::{ComplexSeries, Domain, Shape};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Virtual echo: extends a length-`N` FID to a Hermitian-symmetric length-`2N`
/// record so that a zero-phase signal has a purely real spectrum.
///
/// `ve[0] = Re r[0]`, `ve[n] = r[n]` and `ve[2N-n] = conj r[n]` for `0 < n < N`,
/// and `ve[N] = 0`.
pub fn virtual_echo<T: Scalar>(r: &ComplexSeries<T>) -> Result<ComplexSeries<T>> {
    let n = match r.shape() {
        Shape::Line(n) => n,
        Shape::Plane(..) => {
            return Err(Error::Unsupported("virtual echo of a plane".into()));
        }
    };
    let v = r.values();
    let mut ve = vec![Complex::new(T::zero(), T::zero()); 2 * n];
    ve[0] = Complex::new(v[0].re, T::zero());
    for k in 1..n {
        ve[k] = v[k];
        ve[2 * n - k] = v[k].conj();
    }
    Ok(ComplexSeries::from_parts(ve, Domain::Time, Shape::Line(2 * n)))
}
