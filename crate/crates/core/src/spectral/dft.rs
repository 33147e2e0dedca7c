//! Unitary discrete Fourier transform.
//!
//! Power-of-two lengths use an iterative radix-2 kernel; every other length
//! goes through Bluestein's chirp-z reformulation on top of it. Both
//! directions carry a `1/sqrt(N)` factor so the inverse is the adjoint.

use std::f64::consts::PI;

use num_complex::Complex;

use super::series::{ComplexSeries, Domain, Shape};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
enum Kernel<T> {
    Identity,
    Radix2 {
        twiddles: Vec<Complex<T>>,
        bitrev: Vec<usize>,
    },
    Bluestein {
        inner: Box<Fft<T>>,
        chirp: Vec<Complex<T>>,
        kernel: Vec<Complex<T>>,
    },
}

/// Unnormalised forward FFT of a fixed length.
#[derive(Debug, Clone)]
pub struct Fft<T> {
    n: usize,
    kernel: Kernel<T>,
}

fn cis<T: Scalar>(angle: f64) -> Complex<T> {
    Complex::new(T::of(angle.cos()), T::of(angle.sin()))
}

impl<T: Scalar> Fft<T> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "transform length must be >= 1");
        let kernel = if n == 1 {
            Kernel::Identity
        } else if n.is_power_of_two() {
            let bits = n.trailing_zeros();
            let bitrev = (0..n)
                .map(|i| i.reverse_bits() >> (usize::BITS - bits))
                .collect();
            let twiddles = (0..n / 2)
                .map(|k| cis(-2.0 * PI * k as f64 / n as f64))
                .collect();
            Kernel::Radix2 { twiddles, bitrev }
        } else {
            let m = (2 * n - 1).next_power_of_two();
            let inner = Fft::new(m);
            // n^2 mod 2n keeps the chirp angle small for large n
            let chirp: Vec<Complex<T>> = (0..n)
                .map(|k| {
                    let q = (k as u128 * k as u128 % (2 * n as u128)) as f64;
                    cis(-PI * q / n as f64)
                })
                .collect();
            let mut kernel = vec![Complex::new(T::zero(), T::zero()); m];
            kernel[0] = chirp[0].conj();
            for j in 1..n {
                kernel[j] = chirp[j].conj();
                kernel[m - j] = chirp[j].conj();
            }
            inner.process(&mut kernel);
            Kernel::Bluestein {
                inner: Box::new(inner),
                chirp,
                kernel,
            }
        };
        Fft { n, kernel }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform without normalisation.
    pub fn process(&self, buf: &mut [Complex<T>]) {
        assert_eq!(buf.len(), self.n);
        match &self.kernel {
            Kernel::Identity => {}
            Kernel::Radix2 { twiddles, bitrev } => {
                for (i, &j) in bitrev.iter().enumerate() {
                    if i < j {
                        buf.swap(i, j);
                    }
                }
                let n = self.n;
                let mut len = 2;
                while len <= n {
                    let half = len / 2;
                    let stride = n / len;
                    for start in (0..n).step_by(len) {
                        for k in 0..half {
                            let w = twiddles[k * stride];
                            let a = buf[start + k];
                            let b = buf[start + k + half] * w;
                            buf[start + k] = a + b;
                            buf[start + k + half] = a - b;
                        }
                    }
                    len <<= 1;
                }
            }
            Kernel::Bluestein {
                inner,
                chirp,
                kernel,
            } => {
                let m = inner.n;
                let mut work = vec![Complex::new(T::zero(), T::zero()); m];
                for (w, (x, c)) in work.iter_mut().zip(buf.iter().zip(chirp)) {
                    *w = *x * *c;
                }
                inner.process(&mut work);
                for (w, k) in work.iter_mut().zip(kernel) {
                    *w = (*w * *k).conj();
                }
                // inverse via conjugation
                inner.process(&mut work);
                let scale = T::one() / T::of_usize(m);
                for (x, (w, c)) in buf.iter_mut().zip(work.iter().zip(chirp)) {
                    *x = w.conj() * *c * scale;
                }
            }
        }
    }

    /// In-place inverse transform without normalisation.
    pub fn process_inverse(&self, buf: &mut [Complex<T>]) {
        for v in buf.iter_mut() {
            *v = v.conj();
        }
        self.process(buf);
        for v in buf.iter_mut() {
            *v = v.conj();
        }
    }
}

/// Unitary transform over a [`Shape`]; planes are transformed along both axes.
#[derive(Debug, Clone)]
pub struct DftPlan<T> {
    shape: Shape,
    rows: Fft<T>,
    cols: Fft<T>,
    scale: T,
}

impl<T: Scalar> DftPlan<T> {
    pub fn new(shape: Shape) -> Self {
        let (r, c) = shape.rows_cols();
        DftPlan {
            shape,
            rows: Fft::new(r),
            cols: Fft::new(c),
            scale: T::one() / T::of_usize(r * c).sqrt(),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    fn apply(&self, buf: &mut [Complex<T>], inverse: bool) {
        assert_eq!(buf.len(), self.shape.len());
        let (r, c) = self.shape.rows_cols();
        let run = |f: &Fft<T>, b: &mut [Complex<T>]| {
            if inverse {
                f.process_inverse(b)
            } else {
                f.process(b)
            }
        };
        for row in buf.chunks_exact_mut(c) {
            run(&self.cols, row);
        }
        if r > 1 {
            let mut col = vec![Complex::new(T::zero(), T::zero()); r];
            for j in 0..c {
                for i in 0..r {
                    col[i] = buf[i * c + j];
                }
                run(&self.rows, &mut col);
                for i in 0..r {
                    buf[i * c + j] = col[i];
                }
            }
        }
        for v in buf.iter_mut() {
            *v = *v * self.scale;
        }
    }

    pub fn forward_in_place(&self, buf: &mut [Complex<T>]) {
        self.apply(buf, false)
    }

    pub fn inverse_in_place(&self, buf: &mut [Complex<T>]) {
        self.apply(buf, true)
    }
}

/// Unitary forward DFT, `X[k] = N^{-1/2} sum_n x[n] e^{-2 pi i n k / N}`.
pub fn dft_forward<T: Scalar>(x: &ComplexSeries<T>) -> ComplexSeries<T> {
    let plan = DftPlan::new(x.shape());
    let mut v = x.values().to_vec();
    plan.forward_in_place(&mut v);
    ComplexSeries::from_parts(v, Domain::Frequency, x.shape())
}

/// Inverse of [`dft_forward`].
pub fn dft_inverse<T: Scalar>(x: &ComplexSeries<T>) -> ComplexSeries<T> {
    let plan = DftPlan::new(x.shape());
    let mut v = x.values().to_vec();
    plan.inverse_in_place(&mut v);
    ComplexSeries::from_parts(v, Domain::Time, x.shape())
}
