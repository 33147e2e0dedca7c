use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Time,
    Frequency,
}

/// Spatial layout of a signal: a single line of `n` samples or a row-major
/// `(n1, n2)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Line(usize),
    Plane(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Line(n) => n,
            Shape::Plane(a, b) => a * b,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> usize {
        match self {
            Shape::Line(_) => 1,
            Shape::Plane(..) => 2,
        }
    }

    /// `(rows, cols)`; a line is a single row.
    pub fn rows_cols(&self) -> (usize, usize) {
        match *self {
            Shape::Line(n) => (1, n),
            Shape::Plane(a, b) => (a, b),
        }
    }

    pub fn extents(&self) -> Vec<usize> {
        match *self {
            Shape::Line(n) => vec![n],
            Shape::Plane(a, b) => vec![a, b],
        }
    }

    pub fn from_extents(ext: &[usize]) -> Result<Self> {
        match *ext {
            [n] if n >= 1 => Ok(Shape::Line(n)),
            [a, b] if a >= 1 && b >= 1 => Ok(Shape::Plane(a, b)),
            _ => Err(Error::invalid("shape", format!("{ext:?}"))),
        }
    }
}

/// Ordered complex samples in the time or frequency domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSeries<T> {
    values: Vec<Complex<T>>,
    domain: Domain,
    shape: Shape,
}

impl<T: Scalar> ComplexSeries<T> {
    pub fn new(values: Vec<Complex<T>>, domain: Domain, shape: Shape) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::invalid("shape", "dimensions must be >= 1"));
        }
        if values.len() != shape.len() {
            return Err(Error::Shape(format!(
                "{} samples for shape {:?}",
                values.len(),
                shape
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::invalid("values", format!("non-finite sample at {i}")));
        }
        Ok(ComplexSeries {
            values,
            domain,
            shape,
        })
    }

    pub fn line(values: Vec<Complex<T>>, domain: Domain) -> Result<Self> {
        let n = values.len();
        Self::new(values, domain, Shape::Line(n))
    }

    pub fn time(values: Vec<Complex<T>>) -> Result<Self> {
        Self::line(values, Domain::Time)
    }

    pub fn zeros(shape: Shape, domain: Domain) -> Self {
        ComplexSeries {
            values: vec![Complex::new(T::zero(), T::zero()); shape.len()],
            domain,
            shape,
        }
    }

    /// Builds without the finiteness scan. Callers guarantee the invariants.
    pub(crate) fn from_parts(values: Vec<Complex<T>>, domain: Domain, shape: Shape) -> Self {
        debug_assert_eq!(values.len(), shape.len());
        ComplexSeries {
            values,
            domain,
            shape,
        }
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn norm(&self) -> T {
        norm2(&self.values)
    }

    pub fn magnitudes(&self) -> Vec<T> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn real_parts(&self) -> Vec<T> {
        self.values.iter().map(|v| v.re).collect()
    }
}

/// Euclidean norm of a complex vector.
pub fn norm2<T: Scalar>(v: &[Complex<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}
