use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{read_file, write_atomic, FormatError};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::spectral::{ComplexSeries, Domain, Shape};

pub const CONTAINER_VERSION: u64 = 1;
const MAX_HEADER: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Fid,
    Spectrum,
}

impl SignalKind {
    pub fn domain(self) -> Domain {
        match self {
            SignalKind::Fid => Domain::Time,
            SignalKind::Spectrum => Domain::Frequency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub format_version: u64,
    pub kind: SignalKind,
    pub dims: usize,
    pub shape: Vec<usize>,
    pub ve: bool,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

/// A complex signal with a one-line JSON header. On disk the header is
/// followed by a newline and the samples as little-endian `f64` pairs
/// `(re, im)` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalContainer {
    pub header: ContainerHeader,
    pub payload: Vec<Complex<f64>>,
}

impl SignalContainer {
    pub fn new(kind: SignalKind, shape: Shape, ve: bool, payload: Vec<Complex<f64>>) -> Result<Self, FormatError> {
        let header = ContainerHeader {
            format_version: CONTAINER_VERSION,
            kind,
            dims: shape.dims(),
            shape: shape.extents(),
            ve,
            meta: BTreeMap::new(),
        };
        if payload.len() != shape.len() {
            return Err(FormatError::MalformedHeader(format!("{} samples for shape {:?}", payload.len(), header.shape)));
        }
        Ok(SignalContainer { header, payload })
    }

    pub fn from_series<T: Scalar>(s: &ComplexSeries<T>, ve: bool) -> Self {
        let kind = match s.domain() {
            Domain::Time => SignalKind::Fid,
            Domain::Frequency => SignalKind::Spectrum,
        };
        let payload = s.values().iter().map(|v| Complex::new(v.re.f64(), v.im.f64())).collect();
        Self::new(kind, s.shape(), ve, payload).expect("series length matches its shape")
    }

    pub fn shape(&self) -> Result<Shape> {
        Shape::from_extents(&self.header.shape)
    }

    pub fn to_series<T: Scalar>(&self) -> Result<ComplexSeries<T>> {
        let values = self.payload.iter().map(|v| Complex::new(T::of(v.re), T::of(v.im))).collect();
        ComplexSeries::new(values, self.header.kind.domain(), self.shape()?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(&self.header).expect("header serialises");
        out.push(b'\n');
        out.reserve(self.payload.len() * 16);
        for v in &self.payload {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let end = bytes
            .iter()
            .take(MAX_HEADER)
            .position(|&b| b == b'\n')
            .ok_or_else(|| FormatError::MalformedHeader("no header line".into()))?;
        let raw: serde_json::Value =
            serde_json::from_slice(&bytes[..end]).map_err(|e| FormatError::MalformedHeader(e.to_string()))?;
        match raw.get("format_version").and_then(|v| v.as_u64()) {
            Some(CONTAINER_VERSION) => {}
            Some(found) => return Err(FormatError::VersionMismatch { found, supported: CONTAINER_VERSION }),
            None => return Err(FormatError::MalformedHeader("missing format_version".into())),
        }
        let header: ContainerHeader = serde_json::from_value(raw).map_err(|e| FormatError::MalformedHeader(e.to_string()))?;
        if header.dims != header.shape.len() || !(1..=2).contains(&header.dims) {
            return Err(FormatError::MalformedHeader(format!("dims {} with shape {:?}", header.dims, header.shape)));
        }
        if header.shape.contains(&0) {
            return Err(FormatError::MalformedHeader("zero extent".into()));
        }
        let count = header
            .shape
            .iter()
            .try_fold(1usize, |a, &b| a.checked_mul(b))
            .and_then(|c| c.checked_mul(16))
            .ok_or_else(|| FormatError::MalformedHeader("shape overflows".into()))?;
        let body = &bytes[end + 1..];
        if body.len() < count {
            return Err(FormatError::Truncated { expected: count, found: body.len() });
        }
        if body.len() > count {
            return Err(FormatError::Trailing { found: body.len() - count });
        }
        let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
        let payload = body.chunks_exact(16).map(|c| Complex::new(f(&c[..8]), f(&c[8..]))).collect();
        Ok(SignalContainer { header, payload })
    }
}

pub fn read_container(path: &Path) -> Result<SignalContainer, FormatError> {
    SignalContainer::from_bytes(&read_file(path)?)
}

pub fn write_container(c: &SignalContainer, path: &Path) -> Result<(), FormatError> {
    write_atomic(path, &c.to_bytes())
}
