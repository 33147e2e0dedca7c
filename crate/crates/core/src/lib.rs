//! Reconstruction of non-uniformly sampled exponential signals.
//!
//! Two reconstruction routes share one set of operators: a classical
//! iterative soft-thresholding solver ([`ist`]) and an unrolled network whose
//! blocks learn their own thresholds ([`net`], trained by [`training`]).
//! Everything numeric is generic over [`Scalar`]; the aliases below fix the
//! working precision to `f64`, which is what the file formats store.

pub mod analysis;
pub mod error;
pub mod io;
pub mod ist;
pub mod net;
pub mod pipeline;
pub mod presets;
pub mod rng;
pub mod sampling;
pub mod scalar;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Series = spectral::ComplexSeries<f64>;
pub type Series32 = spectral::ComplexSeries<f32>;
pub type Problem = ist::ReconProblem<f64>;
pub type Problem32 = ist::ReconProblem<f32>;
pub type Weights = net::ModernWeights<f64>;
pub type Weights32 = net::ModernWeights<f32>;
pub type Output = net::ModernOutput<f64>;
pub type Dataset = training::Dataset<f64>;
pub type Gradients = training::GradientSet<f64>;
