//! Signals, transforms and shrinkage.

mod dft;
mod echo;
mod series;
mod shrink;
mod synth;

pub use dft::{dft_forward, dft_inverse, DftPlan, Fft};
pub use echo::virtual_echo;
pub use series::{norm2, ComplexSeries, Domain, Shape};
pub use shrink::{shrink_complex, shrink_real, soft_threshold, soft_threshold_channels, ShrinkMode};
pub use synth::{exponential_sum, synthesize_fid, PeakModel, PeakRanges, SyntheticSignalSpec};
