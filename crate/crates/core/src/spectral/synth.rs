use std::f64::consts::PI;

use num_complex::Complex;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::series::ComplexSeries;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// One decaying complex exponential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakModel {
    pub amplitude: f64,
    /// Cycles per sample.
    pub frequency: f64,
    /// Decay time in samples.
    pub decay: f64,
    /// Radians.
    pub phase: f64,
}

/// Closed parameter ranges for synthetic peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRanges {
    pub peaks: (usize, usize),
    pub amplitude: (f64, f64),
    pub frequency: (f64, f64),
    pub decay: (f64, f64),
    pub phase: (f64, f64),
}

impl Default for PeakRanges {
    fn default() -> Self {
        PeakRanges {
            peaks: (1, 10),
            amplitude: (0.05, 1.0),
            frequency: (0.01, 0.99),
            decay: (10.0, 179.2),
            phase: (0.0, 2.0 * PI),
        }
    }
}

fn within(field: &'static str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{v} outside [{lo}, {hi}]")))
    }
}

impl PeakRanges {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("amplitude", self.amplitude),
            ("frequency", self.frequency),
            ("decay", self.decay),
            ("phase", self.phase),
        ];
        for (name, (lo, hi)) in pairs {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(name, format!("empty range [{lo}, {hi}]")));
            }
        }
        if self.peaks.0 > self.peaks.1 {
            return Err(Error::invalid("peaks", "empty range"));
        }
        if self.decay.0 <= 0.0 {
            return Err(Error::invalid("decay", "must be positive"));
        }
        Ok(())
    }

    pub fn check(&self, p: &PeakModel) -> Result<()> {
        within("amplitude", p.amplitude, self.amplitude)?;
        within("frequency", p.frequency, self.frequency)?;
        within("decay", p.decay, self.decay)?;
        within("phase", p.phase, self.phase)
    }

    /// Uniform draw of a peak list.
    pub fn sample(&self, rng: &mut rng::Rng) -> Vec<PeakModel> {
        let j = rng.random_range(self.peaks.0..=self.peaks.1);
        let mut u = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
        (0..j)
            .map(|_| PeakModel {
                amplitude: u(self.amplitude),
                frequency: u(self.frequency),
                decay: u(self.decay),
                phase: u(self.phase),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSignalSpec {
    pub peaks: Vec<PeakModel>,
    pub n: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSignalSpec {
    /// Structural checks only; range membership is [`PeakRanges::check`].
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "signal length must be >= 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma", format!("{}", self.noise_sigma)));
        }
        for p in &self.peaks {
            if !(p.amplitude.is_finite() && p.frequency.is_finite() && p.phase.is_finite()) {
                return Err(Error::invalid("peaks", "non-finite peak parameter"));
            }
            if !(p.decay > 0.0) {
                return Err(Error::invalid("decay", format!("{} must be positive", p.decay)));
            }
        }
        Ok(())
    }

    pub fn validate_ranges(&self, ranges: &PeakRanges) -> Result<()> {
        self.validate()?;
        if self.n < 8 {
            return Err(Error::invalid("n", format!("{} < 8", self.n)));
        }
        if self.peaks.len() > ranges.peaks.1 {
            return Err(Error::invalid("peaks", format!("{} peaks", self.peaks.len())));
        }
        self.peaks.iter().try_for_each(|p| ranges.check(p))
    }
}

/// Noiseless sum of decaying exponentials, `n = 0..N-1`.
pub fn exponential_sum(peaks: &[PeakModel], n: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); n];
    for p in peaks {
        let a = Complex::from_polar(p.amplitude, p.phase);
        for (t, v) in out.iter_mut().enumerate() {
            let t = t as f64;
            *v += a * (-t / p.decay).exp() * Complex::from_polar(1.0, 2.0 * PI * p.frequency * t);
        }
    }
    out
}

/// FID for `spec` with complex Gaussian noise drawn from `spec.seed`.
pub fn synthesize_fid<T: Scalar>(spec: &SyntheticSignalSpec) -> Result<ComplexSeries<T>> {
    spec.validate()?;
    let mut clean = exponential_sum(&spec.peaks, spec.n);
    if spec.noise_sigma > 0.0 {
        let mut r = rng::rng(spec.seed);
        for v in clean.iter_mut() {
            let re: f64 = r.sample(StandardNormal);
            let im: f64 = r.sample(StandardNormal);
            *v += Complex::new(re, im) * spec.noise_sigma;
        }
    }
    let values = clean
        .into_iter()
        .map(|v| Complex::new(T::of(v.re), T::of(v.im)))
        .collect();
    ComplexSeries::time(values)
}
