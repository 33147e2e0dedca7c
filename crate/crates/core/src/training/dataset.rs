use num_complex::Complex;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ist::{prepare_problem, ReconProblem};
use crate::rng;
use crate::sampling::{self, Schedule};
use crate::scalar::Scalar;
use crate::spectral::{dft_forward, exponential_sum, virtual_echo, ComplexSeries, PeakModel, PeakRanges};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub q_total: usize,
    pub n: usize,
    pub ranges: PeakRanges,
    pub noise_sigma: f64,
    pub density: f64,
    pub ve: bool,
    pub split: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            q_total: 4000,
            n: 128,
            ranges: PeakRanges::default(),
            noise_sigma: 1e-4,
            density: 0.25,
            ve: true,
            split: 0.9,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        if self.q_total == 0 {
            return Err(Error::invalid("q_total", "must be >= 1"));
        }
        if self.n < 8 {
            return Err(Error::invalid("n", format!("{} < 8", self.n)));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::invalid("density", format!("{} not in (0, 1]", self.density)));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::invalid("split", format!("{} not in (0, 1)", self.split)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma", "must be >= 0"));
        }
        Ok(())
    }

    pub fn n_train(&self) -> usize {
        let t = (self.split * self.q_total as f64).round() as usize;
        if self.q_total >= 2 {
            t.clamp(1, self.q_total - 1)
        } else {
            t.min(self.q_total)
        }
    }

    pub fn sample_count(&self) -> usize {
        sampling::count_for_density(self.n, self.density).expect("validated density")
    }
}

/// One training pair: the reconstruction problem and its fully sampled label.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub problem: ReconProblem<T>,
    pub label: ComplexSeries<T>,
    /// Generating peak list (empty for samples loaded from disk).
    pub peaks: Vec<PeakModel>,
}

#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub train: Vec<Sample<T>>,
    pub valid: Vec<Sample<T>>,
}

/// Poisson-gap schedule, re-seeding until the exact count is reached.
pub(crate) fn schedule_with_retry(n: usize, count: usize, seed: u64) -> Result<Schedule> {
    let mut last = None;
    for attempt in 0..8 {
        match sampling::poisson_gap_schedule(n, count, rng::sub_seed(seed, attempt)) {
            Ok(s) => return Ok(s),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Builds a sample from a noisy fully sampled FID (as `f64`).
pub fn make_sample<T: Scalar>(fid: &[Complex<f64>], schedule: &Schedule, ve: bool, peaks: Vec<PeakModel>) -> Result<Sample<T>> {
    let fid: Vec<Complex<T>> = fid.iter().map(|v| Complex::new(T::of(v.re), T::of(v.im))).collect();
    let series = ComplexSeries::time(fid)?;
    let measured = sampling::extract(&series, schedule)?;
    let problem = prepare_problem(&measured, schedule, ve)?;
    let full = if ve { virtual_echo(&series)? } else { series };
    Ok(Sample { problem, label: dft_forward(&full), peaks })
}

fn draw_sample<T: Scalar>(spec: &DatasetSpec, q: usize) -> Result<Sample<T>> {
    let base = rng::sub_seed(spec.seed, q as u64);
    let mut r = rng::rng(rng::sub_seed(base, 0));
    let peaks = spec.ranges.sample(&mut r);
    let mut fid = exponential_sum(&peaks, spec.n);
    if spec.noise_sigma > 0.0 {
        let mut nr = rng::rng(rng::sub_seed(base, 1));
        for v in fid.iter_mut() {
            let re: f64 = nr.sample(StandardNormal);
            let im: f64 = nr.sample(StandardNormal);
            *v += Complex::new(re, im) * spec.noise_sigma;
        }
    }
    let schedule = schedule_with_retry(spec.n, spec.sample_count(), rng::sub_seed(base, 2))?;
    make_sample(&fid, &schedule, spec.ve, peaks)
}

/// Synthetic training pairs: random peak lists, noise added to the full FID,
/// a fresh Poisson-gap schedule per pair. The first `split` fraction (by
/// index) trains, the rest validates.
pub fn generate_dataset<T: Scalar>(spec: &DatasetSpec) -> Result<Dataset<T>> {
    spec.validate()?;
    let mut all: Vec<Sample<T>> = (0..spec.q_total)
        .into_par_iter()
        .map(|q| draw_sample(spec, q))
        .collect::<Result<_>>()?;
    let valid = all.split_off(spec.n_train());
    Ok(Dataset { train: all, valid })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetSpec {
        DatasetSpec { q_total: 10, n: 32, ..Default::default() }
    }

    #[test]
    fn split_counts() {
        let d: Dataset<f64> = generate_dataset(&small()).unwrap();
        assert_eq!(d.train.len(), 9);
        assert_eq!(d.valid.len(), 1);
        let s = &d.train[0];
        assert_eq!(s.problem.shape().len(), 64);
        assert_eq!(s.label.len(), 64);
        assert_eq!(s.problem.schedule.len(), 2 * 8);
    }

    #[test]
    fn deterministic() {
        let a: Dataset<f64> = generate_dataset(&small()).unwrap();
        let b: Dataset<f64> = generate_dataset(&small()).unwrap();
        for (x, y) in a.train.iter().zip(&b.train) {
            assert_eq!(x.label, y.label);
            assert_eq!(x.problem.schedule, y.problem.schedule);
        }
        let c: Dataset<f64> = generate_dataset(&DatasetSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.train[0].label, c.train[0].label);
    }

    #[test]
    fn spec_validation() {
        assert!(DatasetSpec { density: 0.0, ..small() }.validate().is_err());
        assert!(DatasetSpec { split: 1.0, ..small() }.validate().is_err());
        assert!(DatasetSpec { n: 4, ..small() }.validate().is_err());
    }

    #[test]
    fn labels_match_measurements() {
        let spec = DatasetSpec { ve: false, ..small() };
        let d: Dataset<f64> = generate_dataset(&spec).unwrap();
        let s = &d.train[3];
        let t = crate::spectral::dft_inverse(&s.label);
        for &k in s.problem.schedule.indices() {
            assert!((t.values()[k] - s.problem.y_full.values()[k]).norm() < 1e-12);
        }
    }
}
