//! Iterative soft-thresholding with data consistency.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{self, Schedule};
use crate::scalar::Scalar;
use crate::spectral::{norm2, shrink_complex, ComplexSeries, DftPlan, Domain, Shape, ShrinkMode};

/// Zero-filled measurements on the working grid together with the schedule
/// that produced them.
#[derive(Debug, Clone)]
pub struct ReconProblem<T> {
    pub y_full: ComplexSeries<T>,
    pub schedule: Schedule,
    pub ve: bool,
    /// Grid size before the virtual echo (equals the grid size otherwise).
    pub original_n: usize,
    mask: Vec<bool>,
}

impl<T: Scalar> ReconProblem<T> {
    pub fn new(y_full: ComplexSeries<T>, schedule: Schedule, ve: bool, original_n: usize) -> Result<Self> {
        if y_full.shape() != schedule.grid() {
            return Err(Error::Shape(format!(
                "measurements {:?} vs schedule grid {:?}",
                y_full.shape(),
                schedule.grid()
            )));
        }
        let mask = schedule.mask();
        let zero = Complex::new(T::zero(), T::zero());
        if y_full.values().iter().zip(&mask).any(|(v, m)| !m && *v != zero) {
            return Err(Error::invalid("y_full", "non-zero value outside the schedule"));
        }
        Ok(ReconProblem {
            y_full,
            schedule,
            ve,
            original_n,
            mask,
        })
    }

    pub fn shape(&self) -> Shape {
        self.y_full.shape()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Replaces sampled positions of a time-domain buffer with the measurements.
    pub fn enforce(&self, t: &mut [Complex<T>]) {
        for ((v, &m), y) in t.iter_mut().zip(&self.mask).zip(self.y_full.values()) {
            if m {
                *v = *y;
            }
        }
    }

    /// `||y - U t||` for a time-domain buffer.
    pub fn residual(&self, t: &[Complex<T>]) -> T {
        t.iter()
            .zip(&self.mask)
            .zip(self.y_full.values())
            .filter(|((_, &m), _)| m)
            .map(|((v, _), y)| (*y - *v).norm_sqr())
            .sum::<T>()
            .sqrt()
    }
}

/// Builds the solver input from compact measurements. With `ve`, the working
/// grid is the `2n` virtual-echo grid over [`sampling::ve_schedule`].
pub fn prepare_problem<T: Scalar>(measured: &[Complex<T>], s: &Schedule, ve: bool) -> Result<ReconProblem<T>> {
    if measured.len() != s.len() {
        return Err(Error::Shape(format!("{} measured values for {} points", measured.len(), s.len())));
    }
    if !ve {
        let y = sampling::zero_fill(measured, s)?;
        return ReconProblem::new(y, s.clone(), false, s.grid().len());
    }
    let n = match s.grid() {
        Shape::Line(n) => n,
        Shape::Plane(..) => return Err(Error::Unsupported("virtual echo on a plane".into())),
    };
    let ves = sampling::ve_schedule(s)?;
    let mut y = ComplexSeries::zeros(Shape::Line(2 * n), Domain::Time);
    let v = y.values_mut();
    for (&k, &m) in s.indices().iter().zip(measured) {
        if k == 0 {
            v[0] = Complex::new(m.re, T::zero());
        } else {
            v[k] = m;
            v[2 * n - k] = m.conj();
        }
    }
    ReconProblem::new(y, ves, true, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdMode {
    Absolute { lambda: f64 },
    /// `theta_k = rho * max|x0| * decay^k`.
    Relative { rho: f64, decay: f64 },
}

impl Default for ThresholdMode {
    fn default() -> Self {
        ThresholdMode::Relative { rho: 0.99, decay: 0.98 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IstConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub threshold: ThresholdMode,
    pub shrinkage: ShrinkMode,
    pub final_dc: bool,
}

impl Default for IstConfig {
    fn default() -> Self {
        IstConfig {
            max_iters: 300,
            tol: 1e-6,
            threshold: ThresholdMode::default(),
            shrinkage: ShrinkMode::ComplexMagnitude,
            final_dc: true,
        }
    }
}

impl IstConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol", "must be positive"));
        }
        match self.threshold {
            ThresholdMode::Absolute { lambda } if !(lambda >= 0.0) => Err(Error::invalid("lambda", "must be >= 0")),
            ThresholdMode::Relative { rho, decay } => {
                if !(rho > 0.0 && rho <= 1.0) {
                    Err(Error::invalid("rho", "must be in (0, 1]"))
                } else if !(decay > 0.0 && decay <= 1.0) {
                    Err(Error::invalid("decay", "must be in (0, 1]"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IstDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// `||y - U F^H x_k||` for every iterate produced.
    pub residuals: Vec<f64>,
    pub thresholds: Vec<f64>,
}

/// Runs IST from `x0 = F y_full`.
pub fn ist_reconstruct<T: Scalar>(p: &ReconProblem<T>, c: &IstConfig) -> Result<(ComplexSeries<T>, IstDiagnostics)> {
    c.validate()?;
    let plan = DftPlan::new(p.shape());
    let mut x = p.y_full.values().to_vec();
    plan.forward_in_place(&mut x);

    let x0_max = x.iter().map(|v| v.norm()).fold(T::zero(), T::max);
    let mut diag = IstDiagnostics::default();
    let mut t = vec![Complex::new(T::zero(), T::zero()); x.len()];

    for k in 0..c.max_iters {
        t.copy_from_slice(&x);
        plan.inverse_in_place(&mut t);
        if k > 0 {
            diag.residuals.push(p.residual(&t).f64());
        }
        p.enforce(&mut t);
        plan.forward_in_place(&mut t);

        let theta = match c.threshold {
            ThresholdMode::Absolute { lambda } => T::of(lambda),
            ThresholdMode::Relative { rho, decay } => x0_max * T::of(rho * decay.powi(k as i32)),
        };
        diag.thresholds.push(theta.f64());

        let prev_norm = norm2(&x);
        let mut delta = T::zero();
        for (xi, ti) in x.iter_mut().zip(&t) {
            let nv = shrink_complex(*ti, theta, c.shrinkage);
            delta += (nv - *xi).norm_sqr();
            *xi = nv;
        }
        diag.iterations = k + 1;
        if prev_norm == T::zero() || delta.sqrt() / prev_norm < T::of(c.tol) {
            diag.converged = true;
            break;
        }
    }

    t.copy_from_slice(&x);
    plan.inverse_in_place(&mut t);
    diag.residuals.push(p.residual(&t).f64());
    if c.final_dc {
        p.enforce(&mut t);
        plan.forward_in_place(&mut t);
        x.copy_from_slice(&t);
    }
    Ok((ComplexSeries::from_parts(x, Domain::Frequency, p.shape()), diag))
}
