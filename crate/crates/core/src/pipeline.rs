//! Container-level reconstruction shared by the command line and the
//! service, so both produce byte-identical spectra.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{SignalContainer, SignalKind};
use crate::ist::{ist_reconstruct, prepare_problem, IstConfig, ReconProblem};
use crate::net::{modern_forward, BnMode, ModernWeights};
use crate::sampling::{extract, Schedule};
use crate::spectral::{ComplexSeries, Domain, Shape};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    #[default]
    Ist,
    Modern,
}

/// Reconstruction settings as accepted from a config document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    pub method: MethodName,
    /// Virtual echo; unset means on for line grids with IST and whatever the
    /// network was trained with for the modern route.
    pub ve: Option<bool>,
    pub ist: IstConfig,
    /// Deployed weights id (service) or path (command line).
    pub weights: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub method: MethodName,
    pub ve: bool,
    pub rows: Vec<RowDiagnostics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconOutcome {
    pub spectrum: SignalContainer,
    pub diagnostics: Diagnostics,
}

fn solve(p: &ReconProblem<f64>, cfg: &ReconConfig, weights: Option<&ModernWeights<f64>>) -> Result<(ComplexSeries<f64>, RowDiagnostics)> {
    match cfg.method {
        MethodName::Ist => {
            let (x, d) = ist_reconstruct(p, &cfg.ist)?;
            let final_residual = d.residuals.last().copied().unwrap_or(0.0);
            Ok((x, RowDiagnostics { iterations: d.iterations, converged: d.converged, final_residual }))
        }
        MethodName::Modern => {
            let w = weights.ok_or_else(|| Error::invalid("weights", "modern reconstruction needs weights"))?;
            let out = modern_forward(p, w, BnMode::Infer)?;
            let t = crate::spectral::dft_inverse(&out.reconstruction);
            let final_residual = p.residual(t.values());
            Ok((out.reconstruction, RowDiagnostics { iterations: w.meta.k_iters, converged: true, final_residual }))
        }
    }
}

/// Reconstructs a time-domain container sampled on `schedule`.
///
/// The container either has the schedule's grid shape (one problem), or is a
/// plane whose rows are each a line on the schedule's grid (one problem per
/// row, solved in parallel; the result does not depend on the thread count).
/// Samples off the schedule are ignored.
pub fn reconstruct(input: &SignalContainer, schedule: &Schedule, cfg: &ReconConfig, weights: Option<&ModernWeights<f64>>) -> Result<ReconOutcome> {
    if input.header.kind != SignalKind::Fid {
        return Err(Error::invalid("input", "expected a time-domain (fid) container"));
    }
    if cfg.method == MethodName::Ist {
        cfg.ist.validate()?;
    }
    if let Some(w) = weights {
        w.validate()?;
    }
    let shape = input.shape()?;
    let grid = schedule.grid();
    let (rows, row_shape) = match (shape, grid) {
        _ if shape == grid => (1, grid),
        (Shape::Plane(r, c), Shape::Line(n)) if c == n => (r, grid),
        _ => {
            return Err(Error::Shape(format!(
                "input {:?} does not fit schedule grid {:?}",
                shape.extents(),
                grid.extents()
            )))
        }
    };
    let ve = cfg.ve.unwrap_or(match cfg.method {
        MethodName::Ist => row_shape.dims() == 1,
        MethodName::Modern => weights.is_some_and(|w| w.meta.ve_trained),
    });
    if let (MethodName::Modern, Some(w)) = (cfg.method, weights) {
        if w.meta.dims != row_shape.dims() {
            return Err(Error::Shape(format!("{}-D weights for a {}-D grid", w.meta.dims, row_shape.dims())));
        }
    }
    let len = row_shape.len();
    let results: Vec<(ComplexSeries<f64>, RowDiagnostics)> = (0..rows)
        .into_par_iter()
        .map(|r| {
            let row = ComplexSeries::new(input.payload[r * len..(r + 1) * len].to_vec(), Domain::Time, row_shape)?;
            let measured: Vec<Complex<f64>> = extract(&row, schedule)?;
            let p = prepare_problem(&measured, schedule, ve)?;
            solve(&p, cfg, weights)
        })
        .collect::<Result<_>>()?;
    let out_row = results[0].0.shape();
    let out_shape = if rows == 1 { out_row } else { Shape::Plane(rows, out_row.len()) };
    let mut payload = Vec::with_capacity(out_shape.len());
    let mut diag = Vec::with_capacity(rows);
    for (x, d) in results {
        payload.extend_from_slice(x.values());
        diag.push(d);
    }
    let mut spectrum = SignalContainer::new(SignalKind::Spectrum, out_shape, ve, payload)?;
    spectrum.header.meta = input.header.meta.clone();
    spectrum.header.meta.insert(
        "method".into(),
        match cfg.method {
            MethodName::Ist => "ist".into(),
            MethodName::Modern => "modern".into(),
        },
    );
    Ok(ReconOutcome { spectrum, diagnostics: Diagnostics { method: cfg.method, ve, rows: diag } })
}

/// Zero-fills `fid` off the schedule (retrospective undersampling).
pub fn undersample(fid: &SignalContainer, schedule: &Schedule) -> Result<SignalContainer> {
    let shape = fid.shape()?;
    let grid = schedule.grid();
    let len = grid.len();
    if !(shape == grid || matches!((shape, grid), (Shape::Plane(_, c), Shape::Line(n)) if c == n)) {
        return Err(Error::Shape(format!("input {:?} does not fit schedule grid {:?}", shape.extents(), grid.extents())));
    }
    let mask = schedule.mask();
    let mut out = fid.clone();
    for (i, v) in out.payload.iter_mut().enumerate() {
        if !mask[i % len] {
            *v = Complex::new(0.0, 0.0);
        }
    }
    out.header.kind = SignalKind::Fid;
    Ok(out)
}
