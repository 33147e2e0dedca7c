//! Reconstruction quality metrics, peak picking, density sweeps and
//! time-zero quantitation.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ist::{ist_reconstruct, prepare_problem, IstConfig};
use crate::net::{modern_forward, BnMode, ModernWeights};
use crate::rng;
use crate::sampling;
use crate::scalar::Scalar;
use crate::spectral::{dft_forward, exponential_sum, virtual_echo, ComplexSeries, PeakModel, PeakRanges, Shape};

/// Relative l2 error `||x_ref - x_hat|| / ||x_ref||`.
pub fn rlne<T: Scalar>(x_ref: &[Complex<T>], x_hat: &[Complex<T>]) -> Result<T> {
    if x_ref.len() != x_hat.len() {
        return Err(Error::Shape(format!("{} vs {} samples", x_ref.len(), x_hat.len())));
    }
    let den = x_ref.iter().map(|v| v.norm_sqr()).sum::<T>();
    if den == T::zero() {
        return Err(Error::Analysis("reference has zero norm".into()));
    }
    let num = x_ref.iter().zip(x_hat).map(|(a, b)| (*a - *b).norm_sqr()).sum::<T>();
    Ok((num / den).sqrt())
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Analysis(format!("need >= 2 pairs, got {} and {}", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Analysis("zero variance in correlated heights".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Flat row-major position.
    pub index: usize,
    pub row: usize,
    pub col: usize,
    /// Magnitude at the apex.
    pub height: f64,
    /// Sum of magnitudes over the integration window.
    pub volume: f64,
}

fn neighbours(shape: Shape, idx: usize) -> impl Iterator<Item = usize> {
    let (rows, cols) = shape.rows_cols();
    let (r, c) = (idx / cols, idx % cols);
    let mut out = Vec::with_capacity(4);
    if c > 0 {
        out.push(idx - 1);
    }
    if c + 1 < cols {
        out.push(idx + 1);
    }
    if r > 0 {
        out.push(idx - cols);
    }
    if r + 1 < rows {
        out.push(idx + cols);
    }
    out.into_iter()
}

fn is_local_max(mag: &[f64], shape: Shape, idx: usize) -> bool {
    let mut any = false;
    for j in neighbours(shape, idx) {
        any = true;
        if mag[idx] <= mag[j] {
            return false;
        }
    }
    any
}

fn window_sum(mag: &[f64], shape: Shape, idx: usize, window: usize) -> f64 {
    let (rows, cols) = shape.rows_cols();
    let (r, c) = (idx / cols, idx % cols);
    let (r0, r1) = (r.saturating_sub(window), (r + window).min(rows - 1));
    let (c0, c1) = (c.saturating_sub(window), (c + window).min(cols - 1));
    let (r0, r1) = if rows == 1 { (0, 0) } else { (r0, r1) };
    (r0..=r1).map(|rr| mag[rr * cols + c0..=rr * cols + c1].iter().sum::<f64>()).sum()
}

/// Local maxima (strictly above every 4-neighbour) with magnitude at least
/// `min_rel` of the global maximum.
pub fn pick_peaks(mag: &[f64], shape: Shape, min_rel: f64, window: usize) -> Result<Vec<Peak>> {
    if mag.is_empty() {
        return Err(Error::Analysis("empty spectrum".into()));
    }
    if mag.len() != shape.len() {
        return Err(Error::Shape(format!("{} magnitudes for {shape:?}", mag.len())));
    }
    if !(min_rel > 0.0 && min_rel < 1.0) {
        return Err(Error::invalid("min_rel", format!("{min_rel} not in (0, 1)")));
    }
    if window == 0 {
        return Err(Error::invalid("window", "must be >= 1"));
    }
    let max = mag.iter().copied().fold(0.0, f64::max);
    let floor = min_rel * max;
    let (_, cols) = shape.rows_cols();
    Ok((0..mag.len())
        .filter(|&i| mag[i] >= floor && mag[i] > 0.0 && is_local_max(mag, shape, i))
        .map(|i| Peak {
            index: i,
            row: i / cols,
            col: i % cols,
            height: mag[i],
            volume: window_sum(mag, shape, i, window),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelationOptions {
    pub match_tol: usize,
    /// Only correlate reference peaks below this fraction of the tallest one.
    pub weak_fraction: Option<f64>,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        CorrelationOptions { match_tol: 2, weak_fraction: None }
    }
}

/// Height pairs `(reference apex, nearest reconstructed local max)`.
pub fn matched_heights(
    ref_positions: &[usize],
    x_ref: &[f64],
    x_hat: &[f64],
    shape: Shape,
    opts: &CorrelationOptions,
) -> Result<Vec<(f64, f64)>> {
    if x_ref.len() != shape.len() || x_hat.len() != shape.len() {
        return Err(Error::Shape("spectra do not match the shape".into()));
    }
    let (rows, cols) = shape.rows_cols();
    let tallest = ref_positions.iter().map(|&i| x_ref[i]).fold(0.0, f64::max);
    let mut pairs = Vec::new();
    for &pos in ref_positions {
        if pos >= x_ref.len() {
            return Err(Error::invalid("ref_positions", format!("{pos} outside spectrum")));
        }
        let h = x_ref[pos];
        if let Some(frac) = opts.weak_fraction {
            if h >= frac * tallest {
                continue;
            }
        }
        let (r, c) = (pos / cols, pos % cols);
        let t = opts.match_tol;
        let mut best: Option<(usize, f64)> = None;
        for rr in r.saturating_sub(t)..=(r + t).min(rows - 1) {
            for cc in c.saturating_sub(t)..=(c + t).min(cols - 1) {
                let j = rr * cols + cc;
                if !is_local_max(x_hat, shape, j) {
                    continue;
                }
                let d = rr.abs_diff(r).max(cc.abs_diff(c));
                if best.is_none_or(|(bd, bh)| d < bd || (d == bd && x_hat[j] > bh)) {
                    best = Some((d, x_hat[j]));
                }
            }
        }
        pairs.push((h, best.map_or(0.0, |(_, v)| v)));
    }
    Ok(pairs)
}

/// Squared Pearson correlation of matched peak heights.
pub fn intensity_correlation(
    ref_positions: &[usize],
    x_ref: &[f64],
    x_hat: &[f64],
    shape: Shape,
    opts: &CorrelationOptions,
) -> Result<f64> {
    let pairs = matched_heights(ref_positions, x_ref, x_hat, shape, opts)?;
    if pairs.len() < 2 {
        return Err(Error::Analysis(format!("{} valid peak pairs, need >= 2", pairs.len())));
    }
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(pearson(&a, &b)?.powi(2))
}

/// Signal used by a density sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSignal {
    /// The same peaks every trial; only noise and schedule change.
    Fixed { peaks: Vec<PeakModel> },
    /// Fresh random peaks per trial.
    Random { ranges: PeakRanges },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub signal: ScenarioSignal,
    pub n: usize,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_true")]
    pub ve: bool,
    #[serde(default = "default_min_rel")]
    pub min_rel: f64,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub correlation: CorrelationOptions,
    #[serde(default)]
    pub seed: u64,
}

fn default_sigma() -> f64 {
    1e-4
}
fn default_true() -> bool {
    true
}
fn default_min_rel() -> f64 {
    0.01
}
fn default_window() -> usize {
    2
}

/// Reconstruction route used by [`robustness_sweep`] and [`score_trial`].
#[derive(Debug, Clone, Copy)]
pub enum Method<'a, T> {
    Ist(&'a IstConfig),
    Modern(&'a ModernWeights<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub r2: f64,
    pub rlne: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub density: f64,
    pub trials: usize,
    pub mean_r2: f64,
    pub std_r2: f64,
    pub median_r2: f64,
    pub mean_rlne: f64,
    pub std_rlne: f64,
    pub median_rlne: f64,
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// Fully sampled reference spectrum and one reconstruction, scored.
pub fn score_trial<T: Scalar>(method: Method<'_, T>, scenario: &Scenario, density: f64, trial: usize) -> Result<TrialScore> {
    let base = rng::sub_seed(scenario.seed, trial as u64);
    let peaks = match &scenario.signal {
        ScenarioSignal::Fixed { peaks } => peaks.clone(),
        ScenarioSignal::Random { ranges } => ranges.sample(&mut rng::rng(rng::sub_seed(base, 0))),
    };
    let spec = crate::spectral::SyntheticSignalSpec {
        peaks,
        n: scenario.n,
        noise_sigma: scenario.noise_sigma,
        seed: rng::sub_seed(base, 1),
    };
    let fid: ComplexSeries<T> = crate::spectral::synthesize_fid(&spec)?;
    let count = sampling::count_for_density(scenario.n, density)?;
    let sched_seed = rng::sub_seed(rng::sub_seed(base, 2), (density * 1e6).round() as u64);
    let s = crate::training::schedule_with_retry(scenario.n, count, sched_seed)?;
    let measured = sampling::extract(&fid, &s)?;
    let problem = prepare_problem(&measured, &s, scenario.ve)?;
    let full = if scenario.ve { virtual_echo(&fid)? } else { fid };
    let reference = dft_forward(&full);
    let recon = match method {
        Method::Ist(c) => ist_reconstruct(&problem, c)?.0,
        Method::Modern(w) => modern_forward(&problem, w, BnMode::Infer)?.reconstruction,
    };
    let mag = |x: &ComplexSeries<T>| x.values().iter().map(|v| v.norm().f64()).collect::<Vec<f64>>();
    let (mr, mh) = (mag(&reference), mag(&recon));
    let picks = pick_peaks(&mr, reference.shape(), scenario.min_rel, scenario.window)?;
    let positions: Vec<usize> = picks.iter().map(|p| p.index).collect();
    let r2 = intensity_correlation(&positions, &mr, &mh, reference.shape(), &scenario.correlation).unwrap_or(f64::NAN);
    Ok(TrialScore { r2, rlne: rlne(reference.values(), recon.values())?.f64() })
}

/// Reconstruct-and-score over fresh schedules for every density and trial.
/// Trial `t` uses the same signal and noise at every density.
pub fn robustness_sweep<T: Scalar>(method: Method<'_, T>, densities: &[f64], trials: usize, scenario: &Scenario) -> Result<Vec<SweepRow>> {
    if trials == 0 {
        return Err(Error::invalid("trials", "must be >= 1"));
    }
    densities
        .iter()
        .map(|&d| {
            let scores: Vec<TrialScore> = (0..trials)
                .into_par_iter()
                .map(|t| score_trial(method, scenario, d, t))
                .collect::<Result<_>>()?;
            let r2: Vec<f64> = scores.iter().map(|s| s.r2).filter(|v| v.is_finite()).collect();
            let rl: Vec<f64> = scores.iter().map(|s| s.rlne).collect();
            let (mean_r2, std_r2) = mean_std(&r2);
            let (mean_rlne, std_rlne) = mean_std(&rl);
            Ok(SweepRow {
                density: d,
                trials,
                mean_r2,
                std_r2,
                median_r2: median(&r2),
                mean_rlne,
                std_rlne,
                median_rlne: median(&rl),
            })
        })
        .collect()
}

/// Fits `ln A_i = ln A_0 + i ln f` for `i = 1..=n` by ordinary least squares
/// and returns `(A_0, f)`.
pub fn hsqc0_extrapolate(volumes: &[f64]) -> Result<(f64, f64)> {
    if volumes.len() < 2 {
        return Err(Error::invalid("volumes", "need at least two volumes"));
    }
    if let Some(v) = volumes.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("volumes", format!("non-positive volume {v}")));
    }
    let n = volumes.len() as f64;
    let xm = (n + 1.0) / 2.0;
    let ys: Vec<f64> = volumes.iter().map(|v| v.ln()).collect();
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = (i + 1) as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    Ok(((ym - slope * xm).exp(), slope.exp()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubGroup {
    pub name: String,
    pub a0: Vec<f64>,
}

/// A metabolite whose value is the sum of its sub-group averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaboliteGroup {
    pub name: String,
    pub subgroups: Vec<SubGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubSummary {
    pub name: String,
    pub average: f64,
    /// Sample standard deviation (zero for a single peak).
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub name: String,
    pub subgroups: Vec<SubSummary>,
    pub value: f64,
    pub ratio: f64,
}

/// Time-zero fit of one peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub id: String,
    pub a0: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantResult {
    pub reference: String,
    #[serde(default)]
    pub peaks: Vec<PeakFit>,
    pub groups: Vec<GroupSummary>,
}

/// Peak ids making up one sub-group of a metabolite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubGroupSpec {
    #[serde(default)]
    pub name: String,
    pub peaks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub subgroups: Vec<SubGroupSpec>,
}

/// Extrapolates every peak's volume series to time zero, then groups and
/// normalises the `A_0` values.
pub fn quantify(volumes: &[(String, Vec<f64>)], groups: &[GroupSpec], reference: &str) -> Result<QuantResult> {
    let fits = volumes
        .iter()
        .map(|(id, v)| {
            let (a0, f) = hsqc0_extrapolate(v).map_err(|e| Error::Analysis(format!("peak '{id}': {e}")))?;
            Ok(PeakFit { id: id.clone(), a0, f })
        })
        .collect::<Result<Vec<_>>>()?;
    let lookup = |id: &str| {
        fits.iter()
            .find(|p| p.id == id)
            .map(|p| p.a0)
            .ok_or_else(|| Error::invalid("groups", format!("unknown peak id '{id}'")))
    };
    let resolved = groups
        .iter()
        .map(|g| {
            Ok(MetaboliteGroup {
                name: g.name.clone(),
                subgroups: g
                    .subgroups
                    .iter()
                    .map(|s| Ok(SubGroup { name: s.name.clone(), a0: s.peaks.iter().map(|p| lookup(p)).collect::<Result<_>>()? }))
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = relative_concentrations(&resolved, reference)?;
    out.peaks = fits;
    Ok(out)
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Per-group averaged `A_0` and ratios against the `reference` group.
pub fn relative_concentrations(groups: &[MetaboliteGroup], reference: &str) -> Result<QuantResult> {
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        if g.subgroups.is_empty() || g.subgroups.iter().any(|s| s.a0.is_empty()) {
            return Err(Error::invalid("groups", format!("group '{}' has no peaks", g.name)));
        }
        let subs: Vec<SubSummary> = g
            .subgroups
            .iter()
            .map(|s| SubSummary {
                name: s.name.clone(),
                average: s.a0.iter().sum::<f64>() / s.a0.len() as f64,
                std: sample_std(&s.a0),
            })
            .collect();
        let value = subs.iter().map(|s| s.average).sum();
        out.push(GroupSummary { name: g.name.clone(), subgroups: subs, value, ratio: f64::NAN });
    }
    let refv = out
        .iter()
        .find(|g| g.name == reference)
        .map(|g| g.value)
        .ok_or_else(|| Error::invalid("reference", format!("no group named '{reference}'")))?;
    if !(refv > 0.0) {
        return Err(Error::invalid("reference", "reference value must be positive"));
    }
    for g in &mut out {
        g.ratio = g.value / refv;
    }
    Ok(QuantResult { reference: reference.to_string(), peaks: Vec::new(), groups: out })
}

/// The five-peak preset as a sweep scenario.
pub fn preset_scenario(n: usize, noise_sigma: f64, seed: u64) -> Scenario {
    Scenario {
        signal: ScenarioSignal::Fixed { peaks: crate::presets::five_peaks() },
        n,
        noise_sigma,
        ve: true,
        min_rel: default_min_rel(),
        window: default_window(),
        correlation: CorrelationOptions::default(),
        seed,
    }
}

/// Noiseless reference line for `peaks` (helper for ground-truth picks).
pub fn clean_spectrum(peaks: &[PeakModel], n: usize, ve: bool) -> Result<ComplexSeries<f64>> {
    let fid = ComplexSeries::time(exponential_sum(peaks, n))?;
    let full = if ve { virtual_echo(&fid)? } else { fid };
    Ok(dft_forward(&full))
}
