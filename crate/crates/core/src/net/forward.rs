use num_complex::Complex;
use rayon::prelude::*;

use super::layers::{self, BnMode, BnStats};
use super::weights::{LsWeights, ModernWeights, CHANNELS};
use crate::error::{Error, Result};
use crate::ist::ReconProblem;
use crate::scalar::Scalar;
use crate::spectral::{shrink_real, ComplexSeries, DftPlan, Domain, Shape};

/// Where a block takes its thresholds from.
#[derive(Debug, Clone, Copy)]
pub enum ThresholdSource<'a, T> {
    Adaptive,
    Fixed(&'a [T]),
}

/// Intermediate values of one block for one sample, kept for back-propagation.
#[derive(Debug, Clone, Default)]
pub(crate) struct BlockTrace<T> {
    pub input: Vec<T>,
    pub f1: Vec<T>,
    pub g: Vec<T>,
    pub z1: Vec<T>,
    pub zhat: Vec<T>,
    pub zb: Vec<T>,
    pub h: Vec<T>,
    pub alpha: Vec<T>,
    pub theta: Vec<T>,
    pub f2: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ModernOutput<T> {
    /// Output of every thresholding block, in order.
    pub iterates: Vec<ComplexSeries<T>>,
    /// Final reconstruction (last iterate, data-consistent if `final_dc`).
    pub reconstruction: ComplexSeries<T>,
    pub thetas: Vec<Vec<T>>,
}

pub(crate) struct BatchForward<T> {
    pub outputs: Vec<ModernOutput<T>>,
    /// `traces[sample][block]`, empty unless requested.
    pub traces: Vec<Vec<BlockTrace<T>>>,
    pub stats: Vec<BnStats<T>>,
}

pub(crate) fn dc_in_place<T: Scalar>(plan: &DftPlan<T>, p: &ReconProblem<T>, x: &mut [Complex<T>]) {
    plan.inverse_in_place(x);
    p.enforce(x);
    plan.forward_in_place(x);
}

/// Projects the unsampled part back: `F P_c F^H g`, the adjoint of the
/// data-consistency map with respect to its spectrum input.
pub(crate) fn dc_adjoint_in_place<T: Scalar>(plan: &DftPlan<T>, p: &ReconProblem<T>, g: &mut [Complex<T>]) {
    plan.inverse_in_place(g);
    for (v, &m) in g.iter_mut().zip(p.mask()) {
        if m {
            *v = Complex::new(T::zero(), T::zero());
        }
    }
    plan.forward_in_place(g);
}

/// `x_s + F U^T (y - U F^H x_s)`, computed by pointwise replacement in time.
pub fn data_consistency<T: Scalar>(x_s: &ComplexSeries<T>, p: &ReconProblem<T>) -> Result<ComplexSeries<T>> {
    if x_s.shape() != p.shape() {
        return Err(Error::Shape(format!("spectrum {:?} vs problem {:?}", x_s.shape(), p.shape())));
    }
    let plan = DftPlan::new(p.shape());
    let mut v = x_s.values().to_vec();
    dc_in_place(&plan, p, &mut v);
    Ok(ComplexSeries::from_parts(v, Domain::Frequency, p.shape()))
}

fn split_channels<T: Scalar>(x: &[Complex<T>]) -> Vec<T> {
    let mut out = Vec::with_capacity(2 * x.len());
    out.extend(x.iter().map(|v| v.re));
    out.extend(x.iter().map(|v| v.im));
    out
}

fn block_front<T: Scalar>(w: &LsWeights<T>, x_dc: &[Complex<T>], rows: usize, cols: usize, adaptive: bool, tr: &mut BlockTrace<T>) {
    tr.input = split_channels(x_dc);
    tr.f1 = layers::conv_forward(&w.conv1, &tr.input, rows, cols);
    if adaptive {
        tr.g = layers::gap_abs(&tr.f1, CHANNELS);
        tr.z1 = layers::dense_forward(&w.fc1, &tr.g);
    }
}

fn block_back<T: Scalar>(
    w: &LsWeights<T>,
    stats: Option<&BnStats<T>>,
    fixed: Option<&[T]>,
    rows: usize,
    cols: usize,
    tr: &mut BlockTrace<T>,
) -> Vec<Complex<T>> {
    match (fixed, stats) {
        (Some(t), _) => tr.theta = t.to_vec(),
        (None, Some(stats)) => {
            let (zhat, zb) = layers::bn_apply(&w.bn, stats, &tr.z1);
            tr.h = zb.iter().map(|v| v.max(T::zero())).collect();
            tr.zhat = zhat;
            tr.zb = zb;
            tr.alpha = layers::dense_forward(&w.fc2, &tr.h).into_iter().map(layers::sigmoid).collect();
            tr.theta = tr.g.iter().zip(&tr.alpha).map(|(g, a)| *g * *a).collect();
        }
        (None, None) => unreachable!("adaptive block without normalisation statistics"),
    }
    let p = rows * cols;
    tr.f2 = tr
        .f1
        .chunks_exact(p)
        .zip(&tr.theta)
        .flat_map(|(ch, &t)| ch.iter().map(move |&v| shrink_real(v, t)))
        .collect();
    let out = layers::conv_forward(&w.conv2, &tr.f2, rows, cols);
    (0..p).map(|i| Complex::new(out[i], out[p + i])).collect()
}

fn check_problem<T: Scalar>(w: &ModernWeights<T>, p: &ReconProblem<T>) -> Result<()> {
    let dims = p.shape().dims();
    if dims != w.meta.dims {
        return Err(Error::Shape(format!("{dims}-D problem for a {}-D network", w.meta.dims)));
    }
    let (rows, cols) = p.shape().rows_cols();
    let (kh, kw) = w.meta.kernel_shape;
    if (dims == 2 && rows < kh) || cols < kw {
        return Err(Error::Shape(format!("grid {:?} smaller than kernel {:?}", p.shape(), w.meta.kernel_shape)));
    }
    Ok(())
}

struct SampleState<T> {
    x: Vec<Complex<T>>,
    tr: BlockTrace<T>,
    iterates: Vec<ComplexSeries<T>>,
    thetas: Vec<Vec<T>>,
    traces: Vec<BlockTrace<T>>,
}

/// Batch forward pass. In [`BnMode::Train`] the batch shares normalisation
/// statistics per block.
pub(crate) fn forward_batch<T: Scalar>(
    problems: &[&ReconProblem<T>],
    w: &ModernWeights<T>,
    mode: BnMode,
    keep_traces: bool,
) -> Result<BatchForward<T>> {
    if problems.is_empty() {
        return Err(Error::invalid("batch", "empty batch"));
    }
    let shape = problems[0].shape();
    for p in problems {
        check_problem(w, p)?;
        if p.shape() != shape {
            return Err(Error::Shape("mixed problem shapes within a batch".into()));
        }
    }
    let (rows, cols) = shape.rows_cols();
    let plan = DftPlan::new(shape);
    let adaptive = !w.meta.non_adaptive;

    let mut states: Vec<SampleState<T>> = problems
        .iter()
        .map(|p| {
            let mut x = p.y_full.values().to_vec();
            plan.forward_in_place(&mut x);
            SampleState {
                x,
                tr: BlockTrace::default(),
                iterates: Vec::with_capacity(w.meta.k_iters),
                thetas: Vec::with_capacity(w.meta.k_iters),
                traces: Vec::new(),
            }
        })
        .collect();
    let mut all_stats = Vec::with_capacity(w.blocks.len());

    for (k, block) in w.blocks.iter().enumerate() {
        states.par_iter_mut().zip(problems.par_iter()).for_each(|(s, p)| {
            dc_in_place(&plan, p, &mut s.x);
            block_front(block, &s.x, rows, cols, adaptive, &mut s.tr);
        });
        let stats = if adaptive {
            match mode {
                BnMode::Train => {
                    let z: Vec<Vec<T>> = states.iter().map(|s| s.tr.z1.clone()).collect();
                    BnStats::of_batch(&z)
                }
                BnMode::Infer => BnStats::running(&block.bn),
            }
        } else {
            BnStats { mean: vec![], var: vec![], batch: states.len() }
        };
        let fixed = w.fixed_thetas.as_ref().map(|f| f[k].as_slice());
        let st = adaptive.then_some(&stats);
        states.par_iter_mut().for_each(|s| {
            s.x = block_back(block, st, fixed, rows, cols, &mut s.tr);
            s.iterates.push(ComplexSeries::from_parts(s.x.clone(), Domain::Frequency, shape));
            s.thetas.push(s.tr.theta.clone());
            if keep_traces {
                s.traces.push(std::mem::take(&mut s.tr));
            }
        });
        all_stats.push(stats);
    }

    let final_dc = w.meta.final_dc;
    let mut outputs = Vec::with_capacity(states.len());
    let mut traces = Vec::new();
    for (s, p) in states.into_iter().zip(problems) {
        let mut x = s.x;
        if final_dc {
            dc_in_place(&plan, p, &mut x);
        }
        outputs.push(ModernOutput {
            iterates: s.iterates,
            reconstruction: ComplexSeries::from_parts(x, Domain::Frequency, shape),
            thetas: s.thetas,
        });
        if keep_traces {
            traces.push(s.traces);
        }
    }
    Ok(BatchForward { outputs, traces, stats: all_stats })
}

/// Runs the unrolled network on one problem.
pub fn modern_forward<T: Scalar>(p: &ReconProblem<T>, w: &ModernWeights<T>, mode: BnMode) -> Result<ModernOutput<T>> {
    let mut out = forward_batch(&[p], w, mode, false)?;
    Ok(out.outputs.pop().expect("one output per problem"))
}

/// Runs the network on a batch of same-shaped problems.
pub fn modern_forward_batch<T: Scalar>(
    problems: &[&ReconProblem<T>],
    w: &ModernWeights<T>,
    mode: BnMode,
) -> Result<Vec<ModernOutput<T>>> {
    Ok(forward_batch(problems, w, mode, false)?.outputs)
}

/// Threshold auto-setting for one feature map: `theta = g * sigmoid(fc2(relu(bn(fc1(g)))))`
/// with `g` the per-channel mean absolute feature.
pub fn threshold_autoset<T: Scalar>(features: &[T], w: &LsWeights<T>, mode: BnMode) -> Result<Vec<T>> {
    if features.len() % CHANNELS != 0 || features.is_empty() {
        return Err(Error::Shape(format!("{} features for {CHANNELS} channels", features.len())));
    }
    let mut tr = BlockTrace { f1: features.to_vec(), ..Default::default() };
    tr.g = layers::gap_abs(features, CHANNELS);
    tr.z1 = layers::dense_forward(&w.fc1, &tr.g);
    let stats = match mode {
        BnMode::Train => BnStats::of_batch(std::slice::from_ref(&tr.z1)),
        BnMode::Infer => BnStats::running(&w.bn),
    };
    let p = features.len() / CHANNELS;
    block_back(w, Some(&stats), None, 1, p, &mut tr);
    Ok(tr.theta)
}

/// One learnable soft-thresholding block applied to a data-consistent spectrum.
pub fn ls_apply<T: Scalar>(
    x_dc: &ComplexSeries<T>,
    w: &LsWeights<T>,
    source: ThresholdSource<'_, T>,
    mode: BnMode,
) -> Result<(ComplexSeries<T>, Vec<T>)> {
    let shape = x_dc.shape();
    let (rows, cols) = shape.rows_cols();
    let (kh, kw) = w.conv1.kernel;
    if (matches!(shape, Shape::Plane(..)) && kh == 1) || (matches!(shape, Shape::Line(_)) && kh != 1) || cols < kw || rows < kh {
        return Err(Error::Shape(format!("spectrum {shape:?} vs kernel {:?}", w.conv1.kernel)));
    }
    let mut tr = BlockTrace::default();
    let adaptive = matches!(source, ThresholdSource::Adaptive);
    block_front(w, x_dc.values(), rows, cols, adaptive, &mut tr);
    let fixed = match source {
        ThresholdSource::Fixed(t) => {
            if t.len() != CHANNELS || t.iter().any(|v| !(*v >= T::zero())) {
                return Err(Error::invalid("theta", "need 32 non-negative thresholds"));
            }
            Some(t)
        }
        ThresholdSource::Adaptive => None,
    };
    let stats = match mode {
        BnMode::Train if adaptive => Some(BnStats::of_batch(std::slice::from_ref(&tr.z1))),
        BnMode::Infer if adaptive => Some(BnStats::running(&w.bn)),
        _ => None,
    };
    let x = block_back(w, stats.as_ref(), fixed, rows, cols, &mut tr);
    Ok((ComplexSeries::from_parts(x, Domain::Frequency, shape), tr.theta))
}
