//! Reverse-mode gradients of the deep-supervision loss through the whole
//! unrolled network.
//!
//! The forward pass records every block's intermediate values; the backward
//! pass walks the blocks in reverse applying each layer's adjoint. Complex
//! quantities carry their gradient as `dL/dRe + i dL/dIm`, under which the
//! adjoint of the unitary DFT is the inverse DFT.

use num_complex::Complex;
use rayon::prelude::*;

use super::dataset::Sample;
use crate::error::{Error, Result};
use crate::net::layers::{self, BnMode, BnStats};
use crate::net::{dc_adjoint_in_place, forward_batch, BlockTrace, LsWeights, ModernWeights, CHANNELS};
use crate::scalar::Scalar;
use crate::spectral::DftPlan;

/// Gradients shaped like the [`ModernWeights`] they belong to. Running
/// statistics slots stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T> {
    pub inner: ModernWeights<T>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn zeros_for(w: &ModernWeights<T>) -> Self {
        GradientSet { inner: w.zeros_like() }
    }

    pub fn flatten(&self) -> Vec<T> {
        self.inner.flatten()
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }

    /// Gradient for weights shared across blocks: the per-block sum, copied
    /// into every block.
    pub fn tied(&self) -> Self {
        let mut out = self.clone();
        let blocks = &self.inner.blocks;
        let mut sum = blocks[0].clone();
        for b in &blocks[1..] {
            for ((_, acc), (_, g)) in sum.groups_mut().into_iter().zip(b.groups()) {
                for (a, v) in acc.iter_mut().zip(g) {
                    *a += *v;
                }
            }
        }
        for b in out.inner.blocks.iter_mut() {
            *b = sum.clone();
        }
        if let Some(f) = &self.inner.fixed_thetas {
            let mut s = vec![T::zero(); CHANNELS];
            for t in f {
                for (a, v) in s.iter_mut().zip(t) {
                    *a += *v;
                }
            }
            out.inner.fixed_thetas = Some(vec![s; f.len()]);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GradOutput<T> {
    pub loss: T,
    pub grads: GradientSet<T>,
    /// Normalisation statistics of each block for this batch (train mode).
    pub stats: Vec<BnStats<T>>,
}

fn add_into<T: Scalar>(acc: &mut LsWeights<T>, g: &LsWeights<T>) {
    for ((_, a), (_, v)) in acc.groups_mut().into_iter().zip(g.groups()) {
        for (x, y) in a.iter_mut().zip(v) {
            *x += *y;
        }
    }
}

#[inline]
fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

struct SampleGrad<T> {
    gx: Vec<Complex<T>>,
    block: LsWeights<T>,
    d_f1: Vec<T>,
    dg: Vec<T>,
    dzb: Vec<T>,
    dtheta: Vec<T>,
}

/// Loss and exact gradients for one batch.
pub fn grad<T: Scalar>(w: &ModernWeights<T>, batch: &[&Sample<T>], mode: BnMode) -> Result<GradOutput<T>> {
    if batch.is_empty() {
        return Err(Error::invalid("batch", "empty batch"));
    }
    let problems: Vec<_> = batch.iter().map(|s| &s.problem).collect();
    let fwd = forward_batch(&problems, w, mode, true)?;
    let kb = w.blocks.len() * batch.len();
    let scale = T::one() / T::of_usize(kb);

    let mut loss = T::zero();
    for (o, s) in fwd.outputs.iter().zip(batch) {
        if s.label.shape() != o.reconstruction.shape() {
            return Err(Error::Shape(format!("label {:?} vs output {:?}", s.label.shape(), o.reconstruction.shape())));
        }
        for x in &o.iterates {
            loss += x.values().iter().zip(s.label.values()).map(|(a, b)| (*a - *b).norm_sqr()).sum::<T>();
        }
    }
    loss *= scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite { batch: 0 });
    }

    let shape = batch[0].problem.shape();
    let (rows, cols) = shape.rows_cols();
    let p = rows * cols;
    let plan = DftPlan::new(shape);
    let adaptive = !w.meta.non_adaptive;
    let two_scale = scale + scale;
    let inv_p = T::one() / T::of_usize(p);

    let mut grads = GradientSet::zeros_for(w);
    let mut states: Vec<SampleGrad<T>> = batch
        .iter()
        .map(|_| SampleGrad {
            gx: vec![Complex::new(T::zero(), T::zero()); p],
            block: w.blocks[0].zeros_like(),
            d_f1: Vec::new(),
            dg: Vec::new(),
            dzb: Vec::new(),
            dtheta: Vec::new(),
        })
        .collect();

    for k in (0..w.blocks.len()).rev() {
        let block = &w.blocks[k];
        let traces: Vec<&BlockTrace<T>> = fwd.traces.iter().map(|t| &t[k]).collect();

        // output side: loss term, conv2, shrinkage, auto-setting head
        states
            .par_iter_mut()
            .zip(traces.par_iter())
            .zip(fwd.outputs.par_iter().zip(batch.par_iter()))
            .for_each(|((s, tr), (out, sample))| {
                for ((g, x), r) in s.gx.iter_mut().zip(out.iterates[k].values()).zip(sample.label.values()) {
                    *g += (*x - *r) * two_scale;
                }
                s.block = block.zeros_like();
                let mut gout = Vec::with_capacity(2 * p);
                gout.extend(s.gx.iter().map(|v| v.re));
                gout.extend(s.gx.iter().map(|v| v.im));
                let d_f2 = layers::conv_backward(&block.conv2, &tr.f2, &gout, rows, cols, &mut s.block.conv2);

                let mut d_f1 = vec![T::zero(); CHANNELS * p];
                let mut dtheta = vec![T::zero(); CHANNELS];
                for c in 0..CHANNELS {
                    let th = tr.theta[c];
                    for i in c * p..(c + 1) * p {
                        let v = tr.f1[i];
                        if v.abs() > th {
                            d_f1[i] = d_f2[i];
                            dtheta[c] -= sign(v) * d_f2[i];
                        }
                    }
                }
                if adaptive {
                    let dalpha: Vec<T> = dtheta.iter().zip(&tr.g).map(|(d, g)| *d * *g).collect();
                    s.dg = dtheta.iter().zip(&tr.alpha).map(|(d, a)| *d * *a).collect();
                    let dz2: Vec<T> = dalpha.iter().zip(&tr.alpha).map(|(d, a)| *d * *a * (T::one() - *a)).collect();
                    let dh = layers::dense_backward(&block.fc2, &tr.h, &dz2, &mut s.block.fc2);
                    s.dzb = dh.iter().zip(&tr.zb).map(|(d, z)| if *z > T::zero() { *d } else { T::zero() }).collect();
                }
                s.d_f1 = d_f1;
                s.dtheta = dtheta;
            });

        let dz1 = if adaptive {
            let zhat: Vec<Vec<T>> = traces.iter().map(|t| t.zhat.clone()).collect();
            let dzb: Vec<Vec<T>> = states.iter().map(|s| s.dzb.clone()).collect();
            let bn_mode = mode;
            layers::bn_backward(&block.bn, &fwd.stats[k], bn_mode, &zhat, &dzb, &mut grads.inner.blocks[k].bn)
        } else {
            vec![Vec::new(); batch.len()]
        };

        // input side: fc1, pooling, conv1, data consistency
        let probs = &problems;
        states
            .par_iter_mut()
            .zip(traces.par_iter())
            .zip(dz1.par_iter().zip(probs.par_iter()))
            .for_each(|((s, tr), (dz1, prob))| {
                if adaptive {
                    let dg_fc = layers::dense_backward(&block.fc1, &tr.g, dz1, &mut s.block.fc1);
                    for c in 0..CHANNELS {
                        let dg = (s.dg[c] + dg_fc[c]) * inv_p;
                        if dg == T::zero() {
                            continue;
                        }
                        for i in c * p..(c + 1) * p {
                            s.d_f1[i] += dg * sign(tr.f1[i]);
                        }
                    }
                }
                let d_in = layers::conv_backward(&block.conv1, &tr.input, &s.d_f1, rows, cols, &mut s.block.conv1);
                for (i, g) in s.gx.iter_mut().enumerate() {
                    *g = Complex::new(d_in[i], d_in[p + i]);
                }
                dc_adjoint_in_place(&plan, prob, &mut s.gx);
            });

        // fixed sample order keeps the reduction deterministic
        for s in &states {
            add_into(&mut grads.inner.blocks[k], &s.block);
            if let Some(f) = grads.inner.fixed_thetas.as_mut() {
                for (a, d) in f[k].iter_mut().zip(&s.dtheta) {
                    *a += *d;
                }
            }
        }
    }

    Ok(GradOutput { loss, grads, stats: fwd.stats })
}
