//! Layer kernels shared by inference and back-propagation. Feature maps are
//! channel-major: `map[c * rows * cols + r * cols + col]`.

use super::weights::{BatchNorm, Conv, Dense, BN_EPS, BN_MOMENTUM};
use crate::scalar::Scalar;

/// For offset `d` of a kernel of size `k` on an axis of length `n`, the output
/// range whose input `out + d - k/2` lies inside the axis.
#[inline]
fn valid(d: usize, k: usize, n: usize) -> (usize, usize, isize) {
    let shift = d as isize - (k / 2) as isize;
    let lo = (-shift).max(0) as usize;
    let hi = ((n as isize - shift).min(n as isize)).max(0) as usize;
    (lo, hi.max(lo), shift)
}

#[inline]
fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}

#[inline]
fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (a, b)| acc + *a * *b)
}

pub fn conv_forward<T: Scalar>(c: &Conv<T>, input: &[T], rows: usize, cols: usize) -> Vec<T> {
    let p = rows * cols;
    debug_assert_eq!(input.len(), c.c_in * p);
    let mut out = vec![T::zero(); c.c_out * p];
    for (o, ch) in out.chunks_exact_mut(p).enumerate() {
        ch.iter_mut().for_each(|v| *v = c.bias[o]);
    }
    let (kh, kw) = c.kernel;
    for dy in 0..kh {
        let (r0, r1, sy) = valid(dy, kh, rows);
        for dx in 0..kw {
            let (c0, c1, sx) = valid(dx, kw, cols);
            if c0 >= c1 {
                continue;
            }
            for i in 0..c.c_in {
                let src = &input[i * p..(i + 1) * p];
                for o in 0..c.c_out {
                    let w = c.weight[c.at(dy, dx, i, o)];
                    if w == T::zero() {
                        continue;
                    }
                    let dst = &mut out[o * p..(o + 1) * p];
                    for r in r0..r1 {
                        let rin = (r as isize + sy) as usize;
                        let s0 = (c0 as isize + sx) as usize;
                        axpy(
                            w,
                            &src[rin * cols + s0..rin * cols + s0 + (c1 - c0)],
                            &mut dst[r * cols + c0..r * cols + c1],
                        );
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients into `grad` and returns the input gradient.
pub fn conv_backward<T: Scalar>(
    c: &Conv<T>,
    input: &[T],
    gout: &[T],
    rows: usize,
    cols: usize,
    grad: &mut Conv<T>,
) -> Vec<T> {
    let p = rows * cols;
    let mut gin = vec![T::zero(); c.c_in * p];
    for o in 0..c.c_out {
        grad.bias[o] += gout[o * p..(o + 1) * p].iter().copied().sum::<T>();
    }
    let (kh, kw) = c.kernel;
    for dy in 0..kh {
        let (r0, r1, sy) = valid(dy, kh, rows);
        for dx in 0..kw {
            let (c0, c1, sx) = valid(dx, kw, cols);
            if c0 >= c1 {
                continue;
            }
            for i in 0..c.c_in {
                for o in 0..c.c_out {
                    let w = c.weight[c.at(dy, dx, i, o)];
                    let g = &gout[o * p..(o + 1) * p];
                    let mut acc = T::zero();
                    for r in r0..r1 {
                        let rin = (r as isize + sy) as usize;
                        let s0 = (c0 as isize + sx) as usize;
                        let span = c1 - c0;
                        let gs = &g[r * cols + c0..r * cols + c1];
                        let is = rin * cols + s0;
                        acc += dot(&input[i * p + is..i * p + is + span], gs);
                        if w != T::zero() {
                            axpy(w, gs, &mut gin[i * p + is..i * p + is + span]);
                        }
                    }
                    grad.weight[c.at(dy, dx, i, o)] += acc;
                }
            }
        }
    }
    gin
}

pub fn dense_forward<T: Scalar>(d: &Dense<T>, x: &[T]) -> Vec<T> {
    (0..d.n_out)
        .map(|o| d.bias[o] + dot(&d.weight[o * d.n_in..(o + 1) * d.n_in], x))
        .collect()
}

pub fn dense_backward<T: Scalar>(d: &Dense<T>, x: &[T], gout: &[T], grad: &mut Dense<T>) -> Vec<T> {
    let mut gin = vec![T::zero(); d.n_in];
    for o in 0..d.n_out {
        grad.bias[o] += gout[o];
        let row = &d.weight[o * d.n_in..(o + 1) * d.n_in];
        let grow = &mut grad.weight[o * d.n_in..(o + 1) * d.n_in];
        axpy(gout[o], x, grow);
        axpy(gout[o], row, &mut gin);
    }
    gin
}

/// Mean absolute value per channel.
pub fn gap_abs<T: Scalar>(map: &[T], channels: usize) -> Vec<T> {
    let p = map.len() / channels;
    let inv = T::one() / T::of_usize(p);
    map.chunks_exact(p)
        .map(|ch| ch.iter().map(|v| v.abs()).sum::<T>() * inv)
        .collect()
}

#[inline]
pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalise with the statistics of the current batch.
    Train,
    /// Normalise with the running statistics.
    Infer,
}

/// Per-feature statistics used to normalise one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub batch: usize,
}

impl<T: Scalar> BnStats<T> {
    pub fn of_batch(z: &[Vec<T>]) -> Self {
        let b = z.len();
        let f = z[0].len();
        let inv = T::one() / T::of_usize(b);
        let mean: Vec<T> = (0..f).map(|j| z.iter().map(|v| v[j]).sum::<T>() * inv).collect();
        let var = (0..f)
            .map(|j| z.iter().map(|v| (v[j] - mean[j]).powi(2)).sum::<T>() * inv)
            .collect();
        BnStats { mean, var, batch: b }
    }

    pub fn running(bn: &BatchNorm<T>) -> Self {
        BnStats {
            mean: bn.running_mean.clone(),
            var: bn.running_var.clone(),
            batch: 0,
        }
    }

    pub fn inv_std(&self) -> Vec<T> {
        self.var.iter().map(|v| T::one() / (*v + T::of(BN_EPS)).sqrt()).collect()
    }
}

/// `(normalised, output)` for one sample.
pub fn bn_apply<T: Scalar>(bn: &BatchNorm<T>, stats: &BnStats<T>, z: &[T]) -> (Vec<T>, Vec<T>) {
    let inv = stats.inv_std();
    let zhat: Vec<T> = z.iter().zip(&stats.mean).zip(&inv).map(|((v, m), s)| (*v - *m) * *s).collect();
    let out = zhat.iter().zip(&bn.scale).zip(&bn.shift).map(|((h, g), b)| *h * *g + *b).collect();
    (zhat, out)
}

/// Exponential moving update of the running statistics with batch statistics
/// (unbiased variance).
pub fn bn_update_running<T: Scalar>(bn: &mut BatchNorm<T>, stats: &BnStats<T>) {
    let m = T::of(BN_MOMENTUM);
    let b = stats.batch;
    let corr = if b > 1 { T::of_usize(b) / T::of_usize(b - 1) } else { T::one() };
    for j in 0..bn.running_mean.len() {
        bn.running_mean[j] = m * bn.running_mean[j] + (T::one() - m) * stats.mean[j];
        bn.running_var[j] = m * bn.running_var[j] + (T::one() - m) * stats.var[j] * corr;
    }
}

/// Batch-norm backward. `gout[b]` and `zhat[b]` per sample; returns input
/// gradients and accumulates scale/shift gradients.
pub fn bn_backward<T: Scalar>(
    bn: &BatchNorm<T>,
    stats: &BnStats<T>,
    mode: BnMode,
    zhat: &[Vec<T>],
    gout: &[Vec<T>],
    grad: &mut BatchNorm<T>,
) -> Vec<Vec<T>> {
    let f = bn.scale.len();
    let b = gout.len();
    let inv = stats.inv_std();
    for s in 0..b {
        for j in 0..f {
            grad.scale[j] += gout[s][j] * zhat[s][j];
            grad.shift[j] += gout[s][j];
        }
    }
    match mode {
        BnMode::Infer => gout
            .iter()
            .map(|g| (0..f).map(|j| g[j] * bn.scale[j] * inv[j]).collect())
            .collect(),
        BnMode::Train => {
            let nb = T::of_usize(b);
            let mut sum_d = vec![T::zero(); f];
            let mut sum_dz = vec![T::zero(); f];
            for s in 0..b {
                for j in 0..f {
                    let d = gout[s][j] * bn.scale[j];
                    sum_d[j] += d;
                    sum_dz[j] += d * zhat[s][j];
                }
            }
            (0..b)
                .map(|s| {
                    (0..f)
                        .map(|j| {
                            let d = gout[s][j] * bn.scale[j];
                            inv[j] / nb * (nb * d - sum_d[j] - zhat[s][j] * sum_dz[j])
                        })
                        .collect()
                })
                .collect()
        }
    }
}
