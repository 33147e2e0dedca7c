use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::backprop::grad;
use super::dataset::{Dataset, Sample};
use super::init::init_weights;
use crate::analysis::rlne;
use crate::error::{Error, Result};
use crate::net::layers::bn_update_running;
use crate::net::{modern_forward_batch, BnMode, ModernMeta, ModernWeights, CHANNELS};
use crate::rng;
use crate::scalar::Scalar;
use crate::spectral::dft_forward;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub adam: AdamConfig,
    pub k_iters: usize,
    pub tied: bool,
    pub non_adaptive: bool,
    pub final_dc: bool,
    pub seed: u64,
    /// Score at most this many training samples per epoch (all when unset).
    pub monitor_train_limit: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch: 10,
            lr0: 1e-3,
            lr_decay: 0.95,
            adam: AdamConfig::default(),
            k_iters: 10,
            tied: false,
            non_adaptive: false,
            final_dc: true,
            seed: 0,
            monitor_train_limit: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be >= 1"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch", "must be >= 1"));
        }
        if !(self.lr0 > 0.0) {
            return Err(Error::invalid("lr0", "must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid("lr_decay", "must be in (0, 1]"));
        }
        if self.k_iters == 0 {
            return Err(Error::invalid("k_iters", "must be >= 1"));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_decay.powi(epoch as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_rlne: f64,
    pub valid_rlne: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult<T> {
    /// Weights of the epoch with the lowest validation RLNE.
    pub weights: ModernWeights<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Per-sample RLNE of the network reconstruction (inference normalisation).
pub fn evaluate_rlne<T: Scalar>(w: &ModernWeights<T>, samples: &[Sample<T>]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(32) {
        let problems: Vec<_> = chunk.iter().map(|s| &s.problem).collect();
        let res = modern_forward_batch(&problems, w, BnMode::Infer)?;
        for (r, s) in res.iter().zip(chunk) {
            out.push(rlne(s.label.values(), r.reconstruction.values())?.f64());
        }
    }
    Ok(out)
}

/// Per-sample RLNE of the zero-filled spectrum `F y`.
pub fn zero_filled_rlne<T: Scalar>(samples: &[Sample<T>]) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| Ok(rlne(s.label.values(), dft_forward(&s.problem.y_full).values())?.f64()))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn model_meta<T: Scalar>(dataset: &Dataset<T>, cfg: &TrainConfig) -> Result<ModernMeta> {
    let first = dataset
        .train
        .first()
        .ok_or_else(|| Error::invalid("dataset", "no training samples"))?;
    let mut meta = ModernMeta::new(cfg.k_iters, first.problem.shape().dims());
    let s = &first.problem.schedule;
    // a virtual-echo schedule holds 2|s| points (2|s| + 1 without the anchor)
    meta.trained_density = Some(if first.problem.ve {
        (s.len() / 2) as f64 / first.problem.original_n as f64
    } else {
        s.density()
    });
    meta.ve_trained = first.problem.ve;
    meta.non_adaptive = cfg.non_adaptive;
    meta.tied = cfg.tied;
    meta.final_dc = cfg.final_dc;
    Ok(meta)
}

/// Starting point for training: He initialisation, and for non-adaptive
/// networks fixed thresholds set to the mean thresholds an adaptive network
/// with the same initialisation picks on the first batch.
pub fn initial_weights<T: Scalar>(dataset: &Dataset<T>, cfg: &TrainConfig) -> Result<ModernWeights<T>> {
    let meta = model_meta(dataset, cfg)?;
    if !meta.non_adaptive {
        return Ok(init_weights(meta, cfg.seed));
    }
    let mut adaptive_meta = meta.clone();
    adaptive_meta.non_adaptive = false;
    let probe: ModernWeights<T> = init_weights(adaptive_meta, cfg.seed);
    let n = cfg.batch.min(dataset.train.len());
    let problems: Vec<_> = dataset.train[..n].iter().map(|s| &s.problem).collect();
    let out = modern_forward_batch(&problems, &probe, BnMode::Train)?;
    let mut thetas = vec![vec![T::zero(); CHANNELS]; meta.k_iters];
    for o in &out {
        for (acc, t) in thetas.iter_mut().zip(&o.thetas) {
            for (a, v) in acc.iter_mut().zip(t) {
                *a += *v / T::of_usize(n);
            }
        }
    }
    if meta.tied {
        let avg: Vec<T> = (0..CHANNELS)
            .map(|c| thetas.iter().map(|t| t[c]).sum::<T>() / T::of_usize(thetas.len()))
            .collect();
        thetas = vec![avg; meta.k_iters];
    }
    Ok(ModernWeights { meta, blocks: probe.blocks, fixed_thetas: Some(thetas) })
}

pub fn train<T: Scalar>(dataset: &Dataset<T>, cfg: &TrainConfig) -> Result<TrainResult<T>> {
    train_with(dataset, cfg, |_| {})
}

/// Minibatch Adam on the deep-supervision loss, `lr = lr0 * decay^epoch`.
/// `on_epoch` sees each history record as it is produced.
pub fn train_with<T: Scalar>(
    dataset: &Dataset<T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainResult<T>> {
    cfg.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::invalid("dataset", "no training samples"));
    }
    let mut w = initial_weights(dataset, cfg)?;
    let mut flat = w.flatten();
    let mut state = AdamState::new(flat.len());
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModernWeights<T>)> = None;
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut r = rng::rng(rng::sub_seed(cfg.seed, 1_000_000 + epoch as u64));
        order.shuffle(&mut r);
        for idx in order.chunks(cfg.batch) {
            let batch: Vec<&Sample<T>> = idx.iter().map(|&i| &dataset.train[i]).collect();
            let out = grad(&w, &batch, BnMode::Train).map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFinite { batch: step },
                e => e,
            })?;
            let g = if cfg.tied { out.grads.tied() } else { out.grads };
            let gflat = g.flatten();
            if gflat.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { batch: step });
            }
            adam_step(&mut flat, &gflat, &mut state, lr, &cfg.adam);
            if w.meta.non_adaptive {
                let groups = w.param_groups();
                for gr in groups.iter().filter(|g| g.name.ends_with("fixed_theta")) {
                    for v in &mut flat[gr.range.clone()] {
                        *v = v.max(T::zero());
                    }
                }
            }
            w.assign(&flat);
            if !w.meta.non_adaptive {
                for (b, st) in w.blocks.iter_mut().zip(&out.stats) {
                    bn_update_running(&mut b.bn, st);
                }
            }
            step += 1;
        }

        let monitored = match cfg.monitor_train_limit {
            Some(n) => &dataset.train[..n.min(dataset.train.len())],
            None => &dataset.train[..],
        };
        let train_rlne = mean(&evaluate_rlne(&w, monitored)?);
        let valid_rlne = if dataset.valid.is_empty() {
            train_rlne
        } else {
            mean(&evaluate_rlne(&w, &dataset.valid)?)
        };
        if !valid_rlne.is_finite() {
            return Err(Error::NonFinite { batch: step });
        }
        let rec = EpochRecord { epoch, train_rlne, valid_rlne, lr };
        on_epoch(&rec);
        history.push(rec);
        if best.as_ref().is_none_or(|(b, _, _)| valid_rlne < *b) {
            best = Some((valid_rlne, epoch, w.clone()));
        }
    }
    let (_, best_epoch, weights) = best.expect("at least one epoch");
    Ok(TrainResult { weights, history, best_epoch })
}
