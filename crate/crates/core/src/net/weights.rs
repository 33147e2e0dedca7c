use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Feature channels inside each thresholding block.
pub const CHANNELS: usize = 32;
/// Hidden width of the threshold auto-setting sub-network.
pub const HIDDEN: usize = 2;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Same-padded cross-correlation. Weights are laid out `[kh][kw][c_in][c_out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv<T> {
    pub kernel: (usize, usize),
    pub c_in: usize,
    pub c_out: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv<T> {
    pub fn zeros(kernel: (usize, usize), c_in: usize, c_out: usize) -> Self {
        Conv {
            kernel,
            c_in,
            c_out,
            weight: vec![T::zero(); kernel.0 * kernel.1 * c_in * c_out],
            bias: vec![T::zero(); c_out],
        }
    }

    #[inline]
    pub fn at(&self, dy: usize, dx: usize, i: usize, o: usize) -> usize {
        ((dy * self.kernel.1 + dx) * self.c_in + i) * self.c_out + o
    }

    pub fn fan_in(&self) -> usize {
        self.kernel.0 * self.kernel.1 * self.c_in
    }
}

/// Fully connected layer, weights `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            n_in,
            n_out,
            weight: vec![T::zero(); n_in * n_out],
            bias: vec![T::zero(); n_out],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm<T> {
    pub scale: Vec<T>,
    pub shift: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn identity(n: usize) -> Self {
        BatchNorm {
            scale: vec![T::one(); n],
            shift: vec![T::zero(); n],
            running_mean: vec![T::zero(); n],
            running_var: vec![T::one(); n],
        }
    }

    pub fn zeros(n: usize) -> Self {
        BatchNorm {
            scale: vec![T::zero(); n],
            shift: vec![T::zero(); n],
            running_mean: vec![T::zero(); n],
            running_var: vec![T::zero(); n],
        }
    }
}

/// Parameters of one learnable adaptive soft-thresholding block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsWeights<T> {
    pub conv1: Conv<T>,
    pub fc1: Dense<T>,
    pub bn: BatchNorm<T>,
    pub fc2: Dense<T>,
    pub conv2: Conv<T>,
}

impl<T: Scalar> LsWeights<T> {
    pub fn zeros(kernel: (usize, usize)) -> Self {
        LsWeights {
            conv1: Conv::zeros(kernel, 2, CHANNELS),
            fc1: Dense::zeros(CHANNELS, HIDDEN),
            bn: BatchNorm::identity(HIDDEN),
            fc2: Dense::zeros(HIDDEN, CHANNELS),
            conv2: Conv::zeros(kernel, CHANNELS, 2),
        }
    }

    /// Same shapes, every entry zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        LsWeights {
            conv1: Conv::zeros(self.conv1.kernel, self.conv1.c_in, self.conv1.c_out),
            fc1: Dense::zeros(self.fc1.n_in, self.fc1.n_out),
            bn: BatchNorm::zeros(self.bn.scale.len()),
            fc2: Dense::zeros(self.fc2.n_in, self.fc2.n_out),
            conv2: Conv::zeros(self.conv2.kernel, self.conv2.c_in, self.conv2.c_out),
        }
    }

    /// Trainable groups in a fixed order. Running statistics are excluded.
    pub fn groups(&self) -> [(&'static str, &[T]); 10] {
        [
            ("conv1.weight", &self.conv1.weight),
            ("conv1.bias", &self.conv1.bias),
            ("fc1.weight", &self.fc1.weight),
            ("fc1.bias", &self.fc1.bias),
            ("bn.scale", &self.bn.scale),
            ("bn.shift", &self.bn.shift),
            ("fc2.weight", &self.fc2.weight),
            ("fc2.bias", &self.fc2.bias),
            ("conv2.weight", &self.conv2.weight),
            ("conv2.bias", &self.conv2.bias),
        ]
    }

    pub fn groups_mut(&mut self) -> [(&'static str, &mut Vec<T>); 10] {
        [
            ("conv1.weight", &mut self.conv1.weight),
            ("conv1.bias", &mut self.conv1.bias),
            ("fc1.weight", &mut self.fc1.weight),
            ("fc1.bias", &mut self.fc1.bias),
            ("bn.scale", &mut self.bn.scale),
            ("bn.shift", &mut self.bn.shift),
            ("fc2.weight", &mut self.fc2.weight),
            ("fc2.bias", &mut self.fc2.bias),
            ("conv2.weight", &mut self.conv2.weight),
            ("conv2.bias", &mut self.conv2.bias),
        ]
    }

    pub fn validate(&self, kernel: (usize, usize)) -> Result<()> {
        let expect = LsWeights::<T>::zeros(kernel);
        for ((name, a), (_, b)) in self.groups().iter().zip(expect.groups().iter()) {
            if a.len() != b.len() {
                return Err(Error::Shape(format!("{name}: {} values, expected {}", a.len(), b.len())));
            }
        }
        if self.conv1.kernel != kernel || self.conv2.kernel != kernel {
            return Err(Error::Shape(format!("kernel {:?} vs declared {:?}", self.conv1.kernel, kernel)));
        }
        if self.conv1.c_in != 2 || self.conv1.c_out != CHANNELS || self.conv2.c_in != CHANNELS || self.conv2.c_out != 2 {
            return Err(Error::Shape("convolution channel counts".into()));
        }
        if self.bn.running_mean.len() != HIDDEN || self.bn.running_var.len() != HIDDEN {
            return Err(Error::Shape("batch-norm running statistics".into()));
        }
        if self.bn.running_var.iter().any(|v| !(*v >= T::zero())) {
            return Err(Error::invalid("running_var", "must be >= 0"));
        }
        let finite = self.groups().iter().all(|(_, g)| g.iter().all(|v| v.is_finite()))
            && self.bn.running_mean.iter().all(|v| v.is_finite())
            && self.bn.running_var.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("weights", "non-finite parameter"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModernMeta {
    pub k_iters: usize,
    pub kernel_shape: (usize, usize),
    pub dims: usize,
    pub trained_density: Option<f64>,
    pub ve_trained: bool,
    pub non_adaptive: bool,
    pub tied: bool,
    /// Extra data-consistency step after the last block.
    pub final_dc: bool,
}

impl ModernMeta {
    pub fn new(k_iters: usize, dims: usize) -> Self {
        ModernMeta {
            k_iters,
            kernel_shape: kernel_for_dims(dims),
            dims,
            trained_density: None,
            ve_trained: false,
            non_adaptive: false,
            tied: false,
            final_dc: true,
        }
    }
}

/// `1x3` kernels for lines, `3x3` for planes.
pub fn kernel_for_dims(dims: usize) -> (usize, usize) {
    if dims == 2 {
        (3, 3)
    } else {
        (1, 3)
    }
}

/// All trainable state of the unrolled network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModernWeights<T> {
    pub meta: ModernMeta,
    pub blocks: Vec<LsWeights<T>>,
    /// Per-block thresholds used instead of the auto-setting sub-network when
    /// `meta.non_adaptive` is set.
    pub fixed_thetas: Option<Vec<Vec<T>>>,
}

/// Name and flat range of one parameter group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub range: std::ops::Range<usize>,
}

impl<T: Scalar> ModernWeights<T> {
    pub fn zeros(meta: ModernMeta) -> Self {
        let blocks = (0..meta.k_iters).map(|_| LsWeights::zeros(meta.kernel_shape)).collect();
        let fixed_thetas = meta
            .non_adaptive
            .then(|| vec![vec![T::zero(); CHANNELS]; meta.k_iters]);
        ModernWeights { meta, blocks, fixed_thetas }
    }

    pub fn zeros_like(&self) -> Self {
        ModernWeights {
            meta: self.meta.clone(),
            blocks: self.blocks.iter().map(|b| b.zeros_like()).collect(),
            fixed_thetas: self
                .fixed_thetas
                .as_ref()
                .map(|f| f.iter().map(|t| vec![T::zero(); t.len()]).collect()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.meta;
        if m.k_iters == 0 {
            return Err(Error::invalid("k_iters", "must be >= 1"));
        }
        if m.dims != 1 && m.dims != 2 {
            return Err(Error::invalid("dims", format!("{}", m.dims)));
        }
        if m.kernel_shape != kernel_for_dims(m.dims) {
            return Err(Error::Shape(format!("kernel {:?} for {} dims", m.kernel_shape, m.dims)));
        }
        if self.blocks.len() != m.k_iters {
            return Err(Error::Shape(format!("{} blocks for k_iters = {}", self.blocks.len(), m.k_iters)));
        }
        for b in &self.blocks {
            b.validate(m.kernel_shape)?;
        }
        match (&self.fixed_thetas, m.non_adaptive) {
            (Some(f), true) => {
                if f.len() != m.k_iters || f.iter().any(|t| t.len() != CHANNELS) {
                    return Err(Error::Shape("fixed_thetas shape".into()));
                }
                if f.iter().flatten().any(|t| !(*t >= T::zero()) || !t.is_finite()) {
                    return Err(Error::invalid("fixed_thetas", "must be finite and >= 0"));
                }
            }
            (None, false) => {}
            _ => return Err(Error::Shape("fixed_thetas present iff non_adaptive".into())),
        }
        Ok(())
    }

    /// Trainable parameter groups with their positions in [`Self::flatten`].
    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut out = Vec::new();
        let mut at = 0;
        for (k, b) in self.blocks.iter().enumerate() {
            for (name, g) in b.groups() {
                out.push(ParamGroup {
                    name: format!("block{k}.{name}"),
                    range: at..at + g.len(),
                });
                at += g.len();
            }
        }
        if let Some(f) = &self.fixed_thetas {
            for (k, t) in f.iter().enumerate() {
                out.push(ParamGroup {
                    name: format!("block{k}.fixed_theta"),
                    range: at..at + t.len(),
                });
                at += t.len();
            }
        }
        out
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for b in &self.blocks {
            for (_, g) in b.groups() {
                out.extend_from_slice(g);
            }
        }
        if let Some(f) = &self.fixed_thetas {
            for t in f {
                out.extend_from_slice(t);
            }
        }
        out
    }

    pub fn assign(&mut self, flat: &[T]) {
        let mut it = flat.iter().copied();
        for b in &mut self.blocks {
            for (_, g) in b.groups_mut() {
                for v in g.iter_mut() {
                    *v = it.next().expect("flat parameter vector too short");
                }
            }
        }
        if let Some(f) = &mut self.fixed_thetas {
            for t in f.iter_mut() {
                for v in t.iter_mut() {
                    *v = it.next().expect("flat parameter vector too short");
                }
            }
        }
        assert!(it.next().is_none(), "flat parameter vector too long");
    }

    pub fn n_params(&self) -> usize {
        self.param_groups().last().map_or(0, |g| g.range.end)
    }
}

/// Weights under which the network reproduces `k` iterations of IST with
/// separable-real shrinkage at the fixed thresholds `theta0`.
pub fn ist_equivalent_weights<T: Scalar>(theta0: &[T], k: usize, dims: usize) -> Result<ModernWeights<T>> {
    if theta0.len() != CHANNELS {
        return Err(Error::Shape(format!("{} thresholds, expected {CHANNELS}", theta0.len())));
    }
    if theta0.iter().any(|t| !(*t >= T::zero())) {
        return Err(Error::invalid("theta0", "must be >= 0"));
    }
    let mut meta = ModernMeta::new(k, dims);
    meta.non_adaptive = true;
    let mut w = ModernWeights::zeros(meta);
    let (kh, kw) = w.meta.kernel_shape;
    let (cy, cx) = (kh / 2, kw / 2);
    for b in &mut w.blocks {
        for ch in 0..2 {
            let i = b.conv1.at(cy, cx, ch, ch);
            b.conv1.weight[i] = T::one();
            let i = b.conv2.at(cy, cx, ch, ch);
            b.conv2.weight[i] = T::one();
        }
    }
    w.fixed_thetas = Some(vec![theta0.to_vec(); k]);
    Ok(w)
}
