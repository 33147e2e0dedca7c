use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::net::{BatchNorm, LsWeights, ModernMeta, ModernWeights, CHANNELS};
use crate::rng;
use crate::scalar::Scalar;

/// `len` draws from `Normal(0, sqrt(2 / fan_in))`.
pub fn he_init<T: Scalar>(len: usize, fan_in: usize, seed: u64) -> Vec<T> {
    let sd = (2.0 / fan_in as f64).sqrt();
    let mut r = rng::rng(seed);
    (0..len)
        .map(|_| {
            let z: f64 = r.sample(StandardNormal);
            T::of(z * sd)
        })
        .collect()
}

/// He-initialised weights: normal kernels, zero biases, identity batch norm.
/// Non-adaptive networks start with zero fixed thresholds. Tied networks get
/// identical blocks.
pub fn init_weights<T: Scalar>(meta: ModernMeta, seed: u64) -> ModernWeights<T> {
    let mut w = ModernWeights::zeros(meta);
    let tied = w.meta.tied;
    for (k, b) in w.blocks.iter_mut().enumerate() {
        let bs = rng::sub_seed(seed, if tied { 0 } else { k as u64 });
        init_block(b, bs);
    }
    w
}

fn init_block<T: Scalar>(b: &mut LsWeights<T>, seed: u64) {
    b.conv1.weight = he_init(b.conv1.weight.len(), b.conv1.fan_in(), rng::sub_seed(seed, 1));
    b.fc1.weight = he_init(b.fc1.weight.len(), b.fc1.n_in, rng::sub_seed(seed, 2));
    b.fc2.weight = he_init(b.fc2.weight.len(), b.fc2.n_in, rng::sub_seed(seed, 3));
    b.conv2.weight = he_init(b.conv2.weight.len(), b.conv2.fan_in(), rng::sub_seed(seed, 4));
    b.conv1.bias = vec![T::zero(); CHANNELS];
    b.conv2.bias = vec![T::zero(); 2];
    b.bn = BatchNorm::identity(b.bn.scale.len());
}
