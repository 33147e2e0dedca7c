//! The unrolled network: data consistency interleaved with learnable adaptive
//! soft-thresholding blocks.

mod forward;
pub(crate) mod layers;
mod weights;

pub use forward::{data_consistency, ls_apply, modern_forward, modern_forward_batch, threshold_autoset, ModernOutput, ThresholdSource};
pub(crate) use forward::{dc_adjoint_in_place, forward_batch, BlockTrace};
pub use layers::{BnMode, BnStats};
pub use weights::{
    ist_equivalent_weights, kernel_for_dims, BatchNorm, Conv, Dense, LsWeights, ModernMeta, ModernWeights, ParamGroup,
    BN_EPS, BN_MOMENTUM, CHANNELS, HIDDEN,
};
