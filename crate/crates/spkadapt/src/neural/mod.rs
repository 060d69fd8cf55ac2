//! Minimal deterministic differentiable core: tensors with reverse-mode
//! gradients, the layer inventory both ASR architectures need, CTC and
//! label-smoothed KL losses, Adam/Adadelta, and learning-rate schedules.

mod attention;
mod checkpoint;
mod layers;
mod loss;
mod optim;
mod schedule;
mod tensor;

pub use attention::{sinusoidal_pe, AttnMask, MultiHeadAttention};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointEntry, CheckpointMeta,
    OptimizerSnapshot,
};
pub use layers::{fan_in_uniform, BatchNorm1d, Conv1d, Dropout, Embedding, FwdCtx, LayerNorm, Linear};
pub use loss::{ctc_loss, ctc_min_frames, kl_smoothed_loss};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind, ParamState};
pub use schedule::{lr_at, ScheduleConfig, ScheduleKind};
pub use tensor::Tensor;

use sha2::{Digest, Sha256};

/// Stable sub-seed derivation, so independent components draw from
/// independent streams of one run seed.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[0..8].try_into().unwrap())
}
