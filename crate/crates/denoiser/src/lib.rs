//! Residual U-Net projection denoiser: model construction, reverse-mode
//! gradients, composite l1 plus feature-space loss, Adam training on random
//! patches and tiled inference over whole projection stacks.

pub mod checkpoint;
pub mod gradcheck;
pub mod infer;
pub mod loss;
pub mod model;
pub mod tape;
pub mod train;

pub use checkpoint::{load_weights, save_weights};
pub use infer::{blend_coverage, denoise_image, denoise_stack, TileConfig};
pub use loss::{build_featnet, l1_loss, perceptual_loss, total_loss, FeatureNet, LossReport};
pub use model::{backward, build_model, forward, forward_tape, parameter_shapes, DenoiserConfig, ModelWeights};
pub use train::{extract_patches, history_csv, train, write_history, EpochRecord, Patch, TrainConfig, TrainOutcome};
