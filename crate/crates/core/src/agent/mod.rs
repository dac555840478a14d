//! Shared recurrent actor-critic with top-N masking, trained by PPO.

mod mask;
mod network;
mod ppo;
mod weights;

pub use mask::{masked_softmax, top_n_mask};
pub use network::{
    featurize, featurize_into, greedy_index, masks_for, sample_index, sigmoid, ActOutput, Memory, NetShape,
    PolicyOutput, PolicyParams, StepCache,
};
pub use ppo::{
    gae_advantages, loss_and_grad, loss_value, normalize_advantages, ppo_update, Adam, Chunk, LossStats, PpoHyper,
    TrainBatch, UpdateStats, ValueNormalizer,
};
pub use weights::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
