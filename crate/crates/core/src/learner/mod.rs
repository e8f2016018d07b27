//! Gaussian MLP policy and value function trained with PPO on parallel tracking environments.

use thiserror::Error;

use crate::charscene::SceneError;
use crate::observation::ObservationError;
use crate::reward::RewardError;

mod checkpoint;
mod env;
mod gae;
mod mlp;
mod policy;
mod ppo;
mod rollout;
mod trainer;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use env::{ClipData, EnvConfig, StepOutcome, TrackingEnv, PHYSICS_DT, SUBSTEPS};
pub use gae::compute_gae;
pub use mlp::{param_count, Adam, Cache, Mlp};
pub use policy::{action_to_torques, gaussian_log_prob, policy_sample, sample_action, Normalizer, Policy, NORMALIZER_CLIP};
pub use ppo::{gaussian_entropy, ppo_loss, ppo_update, surrogate_objective, LossGrad, PpoConfig, UpdateStats};
pub use rollout::{collect_rollouts, env_rng, Behaviour, RolloutBatch, Transition};
pub use trainer::{IterationStats, Trainer};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("dimension mismatch: {what} has {got} entries, expected {expected}")]
    DimensionMismatch { what: &'static str, got: usize, expected: usize },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("checkpoint config hash {found} does not match {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("invalid learner configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[cfg(test)]
mod tests;
