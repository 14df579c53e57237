//! Multi-agent PPO with one shared actor and critic per agent type.

pub mod gae;
pub mod loss;
pub mod trainer;
pub mod value_norm;

pub use gae::{compute_gae, normalize_advantages, AdvantageSet};
pub use loss::{actor_loss, critic_loss, ActorBatch, ActorLoss, LossGrad};
pub use trainer::{
    episode_seed, evaluate, train, AgentGroup, EpisodeRecord, EvalSummary, Policy, TrainError, Trainer,
    UpdateStats,
};
pub use value_norm::ValueNorm;
