//! Multi-agent PPO learner: networks, optimizer, advantage estimation.

pub mod adam;
pub mod gae;
pub mod mlp;
pub mod policy;
pub mod ppo;

pub use adam::OptimizerState;
pub use policy::{ActorParams, CriticParams, NetConfig};
pub use ppo::{LearnConfig, Mappo, RolloutBuffer};
