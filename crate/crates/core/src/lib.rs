//! Language-model-guided exploration for reinforcement learning agents.

pub mod agent;
pub mod captioning;
pub mod env_core;
pub mod error;
pub mod gridcraft;
pub mod harness;
pub mod hashing;
pub mod housegrid;
pub mod llm_client;
pub mod reward;
pub mod scalar;
pub mod suggestion;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Working precision of the default aliases.
pub type Real = f32;
pub type Agent = agent::DqnAgent<Real>;
pub type Agent64 = agent::DqnAgent<f64>;
pub type QNetwork = agent::nn::DuelingQNetwork<Real>;
pub type QNetwork64 = agent::nn::DuelingQNetwork<f64>;
pub type Assembler = agent::InputAssembler<Real>;
pub type Embedding = reward::EmbeddingVector<Real>;
pub type Embedding64 = reward::EmbeddingVector<f64>;
pub type Rnd = reward::RndState<Real>;
pub type Apt = reward::AptBuffer<Real>;
