//! Policy learning for the preheating environment.

pub mod buffer;
pub mod eval;
pub mod mlp;
pub mod mpo;
pub mod policy;
pub mod train;

pub use buffer::{ReplayBuffer, StoredTransition};
pub use eval::{evaluate_policy, evaluate_with_records, rollout, Controller, EpisodeRecord, EpisodeSummary, EvalStats};
pub use mpo::{Algorithm, Learner, MpoConfig, TrainMetrics};
pub use policy::{ActionBounds, GaussianPolicy, PolicySample};
pub use train::{Checkpoint, EpisodeMetrics, TrainConfig, Trainer};
