//! Multi-agent deep deterministic policy gradient with a shared recurrent
//! encoder and SoC-aware action masking.

pub mod agents;
pub mod explore;
pub mod learner;
pub mod mask;
pub mod nets;
pub mod replay;
pub mod trainer;

pub use agents::Maddpg;
pub use learner::{Batch, JointLearner, LearnerConfig, UpdateStats};
pub use mask::{mask_action, power_bounds, MaskMode, MaskedAction};
pub use trainer::{train, EpisodeMetrics, ScenarioSource, SharedEncoder, TrainConfig, Trainer};
