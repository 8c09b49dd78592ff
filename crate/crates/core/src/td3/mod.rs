//! Per-subarray TD3 agent acting on quantized phase vectors.
//!
//! The state at step `n` is the action taken at step `n - 1`, the reward is `+1`
//! when the measured power rose and `-1` otherwise, and the task never resets.

mod agent;
mod config;
mod env;
mod replay;

pub use agent::{select_action, train_step, train_subarray, Agent, Policy, StepMetrics, TrainOutcome};
pub use config::AgentConfig;
pub use env::{quantize_action, reward, wrap_phase, SubarrayEnv};
pub use replay::{Experience, ReplayBuffer};
