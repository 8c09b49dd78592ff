use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of one subarray agent. Defaults follow the reference simulation
/// settings; the discount, minibatch, replay capacity, smoothing factor and
/// target-noise clip are the usual TD3 values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub phase_bits: u32,
    /// Adam step size applied to every layer of actor and critics when training
    /// from scratch.
    pub learning_rate: f64,
    /// Initial variance of the Gaussian exploration noise (radians squared).
    pub exploration_variance: f64,
    /// Exponential decay rate of the exploration standard deviation per step.
    pub exploration_decay: f64,
    /// Lower bound on the exploration standard deviation.
    pub exploration_floor: f64,
    pub target_noise_variance: f64,
    pub target_noise_decay: f64,
    pub target_noise_clip: f64,
    /// Actor update period `T1`.
    pub actor_period: u64,
    /// Target update period `T2`.
    pub target_period: u64,
    pub tau: f64,
    pub minibatch: usize,
    pub replay_capacity: usize,
    pub discount: f64,
    /// Build actor and critics with the extra fine-tuning layer so that any two
    /// policies share one architecture.
    pub fine_tune_layer: bool,
    /// Scale each action gradient by the distance to the bound it points toward,
    /// keeping actor outputs off the saturated ends of the tanh.
    pub invert_action_gradients: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            phase_bits: 3,
            learning_rate: 1e-3,
            exploration_variance: 0.5,
            exploration_decay: 1e-5,
            exploration_floor: 1e-5,
            target_noise_variance: 0.1,
            target_noise_decay: 1e-4,
            target_noise_clip: 0.5,
            actor_period: 1,
            target_period: 3,
            tau: 0.005,
            minibatch: 64,
            replay_capacity: 100_000,
            discount: 0.99,
            fine_tune_layer: true,
            invert_action_gradients: true,
        }
    }
}

impl AgentConfig {
    /// Settings for the laptop-scale scene: smaller minibatch and a short reward
    /// horizon.
    pub fn desk() -> Self {
        AgentConfig {
            minibatch: 16,
            discount: 0.5,
            ..AgentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phase_bits == 0 || self.phase_bits > 16 {
            return Err(Error::config("phase_bits must be in 1..=16"));
        }
        if self.actor_period < 1 || self.target_period <= self.actor_period {
            return Err(Error::config(format!(
                "update periods must satisfy target_period > actor_period >= 1, got ({}, {})",
                self.actor_period, self.target_period
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("tau must lie in (0, 1]"));
        }
        for (name, v) in [
            ("exploration_variance", self.exploration_variance),
            ("exploration_decay", self.exploration_decay),
            ("exploration_floor", self.exploration_floor),
            ("target_noise_variance", self.target_noise_variance),
            ("target_noise_decay", self.target_noise_decay),
            ("target_noise_clip", self.target_noise_clip),
            ("learning_rate", self.learning_rate),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite and >= 0")));
            }
        }
        if self.minibatch == 0 || self.replay_capacity < self.minibatch {
            return Err(Error::config("replay capacity must hold at least one minibatch"));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::config("discount must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Exploration standard deviation after `steps` decays.
    pub fn exploration_std_at(&self, steps: u64) -> f64 {
        (self.exploration_variance.sqrt() * (-self.exploration_decay * steps as f64).exp()).max(self.exploration_floor)
    }

    pub fn target_noise_std_at(&self, steps: u64) -> f64 {
        self.target_noise_variance.sqrt() * (-self.target_noise_decay * steps as f64).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        AgentConfig::default().validate().unwrap();
    }

    #[test]
    fn periods_must_be_ordered() {
        let c = AgentConfig {
            actor_period: 3,
            target_period: 3,
            ..AgentConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn exploration_decay_closed_form() {
        let c = AgentConfig {
            exploration_variance: 0.25,
            exploration_decay: 1e-3,
            exploration_floor: 0.1,
            ..AgentConfig::default()
        };
        assert_eq!(c.exploration_std_at(0), 0.5);
        assert!((c.exploration_std_at(500) - 0.5 * (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(c.exploration_std_at(10_000), 0.1);
    }
}
