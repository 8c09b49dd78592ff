use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::AgentConfig;
use super::env::{quantize_action, reward, SubarrayEnv};
use super::replay::{Experience, ReplayBuffer};
use crate::beamfocus::BeamfocusingMatrix;
use crate::dnn::{build_actor, build_critic, LearningRateProfile, Network};
use crate::error::{Error, Result};

/// Actor, twin critics, their target copies and the per-layer step sizes used to
/// train them.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub actor: Network,
    pub critics: [Network; 2],
    pub target_actor: Network,
    pub target_critics: [Network; 2],
    pub actor_rates: LearningRateProfile,
    pub critic_rates: LearningRateProfile,
    /// Environment steps taken under this policy since it was created or transferred.
    pub steps: u64,
    /// Exploration standard deviation used at the most recent step.
    pub exploration_std: f64,
}

impl Policy {
    pub fn new<R: Rng + ?Sized>(n_prime: usize, config: &AgentConfig, rng: &mut R) -> Result<Self> {
        let actor = build_actor(n_prime, config.fine_tune_layer, rng)?;
        let critics = [
            build_critic(n_prime, config.fine_tune_layer, rng)?,
            build_critic(n_prime, config.fine_tune_layer, rng)?,
        ];
        let actor_rates = LearningRateProfile::uniform(config.learning_rate, actor.num_parameterized());
        let critic_rates = LearningRateProfile::uniform(config.learning_rate, critics[0].num_parameterized());
        Ok(Policy {
            target_actor: actor.clone(),
            target_critics: critics.clone(),
            actor,
            critics,
            actor_rates,
            critic_rates,
            steps: 0,
            exploration_std: config.exploration_std_at(0),
        })
    }

    /// Reconstructs a policy from stored networks with fresh optimizer state.
    pub fn from_networks(
        actor: Network,
        critics: [Network; 2],
        target_actor: Network,
        target_critics: [Network; 2],
        learning_rate: f64,
    ) -> Result<Self> {
        if !actor.same_architecture(&target_actor)
            || !critics[0].same_architecture(&critics[1])
            || !critics[0].same_architecture(&target_critics[0])
            || !critics[0].same_architecture(&target_critics[1])
        {
            return Err(Error::Architecture(
                "policy networks disagree with their targets".into(),
            ));
        }
        if critics[0].input_dim() != 2 * actor.input_dim() {
            return Err(Error::Architecture("critic input must be state || action".into()));
        }
        Ok(Policy {
            actor_rates: LearningRateProfile::uniform(learning_rate, actor.num_parameterized()),
            critic_rates: LearningRateProfile::uniform(learning_rate, critics[0].num_parameterized()),
            actor,
            critics,
            target_actor,
            target_critics,
            steps: 0,
            exploration_std: 0.0,
        })
    }

    pub fn n_prime(&self) -> usize {
        self.actor.input_dim()
    }

    /// Copy for a new learner: targets re-cloned from the online networks, optimizer
    /// state and step counter cleared, uniform step size `config.learning_rate`.
    pub fn transferred(&self, config: &AgentConfig) -> Policy {
        let mut p = self.clone();
        p.actor.reset_optimizer();
        for c in &mut p.critics {
            c.reset_optimizer();
        }
        p.target_actor = p.actor.clone();
        p.target_critics = p.critics.clone();
        p.actor_rates = LearningRateProfile::uniform(config.learning_rate, p.actor.num_parameterized());
        p.critic_rates = LearningRateProfile::uniform(config.learning_rate, p.critics[0].num_parameterized());
        p.steps = 0;
        p.exploration_std = config.exploration_std_at(0);
        p
    }

    /// Noise-free quantized action for `state`.
    pub fn greedy(&self, state: &[f64], bits: u32) -> Result<Vec<u32>> {
        Ok(quantize_action(&self.actor.forward(state)?, bits))
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite()
            && self.critics.iter().all(Network::is_finite)
            && self.target_actor.is_finite()
            && self.target_critics.iter().all(Network::is_finite)
    }
}

/// Actor output plus Gaussian noise of standard deviation `noise_std`, quantized.
pub fn select_action<R: Rng + ?Sized>(
    policy: &Policy,
    state: &[f64],
    noise_std: f64,
    bits: u32,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let mut a = policy.actor.forward(state)?;
    if noise_std > 0.0 {
        for v in &mut a {
            let z: f64 = rng.sample(StandardNormal);
            *v += noise_std * z;
        }
    }
    Ok(quantize_action(&a, bits))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    pub iteration: u64,
    pub power: f64,
    pub reward: f64,
    pub noise_std: f64,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
}

/// A live training session: a policy, its replay memory and the current state.
#[derive(Clone, Debug)]
pub struct Agent {
    pub policy: Policy,
    pub replay: ReplayBuffer,
    state: Vec<u32>,
    prev_power: f64,
    rng: ChaCha8Rng,
    iteration: u64,
}

impl Agent {
    /// Starts from the all-zero phase vector, whose power is the first comparison
    /// point for the reward.
    pub fn new(policy: Policy, env: &SubarrayEnv, config: &AgentConfig, seed: u64) -> Result<Self> {
        if policy.n_prime() != env.elements() {
            return Err(Error::Dimension {
                expected: env.elements(),
                actual: policy.n_prime(),
            });
        }
        let state = vec![0; env.elements()];
        Ok(Agent {
            prev_power: env.power(&state),
            policy,
            replay: ReplayBuffer::new(config.replay_capacity),
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
            iteration: 0,
        })
    }

    pub fn state(&self) -> &[u32] {
        &self.state
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Greedy action from the current state.
    pub fn greedy(&self, env: &SubarrayEnv) -> Result<Vec<u32>> {
        self.policy.greedy(&env.phases(&self.state), env.bits)
    }

    pub fn into_policy(self) -> Policy {
        self.policy
    }
}

/// One environment step followed, once the replay memory holds a minibatch, by a
/// twin-critic update, a delayed actor update every `actor_period` steps and a
/// target soft update every `target_period` steps.
pub fn train_step(agent: &mut Agent, env: &SubarrayEnv, config: &AgentConfig) -> Result<StepMetrics> {
    agent.iteration += 1;
    let n = agent.iteration;
    let noise_std = config.exploration_std_at(agent.policy.steps);
    let state_phases = env.phases(&agent.state);
    let action = select_action(&agent.policy, &state_phases, noise_std, env.bits, &mut agent.rng)?;
    let power = env.power(&action);
    let r = reward(power, agent.prev_power);
    let action_phases = env.phases(&action);
    agent.replay.push(Experience {
        state: state_phases,
        action: action_phases.clone(),
        reward: r,
        next_state: action_phases,
    });
    agent.prev_power = power;
    agent.state = action;
    agent.policy.steps += 1;
    agent.policy.exploration_std = noise_std;

    let mut metrics = StepMetrics {
        iteration: n,
        power,
        reward: r,
        noise_std,
        critic_loss: None,
        actor_loss: None,
    };
    if agent.replay.len() < config.minibatch {
        return Ok(metrics);
    }
    metrics.critic_loss = Some(update_critics(agent, config)?);
    if n.is_multiple_of(config.actor_period) {
        metrics.actor_loss = Some(update_actor(agent, config)?);
    }
    if n.is_multiple_of(config.target_period) {
        let p = &mut agent.policy;
        p.target_actor.soft_update(&p.actor, config.tau)?;
        for (t, c) in p.target_critics.iter_mut().zip(&p.critics) {
            t.soft_update(c, config.tau)?;
        }
    }
    Ok(metrics)
}

fn concat_rows(left: &[f64], right: &[f64], width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(left.len() + right.len());
    for (l, r) in left.chunks_exact(width).zip(right.chunks_exact(width)) {
        out.extend_from_slice(l);
        out.extend_from_slice(r);
    }
    out
}

fn update_critics(agent: &mut Agent, config: &AgentConfig) -> Result<f64> {
    let b = config.minibatch;
    let n = agent.policy.n_prime();
    let mut sa = Vec::with_capacity(b * 2 * n);
    let mut next = Vec::with_capacity(b * n);
    let mut rewards = Vec::with_capacity(b);
    for e in agent.replay.sample(b, &mut agent.rng) {
        sa.extend_from_slice(&e.state);
        sa.extend_from_slice(&e.action);
        next.extend_from_slice(&e.next_state);
        rewards.push(e.reward);
    }

    let policy = &mut agent.policy;
    let mut target_action = policy.target_actor.forward_batch(&next, b)?.output().to_vec();
    let t_std = config.target_noise_std_at(policy.steps);
    let clip = config.target_noise_clip;
    for v in &mut target_action {
        let z: f64 = agent.rng.sample(StandardNormal);
        *v = (*v + (t_std * z).clamp(-clip, clip)).clamp(-PI, PI);
    }
    let next_sa = concat_rows(&next, &target_action, n);
    let q1 = policy.target_critics[0].forward_batch(&next_sa, b)?;
    let q2 = policy.target_critics[1].forward_batch(&next_sa, b)?;
    let y: Vec<f64> = rewards
        .iter()
        .zip(q1.output().iter().zip(q2.output()))
        .map(|(r, (a, c))| r + config.discount * a.min(*c))
        .collect();

    let mut total = 0.0;
    for critic in policy.critics.iter_mut() {
        let tape = critic.forward_batch(&sa, b)?;
        let diff: Vec<f64> = tape.output().iter().zip(&y).map(|(q, y)| q - y).collect();
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / b as f64;
        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "critic loss became {loss} at step {}",
                agent.iteration
            )));
        }
        total += loss;
        let grad: Vec<f64> = diff.iter().map(|d| 2.0 * d / b as f64).collect();
        let back = critic.backward(&tape, &grad)?;
        critic.adam_step(&back.grads, &policy.critic_rates)?;
    }
    Ok(total / 2.0)
}

fn update_actor(agent: &mut Agent, config: &AgentConfig) -> Result<f64> {
    let b = config.minibatch;
    let n = agent.policy.n_prime();
    let mut states = Vec::with_capacity(b * n);
    for e in agent.replay.sample(b, &mut agent.rng) {
        states.extend_from_slice(&e.state);
    }
    let policy = &mut agent.policy;
    let actor_tape = policy.actor.forward_batch(&states, b)?;
    let sa = concat_rows(&states, actor_tape.output(), n);
    let critic_tape = policy.critics[0].forward_batch(&sa, b)?;
    let q_mean = critic_tape.output().iter().sum::<f64>() / b as f64;
    if !q_mean.is_finite() {
        return Err(Error::Training(format!("actor objective became {q_mean}")));
    }
    // ascend Q: minimize -mean(Q)
    let dq = vec![-1.0 / b as f64; b];
    let d_input = policy.critics[0].input_gradient(&critic_tape, &dq)?;
    let mut d_action: Vec<f64> = d_input
        .chunks_exact(2 * n)
        .flat_map(|row| row[n..].iter().copied())
        .collect();
    if config.invert_action_gradients {
        // d_action holds -dQ/da; a negative entry asks for a larger action
        for (g, a) in d_action.iter_mut().zip(actor_tape.output()) {
            let room = if *g < 0.0 { PI - a } else { a + PI };
            *g *= (room / (2.0 * PI)).max(0.0);
        }
    }
    let back = policy.actor.backward(&actor_tape, &d_action)?;
    policy.actor.adam_step(&back.grads, &policy.actor_rates)?;
    Ok(-q_mean)
}

/// Result of [`train_subarray`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub trace: Vec<StepMetrics>,
    /// Greedy action from the final state.
    pub final_pdi: BeamfocusingMatrix,
    pub final_power: f64,
}

impl TrainOutcome {
    pub fn powers(&self) -> Vec<f64> {
        self.trace.iter().map(|m| m.power).collect()
    }
}

/// Runs `budget` training steps from `initial` (or a freshly initialized policy).
pub fn train_subarray(
    env: &SubarrayEnv,
    config: &AgentConfig,
    budget: u64,
    initial: Option<Policy>,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let policy = match initial {
        Some(p) => p,
        None => Policy::new(env.elements(), config, &mut init_rng)?,
    };
    let mut agent = Agent::new(policy, env, config, seed)?;
    let mut trace = Vec::with_capacity(budget as usize);
    for _ in 0..budget {
        trace.push(train_step(&mut agent, env, config)?);
    }
    let greedy = if budget == 0 {
        agent.policy.greedy(&env.phases(agent.state()), env.bits)?
    } else {
        agent.greedy(env)?
    };
    let final_power = env.power(&greedy);
    Ok(TrainOutcome {
        final_pdi: env.matrix(greedy)?,
        final_power,
        policy: agent.into_policy(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;

    use super::*;
    use crate::geometry::Point3;

    fn env() -> SubarrayEnv {
        let h = (0..4)
            .map(|k| Complex64::from_polar(1.0 + 0.1 * k as f64, 0.7 * k as f64))
            .collect();
        SubarrayEnv::new(0, 2, 2, 3, h, Point3::default()).unwrap()
    }

    fn small_config() -> AgentConfig {
        AgentConfig {
            minibatch: 8,
            replay_capacity: 50,
            ..AgentConfig::default()
        }
    }

    #[test]
    fn warm_up_only_collects() {
        let env = env();
        let cfg = small_config();
        let out = train_subarray(&env, &cfg, 7, None, 1).unwrap();
        assert!(out.trace.iter().all(|m| m.critic_loss.is_none()));
        let out = train_subarray(&env, &cfg, 8, None, 1).unwrap();
        assert!(out.trace[7].critic_loss.is_some());
    }

    #[test]
    fn actor_every_step_targets_every_third() {
        let env = env();
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let policy = Policy::new(4, &cfg, &mut rng).unwrap();
        let mut agent = Agent::new(policy, &env, &cfg, 3).unwrap();
        for _ in 0..8 {
            train_step(&mut agent, &env, &cfg).unwrap();
        }
        for n in 9..=15u64 {
            let before = agent.policy.target_actor.clone();
            let m = train_step(&mut agent, &env, &cfg).unwrap();
            assert!(m.actor_loss.is_some());
            let moved = before != agent.policy.target_actor;
            assert_eq!(moved, n % 3 == 0, "step {n}");
        }
    }

    #[test]
    fn experiences_chain_states() {
        let env = env();
        let cfg = small_config();
        let out = train_subarray(&env, &cfg, 30, None, 5).unwrap();
        assert!(out.trace.iter().all(|m| m.reward == 1.0 || m.reward == -1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut agent = Agent::new(Policy::new(4, &cfg, &mut rng).unwrap(), &env, &cfg, 5).unwrap();
        for _ in 0..60 {
            train_step(&mut agent, &env, &cfg).unwrap();
        }
        assert_eq!(agent.replay.len(), 50);
        let items: Vec<_> = agent.replay.iter().collect();
        for e in &items {
            assert_eq!(e.next_state, e.action);
        }
        for w in items.windows(2) {
            assert_eq!(w[1].state, w[0].action);
        }
    }

    #[test]
    fn zero_noise_selection_is_constant() {
        let env = env();
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let policy = Policy::new(4, &cfg, &mut rng).unwrap();
        let s = vec![0.3, -0.2, 1.0, 2.0];
        let first = select_action(&policy, &s, 0.0, 3, &mut rng).unwrap();
        for _ in 0..10 {
            assert_eq!(select_action(&policy, &s, 0.0, 3, &mut rng).unwrap(), first);
        }
        assert!(first.iter().all(|&k| k < 8));
        assert_eq!(first, policy.greedy(&s, 3).unwrap());
        let _ = env;
    }

    #[test]
    fn seeded_runs_replay_identically() {
        let env = env();
        let cfg = small_config();
        let a = train_subarray(&env, &cfg, 200, None, 42).unwrap();
        let b = train_subarray(&env, &cfg, 200, None, 42).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.final_pdi, b.final_pdi);
    }

    #[test]
    fn zero_budget_returns_initial_policy() {
        let env = env();
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = Policy::new(4, &cfg, &mut rng).unwrap();
        let out = train_subarray(&env, &cfg, 0, Some(p.clone()), 1).unwrap();
        assert_eq!(out.policy, p);
        assert!(out.trace.is_empty());
    }
}
