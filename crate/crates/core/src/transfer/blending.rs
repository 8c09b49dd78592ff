use log::warn;
use serde::{Deserialize, Serialize};

use super::library::{LibraryEntry, PolicyLibrary};
use super::propagation::subarray_seed;
use crate::beamfocus::{assemble_matrix, BeamfocusingMatrix, BeamfocusingSubmatrix};
use crate::dnn::blend_params;
use crate::error::{Error, Result};
use crate::geometry::{ApertureConfig, ChannelMatrix, Point3};
use crate::seed::derive_indexed;
use crate::td3::{train_subarray, AgentConfig, Policy, SubarrayEnv, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentStrategy {
    /// Closest stored focal points.
    Nearest,
    /// Most recently stored entries.
    Last,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlendingConfig {
    pub components: usize,
    /// Below this many entries the new focal point is trained from scratch.
    pub library_floor: usize,
    pub strategy: ComponentStrategy,
    /// Components farther than this are ignored.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_distance_m: Option<f64>,
    pub probe_budget: u64,
    pub probe_learning_rate: f64,
    pub probe_exploration_variance: f64,
}

impl Default for BlendingConfig {
    fn default() -> Self {
        BlendingConfig {
            components: 3,
            library_floor: 1,
            strategy: ComponentStrategy::Nearest,
            max_distance_m: None,
            probe_budget: 500,
            probe_learning_rate: 1e-2,
            probe_exploration_variance: 1e-2,
        }
    }
}

impl BlendingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::config("blending needs at least one component"));
        }
        if !(self.probe_learning_rate > 0.0) || !(self.probe_exploration_variance >= 0.0) {
            return Err(Error::config("blending probe rates must be positive"));
        }
        if let Some(d) = self.max_distance_m {
            if !(d >= 0.0) {
                return Err(Error::config("component distance ceiling must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn probe_agent(&self, agent: &AgentConfig) -> AgentConfig {
        AgentConfig {
            learning_rate: self.probe_learning_rate,
            exploration_variance: self.probe_exploration_variance,
            ..agent.clone()
        }
    }
}

/// Library indices of the blending components for `dfp`.
pub fn select_components(library: &PolicyLibrary, dfp: Point3, cfg: &BlendingConfig) -> Result<Vec<usize>> {
    if library.is_empty() {
        return Err(Error::Degenerate("policy library is empty".into()));
    }
    let ceiling = cfg.max_distance_m.unwrap_or(f64::INFINITY);
    let mut idx: Vec<usize> = (0..library.len())
        .filter(|&i| library.entries()[i].dfp.distance(dfp) <= ceiling)
        .collect();
    match cfg.strategy {
        ComponentStrategy::Nearest => {
            let d = |i: usize| library.entries()[i].dfp.distance(dfp);
            idx.sort_by(|&a, &b| d(a).total_cmp(&d(b)));
        }
        ComponentStrategy::Last => idx.reverse(),
    }
    idx.truncate(cfg.components);
    Ok(idx)
}

/// Probe powers normalized to sum to one; all-zero powers give uniform weights.
pub fn blend_weights(powers: &[f64]) -> Result<Vec<f64>> {
    if powers.is_empty() {
        return Err(Error::Degenerate("no probe powers to weight".into()));
    }
    if let Some(p) = powers.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(Error::domain(format!("probe power {p} is not a nonnegative number")));
    }
    let sum: f64 = powers.iter().sum();
    if sum == 0.0 {
        warn!("all {} probe powers are zero; blending uniformly", powers.len());
        return Ok(vec![1.0 / powers.len() as f64; powers.len()]);
    }
    Ok(powers.iter().map(|p| p / sum).collect())
}

#[derive(Clone, Debug)]
pub struct BlendOutcome {
    pub components: Vec<usize>,
    /// Mean oracle-normalized greedy power over subarrays after each component's
    /// probe.
    pub probe_powers: Vec<f64>,
    pub weights: Vec<f64>,
    /// Per-subarray training results from the blended start.
    pub subarrays: Vec<TrainOutcome>,
    pub matrix: BeamfocusingMatrix,
    pub mean_power: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Trains every subarray at a new focal point from a probe-weighted blend of the
/// nearest stored policies, then appends the result to `library`.
#[allow(clippy::too_many_arguments)]
pub fn policy_blending(
    library: &mut PolicyLibrary,
    aperture: &ApertureConfig,
    channel: &ChannelMatrix,
    cfg: &BlendingConfig,
    agent: &AgentConfig,
    budget: u64,
    master_seed: u64,
) -> Result<BlendOutcome> {
    let (outcome, entry) = blend_and_train(library, aperture, channel, cfg, agent, budget, master_seed)?;
    library.push(entry)?;
    Ok(outcome)
}

/// [`policy_blending`] without touching the library; returns the entry that would
/// be appended.
#[allow(clippy::too_many_arguments)]
pub fn blend_and_train(
    library: &PolicyLibrary,
    aperture: &ApertureConfig,
    channel: &ChannelMatrix,
    cfg: &BlendingConfig,
    agent: &AgentConfig,
    budget: u64,
    master_seed: u64,
) -> Result<(BlendOutcome, LibraryEntry)> {
    cfg.validate()?;
    agent.validate()?;
    let m_total = aperture.num_subarrays();
    let envs: Vec<SubarrayEnv> = (0..m_total)
        .map(|m| SubarrayEnv::from_channel(aperture, channel, m, agent.phase_bits))
        .collect::<Result<_>>()?;

    let components = if library.len() >= cfg.library_floor.max(1) {
        select_components(library, channel.dfp, cfg)?
    } else {
        Vec::new()
    };
    for &c in &components {
        if library.entries()[c].policies.len() != m_total {
            return Err(Error::Dimension {
                expected: m_total,
                actual: library.entries()[c].policies.len(),
            });
        }
    }

    let probe_cfg = cfg.probe_agent(agent);
    let mut probe_powers = Vec::with_capacity(components.len());
    for &c in &components {
        let entry = &library.entries()[c];
        let mut powers = Vec::with_capacity(m_total);
        for (m, env) in envs.iter().enumerate() {
            let start = entry.policies[m].transferred(&probe_cfg);
            let seed = derive_indexed(master_seed, &format!("blend-probe/{c}"), m);
            let power = match train_subarray(env, &probe_cfg, cfg.probe_budget, Some(start), seed) {
                Ok(o) => o.final_power / env.oracle_power(),
                Err(e) => {
                    warn!("blending probe of entry {c}, subarray {m} failed: {e}");
                    0.0
                }
            };
            powers.push(power);
        }
        probe_powers.push(mean(powers.into_iter()));
    }
    let weights = if components.is_empty() {
        Vec::new()
    } else {
        blend_weights(&probe_powers)?
    };

    let mut subarrays = Vec::with_capacity(m_total);
    for (m, env) in envs.iter().enumerate() {
        let start = if components.is_empty() {
            None
        } else {
            let sources: Vec<_> = components.iter().map(|&c| &library.entries()[c].policies[m]).collect();
            Some(blend_policies(&sources, &weights, agent)?)
        };
        subarrays.push(train_subarray(
            env,
            agent,
            budget,
            start,
            subarray_seed(master_seed, m),
        )?);
    }

    let subs: Vec<BeamfocusingSubmatrix> = subarrays
        .iter()
        .enumerate()
        .map(|(index, o)| BeamfocusingSubmatrix {
            index,
            matrix: o.final_pdi.clone(),
        })
        .collect();
    let matrix = assemble_matrix(aperture, &subs)?;
    let mean_power = mean(
        subarrays
            .iter()
            .zip(&envs)
            .map(|(o, e)| o.final_power / e.oracle_power()),
    );
    let entry = LibraryEntry {
        dfp: channel.dfp,
        policies: subarrays.iter().map(|o| o.policy.clone()).collect(),
        pdis: subarrays.iter().map(|o| o.final_pdi.clone()).collect(),
        seed: master_seed,
        budget,
        achieved_power: mean_power,
        learning_rate: agent.learning_rate,
    };
    Ok((
        BlendOutcome {
            components,
            probe_powers,
            weights,
            subarrays,
            matrix,
            mean_power,
        },
        entry,
    ))
}

/// Parameter-space blend of every network in the policies; the result starts with
/// fresh optimizer state and targets equal to the blended online networks.
pub fn blend_policies(policies: &[&Policy], weights: &[f64], agent: &AgentConfig) -> Result<Policy> {
    let actors: Vec<_> = policies.iter().map(|p| &p.actor).collect();
    let c1: Vec<_> = policies.iter().map(|p| &p.critics[0]).collect();
    let c2: Vec<_> = policies.iter().map(|p| &p.critics[1]).collect();
    let actor = blend_params(&actors, weights)?;
    let critics = [blend_params(&c1, weights)?, blend_params(&c2, weights)?];
    Policy::from_networks(actor.clone(), critics.clone(), actor, critics, agent.learning_rate)
        .map(|p| p.transferred(agent))
}

/// Trains a fresh entry for the library without blending.
pub fn train_entry(
    aperture: &ApertureConfig,
    channel: &ChannelMatrix,
    agent: &AgentConfig,
    budget: u64,
    master_seed: u64,
) -> Result<LibraryEntry> {
    let mut outcomes = Vec::with_capacity(aperture.num_subarrays());
    let mut oracles = Vec::with_capacity(aperture.num_subarrays());
    for m in 0..aperture.num_subarrays() {
        let env = SubarrayEnv::from_channel(aperture, channel, m, agent.phase_bits)?;
        oracles.push(env.oracle_power());
        outcomes.push(train_subarray(
            &env,
            agent,
            budget,
            None,
            subarray_seed(master_seed, m),
        )?);
    }
    Ok(LibraryEntry {
        dfp: channel.dfp,
        achieved_power: mean(outcomes.iter().zip(&oracles).map(|(o, p)| o.final_power / p)),
        pdis: outcomes.iter().map(|o| o.final_pdi.clone()).collect(),
        policies: outcomes.into_iter().map(|o| o.policy).collect(),
        seed: master_seed,
        budget,
        learning_rate: agent.learning_rate,
    })
}
