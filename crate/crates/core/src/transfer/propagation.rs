use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::qll::{qll_rates_for, QllSchedule};
use crate::beamfocus::{assemble_matrix, BeamfocusingMatrix, BeamfocusingSubmatrix};
use crate::error::{Error, Result};
use crate::geometry::{ApertureConfig, ChannelMatrix};
use crate::pdi::{ecc, PhaseImage, RotationSet};
use crate::seed::derive_indexed;
use crate::td3::{train_subarray, AgentConfig, Policy, SubarrayEnv, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyExit {
    /// Stop probing once a teacher beats the candidate threshold.
    Candidate,
    /// Stop probing once a teacher beats the transfer gate.
    Gate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPlacement {
    /// Subarrays nearest the aperture centre.
    Center,
    /// Uniformly drawn under the propagation seed.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub seed_teachers: usize,
    pub candidate_teachers: usize,
    pub candidate_threshold: f64,
    pub gate_threshold: f64,
    pub early_exit_threshold: EarlyExit,
    pub probe_budget: u64,
    pub probe_exploration_decay: f64,
    pub probe_learning_rate: f64,
    pub seed_placement: SeedPlacement,
    pub qll: QllSchedule,
    pub rotation_step_deg: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            seed_teachers: 1,
            candidate_teachers: 4,
            candidate_threshold: 0.5,
            gate_threshold: 0.9,
            early_exit_threshold: EarlyExit::Candidate,
            probe_budget: 1000,
            probe_exploration_decay: 5e-4,
            probe_learning_rate: 1e-2,
            seed_placement: SeedPlacement::Center,
            qll: QllSchedule::default(),
            rotation_step_deg: 10.0,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seed_teachers == 0 {
            return Err(Error::config("at least one seed teacher is required"));
        }
        if self.candidate_teachers == 0 {
            return Err(Error::config("at least one candidate teacher is required"));
        }
        if !(self.gate_threshold > self.candidate_threshold) {
            return Err(Error::config("the transfer gate must exceed the candidate threshold"));
        }
        if !(self.probe_learning_rate > 0.0) || !(self.probe_exploration_decay >= 0.0) {
            return Err(Error::config("probe rates must be positive"));
        }
        self.qll.validate()?;
        RotationSet::step_degrees(self.rotation_step_deg)?;
        Ok(())
    }

    pub fn rotations(&self) -> Result<RotationSet> {
        RotationSet::step_degrees(self.rotation_step_deg)
    }

    fn early_exit_value(&self) -> f64 {
        match self.early_exit_threshold {
            EarlyExit::Candidate => self.candidate_threshold,
            EarlyExit::Gate => self.gate_threshold,
        }
    }

    /// Agent settings used while probing a teacher.
    pub fn probe_agent(&self, agent: &AgentConfig) -> AgentConfig {
        AgentConfig {
            learning_rate: self.probe_learning_rate,
            exploration_decay: self.probe_exploration_decay,
            ..agent.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProbeResult {
    pub temp_pdi: BeamfocusingMatrix,
    pub ecc: f64,
    pub angle: f64,
}

/// Trains a throwaway copy of `teacher` on the student's environment for the probe
/// budget and scores the resulting PDI against the teacher's.
pub fn probe_teacher(
    env: &SubarrayEnv,
    teacher: &Policy,
    teacher_pdi: &BeamfocusingMatrix,
    cfg: &PropagationConfig,
    agent: &AgentConfig,
    seed: u64,
) -> Result<ProbeResult> {
    let temp_pdi = if cfg.probe_budget == 0 {
        teacher_pdi.clone()
    } else {
        let probe_cfg = cfg.probe_agent(agent);
        let start = teacher.transferred(&probe_cfg);
        train_subarray(env, &probe_cfg, cfg.probe_budget, Some(start), seed)?.final_pdi
    };
    let e = ecc(
        &PhaseImage::from_matrix(&temp_pdi),
        &PhaseImage::from_matrix(teacher_pdi),
        &cfg.rotations()?,
    )?;
    Ok(ProbeResult {
        temp_pdi,
        ecc: e.value,
        angle: e.angle,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    Seed,
    Scratch,
    Qll,
}

impl TrainingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainingMode::Seed => "seed",
            TrainingMode::Scratch => "scratch",
            TrainingMode::Qll => "qll",
        }
    }
}

/// One probed teacher.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRecord {
    pub teacher: usize,
    pub ecc: f64,
    pub angle: f64,
}

/// Outcome of teacher selection for one student.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub student: usize,
    /// Best probed teacher, if any probe succeeded.
    pub teacher: Option<usize>,
    pub ecc: f64,
    pub angle: f64,
    pub mode: TrainingMode,
    pub probes: Vec<ProbeRecord>,
}

#[derive(Clone, Debug)]
pub struct SubarrayResult {
    pub index: usize,
    pub mode: TrainingMode,
    pub outcome: TrainOutcome,
    pub oracle_power: f64,
}

#[derive(Clone, Debug)]
pub struct PropagationOutcome {
    pub matrix: BeamfocusingMatrix,
    /// Indexed by subarray.
    pub subarrays: Vec<SubarrayResult>,
    /// Students in the order they were trained.
    pub log: Vec<Assignment>,
    /// Subarrays trained as seed teachers.
    pub seeds: Vec<usize>,
}

impl PropagationOutcome {
    /// CSV rows `student,teacher,ecc,angle_deg,mode`.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("student,teacher,ecc,angle_deg,mode\n");
        for a in &self.log {
            let teacher = a.teacher.map(|t| t.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{:?},{:?},{}\n",
                a.student,
                teacher,
                a.ecc,
                a.angle.to_degrees(),
                a.mode.as_str()
            ));
        }
        out
    }
}

fn grid_pos(aperture: &ApertureConfig, m: usize) -> (i64, i64) {
    ((m / aperture.subarray_cols) as i64, (m % aperture.subarray_cols) as i64)
}

fn grid_dist2(aperture: &ApertureConfig, a: usize, b: usize) -> i64 {
    let (ra, ca) = grid_pos(aperture, a);
    let (rb, cb) = grid_pos(aperture, b);
    (ra - rb).pow(2) + (ca - cb).pow(2)
}

/// `count` subarrays closest to the grid centre, ties by index.
pub fn center_subarrays(aperture: &ApertureConfig, count: usize) -> Vec<usize> {
    let (cr, cc) = (
        (aperture.subarray_rows as f64 - 1.0) / 2.0,
        (aperture.subarray_cols as f64 - 1.0) / 2.0,
    );
    let mut all: Vec<usize> = (0..aperture.num_subarrays()).collect();
    all.sort_by(|&a, &b| {
        let d = |m: usize| {
            let (r, c) = grid_pos(aperture, m);
            (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2)
        };
        d(a).total_cmp(&d(b)).then(a.cmp(&b))
    });
    all.truncate(count);
    all
}

/// Untrained subarray 4-adjacent to the teacher set, nearest to the seeds, ties by
/// index.
fn next_student(aperture: &ApertureConfig, trained: &[bool], seeds: &[usize]) -> Option<usize> {
    let (rows, cols) = (aperture.subarray_rows as i64, aperture.subarray_cols as i64);
    (0..trained.len())
        .filter(|&m| !trained[m])
        .filter(|&m| {
            let (r, c) = grid_pos(aperture, m);
            [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
                .iter()
                .any(|&(rr, cc)| rr >= 0 && rr < rows && cc >= 0 && cc < cols && trained[(rr * cols + cc) as usize])
        })
        .min_by_key(|&m| (seeds.iter().map(|&s| grid_dist2(aperture, m, s)).min().unwrap_or(0), m))
}

/// Nearest `k` teachers to `student` on the subarray grid, ties by index.
pub fn nearest_teachers(aperture: &ApertureConfig, student: usize, teachers: &[usize], k: usize) -> Vec<usize> {
    let mut t = teachers.to_vec();
    t.sort_by_key(|&m| (grid_dist2(aperture, student, m), m));
    t.truncate(k);
    t
}

/// Per-subarray training seeds, keyed by subarray index.
pub fn subarray_seed(master: u64, m: usize) -> u64 {
    derive_indexed(master, "subarray", m)
}

fn probe_seed(master: u64, student: usize, teacher: usize) -> u64 {
    derive_indexed(master, &format!("probe/{student}"), teacher)
}

/// Seeds a policy copy for QLL fine-tuning: targets re-cloned, optimizer reset,
/// per-layer rates from the schedule.
pub fn qll_policy(teacher: &Policy, schedule: &QllSchedule, agent: &AgentConfig) -> Result<Policy> {
    let mut p = teacher.transferred(agent);
    p.actor_rates = qll_rates_for(schedule, &p.actor)?;
    p.critic_rates = qll_rates_for(schedule, &p.critics[0])?;
    Ok(p)
}

/// Subarray policy propagation over every subarray of `aperture` at one focal
/// point. Each subarray is trained for `budget` iterations.
pub fn policy_propagation(
    aperture: &ApertureConfig,
    channel: &ChannelMatrix,
    cfg: &PropagationConfig,
    agent: &AgentConfig,
    budget: u64,
    master_seed: u64,
) -> Result<PropagationOutcome> {
    cfg.validate()?;
    agent.validate()?;
    let m_total = aperture.num_subarrays();
    if cfg.seed_teachers > m_total {
        return Err(Error::config(format!(
            "{} seed teachers requested for {m_total} subarrays",
            cfg.seed_teachers
        )));
    }
    let envs: Vec<SubarrayEnv> = (0..m_total)
        .map(|m| SubarrayEnv::from_channel(aperture, channel, m, agent.phase_bits))
        .collect::<Result<_>>()?;
    let seeds = match cfg.seed_placement {
        SeedPlacement::Center => center_subarrays(aperture, cfg.seed_teachers),
        SeedPlacement::Random => {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_indexed(master_seed, "seed-placement", 0));
            let mut all: Vec<usize> = (0..m_total).collect();
            all.shuffle(&mut rng);
            all.truncate(cfg.seed_teachers);
            all
        }
    };

    let mut results: Vec<Option<SubarrayResult>> = vec![None; m_total];
    let mut trained = vec![false; m_total];
    let mut teachers: Vec<usize> = Vec::new();
    for &m in &seeds {
        let outcome = train_subarray(&envs[m], agent, budget, None, subarray_seed(master_seed, m))?;
        results[m] = Some(SubarrayResult {
            index: m,
            mode: TrainingMode::Seed,
            oracle_power: envs[m].oracle_power(),
            outcome,
        });
        trained[m] = true;
        teachers.push(m);
    }

    let early = cfg.early_exit_value();
    let mut log = Vec::with_capacity(m_total - seeds.len());
    while let Some(student) = next_student(aperture, &trained, &seeds) {
        let mut probes = Vec::new();
        for t in nearest_teachers(aperture, student, &teachers, cfg.candidate_teachers) {
            let teacher = results[t].as_ref().expect("teachers are trained");
            match probe_teacher(
                &envs[student],
                &teacher.outcome.policy,
                &teacher.outcome.final_pdi,
                cfg,
                agent,
                probe_seed(master_seed, student, t),
            ) {
                Ok(p) => {
                    debug!("student {student} probed teacher {t}: ecc {:.4}", p.ecc);
                    probes.push(ProbeRecord {
                        teacher: t,
                        ecc: p.ecc,
                        angle: p.angle,
                    });
                    if p.ecc > early {
                        break;
                    }
                }
                Err(e) => warn!("probe of teacher {t} for student {student} failed: {e}"),
            }
        }
        let best = probes
            .iter()
            .fold(None::<&ProbeRecord>, |b, p| match b {
                Some(b) if b.ecc >= p.ecc => Some(b),
                _ => Some(p),
            })
            .cloned();
        let seed = subarray_seed(master_seed, student);
        let (mode, outcome) = match &best {
            Some(b) if b.ecc > cfg.gate_threshold => {
                let teacher = &results[b.teacher]
                    .as_ref()
                    .expect("teachers are trained")
                    .outcome
                    .policy;
                let start = qll_policy(teacher, &cfg.qll, agent)?;
                (
                    TrainingMode::Qll,
                    train_subarray(&envs[student], agent, budget, Some(start), seed)?,
                )
            }
            _ => (
                TrainingMode::Scratch,
                train_subarray(&envs[student], agent, budget, None, seed)?,
            ),
        };
        log.push(Assignment {
            student,
            teacher: best.as_ref().map(|b| b.teacher),
            ecc: best.as_ref().map_or(f64::NAN, |b| b.ecc),
            angle: best.as_ref().map_or(0.0, |b| b.angle),
            mode,
            probes,
        });
        results[student] = Some(SubarrayResult {
            index: student,
            mode,
            oracle_power: envs[student].oracle_power(),
            outcome,
        });
        trained[student] = true;
        teachers.push(student);
    }

    let subarrays: Vec<SubarrayResult> = results
        .into_iter()
        .map(|r| r.ok_or_else(|| Error::Degenerate("subarray grid is not connected".into())))
        .collect::<Result<_>>()?;
    let subs: Vec<BeamfocusingSubmatrix> = subarrays
        .iter()
        .map(|r| BeamfocusingSubmatrix {
            index: r.index,
            matrix: r.outcome.final_pdi.clone(),
        })
        .collect();
    Ok(PropagationOutcome {
        matrix: assemble_matrix(aperture, &subs)?,
        subarrays,
        log,
        seeds,
    })
}
