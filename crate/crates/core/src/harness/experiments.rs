//! Experiment bodies. Everything here is pure computation; file output lives in
//! `run`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, MonteCarloConfig};
use super::metrics::convergence_iteration;
use crate::beamfocus::{
    csi_oracle, power_density_map, power_density_map_weights, response_correlation, BeamfocusingMatrix, PowerMap,
    ReferencePlane,
};
use crate::error::{Error, Result};
use crate::geometry::{ApertureConfig, ChannelMatrix, ChannelModel, Point3, Scene};
use crate::pdi::{similarity_map, PhaseImage};
use crate::seed::{derive_indexed, derive_seed};
use crate::td3::{train_subarray, AgentConfig, SubarrayEnv, TrainOutcome};
use crate::transfer::{
    blend_and_train, policy_blending, policy_propagation, qll_policy, subarray_seed, BlendOutcome, BlendingConfig,
    PolicyLibrary, PropagationConfig, PropagationOutcome, QllSchedule, SubarrayResult, TrainingMode,
};

/// Per-iteration power divided by the subarray's quantized oracle power.
pub fn normalized_trace(outcome: &TrainOutcome, oracle_power: f64) -> Vec<f64> {
    outcome.trace.iter().map(|m| m.power / oracle_power).collect()
}

/// Element-wise mean of equally long traces.
pub fn mean_trace(traces: &[Vec<f64>]) -> Vec<f64> {
    let Some(len) = traces.iter().map(Vec::len).min() else {
        return Vec::new();
    };
    (0..len)
        .map(|i| traces.iter().map(|t| t[i]).sum::<f64>() / traces.len() as f64)
        .collect()
}

/// Convergence iteration with not-converged runs counted at the trace length.
pub fn censored_convergence(trace: &[f64], fraction: f64, window: usize) -> usize {
    convergence_iteration(trace, fraction, window).unwrap_or(trace.len())
}

pub fn subarray_envs(aperture: &ApertureConfig, h: &ChannelMatrix, bits: u32) -> Result<Vec<SubarrayEnv>> {
    (0..aperture.num_subarrays())
        .map(|m| SubarrayEnv::from_channel(aperture, h, m, bits))
        .collect()
}

/// Independent from-scratch training of the selected subarrays (all when empty).
pub fn train_baseline(cfg: &ExperimentConfig) -> Result<Vec<SubarrayResult>> {
    let aperture = &cfg.scene.aperture;
    let h = cfg.scene.channel_at(cfg.dfp_m)?;
    let selected: Vec<usize> = if cfg.subarrays.is_empty() {
        (0..aperture.num_subarrays()).collect()
    } else {
        cfg.subarrays.clone()
    };
    selected
        .into_iter()
        .map(|m| {
            let env = SubarrayEnv::from_channel(aperture, &h, m, cfg.agent.phase_bits)?;
            let outcome = train_subarray(&env, &cfg.agent, cfg.budgets.main, None, subarray_seed(cfg.seed, m))?;
            Ok(SubarrayResult {
                index: m,
                mode: TrainingMode::Scratch,
                oracle_power: env.oracle_power(),
                outcome,
            })
        })
        .collect()
}

/// Normalized traces of one transferred student and its paired baselines.
#[derive(Clone, Debug)]
pub struct StudentComparison {
    pub student: usize,
    pub teacher: usize,
    pub ecc: f64,
    pub qll: Vec<f64>,
    /// Same subarray and seed, trained from a fresh policy.
    pub scratch: Vec<f64>,
    /// Same teacher and seed with only the output layer liquid.
    pub hard_switch: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PropagationComparison {
    pub outcome: PropagationOutcome,
    pub students: Vec<StudentComparison>,
}

impl PropagationComparison {
    /// Mean censored convergence iterations `(qll, scratch, hard_switch)` over the
    /// transferred students, `None` when no student passed the gate.
    pub fn mean_convergence(&self, fraction: f64, window: usize) -> Option<(f64, f64, f64)> {
        if self.students.is_empty() {
            return None;
        }
        let n = self.students.len() as f64;
        let mean = |f: &dyn Fn(&StudentComparison) -> &Vec<f64>| {
            self.students
                .iter()
                .map(|s| censored_convergence(f(s), fraction, window) as f64)
                .sum::<f64>()
                / n
        };
        Some((mean(&|s| &s.qll), mean(&|s| &s.scratch), mean(&|s| &s.hard_switch)))
    }
}

/// Policy propagation plus, for every student that passed the transfer gate, a
/// scratch run and a hard-switch fine-tuning run on the same subarray seed.
pub fn compare_propagation(
    scene: &Scene,
    dfp: Point3,
    prop: &PropagationConfig,
    agent: &AgentConfig,
    budget: u64,
    seed: u64,
) -> Result<PropagationComparison> {
    let aperture = &scene.aperture;
    let h = scene.channel_at(dfp)?;
    let outcome = policy_propagation(aperture, &h, prop, agent, budget, seed)?;
    let envs = subarray_envs(aperture, &h, agent.phase_bits)?;
    let hard = QllSchedule::hard_switch(prop.qll.last, prop.qll.top_rate);
    let mut students = Vec::new();
    for a in outcome.log.iter().filter(|a| a.mode == TrainingMode::Qll) {
        let teacher = a.teacher.expect("transferred students have a teacher");
        let env = &envs[a.student];
        let s_seed = subarray_seed(seed, a.student);
        let scratch = train_subarray(env, agent, budget, None, s_seed)?;
        let start = qll_policy(&outcome.subarrays[teacher].outcome.policy, &hard, agent)?;
        let hard_run = train_subarray(env, agent, budget, Some(start), s_seed)?;
        let oracle = env.oracle_power();
        students.push(StudentComparison {
            student: a.student,
            teacher,
            ecc: a.ecc,
            qll: normalized_trace(&outcome.subarrays[a.student].outcome, oracle),
            scratch: normalized_trace(&scratch, oracle),
            hard_switch: normalized_trace(&hard_run, oracle),
        });
    }
    Ok(PropagationComparison { outcome, students })
}

/// Builds a library by running policy blending at each focal point in order; the
/// first entry is trained from scratch.
pub fn build_library(
    scene: &Scene,
    dfps: &[Point3],
    blending: &BlendingConfig,
    agent: &AgentConfig,
    budget: u64,
    seed: u64,
) -> Result<PolicyLibrary> {
    let model = scene.model()?;
    let mut library = PolicyLibrary::new();
    for (i, &dfp) in dfps.iter().enumerate() {
        let h = model.at(dfp)?;
        policy_blending(
            &mut library,
            &scene.aperture,
            &h,
            blending,
            agent,
            budget,
            derive_indexed(seed, "library", i),
        )?;
    }
    Ok(library)
}

/// Focal point at distance `d` from the aperture centre, rotated `azimuth` towards
/// the first in-plane axis and `elevation` towards the second.
pub fn focal_point(aperture: &ApertureConfig, d: f64, azimuth: f64, elevation: f64) -> Point3 {
    let n = aperture.normal.unit();
    let (u, v) = aperture.normal.in_plane();
    let dir = n * (elevation.cos() * azimuth.cos()) + u * (elevation.cos() * azimuth.sin()) + v * elevation.sin();
    aperture.center() + dir * d
}

/// `count` focal points with uniform distance and angles inside the room.
pub fn sample_focal_points(scene: &Scene, mc: &MonteCarloConfig, count: usize, seed: u64) -> Result<Vec<Point3>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * (count + 1) {
            return Err(Error::config("Monte-Carlo focal-point ranges lie outside the room"));
        }
        let d = rng.random_range(mc.distance_min_m..=mc.distance_max_m);
        let az = rng.random_range(mc.azimuth_deg[0]..=mc.azimuth_deg[1]).to_radians();
        let el = rng.random_range(mc.elevation_deg[0]..=mc.elevation_deg[1]).to_radians();
        let p = focal_point(&scene.aperture, d, az, el);
        if scene.room.contains(p) {
            out.push(p);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct BlendRun {
    pub components: usize,
    pub outcome: BlendOutcome,
    /// Mean normalized trace over subarrays.
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub dfp: Point3,
    pub scratch: Vec<f64>,
    pub blends: Vec<BlendRun>,
}

#[derive(Clone, Debug)]
pub struct MonteCarloOutcome {
    pub library: PolicyLibrary,
    pub snapshots: Vec<Snapshot>,
}

/// Library of `library_size` random focal points, then for each snapshot focal point
/// a from-scratch run and one blended run per component count. Snapshots blend
/// from the same library and are not appended to it.
pub fn monte_carlo_blend(cfg: &ExperimentConfig) -> Result<MonteCarloOutcome> {
    let mc = &cfg.monte_carlo;
    let scene = &cfg.scene;
    let lib_dfps = sample_focal_points(scene, mc, mc.library_size, derive_seed(cfg.seed, "mc/library-dfps"))?;
    let snap_dfps = sample_focal_points(scene, mc, mc.snapshots, derive_seed(cfg.seed, "mc/snapshot-dfps"))?;
    let library = build_library(
        scene,
        &lib_dfps,
        &cfg.blending,
        &cfg.agent,
        cfg.budgets.library,
        cfg.seed,
    )?;
    let model = scene.model()?;
    let mut snapshots = Vec::with_capacity(snap_dfps.len());
    for (j, &dfp) in snap_dfps.iter().enumerate() {
        let h = model.at(dfp)?;
        let envs = subarray_envs(&scene.aperture, &h, cfg.agent.phase_bits)?;
        let s_seed = derive_indexed(cfg.seed, "snapshot", j);
        let scratch: Vec<Vec<f64>> = envs
            .iter()
            .enumerate()
            .map(|(m, env)| {
                let o = train_subarray(env, &cfg.agent, cfg.budgets.main, None, subarray_seed(s_seed, m))?;
                Ok(normalized_trace(&o, env.oracle_power()))
            })
            .collect::<Result<_>>()?;
        let mut blends = Vec::with_capacity(mc.component_counts.len());
        for &k in &mc.component_counts {
            let bcfg = BlendingConfig {
                components: k,
                ..cfg.blending.clone()
            };
            let (outcome, _) = blend_and_train(
                &library,
                &scene.aperture,
                &h,
                &bcfg,
                &cfg.agent,
                cfg.budgets.main,
                s_seed,
            )?;
            let traces: Vec<Vec<f64>> = outcome
                .subarrays
                .iter()
                .zip(&envs)
                .map(|(o, e)| normalized_trace(o, e.oracle_power()))
                .collect();
            blends.push(BlendRun {
                components: k,
                trace: mean_trace(&traces),
                outcome,
            });
        }
        snapshots.push(Snapshot {
            dfp,
            scratch: mean_trace(&scratch),
            blends,
        });
    }
    Ok(MonteCarloOutcome { library, snapshots })
}

/// Full-aperture oracle PDI split into per-subarray images.
pub fn subarray_oracle_images(scene: &Scene, dfp: Point3) -> Result<Vec<PhaseImage>> {
    let aperture = &scene.aperture;
    let h = scene.channel_at(dfp)?;
    Ok(subarray_envs(aperture, &h, aperture.phase_bits)?
        .iter()
        .map(|e| PhaseImage::from_matrix(&e.oracle()))
        .collect())
}

/// One similarity row per angle: correlation of every subarray's oracle image with
/// the reference subarray rotated by that angle.
pub fn similarity_maps(scene: &Scene, dfp: Point3, reference: usize, theta_deg: &[f64]) -> Result<Vec<Vec<f64>>> {
    let images = subarray_oracle_images(scene, dfp)?;
    let r = images
        .get(reference)
        .ok_or_else(|| Error::domain(format!("reference subarray {reference} out of range")))?;
    theta_deg
        .iter()
        .map(|t| similarity_map(r, &images, t.to_radians()))
        .collect()
}

#[derive(Clone, Debug)]
pub struct PowerMapOutcome {
    pub oracle: BeamfocusingMatrix,
    pub full: PowerMap,
    /// One map per subarray with every other element switched off.
    pub subarrays: Vec<PowerMap>,
}

/// Weights of `w` restricted to subarray `m`.
pub fn subarray_weights(aperture: &ApertureConfig, w: &BeamfocusingMatrix, m: usize) -> Vec<Complex64> {
    let (sr, sc) = (aperture.sub_rows(), aperture.sub_cols());
    let (br, bc) = (m / aperture.subarray_cols, m % aperture.subarray_cols);
    let mut out = w.weights();
    for i in 0..w.rows {
        for j in 0..w.cols {
            if i / sr != br || j / sc != bc {
                out[i * w.cols + j] = Complex64::new(0.0, 0.0);
            }
        }
    }
    out
}

/// Power maps of the full-aperture oracle and of each subarray's share of it.
pub fn oracle_power_maps(scene: &Scene, dfp: Point3, plane: &ReferencePlane) -> Result<PowerMapOutcome> {
    let aperture = &scene.aperture;
    let model = scene.model()?;
    let h = model.at(dfp)?;
    let oracle = csi_oracle(&h, aperture.phase_bits);
    let full = power_density_map(&oracle, dfp, plane, aperture, &model)?;
    let subarrays = (0..aperture.num_subarrays())
        .map(|m| power_density_map_weights(&subarray_weights(aperture, &oracle, m), dfp, plane, aperture, &model))
        .collect::<Result<_>>()?;
    Ok(PowerMapOutcome {
        oracle,
        full,
        subarrays,
    })
}

/// Response correlations between `dfp` and a point `separation` away along the
/// first in-plane axis, for random phase matrices on square apertures of each size.
pub fn orthogonality_probe(
    scene: &Scene,
    dfp: Point3,
    separation: f64,
    sizes: &[usize],
    samples: usize,
    seed: u64,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let base = &scene.aperture;
    let (u, _) = base.normal.in_plane();
    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n || n == 0 {
            return Err(Error::config(format!(
                "orthogonality size {n} is not a nonzero perfect square"
            )));
        }
        let aperture = ApertureConfig {
            rows: side,
            cols: side,
            subarray_rows: 1,
            subarray_cols: 1,
            ..base.clone()
        };
        let model = ChannelModel::new(&aperture, &scene.channel, &scene.room)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_indexed(seed, "orthogonality", n));
        let levels = aperture.levels();
        let mut values = Vec::with_capacity(samples);
        for _ in 0..samples {
            let idx = (0..n).map(|_| rng.random_range(0..levels)).collect();
            let w = BeamfocusingMatrix::new(side, side, aperture.phase_bits, idx)?;
            values.push(response_correlation(dfp, dfp + u * separation, &w, &model)?);
        }
        out.push((n, values));
    }
    Ok(out)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_trace_truncates_to_shortest() {
        let m = mean_trace(&[vec![1.0, 2.0, 3.0], vec![3.0, 4.0]]);
        assert_eq!(m, vec![2.0, 3.0]);
        assert!(mean_trace(&[]).is_empty());
    }

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn focal_point_on_axis() {
        let cfg = ExperimentConfig::desk();
        let a = &cfg.scene.aperture;
        let p = focal_point(a, 1.0, 0.0, 0.0);
        let c = a.center();
        assert!((p.distance(c) - 1.0).abs() < 1e-12);
        assert!((p.y - c.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subarray_weights_zero_elsewhere() {
        let cfg = ExperimentConfig::desk();
        let a = &cfg.scene.aperture;
        let w = BeamfocusingMatrix::uniform(a.rows, a.cols, 3, 1).unwrap();
        let sw = subarray_weights(a, &w, 4);
        let live = sw.iter().filter(|c| c.norm() > 0.0).count();
        assert_eq!(live, a.sub_elements());
        assert!(sw[0].norm() == 0.0);
    }
}
