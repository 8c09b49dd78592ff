use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::info;
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use super::experiments::{
    build_library, censored_convergence, compare_propagation, mean_trace, median, monte_carlo_blend, normalized_trace,
    oracle_power_maps, orthogonality_probe, similarity_maps, subarray_envs, train_baseline,
};
use super::metrics::convergence_iteration;
use crate::beamfocus::{BeamfocusingMatrix, PowerMap};
use crate::error::{Error, Result};
use crate::pdi::PhaseImage;
use crate::seed::{derive_indexed, derive_seed};
use crate::transfer::{policy_blending, PolicyLibrary, SubarrayResult};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const STATUS_FILE: &str = "status.toml";

/// Written once before any result file.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub kind: String,
    pub started_unix_s: u64,
    pub seeds: Vec<SeedRecord>,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedRecord {
    pub label: String,
    pub seed: u64,
}

/// Written after the run finishes or fails.
#[derive(Clone, Debug, Serialize)]
pub struct RunStatus {
    pub status: String,
    pub elapsed_s: f64,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Top-level child seeds for a config.
pub fn seed_ledger(cfg: &ExperimentConfig) -> Vec<SeedRecord> {
    let mut out = vec![SeedRecord {
        label: "master".into(),
        seed: cfg.seed,
    }];
    let m = cfg.scene.aperture.num_subarrays();
    let mut indexed = |label: &str, n: usize| {
        for i in 0..n {
            out.push(SeedRecord {
                label: format!("{label}/{i}"),
                seed: derive_indexed(cfg.seed, label, i),
            });
        }
    };
    match cfg.kind {
        ExperimentKind::TrainBaseline | ExperimentKind::TrainPp | ExperimentKind::Blend => indexed("subarray", m),
        ExperimentKind::MonteCarloBlend => {
            indexed("library", cfg.monte_carlo.library_size);
            indexed("snapshot", cfg.monte_carlo.snapshots);
        }
        ExperimentKind::OrthogonalityProbe => {
            for &n in &cfg.orthogonality.sizes {
                out.push(SeedRecord {
                    label: format!("orthogonality/{n}"),
                    seed: derive_indexed(cfg.seed, "orthogonality", n),
                });
            }
        }
        ExperimentKind::SimilarityMap | ExperimentKind::PowerMap => {}
    }
    if cfg.kind == ExperimentKind::MonteCarloBlend {
        for label in ["mc/library-dfps", "mc/snapshot-dfps"] {
            out.push(SeedRecord {
                label: label.into(),
                seed: derive_seed(cfg.seed, label),
            });
        }
    }
    out
}

/// Collects result files under one directory and remembers their names.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn pdi(&mut self, stem: &str, m: &BeamfocusingMatrix) -> Result<()> {
        let img = PhaseImage::from_matrix(m);
        self.write(&format!("{stem}.csv"), img.to_csv().as_bytes())?;
        self.write(&format!("{stem}.pgm"), &img.to_pgm())
    }

    pub fn note_dir(&mut self, name: &str) {
        self.written.push(format!("{name}/"));
    }
}

/// Runs the experiment, writing the manifest first and the status file last; the
/// status is written even when the experiment fails.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outputs> {
    cfg.validate()?;
    let mut out = Outputs::new(out_dir)?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        kind: cfg.kind.as_str().to_string(),
        started_unix_s: started,
        seeds: seed_ledger(cfg),
        config: cfg.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::config(e.to_string()))?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;

    let clock = Instant::now();
    info!("running {} into {}", cfg.kind.as_str(), out_dir.display());
    let result = dispatch(cfg, &mut out);
    let status = RunStatus {
        status: if result.is_ok() { "ok" } else { "failed" }.into(),
        elapsed_s: clock.elapsed().as_secs_f64(),
        outputs: out.files().to_vec(),
        error: result.as_ref().err().map(|e| e.to_string()),
    };
    let text = toml::to_string(&status).map_err(|e| Error::config(e.to_string()))?;
    let status_path = out_dir.join(STATUS_FILE);
    fs::write(&status_path, text).map_err(|e| Error::io(&status_path, e))?;
    result.map(|_| out)
}

fn dispatch(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    match cfg.kind {
        ExperimentKind::TrainBaseline => {
            let results = train_baseline(cfg)?;
            write_subarray_runs(cfg, out, &results)
        }
        ExperimentKind::TrainPp => run_pp(cfg, out),
        ExperimentKind::Blend => run_blend(cfg, out),
        ExperimentKind::SimilarityMap => run_similarity(cfg, out),
        ExperimentKind::PowerMap => run_power_map(cfg, out),
        ExperimentKind::MonteCarloBlend => run_monte_carlo(cfg, out),
        ExperimentKind::OrthogonalityProbe => run_orthogonality(cfg, out),
    }
}

fn trace_csv(results: &[SubarrayResult]) -> String {
    let mut s = String::from("iteration,subarray,power,normalized,reward\n");
    for r in results {
        for m in &r.outcome.trace {
            let _ = writeln!(
                s,
                "{},{},{:e},{},{}",
                m.iteration,
                r.index,
                m.power,
                m.power / r.oracle_power,
                m.reward
            );
        }
    }
    s
}

fn mean_trace_csv(trace: &[f64]) -> String {
    let mut s = String::from("iteration,normalized\n");
    for (i, v) in trace.iter().enumerate() {
        let _ = writeln!(s, "{},{v}", i + 1);
    }
    s
}

fn write_subarray_runs(cfg: &ExperimentConfig, out: &mut Outputs, results: &[SubarrayResult]) -> Result<()> {
    let conv = &cfg.convergence;
    out.write("trace.csv", trace_csv(results).as_bytes())?;
    let traces: Vec<Vec<f64>> = results
        .iter()
        .map(|r| normalized_trace(&r.outcome, r.oracle_power))
        .collect();
    out.write("mean_trace.csv", mean_trace_csv(&mean_trace(&traces)).as_bytes())?;
    let mut summary = String::from("subarray,mode,final_power,oracle_power,normalized_final,convergence_iteration\n");
    for (r, t) in results.iter().zip(&traces) {
        let it = convergence_iteration(t, conv.fraction, conv.window)
            .map(|i| i.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            summary,
            "{},{},{:e},{:e},{},{it}",
            r.index,
            r.mode.as_str(),
            r.outcome.final_power,
            r.oracle_power,
            r.outcome.final_power / r.oracle_power
        );
        out.pdi(&format!("pdi/subarray-{:04}", r.index), &r.outcome.final_pdi)?;
    }
    out.write("summary.csv", summary.as_bytes())
}

fn run_pp(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let conv = &cfg.convergence;
    if cfg.compare_baselines {
        let cmp = compare_propagation(
            &cfg.scene,
            cfg.dfp_m,
            &cfg.propagation,
            &cfg.agent,
            cfg.budgets.main,
            cfg.seed,
        )?;
        let mut s = String::from("student,teacher,ecc,qll_iteration,scratch_iteration,hard_switch_iteration\n");
        for st in &cmp.students {
            let c = |t: &[f64]| censored_convergence(t, conv.fraction, conv.window);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                st.student,
                st.teacher,
                st.ecc,
                c(&st.qll),
                c(&st.scratch),
                c(&st.hard_switch)
            );
        }
        out.write("comparison.csv", s.as_bytes())?;
        let mut traces = String::from("iteration,student,qll,scratch,hard_switch\n");
        for st in &cmp.students {
            for i in 0..st.qll.len() {
                let _ = writeln!(
                    traces,
                    "{},{},{},{},{}",
                    i + 1,
                    st.student,
                    st.qll[i],
                    st.scratch[i],
                    st.hard_switch[i]
                );
            }
        }
        out.write("comparison_traces.csv", traces.as_bytes())?;
        write_pp(cfg, out, &cmp.outcome)
    } else {
        let h = cfg.scene.channel_at(cfg.dfp_m)?;
        let outcome = crate::transfer::policy_propagation(
            &cfg.scene.aperture,
            &h,
            &cfg.propagation,
            &cfg.agent,
            cfg.budgets.main,
            cfg.seed,
        )?;
        write_pp(cfg, out, &outcome)
    }
}

fn write_pp(cfg: &ExperimentConfig, out: &mut Outputs, outcome: &crate::transfer::PropagationOutcome) -> Result<()> {
    out.write("propagation_log.csv", outcome.log_csv().as_bytes())?;
    out.pdi("final_pdi", &outcome.matrix)?;
    write_subarray_runs(cfg, out, &outcome.subarrays)
}

fn load_or_build_library(cfg: &ExperimentConfig) -> Result<PolicyLibrary> {
    match &cfg.library_path {
        Some(p) if p.join("library.toml").exists() => PolicyLibrary::load(p),
        _ => build_library(
            &cfg.scene,
            &cfg.library_dfps_m,
            &cfg.blending,
            &cfg.agent,
            cfg.budgets.library,
            derive_seed(cfg.seed, "library"),
        ),
    }
}

fn run_blend(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let mut library = load_or_build_library(cfg)?;
    let aperture = &cfg.scene.aperture;
    let h = cfg.scene.channel_at(cfg.dfp_m)?;
    let outcome = policy_blending(
        &mut library,
        aperture,
        &h,
        &cfg.blending,
        &cfg.agent,
        cfg.budgets.main,
        cfg.seed,
    )?;
    let mut s = String::from("component,dfp_x_m,dfp_y_m,dfp_z_m,probe_power,weight\n");
    for ((&c, p), w) in outcome
        .components
        .iter()
        .zip(&outcome.probe_powers)
        .zip(&outcome.weights)
    {
        let d = library.entries()[c].dfp;
        let _ = writeln!(s, "{c},{},{},{},{p},{w}", d.x, d.y, d.z);
    }
    out.write("components.csv", s.as_bytes())?;
    out.pdi("final_pdi", &outcome.matrix)?;
    let envs = subarray_envs(aperture, &h, cfg.agent.phase_bits)?;
    let results: Vec<SubarrayResult> = outcome
        .subarrays
        .into_iter()
        .zip(&envs)
        .enumerate()
        .map(|(m, (o, e))| SubarrayResult {
            index: m,
            mode: crate::transfer::TrainingMode::Qll,
            oracle_power: e.oracle_power(),
            outcome: o,
        })
        .collect();
    write_subarray_runs(cfg, out, &results)?;
    let dir = out.dir().join("library");
    library.save(&dir)?;
    out.note_dir("library");
    Ok(())
}

fn run_similarity(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let a = &cfg.scene.aperture;
    let maps = similarity_maps(
        &cfg.scene,
        cfg.dfp_m,
        cfg.similarity.reference,
        &cfg.similarity.theta_deg,
    )?;
    let mut s = String::from("theta_deg,subarray,module_row,module_col,correlation\n");
    for (theta, map) in cfg.similarity.theta_deg.iter().zip(&maps) {
        for (m, v) in map.iter().enumerate() {
            let _ = writeln!(s, "{theta},{m},{},{},{v}", m / a.subarray_cols, m % a.subarray_cols);
        }
    }
    out.write("similarity.csv", s.as_bytes())?;
    let h = cfg.scene.channel_at(cfg.dfp_m)?;
    out.pdi("oracle_pdi", &crate::beamfocus::csi_oracle(&h, a.phase_bits))
}

fn power_map_csv(map: &PowerMap) -> String {
    let n = map.plane.resolution;
    let mut s = String::from("column,row,offset_u_m,offset_v_m,power\n");
    for b in 0..n {
        for a in 0..n {
            let (du, dv) = map.plane.offset(a, b);
            let _ = writeln!(s, "{a},{b},{du},{dv},{:e}", map.values[b * n + a]);
        }
    }
    s
}

fn run_power_map(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let maps = oracle_power_maps(&cfg.scene, cfg.dfp_m, &cfg.power_map.plane)?;
    out.write("power_map.csv", power_map_csv(&maps.full).as_bytes())?;
    out.pdi("oracle_pdi", &maps.oracle)?;
    let mut s = String::from("scope,eta,radius_m\n");
    for &eta in &cfg.power_map.etas {
        let _ = writeln!(s, "full,{eta},{}", maps.full.radius_containing(eta)?);
    }
    for (m, map) in maps.subarrays.iter().enumerate() {
        for &eta in &cfg.power_map.etas {
            let _ = writeln!(s, "subarray-{m},{eta},{}", map.radius_containing(eta)?);
        }
    }
    out.write("bfr.csv", s.as_bytes())
}

fn run_monte_carlo(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let conv = &cfg.convergence;
    let mc = monte_carlo_blend(cfg)?;
    let mut lib = String::from("entry,dfp_x_m,dfp_y_m,dfp_z_m,achieved_power\n");
    for (i, e) in mc.library.entries().iter().enumerate() {
        let _ = writeln!(lib, "{i},{},{},{},{}", e.dfp.x, e.dfp.y, e.dfp.z, e.achieved_power);
    }
    out.write("library.csv", lib.as_bytes())?;
    let mut s = String::from("snapshot,dfp_x_m,dfp_y_m,dfp_z_m,method,components,convergence_iteration,final_mean\n");
    let mut traces = String::from("snapshot,method,iteration,normalized\n");
    for (j, snap) in mc.snapshots.iter().enumerate() {
        let d = snap.dfp;
        let mut row = |method: &str, k: usize, trace: &[f64]| {
            let it = censored_convergence(trace, conv.fraction, conv.window);
            let tail = super::metrics::plateau(trace, conv.window);
            let _ = writeln!(s, "{j},{},{},{},{method},{k},{it},{tail}", d.x, d.y, d.z);
            for (i, v) in trace.iter().enumerate() {
                let _ = writeln!(traces, "{j},{method}-{k},{},{v}", i + 1);
            }
        };
        row("scratch", 0, &snap.scratch);
        for b in &snap.blends {
            row("blend", b.components, &b.trace);
        }
    }
    out.write("convergence.csv", s.as_bytes())?;
    out.write("traces.csv", traces.as_bytes())
}

fn run_orthogonality(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let o = &cfg.orthogonality;
    let rows = orthogonality_probe(&cfg.scene, cfg.dfp_m, o.separation_m, &o.sizes, o.samples, cfg.seed)?;
    let mut s = String::from("elements,sample,correlation\n");
    let mut summary = String::from("elements,median_correlation\n");
    for (n, values) in &rows {
        for (i, v) in values.iter().enumerate() {
            let _ = writeln!(s, "{n},{i},{v}");
        }
        let _ = writeln!(summary, "{n},{}", median(values));
    }
    out.write("orthogonality.csv", s.as_bytes())?;
    out.write("orthogonality_summary.csv", summary.as_bytes())
}
