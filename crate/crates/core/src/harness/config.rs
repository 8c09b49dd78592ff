use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::DEFAULT_WINDOW;
use crate::beamfocus::ReferencePlane;
use crate::error::{Error, Result};
use crate::geometry::{ApertureConfig, ChannelConfig, Point3, RoomConfig, Scene, Surface};
use crate::td3::AgentConfig;
use crate::transfer::{BlendingConfig, PropagationConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    TrainBaseline,
    TrainPp,
    Blend,
    SimilarityMap,
    PowerMap,
    MonteCarloBlend,
    OrthogonalityProbe,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::TrainBaseline => "train-baseline",
            ExperimentKind::TrainPp => "train-pp",
            ExperimentKind::Blend => "blend",
            ExperimentKind::SimilarityMap => "similarity-map",
            ExperimentKind::PowerMap => "power-map",
            ExperimentKind::MonteCarloBlend => "monte-carlo-blend",
            ExperimentKind::OrthogonalityProbe => "orthogonality-probe",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    /// Iterations per subarray for every training run.
    pub main: u64,
    /// Iterations per subarray when building library entries.
    pub library: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            main: 100_000,
            library: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Target as a fraction of the reference plateau.
    pub fraction: f64,
    pub window: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            fraction: 0.9,
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub library_size: usize,
    pub snapshots: usize,
    pub distance_min_m: f64,
    pub distance_max_m: f64,
    /// Angle from the aperture normal towards the first in-plane axis.
    pub azimuth_deg: [f64; 2],
    /// Angle from the aperture normal towards the second in-plane axis.
    pub elevation_deg: [f64; 2],
    /// Blending component counts compared against training from scratch.
    pub component_counts: Vec<usize>,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            library_size: 50,
            snapshots: 10,
            distance_min_m: 1.0,
            distance_max_m: 2.0,
            azimuth_deg: [-30.0, 45.0],
            elevation_deg: [-15.0, 15.0],
            component_counts: vec![1, 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    /// Reference subarray index.
    pub reference: usize,
    pub theta_deg: Vec<f64>,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            reference: 0,
            theta_deg: vec![0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerMapConfig {
    pub plane: ReferencePlane,
    pub etas: Vec<f64>,
}

impl Default for PowerMapConfig {
    fn default() -> Self {
        PowerMapConfig {
            plane: ReferencePlane::default(),
            etas: vec![0.5, 0.9],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrthogonalityConfig {
    pub separation_m: f64,
    /// Element counts; each must be a perfect square.
    pub sizes: Vec<usize>,
    pub samples: usize,
}

impl Default for OrthogonalityConfig {
    fn default() -> Self {
        OrthogonalityConfig {
            separation_m: 0.1,
            sizes: vec![16, 64, 256],
            samples: 50,
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub dfp_m: Point3,
    pub scene: Scene,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    /// Subarrays trained by `train-baseline`; all when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subarrays: Vec<usize>,
    #[serde(default)]
    pub propagation: PropagationConfig,
    /// `train-pp` also trains scratch and hard-switch baselines for every
    /// transferred student.
    #[serde(default)]
    pub compare_baselines: bool,
    #[serde(default)]
    pub blending: BlendingConfig,
    /// Existing library used by `blend`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library_path: Option<PathBuf>,
    /// Focal points trained into a fresh library by `blend` when no path is given.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub library_dfps_m: Vec<Point3>,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub similarity: SimilarityConfig,
    #[serde(default)]
    pub power_map: PowerMapConfig,
    #[serde(default)]
    pub orthogonality: OrthogonalityConfig,
}

fn reference_room() -> RoomConfig {
    RoomConfig {
        dimensions_m: [4.0, 4.0, 3.0],
        reflection_coefficient: 0.1,
        reflection_phase_seed: 1,
        surfaces: Surface::ALL.to_vec(),
    }
}

fn reference_channel() -> ChannelConfig {
    ChannelConfig {
        attenuation: 1.0,
        path_loss_exponent: 2.7,
        hardware_phase_mismatch_std_rad: 0.0,
        mismatch_seed: 0,
    }
}

impl ExperimentConfig {
    /// Full-scale reference settings: 10x10 modules of 6x6 elements at 28 GHz.
    pub fn full_scale() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::TrainPp,
            seed: 1,
            output_dir: None,
            dfp_m: Point3::new(1.0, 1.5, 1.4),
            scene: Scene {
                aperture: ApertureConfig::tiled(10, 10, 6, 6, Point3::new(1.0, 0.0, 1.5), 28e9, 3),
                room: reference_room(),
                channel: reference_channel(),
            },
            agent: AgentConfig::default(),
            budgets: Budgets::default(),
            convergence: ConvergenceConfig::default(),
            subarrays: Vec::new(),
            propagation: PropagationConfig::default(),
            compare_baselines: false,
            blending: BlendingConfig::default(),
            library_path: None,
            library_dfps_m: Vec::new(),
            monte_carlo: MonteCarloConfig::default(),
            similarity: SimilarityConfig::default(),
            power_map: PowerMapConfig::default(),
            orthogonality: OrthogonalityConfig::default(),
        }
    }

    /// Laptop-scale settings: 3x3 modules of 4x4 elements, 20k-iteration budgets and
    /// a focal point inside the radiating near field of the smaller aperture.
    pub fn desk() -> Self {
        let t = Self::full_scale();
        ExperimentConfig {
            dfp_m: Point3::new(1.38, 0.5, 1.53),
            scene: Scene {
                aperture: ApertureConfig::tiled(3, 3, 4, 4, Point3::new(1.0, 0.0, 1.5), 28e9, 3),
                ..t.scene
            },
            agent: AgentConfig::desk(),
            budgets: Budgets {
                main: 20_000,
                library: 20_000,
            },
            monte_carlo: MonteCarloConfig {
                library_size: 10,
                ..MonteCarloConfig::default()
            },
            ..t
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment configs always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.agent.validate()?;
        if self.agent.phase_bits != self.scene.aperture.phase_bits {
            return Err(Error::config(format!(
                "agent phase_bits {} differs from aperture phase_bits {}",
                self.agent.phase_bits, self.scene.aperture.phase_bits
            )));
        }
        self.propagation.validate()?;
        self.blending.validate()?;
        self.power_map.plane.validate()?;
        if !self.dfp_m.is_finite() {
            return Err(Error::config("focal point must be finite"));
        }
        let m = self.scene.aperture.num_subarrays();
        if let Some(bad) = self.subarrays.iter().find(|&&s| s >= m) {
            return Err(Error::config(format!("subarray {bad} outside 0..{m}")));
        }
        if self.similarity.reference >= m {
            return Err(Error::config(format!("reference subarray outside 0..{m}")));
        }
        if !(self.convergence.fraction > 0.0) || self.convergence.window == 0 {
            return Err(Error::config("convergence fraction and window must be positive"));
        }
        let mc = &self.monte_carlo;
        if !(mc.distance_min_m > 0.0 && mc.distance_max_m >= mc.distance_min_m) {
            return Err(Error::config("Monte-Carlo distance range must be positive and ordered"));
        }
        if mc.component_counts.contains(&0) {
            return Err(Error::config("component counts must be at least 1"));
        }
        if let Some(bad) = self.power_map.etas.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(Error::config(format!("power fraction {bad} outside (0, 1]")));
        }
        let o = &self.orthogonality;
        if let Some(bad) = o.sizes.iter().find(|&&n| {
            let r = (n as f64).sqrt().round() as usize;
            n == 0 || r * r != n
        }) {
            return Err(Error::config(format!(
                "orthogonality size {bad} is not a nonzero perfect square"
            )));
        }
        Ok(())
    }
}
