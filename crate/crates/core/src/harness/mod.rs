//! Experiment configuration, orchestration and result files.

mod config;
mod experiments;
mod metrics;
mod run;

pub use config::{
    Budgets, ConvergenceConfig, ExperimentConfig, ExperimentKind, MonteCarloConfig, OrthogonalityConfig,
    PowerMapConfig, SimilarityConfig,
};
pub use experiments::{
    build_library, censored_convergence, compare_propagation, focal_point, mean_trace, median, monte_carlo_blend,
    normalized_trace, oracle_power_maps, orthogonality_probe, sample_focal_points, similarity_maps, subarray_envs,
    subarray_oracle_images, subarray_weights, train_baseline, BlendRun, MonteCarloOutcome, PowerMapOutcome,
    PropagationComparison, Snapshot, StudentComparison,
};
pub use metrics::{convergence_iteration, iterations_to_level, plateau, trailing_means, DEFAULT_WINDOW};
pub use run::{run_experiment, seed_ledger, Outputs, RunManifest, RunStatus, SeedRecord, MANIFEST_FILE, STATUS_FILE};
