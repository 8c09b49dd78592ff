//! Subarray policy propagation, focal-point policy blending and the policy library.

mod blending;
mod library;
mod propagation;
mod qll;

pub use blending::{
    blend_and_train, blend_policies, blend_weights, policy_blending, select_components, train_entry, BlendOutcome,
    BlendingConfig, ComponentStrategy,
};
pub use library::{LibraryEntry, PolicyLibrary, LIBRARY_VERSION};
pub use propagation::{
    center_subarrays, nearest_teachers, policy_propagation, probe_teacher, qll_policy, subarray_seed, Assignment,
    EarlyExit, ProbeRecord, ProbeResult, PropagationConfig, PropagationOutcome, SeedPlacement, SubarrayResult,
    TrainingMode,
};
pub use qll::{qll_rates, qll_rates_for, QllSchedule};
