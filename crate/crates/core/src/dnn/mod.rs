//! Dense feed-forward networks: batched forward and reverse passes, Adam with
//! per-layer step sizes, target-network soft updates, parameter blending, and a
//! float32 on-disk format.

mod io;
mod network;

pub use io::{decode_network, encode_network, FORMAT_TAG};
pub use network::{
    actor_specs, blend_params, build_actor, build_critic, critic_specs, Backward, DenseGrad, Gradients, LayerSpec,
    LearningRateProfile, Network, Tape,
};
