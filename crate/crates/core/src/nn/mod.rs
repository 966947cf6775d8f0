//! Control-field network: feature maps, a small MLP with exact first and
//! mixed second derivatives, and Adam.

mod adam;
mod arch;
mod objective;
mod tape;

pub use adam::{adam_step, AdamState};
pub use arch::{init_params, Activation, FeatureMap, InitScheme, MlpArchitecture, MlpParams};
pub use objective::{loss_gradient, loss_value, LossGradient, PointwiseObjective};
pub use tape::{
    backward, divergence_v, forward_batch, forward_tape, forward_with_divergence_batch,
    mlp_forward, InputDirection, Tape,
};
