//! SGC, EGC, LGC and hLGC: parameter containers, forward passes, analytic
//! gradients and checkpoints.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::Checkpoint;
pub use forward::{
    egc_coefficients, forward, forward_egc, forward_hlgc, forward_lgc, forward_sgc, forward_terms, gradients,
    gradients_terms, ForwardTrace, HopTrace, Intermediates,
};
pub use params::{gate_hidden_width, init_params, Gate, ModelParams, Variant};
