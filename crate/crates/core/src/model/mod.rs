//! The gated multiple feedback network: configuration, feedback routing,
//! parameter layout and the unrolled forward pass.

mod config;
mod network;
mod params;
mod topology;

pub use config::{deconv_geometry, ModelConfig};
pub use network::{
    forward_step, forward_unroll, gfm_forward, lfeb_forward, rdb_forward, reconstruct, FeedbackBuffer, GfmTrace,
    StepOutput, StepTrace, Unrolled,
};
pub use params::{layout, ParamStore, PRELU_INIT};
pub use topology::{FeedbackMode, FeedbackTopology};
