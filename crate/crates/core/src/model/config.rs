use crate::error::{Error, Result};
use crate::tensor::ConvGeometry;

/// Architecture hyper-parameters of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Residual dense blocks per time step (B).
    pub blocks: usize,
    /// Unrolled time steps (T).
    pub steps: usize,
    /// Kernels in the first convolution (C0).
    pub first_channels: usize,
    /// Kernels in every other hidden layer (C).
    pub channels: usize,
    /// Output image channels.
    pub out_channels: usize,
    pub scale: usize,
    /// Densely connected 3×3 convolutions per RDB.
    pub rdb_layers: usize,
    /// Channels added by each dense convolution.
    pub growth: usize,
    pub residual_scale: f64,
    /// With the gate unit removed the refinement unit consumes the raw
    /// concatenation of the feedback features and the low-level feature.
    pub gate_unit: bool,
    /// Stop gradients from flowing through the feedback connections.
    pub detach_feedback: bool,
}

impl ModelConfig {
    /// B RDBs with C kernels, growth rate C and the standard block layout.
    pub fn new(blocks: usize, steps: usize, first_channels: usize, channels: usize, scale: usize) -> Self {
        ModelConfig {
            blocks,
            steps,
            first_channels,
            channels,
            out_channels: 3,
            scale,
            rdb_layers: 8,
            growth: channels,
            residual_scale: 0.2,
            gate_unit: true,
            detach_feedback: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.blocks == 0 {
            return fail("blocks (B) must be at least 1".into());
        }
        if self.steps == 0 {
            return fail("steps (T) must be at least 1".into());
        }
        if !(2..=4).contains(&self.scale) {
            return fail(format!("scale must be 2, 3 or 4, got {}", self.scale));
        }
        if self.out_channels != 3 {
            return fail(format!("out_channels must be 3 for RGB, got {}", self.out_channels));
        }
        if self.first_channels == 0 || self.channels == 0 || self.growth == 0 || self.rdb_layers == 0 {
            return fail("channel counts and rdb_layers must be positive".into());
        }
        if !(self.residual_scale > 0.0 && self.residual_scale <= 1.0) {
            return fail(format!("residual_scale must lie in (0, 1], got {}", self.residual_scale));
        }
        Ok(())
    }

    /// Transposed-convolution geometry of the reconstruction block.
    pub fn deconv_geometry(&self) -> Result<ConvGeometry> {
        deconv_geometry(self.scale)
    }
}

/// ×2: k6/s2/p2, ×3: k7/s3/p2, ×4: k8/s4/p2. Each maps H to exactly scale·H.
pub fn deconv_geometry(scale: usize) -> Result<ConvGeometry> {
    match scale {
        2 => Ok(ConvGeometry::square(6, 2, 2)),
        3 => Ok(ConvGeometry::square(7, 3, 2)),
        4 => Ok(ConvGeometry::square(8, 4, 2)),
        s => Err(Error::UnsupportedScale(s)),
    }
}
