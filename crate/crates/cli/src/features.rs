//! Channel-averaged feature maps saved as 8-bit grayscale PNGs.

use std::path::{Path, PathBuf};

use gmfn::imaging::{load_image, save_image, Domain, Image};
use gmfn::tensor::{ops, Backend, Tensor};

use crate::checkpoint::Checkpoint;
use crate::commands::{create_dir, run_network};
use crate::error::{CliError, Result};

/// A named intermediate feature at time step `t` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tap {
    /// `F_L{b}_t{t}`: RDB `b` output, or the LFEB output for `b = 0`.
    Low { b: usize, t: usize },
    /// `F_H{b}_t{t}`: gate-unit output of the GFM before RDB `b`.
    Gated { b: usize, t: usize },
    /// `refined_{b}_t{t}`: refinement-unit output of that GFM.
    Refined { b: usize, t: usize },
}

fn split_step(s: &str) -> Option<(usize, usize)> {
    let (b, t) = s.split_once("_t")?;
    Some((b.parse().ok()?, t.parse().ok()?))
}

impl std::str::FromStr for Tap {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let parsed = if let Some(r) = s.strip_prefix("F_L") {
            split_step(r).map(|(b, t)| Tap::Low { b, t })
        } else if let Some(r) = s.strip_prefix("F_H") {
            split_step(r).map(|(b, t)| Tap::Gated { b, t })
        } else if let Some(r) = s.strip_prefix("refined_") {
            split_step(r).map(|(b, t)| Tap::Refined { b, t })
        } else {
            None
        };
        parsed.filter(|tap| tap.step() >= 1).ok_or_else(|| CliError::UnknownTap(s.to_string()))
    }
}

impl std::fmt::Display for Tap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tap::Low { b, t } => write!(f, "F_L{b}_t{t}"),
            Tap::Gated { b, t } => write!(f, "F_H{b}_t{t}"),
            Tap::Refined { b, t } => write!(f, "refined_{b}_t{t}"),
        }
    }
}

impl Tap {
    fn step(self) -> usize {
        match self {
            Tap::Low { t, .. } | Tap::Gated { t, .. } | Tap::Refined { t, .. } => t,
        }
    }
}

/// The panels of the feature figure for GFM 1 at t = 2: the incoming
/// low-level feature, the step-1 features it reads, F_H and the refined output.
pub fn default_taps(ck: &Checkpoint) -> Result<Vec<Tap>> {
    let topo = ck.config.topology()?;
    let Some(&b) = topo.refined_blocks().first() else {
        return Ok(vec![Tap::Low { b: 0, t: 1 }]);
    };
    let mut taps = vec![Tap::Low { b: b - 1, t: 2 }];
    taps.extend(topo.sources_for(b).into_iter().map(|j| Tap::Low { b: j, t: 1 }));
    if ck.config.model.gate_unit {
        taps.push(Tap::Gated { b, t: 2 });
    }
    taps.push(Tap::Refined { b, t: 2 });
    Ok(taps)
}

/// Min-max normalization of the channel mean to [0, 255]; a constant map
/// becomes uniform 128.
pub fn feature_to_gray(feature: &Tensor<f32>) -> Result<Image> {
    let mean = ops::channel_mean(feature);
    let s = mean.shape();
    let plane = &mean.data()[..s.plane()];
    let (lo, hi) = plane.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = (hi - lo) as f64;
    let data = plane
        .iter()
        .map(|&v| if range > 0.0 { ((v - lo) as f64 / range * 255.0).round() } else { 128.0 })
        .collect();
    Ok(Image::new(1, s.h, s.w, Domain::Byte, data)?)
}

/// Runs the checkpoint on `image` (treated as the LR input) and writes
/// `<tap>.png` for every tap into `out`.
pub fn cmd_dump_features(ck: &Checkpoint, image: &Path, taps: &[Tap], out: &Path) -> Result<Vec<PathBuf>> {
    let blocks = ck.config.model.blocks;
    let steps = ck.config.model.steps;
    for tap in taps {
        let (b, t, min_b) = match *tap {
            Tap::Low { b, t } => (b, t, 0),
            Tap::Gated { b, t } | Tap::Refined { b, t } => (b, t, 1),
        };
        if t > steps || b < min_b || b > blocks {
            return Err(CliError::UnknownTap(tap.to_string()));
        }
    }
    let lr = load_image(image)?;
    let (be, run) = run_network(&ck.config, &ck.params, &lr)?;
    create_dir(out)?;
    let mut written = Vec::with_capacity(taps.len());
    for tap in taps {
        let step = &run.steps[tap.step() - 1];
        let value = match *tap {
            Tap::Low { b, .. } => Some(&step.features[b]),
            Tap::Gated { b, .. } => step.gfms.get(&b).and_then(|g| g.gated.as_ref()),
            Tap::Refined { b, .. } => step.gfms.get(&b).map(|g| &g.refined),
        };
        let value = value.ok_or_else(|| CliError::UnknownTap(tap.to_string()))?;
        let path = out.join(format!("{tap}.png"));
        save_image(&feature_to_gray(be.value(value))?, &path)?;
        written.push(path);
    }
    Ok(written)
}
