//! Forward pass of the unrolled network, written once against [`Backend`].

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{FeedbackMode, FeedbackTopology, ModelConfig};
use crate::tensor::{Backend, ConvGeometry, Real};

/// Step t-1 RDB outputs carried into step t, keyed by RDB index.
pub type FeedbackBuffer<V> = BTreeMap<usize, V>;

/// Intermediate results of one GFM application.
#[derive(Clone, Debug)]
pub struct GfmTrace<V> {
    /// F_H: gate-unit output (absent when the gate unit is removed).
    pub gated: Option<V>,
    /// Refinement-unit output fed to the RDB.
    pub refined: V,
    /// RDB indices of the step t-1 features this module consumed.
    pub sources: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct StepTrace<V> {
    /// `features[b]` is F_{L,b}; index 0 is the LFEB output.
    pub features: Vec<V>,
    pub gfms: BTreeMap<usize, GfmTrace<V>>,
}

pub struct StepOutput<V> {
    pub sr: V,
    pub buffer: FeedbackBuffer<V>,
    pub trace: StepTrace<V>,
}

pub struct Unrolled<V> {
    /// One SR image per time step.
    pub outputs: Vec<V>,
    pub steps: Vec<StepTrace<V>>,
}

fn conv<F: Real, B: Backend<F>>(be: &mut B, x: &B::Value, prefix: &str, geom: ConvGeometry) -> Result<B::Value> {
    let w = be.param(&format!("{prefix}.weight"))?;
    let b = be.param(&format!("{prefix}.bias"))?;
    be.conv2d(x, &w, Some(&b), geom)
}

fn prelu<F: Real, B: Backend<F>>(be: &mut B, x: &B::Value, name: &str) -> Result<B::Value> {
    let a = be.param(name)?;
    be.prelu(x, &a)
}

fn expect_channels<F: Real, B: Backend<F>>(be: &B, x: &B::Value, op: &'static str, want: usize) -> Result<()> {
    let s = be.value(x).shape();
    if s.c != want {
        return Err(Error::Shape { op, detail: format!("input {s} has {} channels, expected {want}", s.c) });
    }
    Ok(())
}

/// Initial low-level feature extraction: 3×3 conv (C0) + PReLU, 1×1 conv (C) + PReLU.
pub fn lfeb_forward<F: Real, B: Backend<F>>(be: &mut B, lr: &B::Value) -> Result<B::Value> {
    expect_channels(be, lr, "lfeb", 3)?;
    let h = conv(be, lr, "lfeb.conv1", ConvGeometry::same(3))?;
    let h = prelu(be, &h, "lfeb.act1.alpha")?;
    let h = conv(be, &h, "lfeb.conv2", ConvGeometry::same(1))?;
    prelu(be, &h, "lfeb.act2.alpha")
}

/// Residual dense block `b`: densely connected 3×3 convs with PReLU, a 1×1
/// local fusion without activation, and a scaled residual connection.
pub fn rdb_forward<F: Real, B: Backend<F>>(
    be: &mut B,
    config: &ModelConfig,
    b: usize,
    x: &B::Value,
) -> Result<B::Value> {
    expect_channels(be, x, "rdb", config.channels)?;
    let mut dense = x.clone();
    for i in 1..=config.rdb_layers {
        let y = conv(be, &dense, &format!("rdb.{b}.conv.{i}"), ConvGeometry::same(3))?;
        let y = prelu(be, &y, &format!("rdb.{b}.act.{i}.alpha"))?;
        dense = be.concat(&[dense, y])?;
    }
    let fused = conv(be, &dense, &format!("rdb.{b}.fuse"), ConvGeometry::same(1))?;
    let fused = be.scale(&fused, F::lit(config.residual_scale));
    be.add(x, &fused)
}

/// Gated feedback module before RDB `b`: the gate unit compresses the
/// concatenated step t-1 features into F_H, the refinement unit fuses
/// `[F_H, low]` back to C channels.
pub fn gfm_forward<F: Real, B: Backend<F>>(
    be: &mut B,
    config: &ModelConfig,
    topology: &FeedbackTopology,
    b: usize,
    buffer: &FeedbackBuffer<B::Value>,
    low: &B::Value,
) -> Result<GfmTrace<B::Value>> {
    let sources = topology.sources_for(b);
    if sources.is_empty() {
        return Err(Error::Topology(format!("RDB {b} has no feedback sources")));
    }
    let mut feedback = Vec::with_capacity(sources.len() + 1);
    for j in &sources {
        let v = buffer
            .get(j)
            .ok_or_else(|| Error::Topology(format!("feedback buffer lacks F_L,{j} needed by GFM {b}")))?;
        feedback.push(v.clone());
    }
    let (gated, refine_in) = if config.gate_unit {
        let hi = if feedback.len() == 1 { feedback.pop().expect("one source") } else { be.concat(&feedback)? };
        let g = conv(be, &hi, &format!("gfm.{b}.gate"), ConvGeometry::same(1))?;
        let g = prelu(be, &g, &format!("gfm.{b}.gate_act.alpha"))?;
        let cat = be.concat(&[g.clone(), low.clone()])?;
        (Some(g), cat)
    } else {
        feedback.push(low.clone());
        (None, be.concat(&feedback)?)
    };
    let r = conv(be, &refine_in, &format!("gfm.{b}.refine"), ConvGeometry::same(1))?;
    let refined = prelu(be, &r, &format!("gfm.{b}.refine_act.alpha"))?;
    Ok(GfmTrace { gated, refined, sources })
}

/// Reconstruction block: deconv + PReLU, 3×3 conv to RGB, plus the
/// bilinearly upscaled LR image.
pub fn reconstruct<F: Real, B: Backend<F>>(
    be: &mut B,
    config: &ModelConfig,
    deep: &B::Value,
    lr: &B::Value,
) -> Result<B::Value> {
    let geom = config.deconv_geometry()?;
    let w = be.param("rb.deconv.weight")?;
    let bias = be.param("rb.deconv.bias")?;
    let up = be.conv_transpose2d(deep, &w, Some(&bias), geom)?;
    let up = prelu(be, &up, "rb.deconv_act.alpha")?;
    let residual = conv(be, &up, "rb.conv", ConvGeometry::same(3))?;
    let base = be.bilinear(lr, config.scale)?;
    let (rs, bs) = (be.value(&residual).shape(), be.value(&base).shape());
    if rs != bs {
        return Err(Error::Shape {
            op: "reconstruct",
            detail: format!("deconvolution branch gives {rs}, interpolation gives {bs}"),
        });
    }
    be.add(&residual, &base)
}

/// One time step. `buffer` must be empty exactly when `t == 1` (or when the
/// topology has no feedback at all).
pub fn forward_step<F: Real, B: Backend<F>>(
    be: &mut B,
    config: &ModelConfig,
    topology: &FeedbackTopology,
    lr: &B::Value,
    buffer: &FeedbackBuffer<B::Value>,
    t: usize,
) -> Result<StepOutput<B::Value>> {
    if t == 0 {
        return Err(Error::Config("time steps are numbered from 1".into()));
    }
    let routed = topology.mode != FeedbackMode::None && !topology.buffer_sources().is_empty();
    if t == 1 && !buffer.is_empty() {
        return Err(Error::Topology("feedback buffer must be empty at t = 1".into()));
    }
    if t > 1 && routed && buffer.is_empty() {
        return Err(Error::Topology(format!("feedback buffer is empty at t = {t}")));
    }

    let mut features = Vec::with_capacity(config.blocks + 1);
    features.push(lfeb_forward(be, lr)?);
    let mut gfms = BTreeMap::new();
    for b in 1..=config.blocks {
        let prev = features[b - 1].clone();
        let input = if t > 1 && topology.refines(b) {
            let g = gfm_forward(be, config, topology, b, buffer, &prev)?;
            let refined = g.refined.clone();
            gfms.insert(b, g);
            refined
        } else {
            prev
        };
        features.push(rdb_forward(be, config, b, &input)?);
    }

    let mut next = FeedbackBuffer::new();
    for j in topology.buffer_sources() {
        let f = &features[j];
        next.insert(j, if config.detach_feedback { be.detach(f) } else { f.clone() });
    }
    let sr = reconstruct(be, config, &features[config.blocks], lr)?;
    Ok(StepOutput { sr, buffer: next, trace: StepTrace { features, gfms } })
}

/// Runs all `config.steps` steps with shared parameters, threading the
/// feedback buffer between them.
pub fn forward_unroll<F: Real, B: Backend<F>>(
    be: &mut B,
    config: &ModelConfig,
    topology: &FeedbackTopology,
    lr: &B::Value,
) -> Result<Unrolled<B::Value>> {
    config.validate()?;
    if topology.blocks != config.blocks {
        return Err(Error::Config(format!(
            "topology is for B = {}, model has B = {}",
            topology.blocks, config.blocks
        )));
    }
    let mut buffer = FeedbackBuffer::new();
    let mut outputs = Vec::with_capacity(config.steps);
    let mut steps = Vec::with_capacity(config.steps);
    for t in 1..=config.steps {
        let out = forward_step(be, config, topology, lr, &buffer, t)?;
        outputs.push(out.sr);
        steps.push(out.trace);
        buffer = out.buffer;
    }
    Ok(Unrolled { outputs, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamStore;
    use crate::tensor::{Eager, Shape, Tensor};
    use crate::train::init_params;

    fn setup(m: usize, n: usize) -> (ModelConfig, FeedbackTopology, ParamStore<f64>) {
        let config = ModelConfig::new(3, 2, 4, 4, 2);
        let topo = FeedbackTopology::new(3, m, n, FeedbackMode::Feedback).unwrap();
        let params = init_params(&config, &topo, 3).unwrap();
        (config, topo, params)
    }

    fn lr() -> Tensor<f64> {
        Tensor::from_fn(Shape::new(2, 3, 5, 6), |n, c, y, x| ((n + 2 * c + 3 * y + 5 * x) % 7) as f64 / 7.0)
    }

    #[test]
    fn unrolled_shapes_and_gfm_placement() {
        let (config, topo, params) = setup(2, 2);
        let mut be = Eager::new(params.iter());
        let x = be.input(lr());
        let u = forward_unroll(&mut be, &config, &topo, &x).unwrap();
        assert_eq!(u.outputs.len(), 2);
        for sr in &u.outputs {
            assert_eq!(sr.shape(), Shape::new(2, 3, 10, 12));
        }
        assert!(u.steps[0].gfms.is_empty());
        assert_eq!(u.steps[1].gfms.keys().copied().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(u.steps[1].gfms[&1].sources, vec![2, 3]);
        assert_eq!(u.steps[1].features.len(), 4);
    }

    #[test]
    fn step_rejects_inconsistent_buffer() {
        let (config, topo, params) = setup(1, 3);
        let mut be = Eager::new(params.iter());
        let x = be.input(lr());
        let empty = FeedbackBuffer::new();
        assert!(forward_step(&mut be, &config, &topo, &x, &empty, 2).is_err());
        assert!(forward_step(&mut be, &config, &topo, &x, &empty, 0).is_err());
        let mut full = FeedbackBuffer::new();
        full.insert(3, x.clone());
        assert!(forward_step(&mut be, &config, &topo, &x, &full, 1).is_err());
    }

    #[test]
    fn gateless_module_reads_raw_features() {
        let (mut config, topo, _) = setup(1, 2);
        config.gate_unit = false;
        let params = init_params::<f64>(&config, &topo, 3).unwrap();
        let mut be = Eager::new(params.iter());
        let x = be.input(lr());
        let u = forward_unroll(&mut be, &config, &topo, &x).unwrap();
        let g = &u.steps[1].gfms[&1];
        assert!(g.gated.is_none());
        assert_eq!(g.refined.shape().c, 4);
    }

    #[test]
    fn single_step_equals_feedforward() {
        let (mut config, topo, params) = setup(1, 2);
        config.steps = 1;
        let none = FeedbackTopology::none(3);
        let mut be = Eager::new(params.iter());
        let x = be.input(lr());
        let a = forward_unroll(&mut be, &config, &topo, &x).unwrap();
        let b = forward_unroll(&mut be, &config, &none, &x).unwrap();
        assert_eq!(a.outputs[0].as_ref(), b.outputs[0].as_ref());
    }
}
