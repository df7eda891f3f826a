use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{FeedbackTopology, ModelConfig};
use crate::tensor::{Real, Shape, Tensor};

/// Initial PReLU slope.
pub const PRELU_INIT: f64 = 0.25;

/// Named learnable tensors of one network. There is exactly one entry per
/// learnable tensor; all time steps read the same entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<F> {
    tensors: BTreeMap<String, Tensor<F>>,
}

fn conv(out: &mut Vec<(String, Shape)>, prefix: &str, c_out: usize, c_in: usize, k: usize) {
    out.push((format!("{prefix}.weight"), Shape::new(c_out, c_in, k, k)));
    out.push((format!("{prefix}.bias"), Shape::vector(c_out)));
}

fn slope(out: &mut Vec<(String, Shape)>, name: String, channels: usize) {
    out.push((name, Shape::vector(channels)));
}

/// Every learnable tensor of the network described by `config` and `topology`.
pub fn layout(config: &ModelConfig, topology: &FeedbackTopology) -> Vec<(String, Shape)> {
    let (c0, c, g) = (config.first_channels, config.channels, config.growth);
    let mut out = Vec::new();

    conv(&mut out, "lfeb.conv1", c0, 3, 3);
    slope(&mut out, "lfeb.act1.alpha".into(), c0);
    conv(&mut out, "lfeb.conv2", c, c0, 1);
    slope(&mut out, "lfeb.act2.alpha".into(), c);

    for b in 1..=config.blocks {
        for i in 1..=config.rdb_layers {
            conv(&mut out, &format!("rdb.{b}.conv.{i}"), g, c + (i - 1) * g, 3);
            slope(&mut out, format!("rdb.{b}.act.{i}.alpha"), g);
        }
        conv(&mut out, &format!("rdb.{b}.fuse"), c, c + config.rdb_layers * g, 1);
    }

    for b in topology.refined_blocks() {
        let group = topology.group_size(b);
        if config.gate_unit {
            conv(&mut out, &format!("gfm.{b}.gate"), c, group * c, 1);
            slope(&mut out, format!("gfm.{b}.gate_act.alpha"), c);
            conv(&mut out, &format!("gfm.{b}.refine"), c, 2 * c, 1);
        } else {
            conv(&mut out, &format!("gfm.{b}.refine"), c, (group + 1) * c, 1);
        }
        slope(&mut out, format!("gfm.{b}.refine_act.alpha"), c);
    }

    let k = match config.scale {
        2 => 6,
        3 => 7,
        _ => 8,
    };
    // transposed convolution weights are [in, out, kh, kw]
    out.push(("rb.deconv.weight".into(), Shape::new(c, c, k, k)));
    out.push(("rb.deconv.bias".into(), Shape::vector(c)));
    slope(&mut out, "rb.deconv_act.alpha".into(), c);
    conv(&mut out, "rb.conv", config.out_channels, c, 3);
    out
}

impl<F: Real> ParamStore<F> {
    /// Weights and biases zeroed, PReLU slopes at their initial value.
    pub fn new(config: &ModelConfig, topology: &FeedbackTopology) -> Result<Self> {
        config.validate()?;
        if topology.blocks != config.blocks {
            return Err(Error::Config(format!(
                "topology is for B = {}, model has B = {}",
                topology.blocks, config.blocks
            )));
        }
        let tensors = layout(config, topology)
            .into_iter()
            .map(|(name, shape)| {
                let t = if name.ends_with(".alpha") {
                    Tensor::full(shape, F::lit(PRELU_INIT))
                } else {
                    Tensor::zeros(shape)
                };
                (name, t)
            })
            .collect();
        Ok(ParamStore { tensors })
    }

    pub fn from_tensors(tensors: BTreeMap<String, Tensor<F>>) -> Self {
        ParamStore { tensors }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.tensors.get_mut(name)
    }

    /// Replaces an existing entry; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor<F>) -> Result<()> {
        let slot = self.tensors.get_mut(name).ok_or_else(|| Error::MissingParam(name.to_string()))?;
        if slot.shape() != value.shape() {
            return Err(Error::shape(
                "param_store",
                format!("`{name}` has shape {}, got {}", slot.shape(), value.shape()),
            ));
        }
        *slot = value;
        Ok(())
    }

    /// Entries in ascending key order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<F>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<F>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Scalar parameter counts per module (`lfeb`, `rdb.3`, `gfm.1`, `rb`).
    pub fn breakdown(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for (name, t) in &self.tensors {
            *out.entry(module_of(name)).or_insert(0) += t.numel();
        }
        out
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore { tensors: self.tensors.iter().map(|(k, t)| (k.clone(), t.cast())).collect() }
    }
}

fn module_of(name: &str) -> String {
    let mut parts = name.split('.');
    let head = parts.next().unwrap_or_default();
    match head {
        "rdb" | "gfm" => format!("{head}.{}", parts.next().unwrap_or_default()),
        _ => head.to_string(),
    }
}
