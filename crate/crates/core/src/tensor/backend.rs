use std::collections::BTreeMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::conv::{self, ConvGeometry};
use crate::tensor::graph::{Graph, Var};
use crate::tensor::{ops, Real, Tensor};

/// The primitive set a network is written against.
///
/// [`Recorder`] evaluates onto a [`Graph`] so the result can be
/// differentiated; [`Eager`] evaluates immediately and frees intermediates
/// as soon as they are dropped, which is what full-image inference needs.
pub trait Backend<F: Real> {
    type Value: Clone;

    /// Looks up a named learnable parameter.
    fn param(&mut self, name: &str) -> Result<Self::Value>;
    fn input(&mut self, t: Tensor<F>) -> Self::Value;
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor<F>;

    fn conv2d(&mut self, x: &Self::Value, w: &Self::Value, b: Option<&Self::Value>, geom: ConvGeometry)
        -> Result<Self::Value>;
    fn conv_transpose2d(
        &mut self,
        x: &Self::Value,
        w: &Self::Value,
        b: Option<&Self::Value>,
        geom: ConvGeometry,
    ) -> Result<Self::Value>;
    fn prelu(&mut self, x: &Self::Value, alpha: &Self::Value) -> Result<Self::Value>;
    fn concat(&mut self, parts: &[Self::Value]) -> Result<Self::Value>;
    fn bilinear(&mut self, x: &Self::Value, scale: usize) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, x: &Self::Value, k: F) -> Self::Value;
    fn abs(&mut self, x: &Self::Value) -> Self::Value;
    fn mean(&mut self, x: &Self::Value) -> Self::Value;
    fn detach(&mut self, x: &Self::Value) -> Self::Value;
}

/// Records onto a [`Graph`], with named parameters bound to leaf vars.
pub struct Recorder<F> {
    graph: Graph<F>,
    params: BTreeMap<String, Var>,
}

impl<F: Real> Recorder<F> {
    /// Binds each `(name, tensor)` as a leaf. With `learnable` set the leaves
    /// receive gradients.
    pub fn new<'a>(params: impl IntoIterator<Item = (&'a String, &'a Tensor<F>)>, learnable: bool) -> Self {
        let mut graph = Graph::new();
        let params = params
            .into_iter()
            .map(|(k, t)| {
                let v = if learnable { graph.param(t.clone()) } else { graph.constant(t.clone()) };
                (k.clone(), v)
            })
            .collect();
        Recorder { graph, params }
    }

    pub fn graph(&self) -> &Graph<F> {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut Graph<F> {
        &mut self.graph
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.get(name).copied()
    }

    pub fn param_vars(&self) -> &BTreeMap<String, Var> {
        &self.params
    }

    /// Runs the backward sweep and returns gradients keyed by parameter name.
    /// Parameters the loss does not reach are absent.
    pub fn param_grads(&self, loss: Var) -> Result<BTreeMap<String, Tensor<F>>> {
        let mut grads = self.graph.backward(loss)?;
        Ok(self
            .params
            .iter()
            .filter_map(|(k, &v)| grads.take(v).map(|g| (k.clone(), g)))
            .collect())
    }
}

impl<F: Real> Backend<F> for Recorder<F> {
    type Value = Var;

    fn param(&mut self, name: &str) -> Result<Var> {
        self.param_var(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    fn input(&mut self, t: Tensor<F>) -> Var {
        self.graph.constant(t)
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor<F> {
        self.graph.value(*v)
    }

    fn conv2d(&mut self, x: &Var, w: &Var, b: Option<&Var>, geom: ConvGeometry) -> Result<Var> {
        self.graph.conv2d(*x, *w, b.copied(), geom)
    }

    fn conv_transpose2d(&mut self, x: &Var, w: &Var, b: Option<&Var>, geom: ConvGeometry) -> Result<Var> {
        self.graph.conv_transpose2d(*x, *w, b.copied(), geom)
    }

    fn prelu(&mut self, x: &Var, alpha: &Var) -> Result<Var> {
        self.graph.prelu(*x, *alpha)
    }

    fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.graph.concat(parts)
    }

    fn bilinear(&mut self, x: &Var, scale: usize) -> Result<Var> {
        self.graph.bilinear(*x, scale)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.graph.add(*a, *b)
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.graph.sub(*a, *b)
    }

    fn scale(&mut self, x: &Var, k: F) -> Var {
        self.graph.scale(*x, k)
    }

    fn abs(&mut self, x: &Var) -> Var {
        self.graph.abs(*x)
    }

    fn mean(&mut self, x: &Var) -> Var {
        self.graph.mean(*x)
    }

    fn detach(&mut self, x: &Var) -> Var {
        self.graph.detach(*x)
    }
}

pub type EagerValue<F> = Rc<Tensor<F>>;

/// Immediate evaluation without a tape.
pub struct Eager<F> {
    params: BTreeMap<String, EagerValue<F>>,
}

impl<F: Real> Eager<F> {
    pub fn new<'a>(params: impl IntoIterator<Item = (&'a String, &'a Tensor<F>)>) -> Self {
        Eager { params: params.into_iter().map(|(k, t)| (k.clone(), Rc::new(t.clone()))).collect() }
    }
}

impl<F: Real> Backend<F> for Eager<F> {
    type Value = EagerValue<F>;

    fn param(&mut self, name: &str) -> Result<Self::Value> {
        self.params.get(name).cloned().ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    fn input(&mut self, t: Tensor<F>) -> Self::Value {
        Rc::new(t)
    }

    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor<F> {
        v
    }

    fn conv2d(&mut self, x: &Self::Value, w: &Self::Value, b: Option<&Self::Value>, geom: ConvGeometry)
        -> Result<Self::Value> {
        conv::conv2d(x, w, b.map(|b| &**b), geom).map(Rc::new)
    }

    fn conv_transpose2d(
        &mut self,
        x: &Self::Value,
        w: &Self::Value,
        b: Option<&Self::Value>,
        geom: ConvGeometry,
    ) -> Result<Self::Value> {
        conv::conv_transpose2d(x, w, b.map(|b| &**b), geom).map(Rc::new)
    }

    fn prelu(&mut self, x: &Self::Value, alpha: &Self::Value) -> Result<Self::Value> {
        ops::prelu(x, alpha).map(Rc::new)
    }

    fn concat(&mut self, parts: &[Self::Value]) -> Result<Self::Value> {
        let refs: Vec<&Tensor<F>> = parts.iter().map(|p| &**p).collect();
        ops::concat_channels(&refs).map(Rc::new)
    }

    fn bilinear(&mut self, x: &Self::Value, scale: usize) -> Result<Self::Value> {
        ops::bilinear_resize(x, scale).map(Rc::new)
    }

    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        ops::zip_map("add", a, b, |x, y| x + y).map(Rc::new)
    }

    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        ops::zip_map("sub", a, b, |x, y| x - y).map(Rc::new)
    }

    fn scale(&mut self, x: &Self::Value, k: F) -> Self::Value {
        Rc::new(x.map(|v| v * k))
    }

    fn abs(&mut self, x: &Self::Value) -> Self::Value {
        Rc::new(x.map(F::abs))
    }

    fn mean(&mut self, x: &Self::Value) -> Self::Value {
        Rc::new(ops::mean(x))
    }

    fn detach(&mut self, x: &Self::Value) -> Self::Value {
        x.clone()
    }
}
