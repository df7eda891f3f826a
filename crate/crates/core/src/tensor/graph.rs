use crate::error::{Error, Result};
use crate::tensor::conv::{self, ConvGeometry};
use crate::tensor::ops;
use crate::tensor::{Real, Shape, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Conv2d,
    ConvTranspose2d,
    Prelu,
    Concat,
    Bilinear,
    Add,
    Sub,
    Scale,
    Abs,
    Mean,
    Detach,
}

enum Op<F> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeometry },
    ConvTranspose2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeometry },
    Prelu { x: Var, alpha: Var },
    Concat(Vec<Var>),
    Bilinear { x: Var, scale: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, F),
    Abs(Var),
    Mean(Var),
    Detach(Var),
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so every
/// node's parents precede it and a single reverse sweep visits each node once.
///
/// A graph is single-threaded; independent graphs share nothing.
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Every recorded var in evaluation order.
    pub fn vars(&self) -> impl Iterator<Item = Var> {
        (0..self.nodes.len()).map(Var)
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn grad_any(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Learnable leaf: receives a gradient in [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn kind(&self, v: Var) -> OpKind {
        match &self.nodes[v.0].op {
            Op::Leaf => OpKind::Leaf,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::ConvTranspose2d { .. } => OpKind::ConvTranspose2d,
            Op::Prelu { .. } => OpKind::Prelu,
            Op::Concat(_) => OpKind::Concat,
            Op::Bilinear { .. } => OpKind::Bilinear,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Scale(..) => OpKind::Scale,
            Op::Abs(_) => OpKind::Abs,
            Op::Mean(_) => OpKind::Mean,
            Op::Detach(_) => OpKind::Detach,
        }
    }

    /// Direct data inputs of `v`, in operand order.
    pub fn parents(&self, v: Var) -> Vec<Var> {
        match &self.nodes[v.0].op {
            Op::Leaf => vec![],
            Op::Conv2d { x, w, b, .. } | Op::ConvTranspose2d { x, w, b, .. } => {
                let mut p = vec![*x, *w];
                p.extend(b);
                p
            }
            Op::Prelu { x, alpha } => vec![*x, *alpha],
            Op::Concat(parts) => parts.clone(),
            Op::Bilinear { x, .. } | Op::Scale(x, _) | Op::Abs(x) | Op::Mean(x) | Op::Detach(x) => vec![*x],
            Op::Add(a, b) | Op::Sub(a, b) => vec![*a, *b],
        }
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        let value = conv::conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), geom)?;
        let rg = self.grad_any(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(value, Op::Conv2d { x, w, b, geom }, rg))
    }

    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        let value = conv::conv_transpose2d(self.value(x), self.value(w), b.map(|b| self.value(b)), geom)?;
        let rg = self.grad_any(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(value, Op::ConvTranspose2d { x, w, b, geom }, rg))
    }

    pub fn prelu(&mut self, x: Var, alpha: Var) -> Result<Var> {
        let value = ops::prelu(self.value(x), self.value(alpha))?;
        let rg = self.grad_any(&[x, alpha]);
        Ok(self.push(value, Op::Prelu { x, alpha }, rg))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor<F>> = parts.iter().map(|&v| self.value(v)).collect();
        let value = ops::concat_channels(&tensors)?;
        let rg = self.grad_any(parts);
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    pub fn bilinear(&mut self, x: Var, scale: usize) -> Result<Var> {
        let value = ops::bilinear_resize(self.value(x), scale)?;
        let rg = self.requires_grad(x);
        Ok(self.push(value, Op::Bilinear { x, scale }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::zip_map("add", self.value(a), self.value(b), |x, y| x + y)?;
        let rg = self.grad_any(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::zip_map("sub", self.value(a), self.value(b), |x, y| x - y)?;
        let rg = self.grad_any(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, k: F) -> Var {
        let value = self.value(x).map(|v| v * k);
        let rg = self.requires_grad(x);
        self.push(value, Op::Scale(x, k), rg)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let value = self.value(x).map(F::abs);
        let rg = self.requires_grad(x);
        self.push(value, Op::Abs(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let value = ops::mean(self.value(x));
        let rg = self.requires_grad(x);
        self.push(value, Op::Mean(x), rg)
    }

    /// Same value, but no gradient flows back through it.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.push(value, Op::Detach(x), false)
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Returns the gradient of every learnable leaf the loss depends on.
    /// Leaves the loss does not reach have no entry.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        let ls = self.shape(loss);
        if ls.numel() != 1 {
            return Err(Error::NonScalarLoss(ls));
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(ls, F::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let mut send = |v: Var, t: Tensor<F>| {
                if !self.nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Leaf | Op::Detach(_) => {}
                Op::Conv2d { x, w, b, geom } | Op::ConvTranspose2d { x, w, b, geom } => {
                    let need = [
                        self.requires_grad(*x),
                        self.requires_grad(*w),
                        b.is_some_and(|b| self.requires_grad(b)),
                    ];
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let cg = if matches!(node.op, Op::Conv2d { .. }) {
                        conv::conv2d_backward(xv, wv, &g, *geom, need)?
                    } else {
                        conv::conv_transpose2d_backward(xv, wv, &g, *geom, need)?
                    };
                    if let Some(t) = cg.input {
                        send(*x, t);
                    }
                    if let Some(t) = cg.weight {
                        send(*w, t);
                    }
                    if let (Some(b), Some(t)) = (b, cg.bias) {
                        send(*b, t);
                    }
                }
                Op::Prelu { x, alpha } => {
                    let (gx, ga) = ops::prelu_backward(self.value(*x), self.value(*alpha), &g);
                    send(*x, gx);
                    send(*alpha, ga);
                }
                Op::Concat(parts) => {
                    let shapes: Vec<Shape> = parts.iter().map(|&p| self.shape(p)).collect();
                    for (p, t) in parts.iter().zip(ops::split_channels(&g, &shapes)) {
                        send(*p, t);
                    }
                }
                Op::Bilinear { x, scale } => {
                    send(*x, ops::bilinear_resize_backward(&g, self.shape(*x), *scale));
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*b, g.map(|v| -v));
                    send(*a, g);
                }
                Op::Scale(x, k) => {
                    let k = *k;
                    send(*x, g.map(|v| v * k));
                }
                Op::Abs(x) => {
                    let gx = ops::zip_map("abs", &g, self.value(*x), |gv, xv| {
                        if xv > F::zero() {
                            gv
                        } else if xv < F::zero() {
                            -gv
                        } else {
                            F::zero()
                        }
                    })?;
                    send(*x, gx);
                }
                Op::Mean(x) => {
                    let xs = self.shape(*x);
                    let k = g.item() / F::lit(xs.numel() as f64);
                    send(*x, Tensor::full(xs, k));
                }
            }
        }

        let leaf_grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.filter(|_| matches!(self.nodes[i].op, Op::Leaf)))
            .collect();
        Ok(Gradients { grads: leaf_grads })
    }
}

/// Leaf gradients produced by one backward sweep.
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<F>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
