//! Helpers shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use gmfn::model::{forward_unroll, FeedbackMode, FeedbackTopology, ModelConfig, ParamStore};
use gmfn::tensor::{Backend, ConvGeometry, Eager, Graph, Real, Recorder, Shape, Tensor, Var};
use gmfn::train::{init_params, loss_multi_step, LossMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor<F: Real>(shape: Shape, r: &mut ChaCha8Rng) -> Tensor<F> {
    Tensor::from_fn(shape, |_, _, _, _| F::lit(r.random_range(-1.0..1.0)))
}

/// Worst elementwise relative error between two gradients. Entries where
/// both sides are below `floor` in magnitude are compared against `floor`.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor)).fold(0.0, f64::max)
}

/// A fixed target that keeps `|out - target|` at least 0.5 away from the
/// kink of `abs`, with a random sign per element. The L1 distance then
/// acts as a generic linear functional of `out` near the test point.
pub fn offset_target(out: &Tensor<f64>, r: &mut ChaCha8Rng) -> Tensor<f64> {
    let data = out
        .data()
        .iter()
        .map(|&v| {
            let d = r.random_range(0.5..1.5);
            if r.random_bool(0.5) {
                v + d
            } else {
                v - d
            }
        })
        .collect();
    Tensor::new(out.shape(), data).unwrap()
}

/// Builds `op` on the leaves, reduces with `mean |out - target|`, and
/// compares the tape gradient of every leaf against central differences.
/// Returns the worst relative error over all leaves.
pub fn gradcheck(
    inputs: &[Tensor<f64>],
    op: impl Fn(&mut Graph<f64>, &[Var]) -> gmfn::Result<Var>,
    seed: u64,
) -> f64 {
    let mut r = rng(seed);
    let loss_of = |xs: &[Tensor<f64>], target: Option<&Tensor<f64>>| -> (f64, Graph<f64>, Vec<Var>, Var, Tensor<f64>) {
        let mut g = Graph::new();
        let leaves: Vec<Var> = xs.iter().map(|x| g.param(x.clone())).collect();
        let out = op(&mut g, &leaves).unwrap();
        let out_value = g.value(out).clone();
        let t = match target {
            Some(t) => g.constant(t.clone()),
            None => g.constant(out_value.clone()),
        };
        let d = g.sub(out, t).unwrap();
        let a = g.abs(d);
        let l = g.mean(a);
        (g.value(l).item(), g, leaves, l, out_value)
    };

    let (_, _, _, _, out0) = loss_of(inputs, None);
    let target = offset_target(&out0, &mut r);
    let (_, g, leaves, l, _) = loss_of(inputs, Some(&target));
    let grads = g.backward(l).unwrap();

    let eps = 1e-5;
    let mut worst = 0.0f64;
    for (i, leaf) in leaves.iter().enumerate() {
        let analytic = grads.get(*leaf).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        let mut numeric = vec![0.0; inputs[i].numel()];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let mut xs = inputs.to_vec();
            xs[i].data_mut()[k] += eps;
            let up = loss_of(&xs, Some(&target)).0;
            xs[i].data_mut()[k] -= 2.0 * eps;
            let down = loss_of(&xs, Some(&target)).0;
            *slot = (up - down) / (2.0 * eps);
        }
        worst = worst.max(max_rel_err(&analytic, &numeric, 1e-6));
    }
    worst
}

/// out[n,o,y,x] = b[o] + Σ w[o,c,i,j]·x[n,c,y·s+i-p,x·s+j-p], zero outside.
pub fn brute_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, g: ConvGeometry) -> Tensor<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let (oh, ow) = g.output_dims(xs.h, xs.w).unwrap();
    let (s, p) = (g.stride as isize, g.padding as isize);
    Tensor::from_fn(Shape::new(xs.n, ws.n, oh, ow), |n, o, y, xx| {
        let mut acc = b.map_or(0.0, |b| b.data()[o]);
        for c in 0..ws.c {
            for i in 0..ws.h {
                for j in 0..ws.w {
                    let (iy, ix) = (y as isize * s + i as isize - p, xx as isize * s + j as isize - p);
                    if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                        acc += w.at(o, c, i, j) * x.at(n, c, iy as usize, ix as usize);
                    }
                }
            }
        }
        acc
    })
}

/// Scatter form: every input pixel deposits `x·w[c,o]` at `(y·s+i-p, x·s+j-p)`.
pub fn brute_conv_t(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, g: ConvGeometry) -> Tensor<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let (oh, ow) = g.transposed_dims(xs.h, xs.w).unwrap();
    let mut out = Tensor::from_fn(Shape::new(xs.n, ws.c, oh, ow), |_, o, _, _| b.map_or(0.0, |b| b.data()[o]));
    let (s, p) = (g.stride as isize, g.padding as isize);
    for n in 0..xs.n {
        for c in 0..xs.c {
            for y in 0..xs.h {
                for xx in 0..xs.w {
                    for o in 0..ws.c {
                        for i in 0..ws.h {
                            for j in 0..ws.w {
                                let (oy, ox) = (y as isize * s + i as isize - p, xx as isize * s + j as isize - p);
                                if oy >= 0 && ox >= 0 && (oy as usize) < oh && (ox as usize) < ow {
                                    let idx = out.index(n, o, oy as usize, ox as usize);
                                    out.data_mut()[idx] += x.at(n, c, y, xx) * w.at(c, o, i, j);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Central differences against the tape for a B=2, C=4, T=2, M=1, N=1
/// network on an 8×8 input. Every parameter tensor is probed at up to six
/// entries spread across it, with biases and slopes moved off their
/// defaults. Returns the worst relative error.
pub fn mini_network_gradcheck() -> f64 {
    let config = ModelConfig::new(2, 2, 4, 4, 2);
    let topo = FeedbackTopology::new(2, 1, 1, FeedbackMode::Feedback).unwrap();
    let mut params = init_params::<f64>(&config, &topo, 7).unwrap();
    let mut r = rng(8);
    for (name, p) in params.iter_mut() {
        if name.ends_with(".bias") || name.ends_with(".alpha") {
            *p = rand_tensor(p.shape(), &mut r).map(|v| 0.1 * v + if name.ends_with(".alpha") { 0.25 } else { 0.0 });
        }
    }
    let lr = rand_tensor::<f64>(Shape::new(1, 3, 8, 8), &mut r).map(|v| 0.5 + 0.4 * v);
    let hr = rand_tensor::<f64>(Shape::new(1, 3, 16, 16), &mut r).map(|v| 0.5 + 0.4 * v);

    let loss = |p: &ParamStore<f64>| -> f64 {
        let mut be = Eager::new(p.iter());
        let x = be.input(lr.clone());
        let out = forward_unroll(&mut be, &config, &topo, &x).unwrap();
        let hrs: Vec<_> = out.outputs.iter().map(|_| be.input(hr.clone())).collect();
        let l = loss_multi_step(&mut be, &out.outputs, &hrs, LossMode::AllSteps).unwrap();
        be.value(&l).item()
    };

    let mut be = Recorder::new(params.iter(), true);
    let x = be.input(lr.clone());
    let out = forward_unroll(&mut be, &config, &topo, &x).unwrap();
    let hrs: Vec<_> = out.outputs.iter().map(|_| be.input(hr.clone())).collect();
    let l = loss_multi_step(&mut be, &out.outputs, &hrs, LossMode::AllSteps).unwrap();
    let grads = be.param_grads(l).unwrap();
    assert_eq!(grads.len(), params.len(), "every parameter must receive a gradient");

    let eps = 1e-5;
    let names: Vec<String> = params.names().cloned().collect();
    let mut worst = 0.0f64;
    for name in &names {
        let n = params.get(name).unwrap().numel();
        let k_max = 6.min(n);
        let picks: Vec<usize> = (0..k_max).map(|i| i * n / k_max + (i * 7919) % (n / k_max).max(1)).collect();
        let (mut a, mut num) = (Vec::new(), Vec::new());
        for &k in &picks {
            let base = params.get(name).unwrap().data()[k];
            params.get_mut(name).unwrap().data_mut()[k] = base + eps;
            let up = loss(&params);
            params.get_mut(name).unwrap().data_mut()[k] = base - eps;
            let down = loss(&params);
            params.get_mut(name).unwrap().data_mut()[k] = base;
            num.push((up - down) / (2.0 * eps));
            a.push(grads[name].data()[k]);
        }
        worst = worst.max(max_rel_err(&a, &num, 1e-6));
    }
    worst
}

/// Cross-step edges `(j, b)`: F_{L,j} of step t-1 flows into the GFM before
/// RDB `b` at step t, written out from the index-set definitions.
pub fn symbolic_edges(blocks: usize, m: usize, n: usize, mode: FeedbackMode) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    match mode {
        FeedbackMode::None => {}
        FeedbackMode::Feedback => {
            // S_M = {1..M}; GFM b reads [F_{L,N} .. F_{L,B}] when b < N, else [F_{L,b} .. F_{L,B}].
            for b in 1..=m {
                let first = if b < n { n } else { b };
                for j in first..=blocks {
                    edges.insert((j, b));
                }
            }
        }
        FeedbackMode::AntiFeedback => {
            // Deep RDBs N̄..B are refined by the shallow outputs 1..M̄.
            for b in n..=blocks {
                for j in 1..=m {
                    edges.insert((j, b));
                }
            }
        }
    }
    edges
}

/// Edges read off the recorded tape of a two-step unroll: every step-2 node
/// with a step-1 RDB output as a direct operand contributes `(j, b)` where
/// `b` is the GFM whose node range contains it (`0` outside any GFM).
pub fn realized_edges(config: &ModelConfig, topo: &FeedbackTopology, params: &ParamStore<f64>) -> BTreeSet<(usize, usize)> {
    let mut be = Recorder::new(params.iter(), false);
    let lr = be.input(Tensor::full(Shape::new(1, 3, 4, 4), 0.5));
    let run = forward_unroll(&mut be, config, topo, &lr).unwrap();
    let g = be.graph();
    let step1: BTreeMap<Var, usize> = run.steps[0].features.iter().enumerate().skip(1).map(|(j, &v)| (v, j)).collect();
    let s2 = &run.steps[1];
    let ranges: Vec<(usize, usize, usize)> = s2
        .gfms
        .iter()
        .map(|(&b, tr)| (s2.features[b - 1].index(), tr.refined.index(), b))
        .collect();
    // step-1 nodes end with its SR output
    let boundary = run.outputs[0].index();
    let mut edges = BTreeSet::new();
    for v in g.vars().filter(|v| v.index() > boundary) {
        let idx = v.index();
        for p in g.parents(v) {
            if let Some(&j) = step1.get(&p) {
                let b = ranges.iter().find(|(lo, hi, _)| idx > *lo && idx <= *hi).map(|r| r.2).unwrap_or(0);
                edges.insert((j, b));
            }
        }
    }
    edges
}

/// Gradients of every GFM tensor under a loss on the first step's output
/// alone (B=7, T=2); tensors the tape never reached come back as zeros.
pub fn gfm_grads_after_first_step_loss(m: usize, n: usize) -> Vec<(String, Tensor<f64>)> {
    let config = ModelConfig::new(7, 2, 4, 2, 2);
    let topo = FeedbackTopology::new(7, m, n, FeedbackMode::Feedback).unwrap();
    let params = init_params::<f64>(&config, &topo, 3).unwrap();
    let mut r = rng(4);
    let mut be = Recorder::new(params.iter(), true);
    let lr = be.input(rand_tensor(Shape::new(1, 3, 6, 6), &mut r));
    let hr = be.input(rand_tensor(Shape::new(1, 3, 12, 12), &mut r));
    let out = forward_unroll(&mut be, &config, &topo, &lr).unwrap();
    let l = loss_multi_step(&mut be, &out.outputs[..1], &[hr], LossMode::AllSteps).unwrap();
    let grads = be.param_grads(l).unwrap();
    params
        .names()
        .filter(|k| k.starts_with("gfm."))
        .map(|k| (k.clone(), grads.get(k).cloned().unwrap_or_else(|| Tensor::zeros(params.get(k).unwrap().shape()))))
        .collect()
}

/// C·(kin)·1·1 + C per 1×1 conv, plus C PReLU slopes per activation.
pub fn closed_form_gfm(c: usize, group: usize, gate: bool) -> usize {
    if gate {
        (c * group * c + c) + c + (c * 2 * c + c) + c
    } else {
        (c * (group + 1) * c + c) + c
    }
}
