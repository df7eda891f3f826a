//! Non-convolution primitives: forward kernels and their adjoints.

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

pub fn check_same(op: &'static str, a: Shape, b: Shape) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("operands have shapes {a} and {b}")));
    }
    Ok(())
}

/// Per-channel PReLU: `y = x` for `x >= 0`, `y = alpha[c]·x` otherwise.
pub fn prelu<F: Real>(x: &Tensor<F>, alpha: &Tensor<F>) -> Result<Tensor<F>> {
    let s = x.shape();
    if alpha.numel() != s.c {
        return Err(Error::shape("prelu", format!("{} slopes for {} channels", alpha.numel(), s.c)));
    }
    let plane = s.plane();
    let mut out = x.clone();
    for n in 0..s.n {
        let sample = out.sample_mut(n);
        for (c, &a) in alpha.data().iter().enumerate() {
            for v in &mut sample[c * plane..(c + 1) * plane] {
                if *v < F::zero() {
                    *v *= a;
                }
            }
        }
    }
    Ok(out)
}

pub fn prelu_backward<F: Real>(x: &Tensor<F>, alpha: &Tensor<F>, gout: &Tensor<F>) -> (Tensor<F>, Tensor<F>) {
    let s = x.shape();
    let plane = s.plane();
    let mut gx = gout.clone();
    let mut ga = Tensor::zeros(alpha.shape());
    for n in 0..s.n {
        let xs = x.sample(n);
        let gs = gx.sample_mut(n);
        for (c, &a) in alpha.data().iter().enumerate() {
            let mut acc = F::zero();
            let range = c * plane..(c + 1) * plane;
            for (g, &xv) in gs[range.clone()].iter_mut().zip(&xs[range]) {
                if xv < F::zero() {
                    acc += *g * xv;
                    *g *= a;
                }
            }
            ga.data_mut()[c] += acc;
        }
    }
    (gx, ga)
}

/// Concatenation along the channel axis.
pub fn concat_channels<F: Real>(xs: &[&Tensor<F>]) -> Result<Tensor<F>> {
    let first = xs.first().ok_or_else(|| Error::shape("concat_channels", "no inputs"))?.shape();
    for t in xs {
        let s = t.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(Error::shape(
                "concat_channels",
                format!("batch/spatial extent {s} disagrees with {first}"),
            ));
        }
    }
    let channels = xs.iter().map(|t| t.shape().c).sum();
    let shape = Shape::new(first.n, channels, first.h, first.w);
    let mut data = Vec::with_capacity(shape.numel());
    for n in 0..first.n {
        for t in xs {
            data.extend_from_slice(t.sample(n));
        }
    }
    Tensor::new(shape, data)
}

/// Splits a channel-concatenated gradient back into the parts' shapes.
pub fn split_channels<F: Real>(g: &Tensor<F>, parts: &[Shape]) -> Vec<Tensor<F>> {
    let gs = g.shape();
    let plane = gs.plane();
    let mut out: Vec<Vec<F>> = parts.iter().map(|s| Vec::with_capacity(s.numel())).collect();
    for n in 0..gs.n {
        let sample = g.sample(n);
        let mut offset = 0;
        for (dst, s) in out.iter_mut().zip(parts) {
            let len = s.c * plane;
            dst.extend_from_slice(&sample[offset..offset + len]);
            offset += len;
        }
    }
    out.into_iter()
        .zip(parts)
        .map(|(d, &s)| Tensor::new(s, d).expect("split sizes match"))
        .collect()
}

/// Per-axis sampling table for half-pixel bilinear resampling by an integer
/// factor: output `i` reads `(i + 0.5)/scale - 0.5`, clamped at the low edge.
fn bilinear_taps(len: usize, scale: usize) -> Vec<(usize, usize, f64)> {
    (0..len * scale)
        .map(|i| {
            let src = ((i as f64 + 0.5) / scale as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn check_scale(scale: usize) -> Result<()> {
    if !(2..=4).contains(&scale) {
        return Err(Error::UnsupportedScale(scale));
    }
    Ok(())
}

pub fn bilinear_resize<F: Real>(x: &Tensor<F>, scale: usize) -> Result<Tensor<F>> {
    check_scale(scale)?;
    let s = x.shape();
    let ys = bilinear_taps(s.h, scale);
    let xs = bilinear_taps(s.w, scale);
    let (oh, ow) = (s.h * scale, s.w * scale);
    let mut out = Vec::with_capacity(s.n * s.c * oh * ow);
    for n in 0..s.n {
        let sample = x.sample(n);
        for c in 0..s.c {
            let plane = &sample[c * s.plane()..(c + 1) * s.plane()];
            for &(y0, y1, ly) in &ys {
                let ly = F::lit(ly);
                for &(x0, x1, lx) in &xs {
                    let lx = F::lit(lx);
                    let top = plane[y0 * s.w + x0] * (F::one() - lx) + plane[y0 * s.w + x1] * lx;
                    let bot = plane[y1 * s.w + x0] * (F::one() - lx) + plane[y1 * s.w + x1] * lx;
                    out.push(top * (F::one() - ly) + bot * ly);
                }
            }
        }
    }
    Tensor::new(Shape::new(s.n, s.c, oh, ow), out)
}

pub fn bilinear_resize_backward<F: Real>(gout: &Tensor<F>, input: Shape, scale: usize) -> Tensor<F> {
    let ys = bilinear_taps(input.h, scale);
    let xs = bilinear_taps(input.w, scale);
    let mut gx = Tensor::zeros(input);
    let ow = input.w * scale;
    let oplane = input.plane() * scale * scale;
    for n in 0..input.n {
        let gsample = gout.sample(n);
        let dst_sample = gx.sample_mut(n);
        for c in 0..input.c {
            let g = &gsample[c * oplane..(c + 1) * oplane];
            let dst = &mut dst_sample[c * input.plane()..(c + 1) * input.plane()];
            for (oy, &(y0, y1, ly)) in ys.iter().enumerate() {
                let ly = F::lit(ly);
                for (ox, &(x0, x1, lx)) in xs.iter().enumerate() {
                    let lx = F::lit(lx);
                    let v = g[oy * ow + ox];
                    let top = v * (F::one() - ly);
                    let bot = v * ly;
                    dst[y0 * input.w + x0] += top * (F::one() - lx);
                    dst[y0 * input.w + x1] += top * lx;
                    dst[y1 * input.w + x0] += bot * (F::one() - lx);
                    dst[y1 * input.w + x1] += bot * lx;
                }
            }
        }
    }
    gx
}

pub fn zip_map<F: Real>(op: &'static str, a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Result<Tensor<F>> {
    check_same(op, a.shape(), b.shape())?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data)
}

pub fn mean<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    Tensor::scalar(x.sum() / F::lit(x.numel() as f64))
}

/// Mean over channels: `(n, c, h, w) -> (n, 1, h, w)`.
pub fn channel_mean<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let s = x.shape();
    let plane = s.plane();
    let inv = F::lit(1.0 / s.c as f64);
    let mut out = Tensor::zeros(Shape::new(s.n, 1, s.h, s.w));
    for n in 0..s.n {
        let src = x.sample(n);
        let dst = out.sample_mut(n);
        for c in 0..s.c {
            for (d, &v) in dst.iter_mut().zip(&src[c * plane..(c + 1) * plane]) {
                *d += v;
            }
        }
        for d in dst.iter_mut() {
            *d *= inv;
        }
    }
    out
}
