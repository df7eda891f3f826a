//! 2-D convolution and transposed convolution.
//!
//! Everything is expressed through one cross-correlation and its two
//! adjoints, each lowered to im2col + GEMM on bounded column chunks:
//!
//! * `corr_forward`: `y = W · cols(x)`
//! * `corr_adjoint`: `gx = col2im(Wᵀ · g)` (input gradient of the correlation,
//!   and also the forward pass of the transposed convolution)
//! * `corr_weight_grad`: `gW += g · cols(x)ᵀ`
//!
//! Stride-1 correlations are lowered on the padded input grid (see `Grid`);
//! strided ones chunk whole output rows of the batch. Chunks run in
//! ascending order. GEMM is
//! single-threaded, so results are bit-identical for identical inputs.

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Upper bound on the number of elements in one im2col buffer.
const COLS_BUDGET: usize = 1 << 21;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvGeometry {
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub const fn new(kh: usize, kw: usize, stride: usize, padding: usize) -> Self {
        ConvGeometry { kernel: (kh, kw), stride, padding }
    }

    pub const fn square(k: usize, stride: usize, padding: usize) -> Self {
        ConvGeometry::new(k, k, stride, padding)
    }

    /// Stride 1 with `k / 2` zero padding: spatial size is preserved for odd `k`.
    pub const fn same(k: usize) -> Self {
        ConvGeometry::square(k, 1, k / 2)
    }

    /// `floor((H + 2p - kh) / s) + 1`, or `None` when the geometry yields no output.
    pub fn output_dims(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (kh, kw) = self.kernel;
        if self.stride == 0 || kh == 0 || kw == 0 {
            return None;
        }
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if hp < kh || wp < kw {
            return None;
        }
        Some(((hp - kh) / self.stride + 1, (wp - kw) / self.stride + 1))
    }

    /// `(H - 1)·s - 2p + kh`, or `None` when that is not positive.
    pub fn transposed_dims(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (kh, kw) = self.kernel;
        if self.stride == 0 || h == 0 || w == 0 {
            return None;
        }
        let oh = (h - 1) * self.stride + kh;
        let ow = (w - 1) * self.stride + kw;
        if oh <= 2 * self.padding || ow <= 2 * self.padding {
            return None;
        }
        Some((oh - 2 * self.padding, ow - 2 * self.padding))
    }
}

/// Sizes of one correlation over a batch of `n` samples: `c_in × (h, w)`
/// inputs, `c_out × (oh, ow)` outputs.
#[derive(Clone, Copy, Debug)]
struct Plan {
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    oh: usize,
    ow: usize,
    geom: ConvGeometry,
}

impl Plan {
    fn k(&self) -> usize {
        self.c_in * self.geom.kernel.0 * self.geom.kernel.1
    }

    /// Output rows of the whole batch; row `r` is row `r % oh` of sample `r / oh`.
    fn rows(&self) -> usize {
        self.n * self.oh
    }

    /// Output rows per im2col chunk.
    fn chunk_rows(&self) -> usize {
        (COLS_BUDGET / (self.k() * self.ow).max(1)).clamp(1, self.rows().max(1))
    }

    fn chunks(&self) -> impl Iterator<Item = (usize, usize)> {
        let (total, step) = (self.rows(), self.chunk_rows());
        (0..total).step_by(step).map(move |r0| (r0, step.min(total - r0)))
    }
}

/// For output column `ox` ranging over `[0, ow)`, the sub-range `[lo, hi)`
/// whose input column `ox*s + kx - pad` lies in `[0, w)`.
fn valid_cols(ow: usize, s: usize, kx: usize, pad: usize, w: usize) -> (usize, usize) {
    let base = kx as isize - pad as isize;
    let s_i = s as isize;
    let lo = if base >= 0 { 0 } else { ((-base) + s_i - 1) / s_i };
    let hi = if base >= w as isize { 0 } else { ((w as isize - base) + s_i - 1) / s_i };
    let lo = (lo as usize).min(ow);
    let hi = (hi as usize).min(ow);
    (lo, hi.max(lo))
}

/// Appends the `[K, rows·ow]` column matrix of output rows `[r0, r0 + rows)`
/// to the emptied `cols`.
fn im2col<F: Real>(x: &[F], p: &Plan, r0: usize, rows: usize, cols: &mut Vec<F>) {
    let (kh, kw) = p.geom.kernel;
    let (s, pad) = (p.geom.stride, p.geom.padding);
    cols.clear();
    cols.reserve(p.k() * rows * p.ow);
    for ci in 0..p.c_in {
        for ky in 0..kh {
            for kx in 0..kw {
                let (lo, hi) = valid_cols(p.ow, s, kx, pad, p.w);
                for r in r0..r0 + rows {
                    let (n, oy) = (r / p.oh, r % p.oh);
                    let iy = (oy * s + ky) as isize - pad as isize;
                    if iy < 0 || iy >= p.h as isize || lo == hi {
                        cols.resize(cols.len() + p.ow, F::zero());
                        continue;
                    }
                    let start = ((n * p.c_in + ci) * p.h + iy as usize) * p.w;
                    let src = &x[start..start + p.w];
                    let ix0 = lo * s + kx - pad;
                    cols.resize(cols.len() + lo, F::zero());
                    if s == 1 {
                        cols.extend_from_slice(&src[ix0..ix0 + (hi - lo)]);
                    } else {
                        cols.extend((0..hi - lo).map(|t| src[ix0 + t * s]));
                    }
                    cols.resize(cols.len() + p.ow - hi, F::zero());
                }
            }
        }
    }
}

/// Scatter-adds a `[K, rows·ow]` column matrix back onto the input batch.
fn col2im_add<F: Real>(cols: &[F], p: &Plan, r0: usize, rows: usize, gx: &mut [F]) {
    let (kh, kw) = p.geom.kernel;
    let (s, pad) = (p.geom.stride, p.geom.padding);
    let len = rows * p.ow;
    for ci in 0..p.c_in {
        for ky in 0..kh {
            for kx in 0..kw {
                let (lo, hi) = valid_cols(p.ow, s, kx, pad, p.w);
                if lo == hi {
                    continue;
                }
                let row = &cols[((ci * kh + ky) * kw + kx) * len..][..len];
                for r in r0..r0 + rows {
                    let (n, oy) = (r / p.oh, r % p.oh);
                    let iy = (oy * s + ky) as isize - pad as isize;
                    if iy < 0 || iy >= p.h as isize {
                        continue;
                    }
                    let start = ((n * p.c_in + ci) * p.h + iy as usize) * p.w;
                    let dst = &mut gx[start..start + p.w];
                    let seg = &row[(r - r0) * p.ow + lo..(r - r0) * p.ow + hi];
                    let ix0 = lo * s + kx - pad;
                    if s == 1 {
                        dst[ix0..ix0 + seg.len()].iter_mut().zip(seg).for_each(|(d, &v)| *d += v);
                    } else {
                        for (t, &v) in seg.iter().enumerate() {
                            dst[ix0 + t * s] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Writes a `[c_out, rows·ow]` matrix into output rows `[r0, r0 + rows)` of
/// an `[n, c_out, oh, ow]` batch.
fn scatter<F: Real>(mat: &[F], p: &Plan, r0: usize, rows: usize, batch: &mut [F]) {
    let (len, plane) = (rows * p.ow, p.oh * p.ow);
    let mut r = r0;
    while r < r0 + rows {
        let (n, oy) = (r / p.oh, r % p.oh);
        let run = (p.oh - oy).min(r0 + rows - r);
        let (off, count) = ((r - r0) * p.ow, run * p.ow);
        for c in 0..p.c_out {
            batch[(n * p.c_out + c) * plane + oy * p.ow..][..count].copy_from_slice(&mat[c * len + off..][..count]);
        }
        r += run;
    }
}

/// Inverse of [`scatter`]: rows `[r0, r0 + rows)` as a `[c_out, rows·ow]` matrix.
fn gather<F: Real>(batch: &[F], p: &Plan, r0: usize, rows: usize, mat: &mut Vec<F>) {
    let (len, plane) = (rows * p.ow, p.oh * p.ow);
    mat.clear();
    for c in 0..p.c_out {
        let mut r = r0;
        while r < r0 + rows {
            let (n, oy) = (r / p.oh, r % p.oh);
            let run = (p.oh - oy).min(r0 + rows - r);
            mat.extend_from_slice(&batch[(n * p.c_out + c) * plane + oy * p.ow..][..run * p.ow]);
            r += run;
        }
    }
    debug_assert_eq!(mat.len(), p.c_out * len);
}

/// Stride-1 lowering on the zero-padded input grid.
///
/// Each sample is padded to `hp × wp` and the batch is laid out channel by
/// channel as one flat line of `n · hp · wp` columns. Output `(n, oy, ox)` is
/// column `q = n·hp·wp + oy·wp + ox`, and kernel tap `(ky, kx)` reads column
/// `q + ky·wp + kx`, so every im2col row is a single contiguous slice.
/// Columns that are not output positions are computed and discarded (or
/// carry zero gradient).
struct Grid {
    hp: usize,
    wp: usize,
    /// Number of columns evaluated.
    q: usize,
}

impl Grid {
    fn new(p: &Plan) -> Self {
        let (kh, kw) = p.geom.kernel;
        let (hp, wp) = (p.h + 2 * p.geom.padding, p.w + 2 * p.geom.padding);
        Grid { hp, wp, q: p.n * hp * wp - (kh - 1) * wp - (kw - 1) }
    }

    fn size(&self) -> usize {
        self.hp * self.wp
    }

    fn offset(&self, ky: usize, kx: usize) -> usize {
        ky * self.wp + kx
    }

    fn chunk(&self, k: usize) -> usize {
        (COLS_BUDGET / k.max(1)).clamp(1, self.q)
    }

    /// `[c, n·hp·wp]` padded copy of an `[n, c, h, w]` batch.
    fn pad<F: Real>(&self, x: &[F], p: &Plan) -> Vec<F> {
        let (pad, line) = (p.geom.padding, p.n * self.size());
        let mut out = vec![F::zero(); p.c_in * line];
        for n in 0..p.n {
            for c in 0..p.c_in {
                let src = &x[(n * p.c_in + c) * p.h * p.w..][..p.h * p.w];
                let dst = &mut out[c * line + n * self.size()..][..self.size()];
                for y in 0..p.h {
                    dst[(y + pad) * self.wp + pad..][..p.w].copy_from_slice(&src[y * p.w..][..p.w]);
                }
            }
        }
        out
    }

    /// `[c_out, q]` matrix holding an `[n, c_out, oh, ow]` batch at its
    /// output columns and zero elsewhere.
    fn spread<F: Real>(&self, g: &[F], p: &Plan) -> Vec<F> {
        let mut out = vec![F::zero(); p.c_out * self.q];
        for n in 0..p.n {
            for c in 0..p.c_out {
                let src = &g[(n * p.c_out + c) * p.oh * p.ow..][..p.oh * p.ow];
                let dst = &mut out[c * self.q + n * self.size()..];
                for y in 0..p.oh {
                    dst[y * self.wp..][..p.ow].copy_from_slice(&src[y * p.ow..][..p.ow]);
                }
            }
        }
        out
    }

    /// Inverse of [`Grid::spread`]: keeps the output columns.
    fn collect<F: Real>(&self, m: &[F], p: &Plan, y: &mut [F]) {
        for n in 0..p.n {
            for c in 0..p.c_out {
                let src = &m[c * self.q + n * self.size()..];
                let dst = &mut y[(n * p.c_out + c) * p.oh * p.ow..][..p.oh * p.ow];
                for oy in 0..p.oh {
                    dst[oy * p.ow..][..p.ow].copy_from_slice(&src[oy * self.wp..][..p.ow]);
                }
            }
        }
    }

    /// Columns `[q0, q0 + len)` of the `[K, q]` im2col matrix of `xp`.
    fn im2col<F: Real>(&self, xp: &[F], p: &Plan, q0: usize, len: usize, cols: &mut Vec<F>) {
        let (kh, kw) = p.geom.kernel;
        let line = p.n * self.size();
        cols.clear();
        cols.reserve(p.k() * len);
        for c in 0..p.c_in {
            for ky in 0..kh {
                for kx in 0..kw {
                    cols.extend_from_slice(&xp[c * line + self.offset(ky, kx) + q0..][..len]);
                }
            }
        }
    }
}

fn grid_forward<F: Real>(x: &[F], wmat: &[F], p: &Plan, y: &mut [F]) {
    let (grid, k) = (Grid::new(p), p.k());
    let xp = grid.pad(x, p);
    let mut full = vec![F::zero(); p.c_out * grid.q];
    let mut cols = Vec::new();
    let chunk = grid.chunk(k);
    for q0 in (0..grid.q).step_by(chunk) {
        let len = chunk.min(grid.q - q0);
        grid.im2col(&xp, p, q0, len, &mut cols);
        F::gemm(p.c_out, k, len, F::one(), wmat, k, 1, &cols, len, 1, F::zero(), &mut full[q0..], grid.q, 1);
    }
    grid.collect(&full, p, y);
}

/// Stride-1 adjoint as a forward correlation: `gx` is `g` zero-padded by
/// `k - 1 - pad` and correlated with the spatially flipped, channel-swapped
/// kernel. Needs a square kernel with `pad < k`.
fn flipped_adjoint<F: Real>(g: &[F], wmat: &[F], p: &Plan, gx: &mut [F]) {
    let (kh, kw) = p.geom.kernel;
    let taps = kh * kw;
    let mut flipped = vec![F::zero(); wmat.len()];
    for co in 0..p.c_out {
        for ci in 0..p.c_in {
            for t in 0..taps {
                flipped[(ci * p.c_out + co) * taps + (taps - 1 - t)] = wmat[(co * p.c_in + ci) * taps + t];
            }
        }
    }
    let adj = Plan {
        n: p.n,
        c_in: p.c_out,
        h: p.oh,
        w: p.ow,
        c_out: p.c_in,
        oh: p.h,
        ow: p.w,
        geom: ConvGeometry::square(kh, 1, kh - 1 - p.geom.padding),
    };
    grid_forward(g, &flipped, &adj, gx);
}

fn grid_weight_grad<F: Real>(x: &[F], g: &[F], p: &Plan, gw: &mut [F]) {
    let (grid, k) = (Grid::new(p), p.k());
    let xp = grid.pad(x, p);
    let gs = grid.spread(g, p);
    let mut cols = Vec::new();
    let chunk = grid.chunk(k);
    for q0 in (0..grid.q).step_by(chunk) {
        let len = chunk.min(grid.q - q0);
        grid.im2col(&xp, p, q0, len, &mut cols);
        F::gemm(p.c_out, len, k, F::one(), &gs[q0..], grid.q, 1, &cols, 1, len, F::one(), gw, k, 1);
    }
}

/// `y[c_out, P] = W[c_out, K] · cols(x)[K, P]`, overwriting `y`.
fn corr_forward<F: Real>(x: &[F], wmat: &[F], p: &Plan, y: &mut [F]) {
    if p.geom.stride == 1 {
        return grid_forward(x, wmat, p, y);
    }
    let k = p.k();
    let (mut cols, mut out) = (Vec::new(), Vec::new());
    for (r0, rows) in p.chunks() {
        let len = rows * p.ow;
        im2col(x, p, r0, rows, &mut cols);
        out.resize(p.c_out * len, F::zero());
        F::gemm(p.c_out, k, len, F::one(), wmat, k, 1, &cols, len, 1, F::zero(), &mut out, len, 1);
        scatter(&out, p, r0, rows, y);
    }
}

/// `gx = col2im(Wᵀ · g)`, overwriting `gx`.
fn corr_adjoint<F: Real>(g: &[F], wmat: &[F], p: &Plan, gx: &mut [F]) {
    let (kh, kw) = p.geom.kernel;
    if p.geom.stride == 1 && kh == kw && p.geom.padding < kh {
        return flipped_adjoint(g, wmat, p, gx);
    }
    gx.fill(F::zero());
    let k = p.k();
    let (mut gm, mut cols) = (Vec::new(), Vec::new());
    for (r0, rows) in p.chunks() {
        let len = rows * p.ow;
        gather(g, p, r0, rows, &mut gm);
        cols.resize(k * len, F::zero());
        F::gemm(k, p.c_out, len, F::one(), wmat, 1, k, &gm, len, 1, F::zero(), &mut cols[..k * len], len, 1);
        col2im_add(&cols[..k * len], p, r0, rows, gx);
    }
}

/// `gw[c_out, K] += g[c_out, P] · cols(x)ᵀ`.
fn corr_weight_grad<F: Real>(x: &[F], g: &[F], p: &Plan, gw: &mut [F]) {
    if p.geom.stride == 1 {
        return grid_weight_grad(x, g, p, gw);
    }
    let k = p.k();
    let (mut gm, mut cols) = (Vec::new(), Vec::new());
    for (r0, rows) in p.chunks() {
        let len = rows * p.ow;
        gather(g, p, r0, rows, &mut gm);
        im2col(x, p, r0, rows, &mut cols);
        F::gemm(p.c_out, len, k, F::one(), &gm, len, 1, &cols, 1, len, F::one(), gw, k, 1);
    }
}

fn check_bias<F: Real>(op: &'static str, b: Option<&Tensor<F>>, channels: usize) -> Result<()> {
    if let Some(b) = b {
        if b.numel() != channels {
            return Err(Error::shape(op, format!("bias has {} entries, expected {channels}", b.numel())));
        }
    }
    Ok(())
}

fn add_bias<F: Real>(out: &mut Tensor<F>, b: &Tensor<F>) {
    let s = out.shape();
    let plane = s.plane();
    for n in 0..s.n {
        let sample = out.sample_mut(n);
        for (c, &bv) in b.data().iter().enumerate() {
            for v in &mut sample[c * plane..(c + 1) * plane] {
                *v += bv;
            }
        }
    }
}

fn bias_grad<F: Real>(gout: &Tensor<F>) -> Tensor<F> {
    let s = gout.shape();
    let plane = s.plane();
    let mut gb = Tensor::zeros(Shape::vector(s.c));
    for n in 0..s.n {
        let sample = gout.sample(n);
        for (c, acc) in gb.data_mut().iter_mut().enumerate() {
            *acc += sample[c * plane..(c + 1) * plane].iter().copied().sum::<F>();
        }
    }
    gb
}

fn conv_plan<F: Real>(x: Shape, w: &Tensor<F>, geom: ConvGeometry) -> Result<Plan> {
    let ws = w.shape();
    if x.c != ws.c {
        return Err(Error::shape(
            "conv2d",
            format!("input has {} channels (axis 1 of {x}), weight expects {} (axis 1 of {ws})", x.c, ws.c),
        ));
    }
    if (ws.h, ws.w) != geom.kernel {
        return Err(Error::shape(
            "conv2d",
            format!("weight kernel {}x{} disagrees with geometry {:?}", ws.h, ws.w, geom.kernel),
        ));
    }
    let (oh, ow) = geom.output_dims(x.h, x.w).ok_or_else(|| {
        Error::shape("conv2d", format!("geometry {geom:?} yields no output for {}x{} input", x.h, x.w))
    })?;
    Ok(Plan { n: x.n, c_in: x.c, h: x.h, w: x.w, c_out: ws.n, oh, ow, geom })
}

/// Plan of the correlation whose adjoint is the transposed convolution:
/// it maps the (large) output space back onto the input space.
fn transposed_plan<F: Real>(x: Shape, w: &Tensor<F>, geom: ConvGeometry) -> Result<Plan> {
    let ws = w.shape();
    if x.c != ws.n {
        return Err(Error::shape(
            "conv_transpose2d",
            format!("input has {} channels (axis 1 of {x}), weight expects {} (axis 0 of {ws})", x.c, ws.n),
        ));
    }
    if (ws.h, ws.w) != geom.kernel {
        return Err(Error::shape(
            "conv_transpose2d",
            format!("weight kernel {}x{} disagrees with geometry {:?}", ws.h, ws.w, geom.kernel),
        ));
    }
    let (oh, ow) = geom.transposed_dims(x.h, x.w).ok_or_else(|| {
        Error::shape("conv_transpose2d", format!("geometry {geom:?} yields no output for {}x{} input", x.h, x.w))
    })?;
    Ok(Plan { n: x.n, c_in: ws.c, h: oh, w: ow, c_out: ws.n, oh: x.h, ow: x.w, geom })
}

/// Cross-correlation with zero padding. `w` is `[out, in, kh, kw]`.
pub fn conv2d<F: Real>(x: &Tensor<F>, w: &Tensor<F>, b: Option<&Tensor<F>>, geom: ConvGeometry) -> Result<Tensor<F>> {
    let xs = x.shape();
    let p = conv_plan(xs, w, geom)?;
    check_bias("conv2d", b, p.c_out)?;
    let mut out = Tensor::zeros(Shape::new(xs.n, p.c_out, p.oh, p.ow));
    corr_forward(x.data(), w.data(), &p, out.data_mut());
    if let Some(b) = b {
        add_bias(&mut out, b);
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub struct ConvGrads<F> {
    pub input: Option<Tensor<F>>,
    pub weight: Option<Tensor<F>>,
    pub bias: Option<Tensor<F>>,
}

pub fn conv2d_backward<F: Real>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    gout: &Tensor<F>,
    geom: ConvGeometry,
    need: [bool; 3],
) -> Result<ConvGrads<F>> {
    let xs = x.shape();
    let p = conv_plan(xs, w, geom)?;
    let input = need[0].then(|| {
        let mut gx = Tensor::zeros(xs);
        corr_adjoint(gout.data(), w.data(), &p, gx.data_mut());
        gx
    });
    let weight = need[1].then(|| {
        let mut gw = Tensor::zeros(w.shape());
        corr_weight_grad(x.data(), gout.data(), &p, gw.data_mut());
        gw
    });
    let bias = need[2].then(|| bias_grad(gout));
    Ok(ConvGrads { input, weight, bias })
}

/// Transposed convolution (the adjoint of [`conv2d`] with the same geometry).
/// `w` is `[in, out, kh, kw]`.
pub fn conv_transpose2d<F: Real>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    b: Option<&Tensor<F>>,
    geom: ConvGeometry,
) -> Result<Tensor<F>> {
    let xs = x.shape();
    let p = transposed_plan(xs, w, geom)?;
    check_bias("conv_transpose2d", b, p.c_in)?;
    let mut out = Tensor::zeros(Shape::new(xs.n, p.c_in, p.h, p.w));
    corr_adjoint(x.data(), w.data(), &p, out.data_mut());
    if let Some(b) = b {
        add_bias(&mut out, b);
    }
    Ok(out)
}

pub fn conv_transpose2d_backward<F: Real>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    gout: &Tensor<F>,
    geom: ConvGeometry,
    need: [bool; 3],
) -> Result<ConvGrads<F>> {
    let xs = x.shape();
    let p = transposed_plan(xs, w, geom)?;
    let input = need[0].then(|| {
        let mut gx = Tensor::zeros(xs);
        corr_forward(gout.data(), w.data(), &p, gx.data_mut());
        gx
    });
    let weight = need[1].then(|| {
        let mut gw = Tensor::zeros(w.shape());
        corr_weight_grad(gout.data(), x.data(), &p, gw.data_mut());
        gw
    });
    let bias = need[2].then(|| bias_grad(gout));
    Ok(ConvGrads { input, weight, bias })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_formulas() {
        let g = ConvGeometry::same(3);
        assert_eq!(g.output_dims(24, 24), Some((24, 24)));
        assert_eq!(ConvGeometry::square(3, 2, 1).output_dims(7, 6), Some((4, 3)));
        assert_eq!(ConvGeometry::square(8, 4, 2).transposed_dims(24, 24), Some((96, 96)));
        assert_eq!(ConvGeometry::square(6, 2, 2).transposed_dims(10, 12), Some((20, 24)));
        assert_eq!(ConvGeometry::square(7, 3, 2).transposed_dims(10, 10), Some((30, 30)));
        assert_eq!(ConvGeometry::square(5, 1, 0).output_dims(3, 3), None);
        assert_eq!(ConvGeometry::square(3, 0, 1).output_dims(3, 3), None);
    }

    #[test]
    fn ones_kernel_counts_overlap() {
        let x = Tensor::<f64>::full(Shape::new(1, 1, 3, 3), 1.0);
        let w = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let y = conv2d(&x, &w, Some(&Tensor::zeros(Shape::vector(1))), ConvGeometry::same(3)).unwrap();
        assert_eq!(y.at(0, 0, 1, 1), 9.0);
        for (r, c) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(y.at(0, 0, r, c), 4.0);
        }
        assert_eq!(y.at(0, 0, 0, 1), 6.0);
    }

    fn delta3() -> Tensor<f64> {
        Tensor::from_fn(Shape::new(1, 1, 3, 3), |_, _, y, x| if y == 1 && x == 1 { 1.0 } else { 0.0 })
    }

    #[test]
    fn delta_kernel_is_identity() {
        let x = Tensor::from_fn(Shape::new(2, 1, 5, 4), |n, _, y, x| (n * 31 + y * 7 + x) as f64 * 0.1);
        let y = conv2d(&x, &delta3(), None, ConvGeometry::same(3)).unwrap();
        assert_eq!(y, x);
        let yt = conv_transpose2d(&x, &delta3(), None, ConvGeometry::same(3)).unwrap();
        assert_eq!(yt, x);
    }

    #[test]
    fn channel_mismatch_names_axes() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 2, 4, 4));
        let w = Tensor::zeros(Shape::new(3, 4, 3, 3));
        let err = conv2d(&x, &w, None, ConvGeometry::same(3)).unwrap_err().to_string();
        assert!(err.contains("axis 1"), "{err}");
    }

    #[test]
    fn chunked_path_matches_single_chunk() {
        // Large enough K·P that the column buffer is split into several chunks.
        let x = Tensor::from_fn(Shape::new(1, 64, 80, 70), |_, c, y, x| ((c * 13 + y * 7 + x * 3) % 17) as f32 - 8.0);
        let w = Tensor::from_fn(Shape::new(2, 64, 3, 3), |o, i, y, x| ((o + i * 5 + y * 3 + x) % 7) as f32 - 3.0);
        let geom = ConvGeometry::same(3);
        let p = conv_plan(x.shape(), &w, geom).unwrap();
        assert!(p.chunk_rows() < p.rows());
        let y = conv2d(&x, &w, None, geom).unwrap();
        // direct evaluation at a few positions
        for &(o, r, c) in &[(0, 0, 0), (1, 79, 69), (0, 40, 33), (1, 1, 68)] {
            let mut acc = 0.0f32;
            for i in 0..64 {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let (iy, ix) = (r as isize + ky as isize - 1, c as isize + kx as isize - 1);
                        if (0..80).contains(&iy) && (0..70).contains(&ix) {
                            acc += w.at(o, i, ky, kx) * x.at(0, i, iy as usize, ix as usize);
                        }
                    }
                }
            }
            assert_eq!(y.at(0, o, r, c), acc);
        }
    }
}
