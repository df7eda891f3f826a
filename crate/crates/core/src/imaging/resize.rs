use crate::error::{Error, Result};
use crate::imaging::{Domain, Image};
use crate::tensor::ops::check_scale;

/// Cubic convolution kernel with a = -0.5.
pub fn bicubic_kernel(x: f64) -> f64 {
    let ax = x.abs();
    let ax2 = ax * ax;
    let ax3 = ax2 * ax;
    if ax <= 1.0 {
        1.5 * ax3 - 2.5 * ax2 + 1.0
    } else if ax <= 2.0 {
        -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    } else {
        0.0
    }
}

/// Per-output-sample taps along one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Contributions {
    /// `indices[i]` are input positions read by output `i`.
    pub indices: Vec<Vec<usize>>,
    /// Normalized weights matching `indices`; each row sums to one.
    pub weights: Vec<Vec<f64>>,
}

/// Taps for resampling `in_len` samples to `out_len`.
///
/// Output sample `x` (1-based) maps to input coordinate
/// `u = x/scale + (1 - 1/scale)/2`. When downscaling with `antialias` the
/// kernel is widened by `1/scale`. Positions outside the input are mirrored
/// (`.. 2 1 | 1 2 .. n | n n-1 ..`), and taps whose weight is zero for every
/// output sample are dropped.
pub fn contributions(in_len: usize, out_len: usize, antialias: bool) -> Contributions {
    let scale = out_len as f64 / in_len as f64;
    let (stretch, width) = if scale < 1.0 && antialias { (scale, 4.0 / scale) } else { (1.0, 4.0) };
    let taps = width.ceil() as usize + 2;
    let period = 2 * in_len as i64;

    let mut raw_idx = Vec::with_capacity(out_len);
    let mut raw_w = Vec::with_capacity(out_len);
    for x in 1..=out_len {
        let u = x as f64 / scale + 0.5 * (1.0 - 1.0 / scale);
        let left = (u - width / 2.0).floor() as i64;
        let mut idx = Vec::with_capacity(taps);
        let mut w = Vec::with_capacity(taps);
        for p in 0..taps as i64 {
            let j = left + p;
            w.push(stretch * bicubic_kernel(stretch * (u - j as f64)));
            // 1-based j folded onto the mirrored sequence of period 2n
            let m = (j - 1).rem_euclid(period);
            let k = if m < in_len as i64 { m } else { period - 1 - m };
            idx.push(k as usize);
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        raw_idx.push(idx);
        raw_w.push(w);
    }

    let keep: Vec<bool> = (0..taps).map(|p| raw_w.iter().any(|row| row[p] != 0.0)).collect();
    let filter = |row: Vec<f64>| row.into_iter().zip(&keep).filter(|(_, &k)| k).map(|(v, _)| v).collect();
    let filter_idx =
        |row: Vec<usize>| row.into_iter().zip(&keep).filter(|(_, &k)| k).map(|(v, _)| v).collect();
    Contributions {
        indices: raw_idx.into_iter().map(filter_idx).collect(),
        weights: raw_w.into_iter().map(filter).collect(),
    }
}

fn resize_height(img: &Image, out_h: usize, antialias: bool) -> Image {
    let (ch, h, w) = (img.channels(), img.height(), img.width());
    let taps = contributions(h, out_h, antialias);
    let mut out = vec![0.0; ch * out_h * w];
    for c in 0..ch {
        let src = img.plane(c);
        for (y, (idx, wt)) in taps.indices.iter().zip(&taps.weights).enumerate() {
            let row = &mut out[(c * out_h + y) * w..(c * out_h + y + 1) * w];
            for (&i, &k) in idx.iter().zip(wt) {
                let line = &src[i * w..(i + 1) * w];
                row.iter_mut().zip(line).for_each(|(o, &s)| *o += k * s);
            }
        }
    }
    finish(img, out_h, w, out)
}

fn resize_width(img: &Image, out_w: usize, antialias: bool) -> Image {
    let (ch, h, w) = (img.channels(), img.height(), img.width());
    let taps = contributions(w, out_w, antialias);
    let mut out = vec![0.0; ch * h * out_w];
    for c in 0..ch {
        let src = img.plane(c);
        for y in 0..h {
            let line = &src[y * w..(y + 1) * w];
            let row = &mut out[(c * h + y) * out_w..(c * h + y + 1) * out_w];
            for (o, (idx, wt)) in row.iter_mut().zip(taps.indices.iter().zip(&taps.weights)) {
                *o = idx.iter().zip(wt).map(|(&i, &k)| k * line[i]).sum();
            }
        }
    }
    finish(img, h, out_w, out)
}

// Byte images are stored as 8-bit after every pass, like an integer image
// type would be.
fn finish(src: &Image, h: usize, w: usize, data: Vec<f64>) -> Image {
    let out = Image::new(src.channels(), h, w, src.domain(), data).expect("dimensions are positive");
    if src.domain() == Domain::Byte {
        out.quantize()
    } else {
        out
    }
}

/// Separable bicubic resampling to `out_h × out_w`.
///
/// The axis with the smaller scale ratio is processed first (height on
/// ties). For `Byte` images every pass is rounded to 8 bits.
pub fn resize_bicubic(img: &Image, out_h: usize, out_w: usize, antialias: bool) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Image(format!("target size {out_h}x{out_w} is empty")));
    }
    let sh = out_h as f64 / img.height() as f64;
    let sw = out_w as f64 / img.width() as f64;
    let mut cur = img.clone();
    let height_first = sh <= sw;
    for pass in 0..2 {
        let do_height = (pass == 0) == height_first;
        if do_height && out_h != cur.height() {
            cur = resize_height(&cur, out_h, antialias);
        } else if !do_height && out_w != cur.width() {
            cur = resize_width(&cur, out_w, antialias);
        }
    }
    Ok(cur)
}

/// Crops the bottom/right so both sides are multiples of `scale`.
pub fn modcrop(img: &Image, scale: usize) -> Result<Image> {
    let (h, w) = (img.height() - img.height() % scale, img.width() - img.width() % scale);
    if h == 0 || w == 0 {
        return Err(Error::Image(format!(
            "{}x{} image is smaller than scale {scale}",
            img.height(),
            img.width()
        )));
    }
    img.crop(0, 0, h, w)
}

/// Aligned high/low resolution images.
#[derive(Clone, Debug, PartialEq)]
pub struct SrPair {
    pub hr: Image,
    pub lr: Image,
    pub scale: usize,
}

impl SrPair {
    /// Checks that `lr` is exactly `hr` shrunk by `scale`.
    pub fn new(hr: Image, lr: Image, scale: usize) -> Result<Self> {
        if hr.height() != lr.height() * scale || hr.width() != lr.width() * scale || hr.channels() != lr.channels() {
            return Err(Error::Image(format!(
                "HR {}x{} does not match LR {}x{} at scale {scale}",
                hr.height(),
                hr.width(),
                lr.height(),
                lr.width()
            )));
        }
        Ok(SrPair { hr, lr, scale })
    }
}

/// Modulo-crops `hr` and shrinks it by exactly `1/scale` with antialiased bicubic.
pub fn degrade(hr: &Image, scale: usize) -> Result<SrPair> {
    check_scale(scale)?;
    let hr = modcrop(hr, scale)?;
    let lr = resize_bicubic(&hr, hr.height() / scale, hr.width() / scale, true)?;
    SrPair::new(hr, lr, scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_knots() {
        assert_eq!(bicubic_kernel(0.0), 1.0);
        assert_eq!(bicubic_kernel(1.0), 0.0);
        assert_eq!(bicubic_kernel(2.0), 0.0);
        assert_eq!(bicubic_kernel(-2.5), 0.0);
        assert!((bicubic_kernel(0.5) - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn rows_sum_to_one() {
        for (i, o) in [(10, 5), (9, 3), (7, 28), (5, 5), (1, 4), (4, 1)] {
            for aa in [false, true] {
                let c = contributions(i, o, aa);
                for row in &c.weights {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
                assert!(c.indices.iter().flatten().all(|&k| k < i));
            }
        }
    }

    #[test]
    fn mirror_boundary() {
        let c = contributions(4, 8, false);
        // first output sits at u = 0.75, its leftmost taps fall before the start
        assert_eq!(c.indices[0][0], 1);
        assert_eq!(c.indices[0][1], 0);
    }

    #[test]
    fn modcrop_and_degrade_sizes() {
        let hr = Image::constant(3, 97, 96, Domain::Byte, 77.0).unwrap();
        let pair = degrade(&hr, 4).unwrap();
        assert_eq!((pair.hr.height(), pair.hr.width()), (96, 96));
        assert_eq!((pair.lr.height(), pair.lr.width()), (24, 24));
        assert!(pair.lr.data().iter().all(|&v| v == 77.0));
        assert!(degrade(&Image::constant(1, 3, 9, Domain::Byte, 0.0).unwrap(), 4).is_err());
    }

    #[test]
    fn byte_passes_are_rounded() {
        let img = Image::from_fn(1, 6, 6, Domain::Byte, |_, y, x| ((y * 37 + x * 91) % 256) as f64).unwrap();
        let out = resize_bicubic(&img, 3, 3, true).unwrap();
        assert!(out.data().iter().all(|v| v.fract() == 0.0 && (0.0..=255.0).contains(v)));
    }
}
