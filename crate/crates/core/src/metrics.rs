//! PSNR / SSIM on the luminance channel and dataset-level reports.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::imaging::{resize_bicubic, rgb_to_y, Dataset, Domain, Image, SrPair};

/// Identifier of the colour transform applied before scoring.
pub const COLOR_TRANSFORM: &str = "ycbcr601-studio-y";

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

/// Removes `s` pixels from every side.
pub fn shave_border(img: &Image, s: usize) -> Result<Image> {
    if s == 0 {
        return Ok(img.clone());
    }
    if img.height() <= 2 * s || img.width() <= 2 * s {
        return Err(Error::Image(format!(
            "cannot shave {s} pixels from a {}x{} image",
            img.height(),
            img.width()
        )));
    }
    img.crop(s, s, img.height() - 2 * s, img.width() - 2 * s)
}

fn same_dims(op: &'static str, a: &Image, b: &Image) -> Result<()> {
    let (da, db) = ((a.channels(), a.height(), a.width()), (b.channels(), b.height(), b.width()));
    if da != db {
        return Err(Error::shape(op, format!("{da:?} vs {db:?}")));
    }
    Ok(())
}

/// `10 log10(255² / MSE)` on the 8-bit scale; identical images give `+inf`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    same_dims("psnr", a, b)?;
    let (ka, kb) = (255.0 / a.domain().peak(), 255.0 / b.domain().peak());
    let n = a.data().len() as f64;
    let mse = a.data().iter().zip(b.data()).map(|(&x, &y)| (x * ka - y * kb).powi(2)).sum::<f64>() / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

fn gaussian_1d() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> =
        (0..SSIM_WINDOW).map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

// Separable 'valid' correlation of an h×w plane with the window.
fn filter_valid(src: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&line[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (i, &kv) in k.iter().enumerate() {
            let line = &rows[(y + i) * ow..(y + i + 1) * ow];
            out[y * ow..(y + 1) * ow].iter_mut().zip(line).for_each(|(o, v)| *o += kv * v);
        }
    }
    out
}

/// Mean local SSIM of two single-channel images on the 8-bit scale:
/// 11×11 Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03, windows fully
/// inside the image only.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_dims("ssim", a, b)?;
    if a.channels() != 1 {
        return Err(Error::Image(format!("ssim expects one channel, got {}", a.channels())));
    }
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Image(format!("{h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")));
    }
    let (ka, kb) = (255.0 / a.domain().peak(), 255.0 / b.domain().peak());
    let x: Vec<f64> = a.data().iter().map(|v| v * ka).collect();
    let y: Vec<f64> = b.data().iter().map(|v| v * kb).collect();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let k = gaussian_1d();
    let mx = filter_valid(&x, h, w, &k);
    let my = filter_valid(&y, h, w, &k);
    let sxx = filter_valid(&prod(&x, &x), h, w, &k);
    let syy = filter_valid(&prod(&y, &y), h, w, &k);
    let sxy = filter_valid(&prod(&x, &y), h, w, &k);

    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (m1, m2) = (mx[i], my[i]);
            let (v1, v2, cov) = (sxx[i] - m1 * m1, syy[i] - m2 * m2, sxy[i] - m1 * m2);
            ((2.0 * m1 * m2 + c1) * (2.0 * cov + c2)) / ((m1 * m1 + m2 * m2 + c1) * (v1 + v2 + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

/// Scores one SR/HR pair: SR rounded to 8 bits, both converted to
/// luminance and shaved by `shave` pixels.
pub fn score_pair(sr: &Image, hr: &Image, shave: usize) -> Result<(f64, f64)> {
    let to_y = |img: &Image| -> Result<Image> {
        let q = img.to_domain(Domain::Byte).quantize();
        if q.channels() == 3 {
            rgb_to_y(&q)
        } else {
            Ok(q)
        }
    };
    let sy = shave_border(&to_y(sr)?, shave)?;
    let hy = shave_border(&to_y(hr)?, shave)?;
    Ok((psnr(&sy, &hy)?, ssim(&sy, &hy)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageScore {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub scale: usize,
    pub images: Vec<ImageScore>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub shave: usize,
    pub color_transform: String,
}

fn fmt_metric(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

impl EvalReport {
    pub fn from_scores(dataset: &str, scale: usize, mut images: Vec<ImageScore>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Dataset(format!("no images scored for `{dataset}`")));
        }
        images.sort_by(|a, b| a.name.cmp(&b.name));
        let n = images.len() as f64;
        let mean_psnr = images.iter().map(|s| s.psnr).sum::<f64>() / n;
        let mean_ssim = images.iter().map(|s| s.ssim).sum::<f64>() / n;
        Ok(EvalReport {
            dataset: dataset.to_string(),
            scale,
            images,
            mean_psnr,
            mean_ssim,
            shave: scale,
            color_transform: COLOR_TRANSFORM.to_string(),
        })
    }

    /// `name,psnr,ssim` records; `+inf` is written as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,psnr,ssim\n");
        for s in &self.images {
            let _ = writeln!(out, "{},{},{}", s.name, fmt_metric(s.psnr), fmt_metric(s.ssim));
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "dataset={} scale=x{} images={} psnr={} ssim={} shave={} color={}",
            self.dataset,
            self.scale,
            self.images.len(),
            fmt_metric(self.mean_psnr),
            fmt_metric(self.mean_ssim),
            self.shave,
            self.color_transform
        )
    }
}

/// Upscales the LR image of `pair` with plain bicubic interpolation.
pub fn bicubic_upscale(pair: &SrPair) -> Result<Image> {
    resize_bicubic(&pair.lr, pair.hr.height(), pair.hr.width(), true)
}

/// Scores `upscale(pair)` against each HR image with shave = scale.
pub fn evaluate(dataset: &Dataset, mut upscale: impl FnMut(&str, &SrPair) -> Result<Image>) -> Result<EvalReport> {
    let mut scores = Vec::with_capacity(dataset.len());
    for (name, pair) in &dataset.items {
        let sr = upscale(name, pair)?;
        let (p, s) = score_pair(&sr, &pair.hr, dataset.scale)?;
        scores.push(ImageScore { name: name.clone(), psnr: p, ssim: s });
    }
    EvalReport::from_scores(&dataset.name, dataset.scale, scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Image {
        Image::from_fn(1, h, w, Domain::Byte, |_, y, x| f(y, x)).unwrap()
    }

    #[test]
    fn shave_sizes() {
        let im = plane(96, 96, |_, _| 0.0);
        let s = shave_border(&im, 4).unwrap();
        assert_eq!((s.height(), s.width()), (88, 88));
        assert_eq!(shave_border(&im, 0).unwrap(), im);
        assert!(shave_border(&plane(8, 20, |_, _| 0.0), 4).is_err());
    }

    #[test]
    fn psnr_one_level() {
        let a = plane(4, 4, |_, _| 100.0);
        let b = plane(4, 4, |_, _| 101.0);
        assert!((psnr(&a, &b).unwrap() - 48.1308).abs() < 1e-4);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ssim_identity_and_window_size() {
        let a = plane(16, 16, |y, x| ((y * 13 + x * 7) % 256) as f64);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(ssim(&plane(10, 16, |_, _| 0.0), &plane(10, 16, |_, _| 0.0)).is_err());
    }

    #[test]
    fn csv_writes_inf() {
        let r = EvalReport::from_scores("d", 2, vec![ImageScore { name: "x".into(), psnr: f64::INFINITY, ssim: 1.0 }])
            .unwrap();
        assert_eq!(r.to_csv(), "name,psnr,ssim\nx,inf,1.0000\n");
        assert!(r.summary().contains("psnr=inf"));
    }
}
