//! Images, file I/O, the bicubic degradation model, luminance conversion,
//! training patches and dataset handling.

mod color;
mod dataset;
mod io;
mod patch;
mod resize;
mod synth;

pub use color::rgb_to_y;
pub use dataset::{hr_files, lr_cache_path, Dataset};
pub use io::{load_image, save_image};
pub use patch::{augment, sample_patch, scale_augment, AugmentToggles, SCALE_FACTORS};
pub use resize::{bicubic_kernel, contributions, degrade, modcrop, resize_bicubic, Contributions, SrPair};
pub use synth::synthetic_scene;

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Value range an [`Image`] lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// 8-bit provenance, values in `[0, 255]`.
    Byte,
    /// Training domain, values in `[0, 1]`.
    Unit,
}

impl Domain {
    pub fn peak(self) -> f64 {
        match self {
            Domain::Byte => 255.0,
            Domain::Unit => 1.0,
        }
    }
}

/// Planar (CHW) image with one or three channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    domain: Domain,
    data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, domain: Domain, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Image(format!("images have 1 or 3 channels, got {channels}")));
        }
        if height == 0 || width == 0 {
            return Err(Error::Image(format!("empty image {height}x{width}")));
        }
        if data.len() != channels * height * width {
            return Err(Error::Image(format!(
                "{} samples for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        Ok(Image { channels, height, width, domain, data })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        domain: Domain,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Image::new(channels, height, width, domain, data)
    }

    pub fn constant(channels: usize, height: usize, width: usize, domain: Domain, value: f64) -> Result<Self> {
        Image::new(channels, height, width, domain, vec![value; channels * height * width])
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Rescales into `domain`. Converting to `Byte` does not round.
    pub fn to_domain(&self, domain: Domain) -> Image {
        if domain == self.domain {
            return self.clone();
        }
        let k = domain.peak() / self.domain.peak();
        Image { domain, data: self.data.iter().map(|v| v * k).collect(), ..*self }
    }

    /// Clamps to the domain range and, for `Byte`, rounds to the nearest level.
    pub fn quantize(&self) -> Image {
        let peak = self.domain.peak();
        let data = self
            .data
            .iter()
            .map(|&v| {
                let v = v.clamp(0.0, peak);
                if self.domain == Domain::Byte {
                    v.round()
                } else {
                    v
                }
            })
            .collect();
        Image { data, ..*self }
    }

    /// Rectangular window; errors when it does not fit.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Image> {
        if h == 0 || w == 0 || y0 + h > self.height || x0 + w > self.width {
            return Err(Error::Image(format!(
                "crop {h}x{w} at ({y0}, {x0}) exceeds {}x{} image",
                self.height, self.width
            )));
        }
        Image::from_fn(self.channels, h, w, self.domain, |c, y, x| self.at(c, y0 + y, x0 + x))
    }

    /// `(1, C, H, W)` tensor in the unit domain.
    pub fn to_tensor<F: Real>(&self) -> Tensor<F> {
        let k = 1.0 / self.domain.peak();
        let data = self.data.iter().map(|&v| F::lit(v * k)).collect();
        Tensor::new(Shape::new(1, self.channels, self.height, self.width), data).expect("shape matches data")
    }

    /// Sample `n` of an NCHW tensor as a unit-domain image.
    pub fn from_tensor<F: Real>(t: &Tensor<F>, n: usize) -> Result<Image> {
        let s = t.shape();
        if n >= s.n {
            return Err(Error::shape("image", format!("sample {n} of {s}")));
        }
        let data = t.sample(n).iter().map(|v| v.to_f64_lossy()).collect();
        Image::new(s.c, s.h, s.w, Domain::Unit, data)
    }

    /// Stacks equally sized images into one `(N, C, H, W)` unit-domain tensor.
    pub fn batch_tensor<F: Real>(images: &[&Image]) -> Result<Tensor<F>> {
        let first = images.first().ok_or_else(|| Error::Image("empty batch".into()))?;
        let mut data = Vec::with_capacity(images.len() * first.data.len());
        for im in images {
            if (im.channels, im.height, im.width) != (first.channels, first.height, first.width) {
                return Err(Error::Image("batch images differ in size".into()));
            }
            let k = 1.0 / im.domain.peak();
            data.extend(im.data.iter().map(|&v| F::lit(v * k)));
        }
        Tensor::new(Shape::new(images.len(), first.channels, first.height, first.width), data)
    }
}
