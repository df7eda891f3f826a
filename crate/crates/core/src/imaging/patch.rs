use rand::Rng;

use crate::error::{Error, Result};
use crate::imaging::{degrade, resize_bicubic, Image, SrPair};

/// Factors for the optional scaling augmentation.
pub const SCALE_FACTORS: [f64; 3] = [1.0, 0.8, 0.6];

/// Which random geometric transforms [`augment`] may apply.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AugmentToggles {
    /// Horizontal flip with probability 1/2.
    pub hflip: bool,
    /// Rotation by 0, 90, 180 or 270 degrees, uniformly.
    pub rotate: bool,
    /// Shrink the HR image by a factor from [`SCALE_FACTORS`] before
    /// degradation (see [`scale_augment`]).
    pub scale: bool,
}

impl AugmentToggles {
    pub fn all() -> Self {
        AugmentToggles { hflip: true, rotate: true, scale: true }
    }

    pub fn flips_and_rotations() -> Self {
        AugmentToggles { hflip: true, rotate: true, scale: false }
    }
}

/// Aligned random crop: an LR window of `patch × patch` and the HR window
/// whose origin is `scale` times the LR origin.
pub fn sample_patch<R: Rng + ?Sized>(pair: &SrPair, patch: usize, rng: &mut R) -> Result<(Image, Image)> {
    let (h, w) = (pair.lr.height(), pair.lr.width());
    if patch == 0 || h < patch || w < patch {
        return Err(Error::Image(format!("LR image {h}x{w} is smaller than a {patch}x{patch} patch")));
    }
    let y0 = rng.random_range(0..=h - patch);
    let x0 = rng.random_range(0..=w - patch);
    let s = pair.scale;
    let lr = pair.lr.crop(y0, x0, patch, patch)?;
    let hr = pair.hr.crop(s * y0, s * x0, s * patch, s * patch)?;
    Ok((lr, hr))
}

pub(crate) fn flip_horizontal(img: &Image) -> Image {
    let w = img.width();
    Image::from_fn(img.channels(), img.height(), w, img.domain(), |c, y, x| img.at(c, y, w - 1 - x))
        .expect("same dimensions")
}

/// Counter-clockwise quarter turn.
pub(crate) fn rotate90(img: &Image) -> Image {
    let w = img.width();
    Image::from_fn(img.channels(), w, img.height(), img.domain(), |c, y, x| img.at(c, x, w - 1 - y))
        .expect("same dimensions")
}

/// Applies the same random flip/rotation to both patches. The scaling
/// toggle is ignored here; it acts on whole images through [`scale_augment`].
pub fn augment<R: Rng + ?Sized>(lr: &Image, hr: &Image, rng: &mut R, toggles: AugmentToggles) -> (Image, Image) {
    let (mut lr, mut hr) = (lr.clone(), hr.clone());
    if toggles.hflip && rng.random_bool(0.5) {
        lr = flip_horizontal(&lr);
        hr = flip_horizontal(&hr);
    }
    if toggles.rotate {
        for _ in 0..rng.random_range(0..4u8) {
            lr = rotate90(&lr);
            hr = rotate90(&hr);
        }
    }
    (lr, hr)
}

/// Shrinks `hr` by `factor` (antialiased bicubic) and degrades the result.
pub fn scale_augment(hr: &Image, factor: f64, scale: usize) -> Result<SrPair> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::Image(format!("scaling factor {factor} outside (0, 1]")));
    }
    if factor == 1.0 {
        return degrade(hr, scale);
    }
    let h = ((hr.height() as f64 * factor).round() as usize).max(1);
    let w = ((hr.width() as f64 * factor).round() as usize).max(1);
    degrade(&resize_bicubic(hr, h, w, true)?, scale)
}
