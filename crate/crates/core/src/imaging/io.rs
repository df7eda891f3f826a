use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::imaging::{Domain, Image};

/// Reads an 8-bit grayscale or RGB PNG into a `Byte` image. An alpha
/// channel, if present, is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader.with_guessed_format().map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, bytes) = match decoded {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        DynamicImage::ImageLumaA8(_) => (1, decoded.to_luma8().into_raw()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
        DynamicImage::ImageRgba8(_) => (3, decoded.to_rgb8().into_raw()),
        other => {
            return Err(Error::UnsupportedDepth {
                path: path.to_path_buf(),
                detail: format!("{:?}, expected 8 bits per sample", other.color()),
            })
        }
    };
    let plane = w * h;
    let mut data = vec![0.0; channels * plane];
    for (i, px) in bytes.chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * plane + i] = f64::from(v);
        }
    }
    Image::new(channels, h, w, Domain::Byte, data)
}

/// Writes a PNG, clamping and rounding to 8 bits.
pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let q = image.to_domain(Domain::Byte).quantize();
    let (h, w, ch) = (q.height(), q.width(), q.channels());
    let plane = h * w;
    let mut bytes = vec![0u8; ch * plane];
    for i in 0..plane {
        for c in 0..ch {
            bytes[i * ch + c] = q.data()[c * plane + i] as u8;
        }
    }
    let dynamic = if ch == 1 {
        DynamicImage::ImageLuma8(GrayImage::from_raw(w as u32, h as u32, bytes).expect("buffer sized"))
    } else {
        DynamicImage::ImageRgb8(RgbImage::from_raw(w as u32, h as u32, bytes).expect("buffer sized"))
    };
    dynamic
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}
