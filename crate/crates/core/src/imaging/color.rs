use crate::error::{Error, Result};
use crate::imaging::{Domain, Image};

/// Studio-swing luminance: `Y = 16 + 65.481 R + 128.553 G + 24.966 B` with
/// RGB in `[0, 1]`. The result is a one-channel `Byte` image in `[16, 235]`,
/// not rounded.
pub fn rgb_to_y(img: &Image) -> Result<Image> {
    if img.channels() != 3 {
        return Err(Error::Image(format!("luminance needs 3 channels, got {}", img.channels())));
    }
    let k = 1.0 / img.domain().peak();
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| 16.0 + 65.481 * (r * k) + 128.553 * (g * k) + 24.966 * (b * k))
        .collect();
    Image::new(1, img.height(), img.width(), Domain::Byte, data)
}
