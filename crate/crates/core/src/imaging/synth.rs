use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imaging::{Domain, Image};

enum Shape {
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64 },
    /// Half-plane `ny·y + nx·x > d` clipped to a disc.
    Wedge { cy: f64, cx: f64, r: f64, ny: f64, nx: f64 },
}

struct Layer {
    shape: Shape,
    color: [f64; 3],
    /// Stripe frequency (cycles per pixel) and orientation; zero frequency
    /// means a flat fill.
    stripes: (f64, f64),
}

impl Layer {
    fn covers(&self, y: f64, x: f64) -> bool {
        match self.shape {
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
            Shape::Ellipse { cy, cx, ry, rx } => ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2) <= 1.0,
            Shape::Wedge { cy, cx, r, ny, nx } => {
                let (dy, dx) = (y - cy, x - cx);
                dy * dy + dx * dx <= r * r && ny * dy + nx * dx > 0.0
            }
        }
    }

    fn shade(&self, y: f64, x: f64) -> [f64; 3] {
        let (freq, angle) = self.stripes;
        if freq == 0.0 {
            return self.color;
        }
        let phase = (y * angle.sin() + x * angle.cos()) * freq * std::f64::consts::TAU;
        let k = 0.5 + 0.5 * phase.sin();
        self.color.map(|c| c * (0.35 + 0.65 * k))
    }
}

/// Deterministic procedural RGB test scene: a smooth colour gradient under
/// overlapping flat and striped shapes, rendered with 4×4 supersampling.
pub fn synthetic_scene(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (height as f64, width as f64);
    let corner = |rng: &mut ChaCha8Rng| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
    let (top, bottom) = (corner(&mut rng), corner(&mut rng));
    let tilt: f64 = rng.random_range(-0.5..0.5);

    let count = rng.random_range(6..=12);
    let mut layers = Vec::with_capacity(count);
    let span = hf.min(wf);
    for _ in 0..count {
        let cy = rng.random_range(0.0..hf);
        let cx = rng.random_range(0.0..wf);
        let a = rng.random_range(0.08..0.35) * span;
        let b = rng.random_range(0.08..0.35) * span;
        let shape = match rng.random_range(0..3) {
            0 => Shape::Rect { y0: cy - a / 2.0, x0: cx - b / 2.0, y1: cy + a / 2.0, x1: cx + b / 2.0 },
            1 => Shape::Ellipse { cy, cx, ry: a / 2.0, rx: b / 2.0 },
            _ => {
                let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                Shape::Wedge { cy, cx, r: a.max(b) / 2.0, ny: t.sin(), nx: t.cos() }
            }
        };
        let stripes = if rng.random_bool(0.35) {
            (rng.random_range(0.04..0.2), rng.random_range(0.0..std::f64::consts::PI))
        } else {
            (0.0, 0.0)
        };
        layers.push(Layer { shape, color: corner(&mut rng), stripes });
    }

    const SS: usize = 4;
    let mut data = vec![0.0; 3 * height * width];
    let plane = height * width;
    for y in 0..height {
        for x in 0..width {
            let mut acc = [0.0; 3];
            for sy in 0..SS {
                for sx in 0..SS {
                    let py = y as f64 + (sy as f64 + 0.5) / SS as f64;
                    let px = x as f64 + (sx as f64 + 0.5) / SS as f64;
                    let t = ((py / hf) + tilt * (px / wf - 0.5)).clamp(0.0, 1.0);
                    let mut rgb = [0.0; 3];
                    for c in 0..3 {
                        rgb[c] = top[c] * (1.0 - t) + bottom[c] * t;
                    }
                    for layer in &layers {
                        if layer.covers(py, px) {
                            rgb = layer.shade(py, px);
                        }
                    }
                    for c in 0..3 {
                        acc[c] += rgb[c];
                    }
                }
            }
            for c in 0..3 {
                data[c * plane + y * width + x] = (acc[c] / (SS * SS) as f64 * 255.0).round().clamp(0.0, 255.0);
            }
        }
    }
    Image::new(3, height, width, Domain::Byte, data).expect("dimensions are positive")
}
