use std::f64::consts::PI;

use super::{DataError, Dataset, Result};
use crate::image_ops::{level, to_byte, Image};
use crate::rng::SeededRng;

/// Per-class generator parameters.
struct ClassPattern {
    angle: f64,
    freq: f64,
    blob: (f64, f64),
    blob_sign: f64,
    tint: [f64; 3],
}

impl ClassPattern {
    fn draw(rng: &mut SeededRng) -> Self {
        ClassPattern {
            angle: rng.uniform_range(0.0, PI),
            freq: rng.uniform_range(1.5, 4.5),
            blob: (rng.uniform_range(0.25, 0.75), rng.uniform_range(0.25, 0.75)),
            blob_sign: if rng.bernoulli(0.5) { 1.0 } else { -1.0 },
            tint: [
                rng.uniform_range(0.3, 1.0),
                rng.uniform_range(0.3, 1.0),
                rng.uniform_range(0.3, 1.0),
            ],
        }
    }

    fn render(&self, h: usize, w: usize, channels: usize, rng: &mut SeededRng) -> Image {
        let angle = self.angle + 0.12 * rng.normal();
        let phase = rng.uniform_range(0.0, 2.0 * PI);
        let contrast = rng.uniform_range(0.25, 0.4);
        let by = self.blob.0 + 0.1 * rng.normal();
        let bx = self.blob.1 + 0.1 * rng.normal();
        let radius = rng.uniform_range(0.12, 0.18);
        let tint: Vec<f64> = self.tint.iter().map(|t| t * rng.uniform_range(0.4, 1.6)).collect();
        let (cos, sin) = (angle.cos(), angle.sin());
        let mut px = Vec::with_capacity(h * w * channels);
        for y in 0..h {
            let v = (y as f64 + 0.5) / h as f64;
            for x in 0..w {
                let u = (x as f64 + 0.5) / w as f64;
                let grating = (2.0 * PI * self.freq * (u * cos + v * sin) + phase).sin();
                let d2 = ((u - bx).powi(2) + (v - by).powi(2)) / (radius * radius);
                let blob = self.blob_sign * 0.35 * (-0.5 * d2).exp();
                let base = 0.5 + contrast * grating + blob;
                for &tc in &tint[..channels] {
                    let t = if channels == 1 { 1.0 } else { tc };
                    let value = 0.5 + (base - 0.5) * t + 0.06 * rng.normal();
                    px.push(level(to_byte(value as f32)));
                }
            }
        }
        Image::new(h, w, channels, px).expect("generator produces valid images")
    }
}

/// Procedural labeled dataset: each class is an oriented grating with a
/// class-specific frequency, a bright or dark blob, and a color tint; every
/// sample jitters orientation, phase, contrast, blob position and tint and adds
/// pixel noise. Pixels are quantized to 8-bit levels so PNG export is
/// lossless.
pub fn synthetic_dataset(
    n_classes: usize,
    m_per_class: usize,
    h: usize,
    w: usize,
    channels: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_classes == 0 || m_per_class == 0 || h == 0 || w == 0 {
        return Err(DataError::Invalid(
            "synthetic dataset dimensions must be positive".into(),
        ));
    }
    if channels != 1 && channels != 3 {
        return Err(DataError::Invalid(format!("channels must be 1 or 3, got {channels}")));
    }
    let mut samples = Vec::with_capacity(n_classes * m_per_class);
    for c in 0..n_classes {
        let pattern = ClassPattern::draw(&mut SeededRng::derive(seed, &[c as u64]));
        for k in 0..m_per_class {
            let mut rng = SeededRng::derive(seed, &[c as u64, k as u64 + 1]);
            samples.push((pattern.render(h, w, channels, &mut rng), c));
        }
    }
    Dataset::labeled(samples)
}
