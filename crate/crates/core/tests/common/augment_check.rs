//! Histogram dispersion of augmentation presets.

use ssml::image_ops::{apply_pipeline, histogram_dispersion, pixel_histogram, preset_pipeline, Image, Preset};
use ssml::rng::SeededRng;

pub const SAMPLES: usize = 100;

/// Ten fixed 28×28 RGB test images with photo-like intensity statistics:
/// smooth random fields pushed through a gamma, so histograms lean dark
/// with a long bright tail.
pub fn test_images() -> Vec<Image> {
    let (h, w) = (28, 28);
    (0..10u64)
        .map(|i| {
            let mut rng = SeededRng::derive(2024, &[i]);
            let gamma = 1.0 + 1.5 * rng.uniform();
            let waves: Vec<[f64; 4]> = (0..6)
                .map(|_| {
                    [
                        0.5 * rng.normal(),
                        0.5 * rng.normal(),
                        std::f64::consts::TAU * rng.uniform(),
                        0.5 + rng.uniform(),
                    ]
                })
                .collect();
            let tint: Vec<f64> = (0..3).map(|_| 0.7 + 0.3 * rng.uniform()).collect();
            let mut px = Vec::with_capacity(h * w * 3);
            for y in 0..h {
                for x in 0..w {
                    let s: f64 = waves
                        .iter()
                        .map(|[fy, fx, ph, a]| a * (fy * y as f64 + fx * x as f64 + ph).sin())
                        .sum();
                    let base = 1.0 / (1.0 + (-0.8 * s).exp());
                    for &t in &tint {
                        px.push((t * base.powf(gamma)).clamp(0.0, 1.0) as f32);
                    }
                }
            }
            Image::new(h, w, 3, px).unwrap()
        })
        .collect()
}
/// Mean pairwise L1 distance between 32-bin histograms of `SAMPLES` augmentations.
pub fn dispersion(img: &Image, preset: Preset, seed: u64) -> f64 {
    let pipeline = preset_pipeline(preset);
    let hists: Vec<_> = (0..SAMPLES)
        .map(|i| {
            let mut rng = SeededRng::derive(seed, &[i as u64]);
            let out = apply_pipeline(img, &pipeline, &mut rng).unwrap();
            pixel_histogram(&out, 32).unwrap()
        })
        .collect();
    histogram_dispersion(&hists)
}

/// `(ours, simclr)` dispersion per test image.
pub fn preset_dispersions(seed: u64) -> Vec<(f64, f64)> {
    test_images()
        .iter()
        .map(|img| {
            (
                dispersion(img, Preset::OursRgb, seed),
                dispersion(img, Preset::SimclrRgb, seed),
            )
        })
        .collect()
}
