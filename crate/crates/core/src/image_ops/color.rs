use super::{Image, ImageError, Result};
use crate::rng::SeededRng;

/// `(h, s, v)` with hue as a fraction of the full circle in `[0, 1)`.
pub fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return (0.0, s, v);
    }
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    ((h / 6.0).rem_euclid(1.0), s, v)
}

pub fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    if s <= 0.0 {
        return (v, v, v);
    }
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as i32).rem_euclid(6);
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Jitter {
    Brightness,
    Contrast,
    Saturation,
    Hue,
}

fn map_hsv(img: &Image, f: impl Fn(f32, f32, f32) -> (f32, f32, f32)) -> Image {
    let mut out = Vec::with_capacity(img.pixels.len());
    for px in img.pixels.chunks(3) {
        let (h, s, v) = rgb_to_hsv(px[0], px[1], px[2]);
        let (h, s, v) = f(h, s, v);
        let (r, g, b) = hsv_to_rgb(h, s, v);
        out.extend_from_slice(&[r, g, b]);
    }
    img.same_shape_with(out)
}

fn luma_mean(img: &Image) -> f32 {
    let n = (img.pixels.len() / 3).max(1) as f64;
    img.pixels
        .chunks(3)
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .sum::<f64>() as f32
        / n as f32
}

/// Brightness, contrast, saturation and hue jitter in a random order.
///
/// Randomness is consumed as: the order (a Fisher–Yates shuffle of the four
/// jitters), then one factor per jitter in the shuffled order. Multiplicative
/// factors are drawn from `[max(0, 1 − 0.8·strength), 1 + 0.8·strength]`; the
/// hue shift from `±0.2·strength` turns. Saturation and hue act in HSV space.
pub fn color_distortion(img: &Image, strength: f64, rng: &mut SeededRng) -> Result<Image> {
    if img.channels != 3 {
        return Err(ImageError::NeedsRgb {
            op: "color_distortion",
            channels: img.channels,
        });
    }
    if !(strength >= 0.0) || !strength.is_finite() {
        return Err(ImageError::Invalid(format!(
            "strength must be non-negative, got {strength}"
        )));
    }
    let mut order = [Jitter::Brightness, Jitter::Contrast, Jitter::Saturation, Jitter::Hue];
    rng.shuffle(&mut order);
    let lo = (1.0 - 0.8 * strength).max(0.0);
    let hi = 1.0 + 0.8 * strength;
    let mut out = img.clone();
    for jitter in order {
        match jitter {
            Jitter::Hue => {
                let shift = rng.uniform_range(-0.2 * strength, 0.2 * strength) as f32;
                if shift != 0.0 {
                    out = map_hsv(&out, |h, s, v| ((h + shift).rem_euclid(1.0), s, v));
                }
            }
            kind => {
                let factor = rng.uniform_range(lo, hi) as f32;
                if factor == 1.0 {
                    continue;
                }
                out = match kind {
                    Jitter::Brightness => out.same_shape_with(out.pixels.iter().map(|v| v * factor).collect()),
                    Jitter::Contrast => {
                        let m = luma_mean(&out);
                        out.same_shape_with(out.pixels.iter().map(|v| (v - m) * factor + m).collect())
                    }
                    Jitter::Saturation => map_hsv(&out, |h, s, v| (h, (s * factor).min(1.0), v)),
                    Jitter::Hue => unreachable!(),
                };
            }
        }
    }
    Ok(out)
}
