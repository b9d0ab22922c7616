//! Images and the stochastic transforms used to build query sets.
//!
//! Every transform takes an explicit [`SeededRng`] and is a pure function of
//! its inputs. Pixel values live in `[0, 1]` and are clamped after every
//! transform.

mod color;
mod pipeline;

use std::path::Path;

pub use color::{color_distortion, hsv_to_rgb, rgb_to_hsv};
pub use pipeline::{apply_pipeline, preset_pipeline, AugStep, AugmentationPipeline, Preset, Transform};

use crate::rng::SeededRng;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("invalid {what} interval [{lo}, {hi}]")]
    Interval { what: &'static str, lo: f64, hi: f64 },
    #[error("{op} requires an RGB image, got {channels} channel(s)")]
    NeedsRgb { op: &'static str, channels: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T, E = ImageError> = std::result::Result<T, E>;

/// Row-major, channel-last image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Image> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::Invalid(format!("channels must be 1 or 3, got {channels}")));
        }
        if pixels.len() != height * width * channels {
            return Err(ImageError::Invalid(format!(
                "{height}x{width}x{channels} image needs {} values, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        let mut img = Image {
            height,
            width,
            channels,
            pixels,
        };
        img.clamp();
        Ok(img)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Image> {
        Image::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    fn clamp(&mut self) {
        for v in &mut self.pixels {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
    }

    fn same_shape_with(&self, pixels: Vec<f32>) -> Image {
        let mut img = Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            pixels,
        };
        img.clamp();
        img
    }

    /// Fraction of pixel values that differ between two equally sized images.
    pub fn fraction_differing(&self, other: &Image) -> f64 {
        assert_eq!(self.pixels.len(), other.pixels.len());
        let n = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .filter(|(a, b)| a.to_bits() != b.to_bits())
            .count();
        n as f64 / self.pixels.len().max(1) as f64
    }

    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(self.pixels.len(), other.pixels.len());
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / self.pixels.len().max(1) as f64
    }

    /// Decodes a PNG (or any supported raster) to 8-bit levels scaled to
    /// `[0, 1]`. Grayscale sources stay single-channel; alpha is dropped.
    pub fn load_png(path: &Path) -> Result<Image> {
        let io = |source| ImageError::Io {
            path: path.display().to_string(),
            source,
        };
        let img = image::open(path).map_err(io)?;
        if img.color().has_color() {
            let rgb = img.to_rgb8();
            let (w, h) = rgb.dimensions();
            Image::new(
                h as usize,
                w as usize,
                3,
                rgb.as_raw().iter().map(|&b| level(b)).collect(),
            )
        } else {
            let l = img.to_luma8();
            let (w, h) = l.dimensions();
            Image::new(
                h as usize,
                w as usize,
                1,
                l.as_raw().iter().map(|&b| level(b)).collect(),
            )
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.pixels.iter().map(|&v| to_byte(v)).collect();
        let (w, h) = (self.width as u32, self.height as u32);
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(path, &bytes, w, h, color, image::ImageFormat::Png).map_err(|source| {
            ImageError::Io {
                path: path.display().to_string(),
                source,
            }
        })
    }

    /// Rounds every value to the nearest 8-bit level.
    pub fn quantized(&self) -> Image {
        self.same_shape_with(self.pixels.iter().map(|&v| level(to_byte(v))).collect())
    }
}

/// The `[0, 1]` value of an 8-bit level.
pub fn level(b: u8) -> f32 {
    b as f32 / 255.0
}

pub fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ImageError::Probability(p))
    }
}

pub fn horizontal_flip(img: &Image) -> Image {
    let (w, c) = (img.width, img.channels);
    let mut out = Vec::with_capacity(img.pixels.len());
    for row in img.pixels.chunks(w * c) {
        for x in (0..w).rev() {
            out.extend_from_slice(&row[x * c..(x + 1) * c]);
        }
    }
    img.same_shape_with(out)
}

pub fn color_invert(img: &Image) -> Image {
    img.same_shape_with(img.pixels.iter().map(|v| 1.0 - v).collect())
}

/// Mirrors about the vertical axis with probability `p` (one draw).
pub fn random_horizontal_flip(img: &Image, p: f64, rng: &mut SeededRng) -> Result<Image> {
    check_probability(p)?;
    Ok(if rng.bernoulli(p) {
        horizontal_flip(img)
    } else {
        img.clone()
    })
}

/// `v ↦ 1 − v` with probability `p` (one draw).
pub fn random_color_invert(img: &Image, p: f64, rng: &mut SeededRng) -> Result<Image> {
    check_probability(p)?;
    Ok(if rng.bernoulli(p) {
        color_invert(img)
    } else {
        img.clone()
    })
}

/// Bilinear sample at fractional source coordinates, clamped to the rectangle
/// `[y0, y1] × [x0, x1]`.
fn bilinear_clamped(img: &Image, sy: f64, sx: f64, rect: (usize, usize, usize, usize), out: &mut Vec<f32>) {
    let (y0, y1, x0, x1) = rect;
    let sy = sy.clamp(y0 as f64, y1 as f64);
    let sx = sx.clamp(x0 as f64, x1 as f64);
    let (fy, fx) = (sy.floor(), sx.floor());
    let (ty, tx) = ((sy - fy) as f32, (sx - fx) as f32);
    let (ya, xa) = (fy as usize, fx as usize);
    let (yb, xb) = ((ya + 1).min(y1), (xa + 1).min(x1));
    for c in 0..img.channels {
        let top = img.get(ya, xa, c) * (1.0 - tx) + img.get(ya, xb, c) * tx;
        let bottom = img.get(yb, xa, c) * (1.0 - tx) + img.get(yb, xb, c) * tx;
        out.push(top * (1.0 - ty) + bottom * ty);
    }
}

/// Resizes the sub-rectangle at `(top, left)` of size `h × w` to
/// `out_h × out_w` with half-pixel-centred bilinear interpolation.
pub fn resize_region(img: &Image, top: usize, left: usize, h: usize, w: usize, out_h: usize, out_w: usize) -> Image {
    let rect = (top, top + h - 1, left, left + w - 1);
    let (sy, sx) = (h as f64 / out_h as f64, w as f64 / out_w as f64);
    let mut out = Vec::with_capacity(out_h * out_w * img.channels);
    for y in 0..out_h {
        let src_y = top as f64 + (y as f64 + 0.5) * sy - 0.5;
        for x in 0..out_w {
            let src_x = left as f64 + (x as f64 + 0.5) * sx - 0.5;
            bilinear_clamped(img, src_y, src_x, rect, &mut out);
        }
    }
    let mut res = Image {
        height: out_h,
        width: out_w,
        channels: img.channels,
        pixels: out,
    };
    res.clamp();
    res
}

pub const DEFAULT_CROP_RATIO: (f64, f64) = (3.0 / 4.0, 4.0 / 3.0);

/// Random sub-rectangle with area fraction in `[scale_min, scale_max]` and
/// aspect ratio in [`DEFAULT_CROP_RATIO`], resized to `out_h × out_w`.
pub fn random_resized_crop(
    img: &Image,
    scale_min: f64,
    scale_max: f64,
    out_h: usize,
    out_w: usize,
    rng: &mut SeededRng,
) -> Result<Image> {
    random_resized_crop_with_ratio(img, (scale_min, scale_max), DEFAULT_CROP_RATIO, out_h, out_w, rng)
}

/// As [`random_resized_crop`] with an explicit aspect-ratio interval.
///
/// Up to ten proposals are drawn (area, then log-uniform ratio, then
/// position); if none fits, the largest centred crop within the ratio bounds
/// is used.
pub fn random_resized_crop_with_ratio(
    img: &Image,
    scale: (f64, f64),
    ratio: (f64, f64),
    out_h: usize,
    out_w: usize,
    rng: &mut SeededRng,
) -> Result<Image> {
    let (smin, smax) = scale;
    if !(smin > 0.0 && smin <= smax && smax <= 1.0) {
        return Err(ImageError::Interval {
            what: "crop scale",
            lo: smin,
            hi: smax,
        });
    }
    if !(ratio.0 > 0.0 && ratio.0 <= ratio.1) {
        return Err(ImageError::Interval {
            what: "crop aspect ratio",
            lo: ratio.0,
            hi: ratio.1,
        });
    }
    if out_h == 0 || out_w == 0 {
        return Err(ImageError::Invalid("output dimensions must be positive".into()));
    }
    let (hh, ww) = (img.height, img.width);
    let area = (hh * ww) as f64;
    for _ in 0..10 {
        let target = area * rng.uniform_range(smin, smax);
        let log_ratio = rng.uniform_range(ratio.0.ln(), ratio.1.ln());
        let r = log_ratio.exp();
        let w = (target * r).sqrt().round() as usize;
        let h = (target / r).sqrt().round() as usize;
        if w > 0 && h > 0 && w <= ww && h <= hh {
            let top = rng.below(hh - h + 1);
            let left = rng.below(ww - w + 1);
            return Ok(resize_region(img, top, left, h, w, out_h, out_w));
        }
    }
    let in_ratio = ww as f64 / hh as f64;
    let (h, w) = if in_ratio < ratio.0 {
        (((ww as f64) / ratio.0).round() as usize, ww)
    } else if in_ratio > ratio.1 {
        (hh, ((hh as f64) * ratio.1).round() as usize)
    } else {
        (hh, ww)
    };
    let (h, w) = (h.clamp(1, hh), w.clamp(1, ww));
    Ok(resize_region(img, (hh - h) / 2, (ww - w) / 2, h, w, out_h, out_w))
}

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian blur with clamp-to-border edges.
pub fn blur_with_sigma(img: &Image, sigma: f64) -> Image {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (h, w, c) = (img.height as i64, img.width as i64, img.channels);
    let mut tmp = vec![0f32; img.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0f64;
                for (i, &kv) in k.iter().enumerate() {
                    let sx = (x + i as i64 - r).clamp(0, w - 1);
                    acc += kv * img.pixels[((y * w + sx) as usize) * c + ch] as f64;
                }
                tmp[((y * w + x) as usize) * c + ch] = acc as f32;
            }
        }
    }
    let mut out = vec![0f32; img.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0f64;
                for (i, &kv) in k.iter().enumerate() {
                    let sy = (y + i as i64 - r).clamp(0, h - 1);
                    acc += kv * tmp[((sy * w + x) as usize) * c + ch] as f64;
                }
                out[((y * w + x) as usize) * c + ch] = acc as f32;
            }
        }
    }
    img.same_shape_with(out)
}

/// Gaussian blur with σ drawn uniformly from `[sigma_min, sigma_max]`.
pub fn gaussian_blur(img: &Image, sigma_min: f64, sigma_max: f64, rng: &mut SeededRng) -> Result<Image> {
    if !(sigma_min > 0.0 && sigma_min <= sigma_max && sigma_max.is_finite()) {
        return Err(ImageError::Interval {
            what: "blur sigma",
            lo: sigma_min,
            hi: sigma_max,
        });
    }
    let sigma = rng.uniform_range(sigma_min, sigma_max);
    Ok(blur_with_sigma(img, sigma))
}

/// Per-channel mean of the four corner pixels.
pub fn corner_fill(img: &Image) -> Vec<f32> {
    let (h, w) = (img.height - 1, img.width - 1);
    (0..img.channels)
        .map(|c| (img.get(0, 0, c) + img.get(0, w, c) + img.get(h, 0, c) + img.get(h, w, c)) / 4.0)
        .collect()
}

/// Rotation by `degrees` (counter-clockwise) about the image centre.
/// Samples falling outside the image take `fill`.
pub fn rotate(img: &Image, degrees: f64, fill: &[f32]) -> Image {
    if degrees == 0.0 {
        return img.clone();
    }
    let (h, w, c) = (img.height, img.width, img.channels);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let tap = |y: i64, x: i64, ch: usize| -> f32 {
        if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
            fill[ch]
        } else {
            img.get(y as usize, x as usize, ch)
        }
    };
    let mut out = Vec::with_capacity(img.pixels.len());
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            // Inverse map: rotate the output coordinate by −θ. Image rows grow
            // downwards, so a visual counter-clockwise turn flips the sign.
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            let (fy, fx) = (sy.floor(), sx.floor());
            let (ty, tx) = ((sy - fy) as f32, (sx - fx) as f32);
            let (iy, ix) = (fy as i64, fx as i64);
            for ch in 0..c {
                let top = tap(iy, ix, ch) * (1.0 - tx) + tap(iy, ix + 1, ch) * tx;
                let bottom = tap(iy + 1, ix, ch) * (1.0 - tx) + tap(iy + 1, ix + 1, ch) * tx;
                out.push(top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    img.same_shape_with(out)
}

/// Rotation by an angle drawn uniformly from `[-max_degrees, max_degrees]`;
/// out-of-bounds samples take the corner-pixel mean.
pub fn random_affine(img: &Image, max_degrees: f64, rng: &mut SeededRng) -> Result<Image> {
    if !(0.0..=180.0).contains(&max_degrees) {
        return Err(ImageError::Interval {
            what: "rotation degrees",
            lo: -max_degrees,
            hi: max_degrees,
        });
    }
    let angle = rng.uniform_range(-max_degrees, max_degrees);
    Ok(rotate(img, angle, &corner_fill(img)))
}

/// Per-channel counts over `bins` equal-width bins covering `[0, 1]`.
pub fn pixel_histogram(img: &Image, bins: usize) -> Result<Vec<Vec<u64>>> {
    if bins < 1 {
        return Err(ImageError::Invalid("histogram needs at least one bin".into()));
    }
    let mut counts = vec![vec![0u64; bins]; img.channels];
    for px in img.pixels.chunks(img.channels) {
        for (c, &v) in px.iter().enumerate() {
            let b = ((v as f64 * bins as f64).floor() as usize).min(bins - 1);
            counts[c][b] += 1;
        }
    }
    Ok(counts)
}

/// Mean pairwise L1 distance between normalized histograms (all channels
/// concatenated).
pub fn histogram_dispersion(hists: &[Vec<Vec<u64>>]) -> f64 {
    let flat: Vec<Vec<f64>> = hists
        .iter()
        .map(|h| {
            let total: u64 = h.iter().map(|c| c.iter().sum::<u64>()).sum();
            h.iter().flatten().map(|&v| v as f64 / total.max(1) as f64).collect()
        })
        .collect();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..flat.len() {
        for j in i + 1..flat.len() {
            sum += flat[i].iter().zip(&flat[j]).map(|(a, b)| (a - b).abs()).sum::<f64>();
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        sum / pairs as f64
    }
}
