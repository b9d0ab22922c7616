use std::fmt;
use std::str::FromStr;

use super::{
    blur_with_sigma, color_distortion, color_invert, corner_fill, horizontal_flip, random_resized_crop, rotate, Image,
    ImageError, Result,
};
use crate::rng::SeededRng;

/// One stochastic image transform with its parameter ranges.
#[derive(Clone, Debug, PartialEq)]
pub enum Transform {
    HorizontalFlip,
    ColorInvert,
    ResizedCrop { scale_min: f64, scale_max: f64 },
    GaussianBlur { sigma_min: f64, sigma_max: f64 },
    ColorDistortion { strength: f64 },
    RandomAffine { max_degrees: f64 },
}

/// A transform applied with probability `prob`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugStep {
    pub transform: Transform,
    pub prob: f64,
}

impl AugStep {
    pub fn always(transform: Transform) -> Self {
        AugStep { transform, prob: 1.0 }
    }

    pub fn with_prob(transform: Transform, prob: f64) -> Self {
        AugStep { transform, prob }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.prob) {
            return Err(ImageError::Probability(self.prob));
        }
        let interval = |what, lo: f64, hi: f64, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(ImageError::Interval { what, lo, hi })
            }
        };
        match self.transform {
            Transform::ResizedCrop { scale_min, scale_max } => interval(
                "crop scale",
                scale_min,
                scale_max,
                scale_min > 0.0 && scale_min <= scale_max && scale_max <= 1.0,
            ),
            Transform::GaussianBlur { sigma_min, sigma_max } => interval(
                "blur sigma",
                sigma_min,
                sigma_max,
                sigma_min > 0.0 && sigma_min <= sigma_max && sigma_max.is_finite(),
            ),
            Transform::ColorDistortion { strength } if !(strength >= 0.0 && strength.is_finite()) => {
                Err(ImageError::Invalid(format!("color strength {strength}")))
            }
            Transform::RandomAffine { max_degrees } => interval(
                "rotation degrees",
                -max_degrees,
                max_degrees,
                (0.0..=180.0).contains(&max_degrees),
            ),
            _ => Ok(()),
        }
    }
}

/// Ordered list of stochastic transforms: the query-generation function.
///
/// Randomness contract: for each step in declared order, one uniform draw
/// decides whether the step applies (`u < prob`); an applied step then draws
/// its own parameters. Seeds therefore reproduce across refactors as long as
/// the step list is unchanged.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AugmentationPipeline {
    steps: Vec<AugStep>,
}

impl AugmentationPipeline {
    pub fn new(steps: Vec<AugStep>) -> Result<Self> {
        for s in &steps {
            s.validate()?;
        }
        Ok(AugmentationPipeline { steps })
    }

    pub fn identity() -> Self {
        AugmentationPipeline { steps: Vec::new() }
    }

    pub fn steps(&self) -> &[AugStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Checks that every step can act on images with `channels` channels.
    pub fn check_channels(&self, channels: usize) -> Result<()> {
        for s in &self.steps {
            if matches!(s.transform, Transform::ColorDistortion { .. }) && channels != 3 {
                return Err(ImageError::NeedsRgb {
                    op: "color_distortion",
                    channels,
                });
            }
        }
        Ok(())
    }
}

/// The built-in augmentation recipes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Flip and invert (p = 0.5 each) ahead of the SimCLR recipe.
    OursRgb,
    /// Resized crop, Gaussian blur and color distortion.
    SimclrRgb,
    /// Rotation within ±30°.
    OmniglotAffine,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::OursRgb, Preset::SimclrRgb, Preset::OmniglotAffine];

    pub fn name(self) -> &'static str {
        match self {
            Preset::OursRgb => "ours_rgb",
            Preset::SimclrRgb => "simclr_rgb",
            Preset::OmniglotAffine => "omniglot_affine",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = ImageError;

    fn from_str(s: &str) -> Result<Preset> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ImageError::Invalid(format!("unknown augmentation preset `{s}`")))
    }
}

pub fn preset_pipeline(kind: Preset) -> AugmentationPipeline {
    let simclr = vec![
        AugStep::always(Transform::ResizedCrop {
            scale_min: 0.5,
            scale_max: 1.0,
        }),
        AugStep::always(Transform::GaussianBlur {
            sigma_min: 0.1,
            sigma_max: 2.0,
        }),
        AugStep::always(Transform::ColorDistortion { strength: 1.0 }),
    ];
    let steps = match kind {
        Preset::OursRgb => {
            let mut s = vec![
                AugStep::with_prob(Transform::HorizontalFlip, 0.5),
                AugStep::with_prob(Transform::ColorInvert, 0.5),
            ];
            s.extend(simclr);
            s
        }
        Preset::SimclrRgb => simclr,
        Preset::OmniglotAffine => vec![AugStep::always(Transform::RandomAffine { max_degrees: 30.0 })],
    };
    AugmentationPipeline { steps }
}

impl FromStr for AugmentationPipeline {
    type Err = ImageError;

    /// Either a preset name, `none`, or a comma-separated step list such as
    /// `hflip@0.5,invert@0.5,crop:0.5:1,blur:0.1:2,color:1,affine:30`
    /// (`@p` sets the step probability, default 1).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(AugmentationPipeline::identity());
        }
        if let Ok(p) = s.parse::<Preset>() {
            return Ok(preset_pipeline(p));
        }
        let bad = |item: &str| ImageError::Invalid(format!("cannot parse augmentation step `{item}`"));
        let mut steps = Vec::new();
        for item in s.split(',').map(str::trim) {
            let (body, prob) = match item.split_once('@') {
                Some((b, p)) => (b, p.parse::<f64>().map_err(|_| bad(item))?),
                None => (item, 1.0),
            };
            let mut parts = body.split(':');
            let name = parts.next().unwrap_or_default();
            let nums: Vec<f64> = parts
                .map(|v| v.parse::<f64>().map_err(|_| bad(item)))
                .collect::<Result<_>>()?;
            let transform = match (name, nums.as_slice()) {
                ("hflip", []) => Transform::HorizontalFlip,
                ("invert", []) => Transform::ColorInvert,
                ("crop", [lo, hi]) => Transform::ResizedCrop {
                    scale_min: *lo,
                    scale_max: *hi,
                },
                ("blur", [lo, hi]) => Transform::GaussianBlur {
                    sigma_min: *lo,
                    sigma_max: *hi,
                },
                ("color", [strength]) => Transform::ColorDistortion { strength: *strength },
                ("affine", [deg]) => Transform::RandomAffine { max_degrees: *deg },
                _ => return Err(bad(item)),
            };
            steps.push(AugStep { transform, prob });
        }
        AugmentationPipeline::new(steps)
    }
}

impl fmt::Display for AugmentationPipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.steps.is_empty() {
            return f.write_str("none");
        }
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match s.transform {
                Transform::HorizontalFlip => write!(f, "hflip")?,
                Transform::ColorInvert => write!(f, "invert")?,
                Transform::ResizedCrop { scale_min, scale_max } => write!(f, "crop:{scale_min}:{scale_max}")?,
                Transform::GaussianBlur { sigma_min, sigma_max } => write!(f, "blur:{sigma_min}:{sigma_max}")?,
                Transform::ColorDistortion { strength } => write!(f, "color:{strength}")?,
                Transform::RandomAffine { max_degrees } => write!(f, "affine:{max_degrees}")?,
            }
            if s.prob != 1.0 {
                write!(f, "@{}", s.prob)?;
            }
        }
        Ok(())
    }
}

/// Applies the steps in declared order (see [`AugmentationPipeline`] for the
/// randomness contract). Crops keep the input size.
pub fn apply_pipeline(img: &Image, pipeline: &AugmentationPipeline, rng: &mut SeededRng) -> Result<Image> {
    pipeline.check_channels(img.channels())?;
    let mut out = img.clone();
    for step in &pipeline.steps {
        if !rng.bernoulli(step.prob) {
            continue;
        }
        out = match step.transform {
            Transform::HorizontalFlip => horizontal_flip(&out),
            Transform::ColorInvert => color_invert(&out),
            Transform::ResizedCrop { scale_min, scale_max } => {
                random_resized_crop(&out, scale_min, scale_max, img.height(), img.width(), rng)?
            }
            Transform::GaussianBlur { sigma_min, sigma_max } => {
                blur_with_sigma(&out, rng.uniform_range(sigma_min, sigma_max))
            }
            Transform::ColorDistortion { strength } => color_distortion(&out, strength, rng)?,
            Transform::RandomAffine { max_degrees } => {
                let angle = rng.uniform_range(-max_degrees, max_degrees);
                rotate(&out, angle, &corner_fill(&out))
            }
        };
    }
    Ok(out)
}
