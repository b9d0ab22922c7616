use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::{DataError, Dataset, Result};
use crate::image_ops::{apply_pipeline, AugmentationPipeline, Image};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpisodeMode {
    Supervised,
    Unsupervised,
}

impl fmt::Display for EpisodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EpisodeMode::Supervised => "supervised",
            EpisodeMode::Unsupervised => "unsupervised",
        })
    }
}

impl FromStr for EpisodeMode {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(EpisodeMode::Supervised),
            "unsupervised" => Ok(EpisodeMode::Unsupervised),
            _ => Err(DataError::Spec(format!("unknown episode mode `{s}`"))),
        }
    }
}

/// Shape of an episode: `n_way` classes, `k_shot` support and `q_queries`
/// query images per class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_queries: usize,
    pub mode: EpisodeMode,
}

impl EpisodeSpec {
    pub fn new(n_way: usize, k_shot: usize, q_queries: usize, mode: EpisodeMode) -> Result<Self> {
        let spec = EpisodeSpec {
            n_way,
            k_shot,
            q_queries,
            mode,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn supervised(n_way: usize, k_shot: usize, q_queries: usize) -> Result<Self> {
        Self::new(n_way, k_shot, q_queries, EpisodeMode::Supervised)
    }

    pub fn unsupervised(n_way: usize, q_queries: usize) -> Result<Self> {
        Self::new(n_way, 1, q_queries, EpisodeMode::Unsupervised)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 {
            return Err(DataError::Spec(format!("n_way must be at least 2, got {}", self.n_way)));
        }
        if self.k_shot < 1 || self.q_queries < 1 {
            return Err(DataError::Spec("k_shot and q_queries must be at least 1".into()));
        }
        if self.mode == EpisodeMode::Unsupervised && self.k_shot != 1 {
            return Err(DataError::Spec(format!(
                "unsupervised episodes are 1-shot, got k_shot = {}",
                self.k_shot
            )));
        }
        Ok(())
    }
}

/// Where episode labels came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    TrueLabels,
    PseudoLabels,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: Arc<Image>,
    /// Slot in `0..n_way`.
    pub label: usize,
}

/// One few-shot task.
///
/// Both sets are slot-major: support entry `i·k_shot + s` and query entry
/// `i·q_queries + r` belong to slot `i`. In unsupervised episodes query
/// entry `j` is an augmentation of support entry `j / q_queries`.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub spec: EpisodeSpec,
    pub support: Vec<LabeledImage>,
    pub query: Vec<LabeledImage>,
    pub provenance: Provenance,
}

fn one_hot_rows(items: &[LabeledImage], n_way: usize) -> Vec<f64> {
    let mut out = vec![0.0; items.len() * n_way];
    for (i, it) in items.iter().enumerate() {
        out[i * n_way + it.label] = 1.0;
    }
    out
}

impl Episode {
    pub fn n_way(&self) -> usize {
        self.spec.n_way
    }

    /// Row-major `[support.len(), n_way]` one-hot matrix.
    pub fn support_one_hot(&self) -> Vec<f64> {
        one_hot_rows(&self.support, self.spec.n_way)
    }

    pub fn query_one_hot(&self) -> Vec<f64> {
        one_hot_rows(&self.query, self.spec.n_way)
    }

    pub fn support_images(&self) -> Vec<&Image> {
        self.support.iter().map(|s| s.image.as_ref()).collect()
    }

    pub fn query_images(&self) -> Vec<&Image> {
        self.query.iter().map(|s| s.image.as_ref()).collect()
    }

    /// Index of the support entry that query `j` was derived from
    /// (unsupervised episodes).
    pub fn query_source(&self, j: usize) -> usize {
        j / self.spec.q_queries
    }

    pub fn query_labels(&self) -> Vec<usize> {
        self.query.iter().map(|q| q.label).collect()
    }
}

/// Draws `n_way` distinct classes uniformly, assigns them to slots in draw
/// order, and picks `k_shot + q_queries` distinct samples per class.
pub fn sample_supervised_episode(ds: &Dataset, spec: &EpisodeSpec, rng: &mut SeededRng) -> Result<Episode> {
    spec.validate()?;
    if spec.mode != EpisodeMode::Supervised {
        return Err(DataError::Spec("expected a supervised spec".into()));
    }
    ds.require_labels("sample_supervised_episode")?;
    let classes = ds.classes();
    if classes.len() < spec.n_way {
        return Err(DataError::InsufficientClasses {
            needed: spec.n_way,
            available: classes.len(),
        });
    }
    let per_class = spec.k_shot + spec.q_queries;
    if let Some(&c) = classes.iter().find(|&&c| ds.class_samples(c).len() < per_class) {
        return Err(DataError::InsufficientSamples {
            class: c,
            needed: per_class,
            available: ds.class_samples(c).len(),
        });
    }
    let picked = rng.sample_indices(classes.len(), spec.n_way);
    let mut support = Vec::with_capacity(spec.n_way * spec.k_shot);
    let mut query = Vec::with_capacity(spec.n_way * spec.q_queries);
    for (slot, &ci) in picked.iter().enumerate() {
        let members = ds.class_samples(classes[ci]);
        let draw = rng.sample_indices(members.len(), per_class);
        for (r, &j) in draw.iter().enumerate() {
            let item = LabeledImage {
                image: Arc::clone(ds.image(members[j])),
                label: slot,
            };
            if r < spec.k_shot {
                support.push(item);
            } else {
                query.push(item);
            }
        }
    }
    Ok(Episode {
        spec: *spec,
        support,
        query,
        provenance: Provenance::TrueLabels,
    })
}

/// Draws `n_way` distinct pool samples as a 1-shot support set with
/// pseudo-labels `0..n_way`; every support image yields `q_queries`
/// independent augmentations as its queries.
pub fn sample_unsupervised_episode(
    pool: &Dataset,
    spec: &EpisodeSpec,
    pipeline: &AugmentationPipeline,
    rng: &mut SeededRng,
) -> Result<Episode> {
    spec.validate()?;
    if spec.mode != EpisodeMode::Unsupervised {
        return Err(DataError::Spec("expected an unsupervised spec".into()));
    }
    if pool.len() < spec.n_way {
        return Err(DataError::PoolTooSmall {
            needed: spec.n_way,
            available: pool.len(),
        });
    }
    let picked = rng.sample_indices(pool.len(), spec.n_way);
    let support: Vec<LabeledImage> = picked
        .iter()
        .enumerate()
        .map(|(slot, &i)| LabeledImage {
            image: Arc::clone(pool.image(i)),
            label: slot,
        })
        .collect();
    let mut query = Vec::with_capacity(spec.n_way * spec.q_queries);
    for s in &support {
        for _ in 0..spec.q_queries {
            let image = if pipeline.is_empty() {
                Arc::clone(&s.image)
            } else {
                Arc::new(apply_pipeline(&s.image, pipeline, rng)?)
            };
            query.push(LabeledImage { image, label: s.label });
        }
    }
    Ok(Episode {
        spec: *spec,
        support,
        query,
        provenance: Provenance::PseudoLabels,
    })
}

/// Dispatches on `spec.mode`.
pub fn sample_episode(
    ds: &Dataset,
    spec: &EpisodeSpec,
    pipeline: Option<&AugmentationPipeline>,
    rng: &mut SeededRng,
) -> Result<Episode> {
    match spec.mode {
        EpisodeMode::Supervised => sample_supervised_episode(ds, spec, rng),
        EpisodeMode::Unsupervised => {
            let pipeline = pipeline
                .ok_or_else(|| DataError::Spec("unsupervised episodes need an augmentation pipeline".into()))?;
            sample_unsupervised_episode(ds, spec, pipeline, rng)
        }
    }
}
