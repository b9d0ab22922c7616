//! Datasets, class splits, and few-shot episode sampling.
//!
//! A [`Dataset`] is immutable once built; its images are shared behind
//! `Arc`, so splits, label subsets, and episodes are cheap views.

mod episode;
mod prob;
mod synthetic;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use episode::{
    sample_episode, sample_supervised_episode, sample_unsupervised_episode, Episode, EpisodeMode, EpisodeSpec,
    LabeledImage, Provenance,
};
pub use prob::{distinct_class_probability, monte_carlo_distinct_estimate};
pub use synthetic::synthetic_dataset;

use crate::image_ops::{Image, ImageError};
use crate::rng::SeededRng;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("no images found under {0}")]
    Empty(PathBuf),
    #[error("{path}: image is {found}, expected {expected} like the rest of the dataset")]
    MixedShapes {
        path: PathBuf,
        found: String,
        expected: String,
    },
    #[error("{op} needs a labeled dataset")]
    Unlabeled { op: &'static str },
    #[error("need {needed} classes, dataset has {available}")]
    InsufficientClasses { needed: usize, available: usize },
    #[error("class {class} has {available} samples, need {needed}")]
    InsufficientSamples {
        class: usize,
        needed: usize,
        available: usize,
    },
    #[error("pool has {available} samples, need {needed}")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("invalid episode spec: {0}")]
    Spec(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Arc<Image>,
    pub class: Option<usize>,
}

/// Images with optional class labels.
///
/// Labeled datasets index their samples by class id; unlabeled datasets carry
/// no class information at all.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    class_index: BTreeMap<usize, Vec<usize>>,
    labeled: bool,
}

fn shape_of(img: &Image) -> (usize, usize, usize) {
    (img.height(), img.width(), img.channels())
}

fn describe(s: (usize, usize, usize)) -> String {
    format!("{}x{}x{}", s.0, s.1, s.2)
}

impl Dataset {
    /// Labeled dataset from `(image, class)` pairs.
    pub fn labeled(samples: Vec<(Image, usize)>) -> Result<Dataset> {
        Self::from_samples(
            samples
                .into_iter()
                .map(|(img, c)| Sample {
                    image: Arc::new(img),
                    class: Some(c),
                })
                .collect(),
            true,
        )
    }

    pub fn unlabeled(images: Vec<Image>) -> Result<Dataset> {
        Self::from_samples(
            images
                .into_iter()
                .map(|img| Sample {
                    image: Arc::new(img),
                    class: None,
                })
                .collect(),
            false,
        )
    }

    fn from_samples(samples: Vec<Sample>, labeled: bool) -> Result<Dataset> {
        let Some(first) = samples.first() else {
            return Err(DataError::Empty(PathBuf::from("<memory>")));
        };
        let expected = shape_of(&first.image);
        let mut class_index: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            let found = shape_of(&s.image);
            if found != expected {
                return Err(DataError::MixedShapes {
                    path: PathBuf::from(format!("<sample {i}>")),
                    found: describe(found),
                    expected: describe(expected),
                });
            }
            if labeled {
                let c = s
                    .class
                    .ok_or_else(|| DataError::Invalid(format!("sample {i} has no class in a labeled dataset")))?;
                class_index.entry(c).or_default().push(i);
            }
        }
        let samples = if labeled {
            samples
        } else {
            samples.into_iter().map(|s| Sample { class: None, ..s }).collect()
        };
        Ok(Dataset {
            samples,
            class_index,
            labeled,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.labeled
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn image(&self, i: usize) -> &Arc<Image> {
        &self.samples[i].image
    }

    /// `(height, width, channels)` shared by every image.
    pub fn image_shape(&self) -> (usize, usize, usize) {
        self.samples.first().map(|s| shape_of(&s.image)).unwrap_or((0, 0, 0))
    }

    /// Class ids in ascending order (empty when unlabeled).
    pub fn classes(&self) -> Vec<usize> {
        self.class_index.keys().copied().collect()
    }

    pub fn num_classes(&self) -> usize {
        self.class_index.len()
    }

    /// Sample indices of class `c`.
    pub fn class_samples(&self, c: usize) -> &[usize] {
        self.class_index.get(&c).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn class_index(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.class_index
    }

    /// Same images with all label information removed.
    pub fn erase_labels(&self) -> Dataset {
        Dataset {
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    image: Arc::clone(&s.image),
                    class: None,
                })
                .collect(),
            class_index: BTreeMap::new(),
            labeled: false,
        }
    }

    /// Subset made of the given classes, keeping their sample order.
    pub fn restrict_to_classes(&self, classes: &[usize]) -> Result<Dataset> {
        self.require_labels("restrict_to_classes")?;
        let mut picked = Vec::new();
        for &c in classes {
            let idx = self
                .class_index
                .get(&c)
                .ok_or_else(|| DataError::Invalid(format!("unknown class {c}")))?;
            picked.extend(idx.iter().map(|&i| self.samples[i].clone()));
        }
        Self::from_samples(picked, true)
    }

    fn require_labels(&self, op: &'static str) -> Result<()> {
        if self.labeled {
            Ok(())
        } else {
            Err(DataError::Unlabeled { op })
        }
    }

    /// Writes the dataset as PNGs: `<root>/class_XXXX/NNNNN.png` when labeled,
    /// `<root>/NNNNNN.png` otherwise.
    pub fn export(&self, root: &Path) -> Result<()> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        if self.labeled {
            for (&c, idx) in &self.class_index {
                let dir = root.join(format!("class_{c:04}"));
                fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                for (k, &i) in idx.iter().enumerate() {
                    self.samples[i].image.save_png(&dir.join(format!("{k:05}.png")))?;
                }
            }
        } else {
            for (i, s) in self.samples.iter().enumerate() {
                s.image.save_png(&root.join(format!("{i:06}.png")))?;
            }
        }
        Ok(())
    }
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn sorted_pngs(dir: &Path, recursive: bool) -> Result<Vec<PathBuf>> {
    let walker = walkdir::WalkDir::new(dir)
        .min_depth(1)
        .max_depth(if recursive { usize::MAX } else { 1 })
        .sort_by_file_name();
    let mut out = Vec::new();
    for entry in walker {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            DataError::Io {
                path,
                source: e
                    .into_io_error()
                    .unwrap_or_else(|| std::io::Error::other("filesystem loop")),
            }
        })?;
        if entry.file_type().is_file() && is_png(entry.path()) {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

/// Loads a PNG tree.
///
/// Labeled: each immediate subdirectory of `root` is one class; class ids
/// follow the sorted directory names. Unlabeled: every PNG anywhere under
/// `root`, in sorted path order, with no class information.
pub fn load_dataset(root: &Path, labeled: bool) -> Result<Dataset> {
    let meta = fs::metadata(root).map_err(io_err(root))?;
    if !meta.is_dir() {
        return Err(DataError::Invalid(format!("{} is not a directory", root.display())));
    }
    let mut entries: Vec<(PathBuf, Option<usize>)> = Vec::new();
    if labeled {
        let mut dirs: Vec<PathBuf> = fs::read_dir(root)
            .map_err(io_err(root))?
            .map(|e| e.map(|e| e.path()).map_err(io_err(root)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for (class, dir) in dirs.iter().enumerate() {
            entries.extend(sorted_pngs(dir, false)?.into_iter().map(|p| (p, Some(class))));
        }
    } else {
        entries.extend(sorted_pngs(root, true)?.into_iter().map(|p| (p, None)));
    }
    if entries.is_empty() {
        return Err(DataError::Empty(root.to_path_buf()));
    }
    let mut samples = Vec::with_capacity(entries.len());
    let mut expected = None;
    for (path, class) in entries {
        let img = Image::load_png(&path)?;
        let found = shape_of(&img);
        match expected {
            None => expected = Some(found),
            Some(e) if e != found => {
                return Err(DataError::MixedShapes {
                    path,
                    found: describe(found),
                    expected: describe(e),
                })
            }
            _ => {}
        }
        samples.push(Sample {
            image: Arc::new(img),
            class,
        });
    }
    Dataset::from_samples(samples, labeled)
}

/// Partitions the classes into train / validation / test datasets.
pub fn split_classes(ds: &Dataset, n_train: usize, n_val: usize, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    ds.require_labels("split_classes")?;
    let mut classes = ds.classes();
    if n_train == 0 || n_train + n_val >= classes.len() {
        return Err(DataError::InsufficientClasses {
            needed: n_train.max(1) + n_val + 1,
            available: classes.len(),
        });
    }
    SeededRng::new(seed).shuffle(&mut classes);
    let (train, rest) = classes.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    let val_ds = if val.is_empty() {
        Dataset {
            samples: Vec::new(),
            class_index: BTreeMap::new(),
            labeled: true,
        }
    } else {
        ds.restrict_to_classes(&sorted(val))?
    };
    Ok((
        ds.restrict_to_classes(&sorted(train))?,
        val_ds,
        ds.restrict_to_classes(&sorted(test))?,
    ))
}

/// Keeps `round(fraction · m)` samples of every class, chosen uniformly
/// without replacement.
pub fn subset_labels(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    ds.require_labels("subset_labels")?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::Invalid(format!(
            "label fraction must be in (0, 1], got {fraction}"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let mut keep = Vec::new();
    for (&c, idx) in &ds.class_index {
        let k = (fraction * idx.len() as f64).round() as usize;
        if k == 0 {
            return Err(DataError::InsufficientSamples {
                class: c,
                needed: 1,
                available: 0,
            });
        }
        let mut chosen = rng.sample_indices(idx.len(), k);
        chosen.sort_unstable();
        keep.extend(chosen.into_iter().map(|j| ds.samples[idx[j]].clone()));
    }
    Dataset::from_samples(keep, true)
}
