use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use super::{PipelineError, Result};
use crate::image_ops::{preset_pipeline, AugmentationPipeline, Preset};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Maml,
    Relation,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Maml => "maml",
            ModelKind::Relation => "relation",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "maml" => Ok(ModelKind::Maml),
            "relation" => Ok(ModelKind::Relation),
            _ => Err(format!("unknown model `{s}` (expected maml or relation)")),
        }
    }
}

/// Labeled image source: a class-per-subdirectory PNG tree or the built-in
/// generator, written `synthetic:<classes>x<per_class>x<h>x<w>x<channels>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DataSource {
    Synthetic {
        classes: usize,
        per_class: usize,
        height: usize,
        width: usize,
        channels: usize,
    },
    Path(PathBuf),
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Synthetic {
                classes,
                per_class,
                height,
                width,
                channels,
            } => write!(f, "synthetic:{classes}x{per_class}x{height}x{width}x{channels}"),
            DataSource::Path(p) => write!(f, "{}", p.display()),
        }
    }
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let Some(dims) = s.strip_prefix("synthetic:") else {
            if s.is_empty() {
                return Err("dataset path is empty".into());
            }
            return Ok(DataSource::Path(PathBuf::from(s)));
        };
        let parts: Vec<usize> = dims
            .split('x')
            .map(|d| d.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("bad synthetic spec `{s}`"))?;
        match parts[..] {
            [classes, per_class, height, width, channels] => Ok(DataSource::Synthetic {
                classes,
                per_class,
                height,
                width,
                channels,
            }),
            _ => Err(format!("synthetic spec `{s}` needs 5 dimensions")),
        }
    }
}

/// Where stage-2 parameters come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitKind {
    Random,
    /// Run unsupervised pretraining first and transfer its parameters.
    Pretrain,
    Checkpoint(PathBuf),
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitKind::Random => f.write_str("random"),
            InitKind::Pretrain => f.write_str("pretrain"),
            InitKind::Checkpoint(p) => write!(f, "{}", p.display()),
        }
    }
}

impl FromStr for InitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "random" => InitKind::Random,
            "pretrain" => InitKind::Pretrain,
            "" => return Err("init is empty".into()),
            path => InitKind::Checkpoint(PathBuf::from(path)),
        })
    }
}

/// Every run parameter. Keys in a config file map one to one onto fields.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub dataset: DataSource,
    /// Unlabeled pretraining images; the label-erased training split when unset.
    pub unlabeled: Option<PathBuf>,
    /// Seeds the synthetic generator, the class split and label subsetting.
    pub data_seed: u64,
    pub train_classes: usize,
    pub val_classes: usize,
    pub label_fraction: f64,
    pub n_way: usize,
    pub k_shot: usize,
    pub q_queries: usize,
    pub pretrain_q_queries: usize,
    pub augment: AugmentationPipeline,
    pub filters: usize,
    pub hidden: usize,
    pub alpha: f64,
    pub beta: f64,
    pub inner_steps: usize,
    pub eval_inner_steps: usize,
    /// Inner-loop temperature of pretraining; chosen from the episode shape when unset.
    pub temperature: Option<f64>,
    pub second_order: bool,
    pub tasks_per_step: usize,
    pub lr: f64,
    pub pretrain_steps: usize,
    pub outer_steps: usize,
    pub eval_episodes: usize,
    /// Validation interval in outer steps; a tenth of the run when unset.
    pub eval_every: Option<usize>,
    pub init: InitKind,
    /// Checkpoint read by `eval`; `<out>/train.ckpt` when unset.
    pub checkpoint: Option<PathBuf>,
    pub seed: u64,
    pub repeats: usize,
    pub threshold: f64,
    pub query_probe: bool,
    pub temperatures: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::Maml,
            dataset: DataSource::Synthetic {
                classes: 32,
                per_class: 40,
                height: 28,
                width: 28,
                channels: 3,
            },
            unlabeled: None,
            data_seed: 1000,
            train_classes: 20,
            val_classes: 0,
            label_fraction: 1.0,
            n_way: 5,
            k_shot: 1,
            q_queries: 5,
            pretrain_q_queries: 1,
            augment: preset_pipeline(Preset::OursRgb),
            filters: 16,
            hidden: 8,
            alpha: 0.4,
            beta: 0.05,
            inner_steps: 5,
            eval_inner_steps: 10,
            temperature: None,
            second_order: true,
            tasks_per_step: 4,
            lr: 1e-3,
            pretrain_steps: 500,
            outer_steps: 300,
            eval_episodes: 40,
            eval_every: None,
            init: InitKind::Random,
            checkpoint: None,
            seed: 0,
            repeats: 5,
            threshold: 0.8,
            query_probe: true,
            temperatures: vec![1.0, 10.0, 100.0],
        }
    }
}

pub const KEYS: &[&str] = &[
    "model",
    "dataset",
    "unlabeled",
    "data_seed",
    "train_classes",
    "val_classes",
    "label_fraction",
    "n_way",
    "k_shot",
    "q_queries",
    "pretrain_q_queries",
    "augment",
    "filters",
    "hidden",
    "alpha",
    "beta",
    "inner_steps",
    "eval_inner_steps",
    "temperature",
    "second_order",
    "tasks_per_step",
    "lr",
    "pretrain_steps",
    "outer_steps",
    "eval_episodes",
    "eval_every",
    "init",
    "checkpoint",
    "seed",
    "repeats",
    "threshold",
    "query_probe",
    "temperatures",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("`{key}` expects a number, got `{v}`"))
}

fn auto<T: FromStr>(key: &str, v: &str) -> Result<Option<T>, String> {
    if v == "auto" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or("none".into(), |p| p.display().to_string())
}

fn show_auto<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or("auto".into(), T::to_string)
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_inner(key, value.trim()).map_err(PipelineError::Config)
    }

    fn set_inner(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "model" => self.model = v.parse()?,
            "dataset" => self.dataset = v.parse()?,
            "unlabeled" => self.unlabeled = path(v),
            "data_seed" => self.data_seed = num(key, v)?,
            "train_classes" => self.train_classes = num(key, v)?,
            "val_classes" => self.val_classes = num(key, v)?,
            "label_fraction" => self.label_fraction = num(key, v)?,
            "n_way" => self.n_way = num(key, v)?,
            "k_shot" => self.k_shot = num(key, v)?,
            "q_queries" => self.q_queries = num(key, v)?,
            "pretrain_q_queries" => self.pretrain_q_queries = num(key, v)?,
            "augment" => self.augment = v.parse().map_err(|e| format!("`augment`: {e}"))?,
            "filters" => self.filters = num(key, v)?,
            "hidden" => self.hidden = num(key, v)?,
            "alpha" => self.alpha = num(key, v)?,
            "beta" => self.beta = num(key, v)?,
            "inner_steps" => self.inner_steps = num(key, v)?,
            "eval_inner_steps" => self.eval_inner_steps = num(key, v)?,
            "temperature" => self.temperature = auto(key, v)?,
            "second_order" => {
                self.second_order = v
                    .parse()
                    .map_err(|_| format!("`second_order` expects true or false, got `{v}`"))?
            }
            "tasks_per_step" => self.tasks_per_step = num(key, v)?,
            "lr" => self.lr = num(key, v)?,
            "pretrain_steps" => self.pretrain_steps = num(key, v)?,
            "outer_steps" => self.outer_steps = num(key, v)?,
            "eval_episodes" => self.eval_episodes = num(key, v)?,
            "eval_every" => self.eval_every = auto(key, v)?,
            "init" => self.init = v.parse()?,
            "checkpoint" => self.checkpoint = path(v),
            "seed" => self.seed = num(key, v)?,
            "repeats" => self.repeats = num(key, v)?,
            "threshold" => self.threshold = num(key, v)?,
            "query_probe" => {
                self.query_probe = v
                    .parse()
                    .map_err(|_| format!("`query_probe` expects true or false, got `{v}`"))?
            }
            "temperatures" => {
                self.temperatures = v
                    .split(',')
                    .map(|t| num::<f64>(key, t.trim()))
                    .collect::<Result<_, _>>()?
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Reads `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(PipelineError::Config(format!("line {}: expected `key = value`", i + 1)));
            };
            cfg.set(key.trim(), value)
                .map_err(|e| PipelineError::Config(format!("line {}: {}", i + 1, e.message())))?;
        }
        Ok(cfg)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| PipelineError::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(key.trim(), value)
    }

    /// Every key with its effective value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let temps: Vec<String> = self.temperatures.iter().map(f64::to_string).collect();
        let values = [
            self.model.to_string(),
            self.dataset.to_string(),
            show_path(&self.unlabeled),
            self.data_seed.to_string(),
            self.train_classes.to_string(),
            self.val_classes.to_string(),
            self.label_fraction.to_string(),
            self.n_way.to_string(),
            self.k_shot.to_string(),
            self.q_queries.to_string(),
            self.pretrain_q_queries.to_string(),
            self.augment.to_string(),
            self.filters.to_string(),
            self.hidden.to_string(),
            self.alpha.to_string(),
            self.beta.to_string(),
            self.inner_steps.to_string(),
            self.eval_inner_steps.to_string(),
            show_auto(&self.temperature),
            self.second_order.to_string(),
            self.tasks_per_step.to_string(),
            self.lr.to_string(),
            self.pretrain_steps.to_string(),
            self.outer_steps.to_string(),
            self.eval_episodes.to_string(),
            show_auto(&self.eval_every),
            self.init.to_string(),
            show_path(&self.checkpoint),
            self.seed.to_string(),
            self.repeats.to_string(),
            self.threshold.to_string(),
            self.query_probe.to_string(),
            temps.join(","),
        ];
        KEYS.iter().copied().zip(values).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let positive = [("alpha", self.alpha), ("beta", self.beta), ("lr", self.lr)];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("`{key}` must be positive, got {v}"));
            }
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return bad(format!(
                "`label_fraction` must lie in (0, 1], got {}",
                self.label_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("`threshold` must lie in [0, 1], got {}", self.threshold));
        }
        if let Some(t) = self.temperature {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("`temperature` must be positive, got {t}"));
            }
        }
        if self.temperatures.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return bad("`temperatures` must all be positive".into());
        }
        let at_least_one = [
            ("train_classes", self.train_classes),
            ("n_way", self.n_way),
            ("k_shot", self.k_shot),
            ("q_queries", self.q_queries),
            ("pretrain_q_queries", self.pretrain_q_queries),
            ("filters", self.filters),
            ("hidden", self.hidden),
            ("inner_steps", self.inner_steps),
            ("tasks_per_step", self.tasks_per_step),
            ("eval_episodes", self.eval_episodes),
            ("repeats", self.repeats),
            ("eval_every", self.eval_every.unwrap_or(1)),
        ];
        for (key, v) in at_least_one {
            if v == 0 {
                return bad(format!("`{key}` must be at least 1"));
            }
        }
        if let DataSource::Synthetic {
            classes,
            per_class,
            height,
            width,
            channels,
        } = self.dataset
        {
            if classes == 0 || per_class == 0 || height == 0 || width == 0 || !(channels == 1 || channels == 3) {
                return bad(format!("invalid synthetic dataset `{}`", self.dataset));
            }
        }
        Ok(())
    }

    /// Validation interval for a run of `steps` outer steps.
    pub fn eval_interval(&self, steps: usize) -> usize {
        self.eval_every.unwrap_or((steps / 10).max(1))
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (key, value) in self.entries() {
            writeln!(f, "{key} = {value}")?;
        }
        Ok(())
    }
}
