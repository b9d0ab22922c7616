use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{DataSource, InitKind, ModelKind, RunConfig};
use super::metrics::{csv_field, sig6, MetricsRow, MetricsWriter};
use super::{PipelineError, Result};
use crate::dataset::{
    distinct_class_probability, load_dataset, monte_carlo_distinct_estimate, split_classes, subset_labels,
    synthetic_dataset, Dataset, EpisodeMode, EpisodeSpec,
};
use crate::image_ops::{apply_pipeline, histogram_dispersion, pixel_histogram, AugmentationPipeline, Image};
use crate::meta::{
    default_temperature, evaluate, evaluate_relation, meta_train, train_relation, EvalRecord, MamlConfig,
    RelationTrainConfig, RunMetrics, StepRecord, Validation,
};
use crate::models::{
    load_checkpoint, save_checkpoint, transfer_params, BackboneConfig, ClassifierConfig, ModelConfig, RelationConfig,
};
use crate::rng::{derive_seed, SeededRng};
use crate::tensor::ParamSet;

// Sub-streams of the run seed.
const INIT_STREAM: u64 = 1;
const PRETRAIN_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;
const EVAL_STREAM: u64 = 4;
const PROBE_STREAM: u64 = 5;

const HISTOGRAM_BINS: usize = 32;

/// Class-disjoint splits of the configured dataset.
#[derive(Clone, Debug)]
pub struct PreparedData {
    /// Labeled stage-2 training split, after label subsetting.
    pub train: Dataset,
    /// Validation split, or the test split when no validation classes are configured.
    pub holdout: Dataset,
    pub test: Dataset,
    /// Label-free pretraining pool.
    pub unlabeled: Dataset,
}

pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let full = match &cfg.dataset {
        DataSource::Synthetic {
            classes,
            per_class,
            height,
            width,
            channels,
        } => synthetic_dataset(*classes, *per_class, *height, *width, *channels, cfg.data_seed)?,
        DataSource::Path(p) => load_dataset(p, true)?,
    };
    let (train, val, test) = split_classes(&full, cfg.train_classes, cfg.val_classes, cfg.data_seed)?;
    let unlabeled = match &cfg.unlabeled {
        Some(p) => load_dataset(p, false)?,
        None => train.erase_labels(),
    };
    if unlabeled.image_shape() != train.image_shape() {
        return Err(PipelineError::Data(format!(
            "unlabeled images are {:?} but labeled images are {:?}",
            unlabeled.image_shape(),
            train.image_shape()
        )));
    }
    let train = if cfg.label_fraction < 1.0 {
        subset_labels(&train, cfg.label_fraction, cfg.data_seed)?
    } else {
        train
    };
    let holdout = if val.is_empty() { test.clone() } else { val };
    Ok(PreparedData {
        train,
        holdout,
        test,
        unlabeled,
    })
}

fn model_config(cfg: &RunConfig, data: &PreparedData) -> Result<ModelConfig> {
    let (h, w, c) = data.train.image_shape();
    let backbone = BackboneConfig::new(c, h, w, cfg.filters);
    let model = match cfg.model {
        ModelKind::Maml => ModelConfig::Classifier(ClassifierConfig {
            backbone,
            n_way: cfg.n_way,
        }),
        ModelKind::Relation => ModelConfig::Relation(RelationConfig {
            backbone,
            hidden: cfg.hidden,
        }),
    };
    model.validate()?;
    Ok(model)
}

fn pretrain_temperature(cfg: &RunConfig, data: &PreparedData) -> f64 {
    let channels = data.train.image_shape().2;
    cfg.temperature
        .unwrap_or_else(|| default_temperature(cfg.n_way, channels, EpisodeMode::Unsupervised))
}

fn maml_config(cfg: &RunConfig, steps: usize, temperature: f64, seed: u64) -> MamlConfig {
    MamlConfig {
        alpha: cfg.alpha,
        beta: cfg.beta,
        inner_steps: cfg.inner_steps,
        temperature_inner: temperature,
        second_order: cfg.second_order,
        tasks_per_outer_step: cfg.tasks_per_step,
        outer_steps: steps,
        eval_inner_steps: cfg.eval_inner_steps,
        seed,
    }
}

fn eval_spec(cfg: &RunConfig) -> Result<EpisodeSpec> {
    Ok(EpisodeSpec::supervised(cfg.n_way, cfg.k_shot, cfg.q_queries)?)
}

/// One training stage as seen by the metrics file.
struct Stage<'a> {
    phase: &'a str,
    source: &'a Dataset,
    spec: EpisodeSpec,
    pipeline: Option<&'a AugmentationPipeline>,
    steps: usize,
    temperature: f64,
    stream: u64,
    init_label: String,
}

fn run_stage(
    cfg: &RunConfig,
    model: &ModelConfig,
    data: &PreparedData,
    init: &ParamSet<f32>,
    stage: &Stage<'_>,
    sink: &mut MetricsWriter,
) -> Result<(ParamSet<f32>, RunMetrics)> {
    let seed = cfg.seed;
    let validation = Validation {
        data: &data.holdout,
        spec: eval_spec(cfg)?,
        episodes: cfg.eval_episodes,
        every: cfg.eval_interval(stage.steps),
        seed: derive_seed(seed, &[EVAL_STREAM]),
    };
    let validation = (!data.holdout.is_empty()).then_some(validation);
    let temperature = matches!(model, ModelConfig::Classifier(_)).then_some(stage.temperature);
    let eval_phase = format!("{}_eval", stage.phase);
    let train_seed = derive_seed(seed, &[stage.stream]);
    let mut write_error = None;
    let tasks = cfg.tasks_per_step;
    let on_step = |rec: &StepRecord, eval: Option<&EvalRecord>| {
        let mut rows = vec![MetricsRow::from_step(
            stage.phase,
            rec,
            tasks,
            seed,
            temperature,
            &stage.init_label,
        )];
        if let Some(e) = eval {
            rows.push(MetricsRow::from_eval(
                &eval_phase,
                e,
                seed,
                temperature,
                &stage.init_label,
            ));
        }
        for row in rows {
            if let Err(e) = sink.write(&row) {
                write_error.get_or_insert(e);
            }
        }
    };
    let out = match model {
        ModelConfig::Classifier(m) => meta_train(
            m,
            init,
            stage.source,
            &stage.spec,
            stage.pipeline,
            &maml_config(cfg, stage.steps, stage.temperature, train_seed),
            validation.as_ref(),
            on_step,
        )?,
        ModelConfig::Relation(m) => train_relation(
            m,
            init,
            stage.source,
            &stage.spec,
            stage.pipeline,
            &RelationTrainConfig {
                lr: cfg.lr,
                outer_steps: stage.steps,
                tasks_per_step: cfg.tasks_per_step,
                seed: train_seed,
            },
            validation.as_ref(),
            on_step,
        )?,
    };
    match write_error {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn pretrain_stage(
    cfg: &RunConfig,
    model: &ModelConfig,
    data: &PreparedData,
    q_queries: usize,
    temperature: f64,
    phase: &str,
    sink: &mut MetricsWriter,
) -> Result<(ParamSet<f32>, RunMetrics)> {
    let init = model.init_params(derive_seed(cfg.seed, &[INIT_STREAM]))?;
    let stage = Stage {
        phase,
        source: &data.unlabeled,
        spec: EpisodeSpec::unsupervised(cfg.n_way, q_queries)?,
        pipeline: Some(&cfg.augment),
        steps: cfg.pretrain_steps,
        temperature,
        stream: if phase == "probe" {
            PROBE_STREAM
        } else {
            PRETRAIN_STREAM
        },
        init_label: "random".into(),
    };
    run_stage(cfg, model, data, &init, &stage, sink)
}

/// Stage-2 starting point and, when pretraining ran, its parameters and metrics.
fn stage2_init(
    cfg: &RunConfig,
    model: &ModelConfig,
    data: &PreparedData,
    sink: &mut MetricsWriter,
) -> Result<(ParamSet<f32>, Option<(ParamSet<f32>, RunMetrics)>)> {
    let init_seed = derive_seed(cfg.seed, &[INIT_STREAM]);
    match &cfg.init {
        InitKind::Random => Ok((model.init_params(init_seed)?, None)),
        InitKind::Pretrain => {
            let t = pretrain_temperature(cfg, data);
            let (theta, metrics) = pretrain_stage(cfg, model, data, cfg.pretrain_q_queries, t, "pretrain", sink)?;
            let init = transfer_params(&theta, model, init_seed)?.params;
            Ok((init, Some((theta, metrics))))
        }
        InitKind::Checkpoint(path) => {
            let source = load_checkpoint::<f32>(path)?;
            Ok((transfer_params(&source, model, init_seed)?.params, None))
        }
    }
}

fn train_stage(
    cfg: &RunConfig,
    model: &ModelConfig,
    data: &PreparedData,
    init: &ParamSet<f32>,
    sink: &mut MetricsWriter,
) -> Result<(ParamSet<f32>, RunMetrics)> {
    let stage = Stage {
        phase: "train",
        source: &data.train,
        spec: eval_spec(cfg)?,
        pipeline: None,
        steps: cfg.outer_steps,
        temperature: 1.0,
        stream: TRAIN_STREAM,
        init_label: cfg.init.to_string(),
    };
    run_stage(cfg, model, data, init, &stage, sink)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

/// Outcome of `pretrain` or `train`.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub fingerprint: String,
    pub metrics: RunMetrics,
    /// Stage-1 metrics when `train` ran pretraining in-process.
    pub pretrain: Option<RunMetrics>,
    pub metrics_rows: usize,
}

impl fmt::Display for TrainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(e) = self.pretrain.as_ref().and_then(RunMetrics::final_eval) {
            writeln!(f, "pretrain held-out accuracy {:.4} ± {:.4}", e.accuracy, e.ci95)?;
        }
        if let Some(e) = self.metrics.final_eval() {
            writeln!(
                f,
                "held-out accuracy {:.4} ± {:.4} after {} steps",
                e.accuracy, e.ci95, e.step
            )?;
        }
        write!(f, "checkpoint {} ({})", self.checkpoint.display(), self.fingerprint)
    }
}

/// Unsupervised meta-training on the label-free pool; writes
/// `pretrain.ckpt`, `metrics.csv` and `config.txt` under `out`.
pub fn cmd_pretrain(cfg: &RunConfig, out: &Path) -> Result<TrainReport> {
    let data = prepare_data(cfg)?;
    let model = model_config(cfg, &data)?;
    ensure_dir(out)?;
    write_text(&out.join("config.txt"), &cfg.to_string())?;
    let mut sink = MetricsWriter::create(&out.join("metrics.csv"))?;
    let t = pretrain_temperature(cfg, &data);
    let (theta, metrics) = pretrain_stage(cfg, &model, &data, cfg.pretrain_q_queries, t, "pretrain", &mut sink)?;
    let rows = sink.rows();
    sink.finish()?;
    let checkpoint = out.join("pretrain.ckpt");
    save_checkpoint(&theta, &checkpoint)?;
    Ok(TrainReport {
        checkpoint,
        fingerprint: theta.fingerprint().to_string(),
        metrics,
        pretrain: None,
        metrics_rows: rows,
    })
}

/// Supervised meta-training from the configured initialization; writes
/// `train.ckpt` (and `pretrain.ckpt` when pretraining runs in-process).
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainReport> {
    let data = prepare_data(cfg)?;
    let model = model_config(cfg, &data)?;
    ensure_dir(out)?;
    write_text(&out.join("config.txt"), &cfg.to_string())?;
    let mut sink = MetricsWriter::create(&out.join("metrics.csv"))?;
    let (init, stage1) = stage2_init(cfg, &model, &data, &mut sink)?;
    let (theta, metrics) = train_stage(cfg, &model, &data, &init, &mut sink)?;
    let rows = sink.rows();
    sink.finish()?;
    let pretrain = match stage1 {
        Some((theta_star, m)) => {
            save_checkpoint(&theta_star, &out.join("pretrain.ckpt"))?;
            Some(m)
        }
        None => None,
    };
    let checkpoint = out.join("train.ckpt");
    save_checkpoint(&theta, &checkpoint)?;
    Ok(TrainReport {
        checkpoint,
        fingerprint: theta.fingerprint().to_string(),
        metrics,
        pretrain,
        metrics_rows: rows,
    })
}

/// Test-split accuracy of a checkpoint, appended to `<out>/metrics.csv`.
pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> Result<EvalRecord> {
    let data = prepare_data(cfg)?;
    let model = model_config(cfg, &data)?;
    let path = cfg.checkpoint.clone().unwrap_or_else(|| out.join("train.ckpt"));
    if !path.is_file() {
        return Err(PipelineError::Data(format!("checkpoint {} not found", path.display())));
    }
    let params = load_checkpoint::<f32>(&path)?;
    let want = model.fingerprint().to_string();
    if params.fingerprint() != want {
        return Err(PipelineError::Data(format!(
            "checkpoint {} has architecture {} but the config describes {want}",
            path.display(),
            params.fingerprint()
        )));
    }
    let spec = eval_spec(cfg)?;
    let seed = derive_seed(cfg.seed, &[EVAL_STREAM]);
    let (rec, temperature) = match &model {
        ModelConfig::Classifier(m) => {
            let mc = maml_config(cfg, 0, 1.0, seed);
            (
                evaluate(&params, m, &data.test, &spec, &mc, cfg.eval_episodes, seed)?,
                Some(1.0),
            )
        }
        ModelConfig::Relation(m) => (
            evaluate_relation(&params, m, &data.test, &spec, cfg.eval_episodes, seed)?,
            None,
        ),
    };
    ensure_dir(out)?;
    let mut sink = MetricsWriter::append(&out.join("metrics.csv"))?;
    sink.write(&MetricsRow::from_eval(
        "eval",
        &rec,
        cfg.seed,
        temperature,
        &path.display().to_string(),
    ))?;
    sink.finish()?;
    Ok(rec)
}

/// Percentage drop `(full − partial) / full × 100`.
pub fn accuracy_drop(full: f64, partial: f64) -> f64 {
    (full - partial) / full * 100.0
}

/// One arm trained at one seed.
#[derive(Clone, Debug)]
pub struct ArmRun {
    /// 0 for the first arm, 1 for the second.
    pub arm: usize,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub pretrain: Option<RunMetrics>,
}

impl ArmRun {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.metrics.final_eval().map(|e| e.accuracy)
    }
}

/// Held-out accuracy after unsupervised pretraining with a given query count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryProbe {
    pub q_queries: usize,
    pub accuracy: f64,
    pub ci95: f64,
}

#[derive(Clone, Debug)]
pub struct CompareReport {
    pub arms: [RunConfig; 2],
    pub threshold: f64,
    /// Seed-major: both arms of the first seed, then the next seed.
    pub runs: Vec<ArmRun>,
    /// Mean final-accuracy drop in percent when the arms' label fractions differ.
    pub drop: Option<f64>,
    pub probe: Vec<QueryProbe>,
}

/// Strictly increasing threshold crossings compare by step; never reaching
/// the threshold counts as infinitely many steps.
fn reaches_no_later(b: Option<usize>, a: Option<usize>) -> bool {
    match (b, a) {
        (Some(b), Some(a)) => b <= a,
        (Some(_), None) => true,
        (None, _) => false,
    }
}

impl CompareReport {
    pub fn arm_runs(&self, arm: usize) -> impl Iterator<Item = &ArmRun> {
        self.runs.iter().filter(move |r| r.arm == arm)
    }

    /// Seeds at which the second arm reaches the threshold in no more steps than the first.
    pub fn second_arm_wins(&self) -> usize {
        self.arm_runs(0)
            .zip(self.arm_runs(1))
            .filter(|(a, b)| {
                reaches_no_later(
                    b.metrics.steps_to_threshold(self.threshold),
                    a.metrics.steps_to_threshold(self.threshold),
                )
            })
            .count()
    }

    /// Largest shortfall of the second arm's final accuracy below the first's.
    pub fn worst_final_gap(&self) -> f64 {
        self.arm_runs(0)
            .zip(self.arm_runs(1))
            .map(|(a, b)| a.final_accuracy().unwrap_or(0.0) - b.final_accuracy().unwrap_or(0.0))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn steps_field(s: Option<usize>) -> String {
    s.map(|s| s.to_string()).unwrap_or_else(|| "never".into())
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b] = &self.arms;
        writeln!(f, "arm a: init {} label_fraction {}", a.init, a.label_fraction)?;
        writeln!(f, "arm b: init {} label_fraction {}", b.init, b.label_fraction)?;
        for (ra, rb) in self.arm_runs(0).zip(self.arm_runs(1)) {
            writeln!(
                f,
                "seed {}: steps to {} a={} b={}  final a={:.4} b={:.4}",
                ra.seed,
                self.threshold,
                steps_field(ra.metrics.steps_to_threshold(self.threshold)),
                steps_field(rb.metrics.steps_to_threshold(self.threshold)),
                ra.final_accuracy().unwrap_or(f64::NAN),
                rb.final_accuracy().unwrap_or(f64::NAN),
            )?;
        }
        write!(
            f,
            "arm b reaches the threshold no later than arm a in {} of {} seeds",
            self.second_arm_wins(),
            self.runs.len() / 2
        )?;
        if let Some(d) = self.drop {
            write!(f, "\naccuracy drop {d:.2}%")?;
        }
        for p in &self.probe {
            write!(
                f,
                "\nunsupervised q_queries={}: {:.4} ± {:.4}",
                p.q_queries, p.accuracy, p.ci95
            )?;
        }
        Ok(())
    }
}

fn compare_arms(configs: &[RunConfig]) -> Result<[RunConfig; 2]> {
    match configs {
        [cfg] => {
            let mut a = cfg.clone();
            a.init = InitKind::Random;
            let mut b = cfg.clone();
            if b.init == InitKind::Random {
                b.init = InitKind::Pretrain;
            }
            Ok([a, b])
        }
        [a, b] => {
            for ((key, va), (_, vb)) in a.entries().into_iter().zip(b.entries()) {
                if key != "init" && key != "label_fraction" && va != vb {
                    return Err(PipelineError::Config(format!(
                        "compared configs differ in `{key}` ({va} vs {vb}); only init and label_fraction may differ"
                    )));
                }
            }
            Ok([a.clone(), b.clone()])
        }
        _ => Err(PipelineError::Config(format!(
            "compare takes one or two configs, got {}",
            configs.len()
        ))),
    }
}

/// Trains both arms at seeds `seed, seed + 1, …` and records trajectories,
/// threshold crossings, the label-fraction drop and the query-count probe.
pub fn cmd_compare(configs: &[RunConfig], out: &Path) -> Result<CompareReport> {
    let arms = compare_arms(configs)?;
    let data = [prepare_data(&arms[0])?, prepare_data(&arms[1])?];
    let model = model_config(&arms[0], &data[0])?;
    ensure_dir(out)?;
    write_text(&out.join("config_a.txt"), &arms[0].to_string())?;
    write_text(&out.join("config_b.txt"), &arms[1].to_string())?;
    let mut sink = MetricsWriter::create(&out.join("metrics.csv"))?;
    let (base_seed, repeats, threshold) = (arms[0].seed, arms[0].repeats, arms[0].threshold);
    let mut runs = Vec::new();
    for r in 0..repeats as u64 {
        for (arm, (cfg, data)) in arms.iter().zip(&data).enumerate() {
            let mut cfg = cfg.clone();
            cfg.seed = base_seed.wrapping_add(r);
            let (init, stage1) = stage2_init(&cfg, &model, data, &mut sink)?;
            let (_, metrics) = train_stage(&cfg, &model, data, &init, &mut sink)?;
            runs.push(ArmRun {
                arm,
                seed: cfg.seed,
                metrics,
                pretrain: stage1.map(|s| s.1),
            });
        }
    }

    let drop = (arms[0].label_fraction != arms[1].label_fraction).then(|| {
        let mean = |arm: usize| {
            let v: Vec<f64> = runs
                .iter()
                .filter(|r| r.arm == arm)
                .filter_map(ArmRun::final_accuracy)
                .collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        let (full, partial) = if arms[0].label_fraction > arms[1].label_fraction {
            (0, 1)
        } else {
            (1, 0)
        };
        accuracy_drop(mean(full), mean(partial))
    });

    let mut probe = Vec::new();
    if arms[1].query_probe && !data[1].holdout.is_empty() {
        let cfg = &arms[1];
        let mut counts = vec![cfg.pretrain_q_queries, cfg.q_queries];
        counts.dedup();
        for q in counts {
            let reused = runs
                .iter()
                .find(|r| r.arm == 1 && r.seed == cfg.seed && q == cfg.pretrain_q_queries)
                .and_then(|r| r.pretrain.as_ref())
                .and_then(|m| m.final_eval().copied());
            let rec = match reused {
                Some(rec) => rec,
                None => {
                    let t = pretrain_temperature(cfg, &data[1]);
                    let (_, m) = pretrain_stage(cfg, &model, &data[1], q, t, "probe", &mut sink)?;
                    *m.final_eval().expect("validation runs after the last step")
                }
            };
            probe.push(QueryProbe {
                q_queries: q,
                accuracy: rec.accuracy,
                ci95: rec.ci95,
            });
        }
    }
    sink.finish()?;

    let report = CompareReport {
        arms,
        threshold,
        runs,
        drop,
        probe,
    };
    write_compare_csvs(&report, out)?;
    Ok(report)
}

fn write_compare_csvs(report: &CompareReport, out: &Path) -> Result<()> {
    let mut traj = String::from("arm,init,label_fraction,seed,step,accuracy,ci95\n");
    let mut summary = String::from("arm,init,label_fraction,seed,final_accuracy,final_ci95,steps_to_threshold\n");
    for run in &report.runs {
        let cfg = &report.arms[run.arm];
        let name = ["a", "b"][run.arm];
        let init = csv_field(&cfg.init.to_string());
        let lf = sig6(cfg.label_fraction);
        for e in &run.metrics.evals {
            traj += &format!(
                "{name},{init},{lf},{},{},{},{}\n",
                run.seed,
                e.step,
                sig6(e.accuracy),
                sig6(e.ci95)
            );
        }
        let (acc, ci) = run
            .metrics
            .final_eval()
            .map_or((String::new(), String::new()), |e| (sig6(e.accuracy), sig6(e.ci95)));
        let steps = run
            .metrics
            .steps_to_threshold(report.threshold)
            .map(|s| s.to_string())
            .unwrap_or_default();
        summary += &format!("{name},{init},{lf},{},{acc},{ci},{steps}\n", run.seed);
    }
    write_text(&out.join("compare.csv"), &traj)?;
    write_text(&out.join("summary.csv"), &summary)?;
    if let Some(d) = report.drop {
        write_text(&out.join("drop.csv"), &format!("drop_percent\n{}\n", sig6(d)))?;
    }
    if !report.probe.is_empty() {
        let mut probe = String::from("q_queries,accuracy,ci95\n");
        for p in &report.probe {
            probe += &format!("{},{},{}\n", p.q_queries, sig6(p.accuracy), sig6(p.ci95));
        }
        write_text(&out.join("query_probe.csv"), &probe)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbReport {
    pub c: usize,
    pub m: usize,
    pub n: usize,
    pub probability: f64,
    /// Monte Carlo estimate, trial count and 3σ binomial half-width.
    pub monte_carlo: Option<(f64, usize, f64)>,
}

impl ProbReport {
    /// Whether the Monte Carlo estimate lies inside the 3σ band.
    pub fn agrees(&self) -> Option<bool> {
        self.monte_carlo
            .map(|(est, _, band)| (est - self.probability).abs() <= band)
    }
}

impl fmt::Display for ProbReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P(all {} sampled images from distinct classes | {} classes x {} images) = {:.4}",
            self.n, self.c, self.m, self.probability
        )?;
        if let Some((est, trials, band)) = self.monte_carlo {
            let verdict = if self.agrees() == Some(true) {
                "within"
            } else {
                "outside"
            };
            write!(
                f,
                "\nmonte carlo ({trials} trials) = {est:.4}, {verdict} 3 sigma band ±{band:.4}"
            )?;
        }
        Ok(())
    }
}

/// Chance that `n` images drawn without replacement from `c` classes of `m`
/// images come from distinct classes, optionally checked by simulation.
pub fn cmd_prob(c: usize, m: usize, n: usize, trials: Option<usize>, seed: u64) -> Result<ProbReport> {
    let config = |e: crate::dataset::DataError| PipelineError::Config(e.to_string());
    let probability = distinct_class_probability(c, m, n).map_err(config)?;
    let monte_carlo = match trials {
        Some(t) => {
            let est = monte_carlo_distinct_estimate(c, m, n, t, seed).map_err(config)?;
            let band = 3.0 * (probability * (1.0 - probability) / t as f64).sqrt();
            Some((est, t, band))
        }
        None => None,
    };
    Ok(ProbReport {
        c,
        m,
        n,
        probability,
        monte_carlo,
    })
}

/// Pretrains once per temperature at a fixed seed and records held-out
/// accuracy in `sweep_temp.csv`.
pub fn cmd_sweep_temperature(cfg: &RunConfig, temperatures: &[f64], out: &Path) -> Result<Vec<(f64, EvalRecord)>> {
    if cfg.model != ModelKind::Maml {
        return Err(PipelineError::Config("temperature sweeps need model = maml".into()));
    }
    if temperatures.is_empty() {
        return Err(PipelineError::Config("no temperatures to sweep".into()));
    }
    if let Some(t) = temperatures.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(PipelineError::Config(format!("temperature must be positive, got {t}")));
    }
    let data = prepare_data(cfg)?;
    if data.holdout.is_empty() {
        return Err(PipelineError::Data("sweeps need held-out classes".into()));
    }
    let model = model_config(cfg, &data)?;
    ensure_dir(out)?;
    write_text(&out.join("config.txt"), &cfg.to_string())?;
    let mut sink = MetricsWriter::create(&out.join("metrics.csv"))?;
    let mut rows = Vec::new();
    let mut csv = String::from("temperature,accuracy,ci95\n");
    for &t in temperatures {
        let (theta, m) = pretrain_stage(cfg, &model, &data, cfg.pretrain_q_queries, t, "pretrain", &mut sink)?;
        save_checkpoint(&theta, &out.join(format!("pretrain_t{t}.ckpt")))?;
        let rec = *m.final_eval().expect("validation runs after the last step");
        csv += &format!("{},{},{}\n", sig6(t), sig6(rec.accuracy), sig6(rec.ci95));
        rows.push((t, rec));
    }
    sink.finish()?;
    write_text(&out.join("sweep_temp.csv"), &csv)?;
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct PreviewReport {
    pub images: Vec<PathBuf>,
    pub histograms: PathBuf,
    /// Mean pairwise L1 distance between the augmented samples' histograms.
    pub dispersion: Option<f64>,
}

/// Writes `count` augmented copies of one image plus per-sample pixel
/// histograms (32 bins per channel, original first).
pub fn cmd_augment_preview(
    image: &Path,
    pipeline: &AugmentationPipeline,
    count: usize,
    seed: u64,
    out: &Path,
) -> Result<PreviewReport> {
    let original = Image::load_png(image)?;
    pipeline.check_channels(original.channels())?;
    ensure_dir(out)?;
    let channels = original.channels();
    let mut csv = String::from("sample");
    for c in 0..channels {
        for b in 0..HISTOGRAM_BINS {
            csv += &format!(",c{c}_b{b}");
        }
    }
    csv.push('\n');
    let mut row = |name: &str, img: &Image| -> Result<Vec<Vec<u64>>> {
        let h = pixel_histogram(img, HISTOGRAM_BINS)?;
        csv += name;
        for v in h.iter().flatten() {
            csv += &format!(",{v}");
        }
        csv.push('\n');
        Ok(h)
    };
    row("original", &original)?;
    let mut images = Vec::with_capacity(count);
    let mut hists = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = SeededRng::derive(seed, &[i as u64]);
        let img = apply_pipeline(&original, pipeline, &mut rng)?.quantized();
        let path = out.join(format!("sample_{i:03}.png"));
        img.save_png(&path)?;
        hists.push(row(&format!("sample_{i:03}"), &img)?);
        images.push(path);
    }
    let histograms = out.join("histograms.csv");
    write_text(&histograms, &csv)?;
    Ok(PreviewReport {
        images,
        histograms,
        dispersion: (hists.len() >= 2).then(|| histogram_dispersion(&hists)),
    })
}
