use rayon::prelude::*;

use super::{
    accuracy, check_loss, mean_ci95, EvalRecord, MetaError, Result, RunMetrics, StepRecord, Validation, EVAL_STREAM,
    TRAIN_STREAM,
};
use crate::dataset::{
    sample_episode, sample_supervised_episode, DataError, Dataset, Episode, EpisodeMode, EpisodeSpec,
};
use crate::image_ops::AugmentationPipeline;
use crate::models::{forward_classifier, images_to_tensor, ClassifierConfig};
use crate::rng::SeededRng;
use crate::tensor::{softmax_xent_temperature, GradMap, Graph, ParamSet, Scalar, Tensor, TensorError};

/// MAML hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MamlConfig {
    /// Inner (adaptation) learning rate.
    pub alpha: f64,
    /// Outer (meta) learning rate.
    pub beta: f64,
    pub inner_steps: usize,
    /// Softmax temperature of the inner-loop loss; the query loss uses 1.
    pub temperature_inner: f64,
    /// Differentiate through the inner updates (otherwise first-order MAML).
    pub second_order: bool,
    pub tasks_per_outer_step: usize,
    pub outer_steps: usize,
    pub eval_inner_steps: usize,
    pub seed: u64,
}

impl Default for MamlConfig {
    fn default() -> Self {
        MamlConfig {
            alpha: 0.4,
            beta: 0.05,
            inner_steps: 5,
            temperature_inner: 1.0,
            second_order: true,
            tasks_per_outer_step: 4,
            outer_steps: 1000,
            eval_inner_steps: 10,
            seed: 0,
        }
    }
}

impl MamlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MetaError::Config(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!(
                "learning rates must be finite and non-negative (alpha {}, beta {})",
                self.alpha, self.beta
            ));
        }
        if !(self.temperature_inner > 0.0 && self.temperature_inner.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature_inner));
        }
        if self.inner_steps == 0 || self.tasks_per_outer_step == 0 {
            return bad("inner_steps and tasks_per_outer_step must be at least 1".into());
        }
        Ok(())
    }
}

/// Inner-loop temperature used when the config does not set one: 100 for
/// 5-way and 10 for 20-way unsupervised training on RGB data, 1 otherwise.
pub fn default_temperature(n_way: usize, channels: usize, mode: EpisodeMode) -> f64 {
    match (mode, channels, n_way) {
        (EpisodeMode::Unsupervised, 3, 5) => 100.0,
        (EpisodeMode::Unsupervised, 3, 20) => 10.0,
        _ => 1.0,
    }
}

/// `steps` gradient steps `θ ← θ − α ∇L(θ)` on an arbitrary loss.
///
/// Untracked parameters are attached to a fresh graph first. With
/// `differentiable`, each gradient is itself recorded so a later
/// differentiation of the result sees the Hessian terms; otherwise the
/// gradients enter as constants and the result depends on `θ` through the
/// identity path only.
pub fn adapt<T: Scalar>(
    theta: &ParamSet<T>,
    inner_loss: impl Fn(&ParamSet<T>) -> Result<Tensor<T>>,
    alpha: f64,
    steps: usize,
    differentiable: bool,
) -> Result<ParamSet<T>> {
    let mut p = if theta.iter().any(|(_, t)| t.is_tracked()) {
        theta.clone()
    } else {
        theta.attach(&Graph::new())
    };
    for _ in 0..steps {
        let loss = inner_loss(&p)?;
        if !loss.item().is_finite() {
            return Err(TensorError::NonFinite { op: "inner loss" }.into());
        }
        let g = p.grad(&loss, differentiable)?;
        p = p.apply_update(&g, alpha, differentiable)?;
    }
    Ok(p)
}

/// Gradient of the post-adaptation query loss with respect to `theta`.
///
/// Returns the (detached) gradient, the query loss value, and whatever extra
/// value `query` reports alongside its loss.
pub fn task_meta_gradient<T: Scalar, A>(
    theta: &ParamSet<T>,
    inner_loss: impl Fn(&ParamSet<T>) -> Result<Tensor<T>>,
    query: impl Fn(&ParamSet<T>) -> Result<(Tensor<T>, A)>,
    alpha: f64,
    steps: usize,
    second_order: bool,
) -> Result<(GradMap<T>, f64, A)> {
    let graph = Graph::new();
    let leaves = theta.detach().attach(&graph);
    let adapted = adapt(&leaves, inner_loss, alpha, steps, second_order)?;
    let (loss, extra) = query(&adapted)?;
    let grads = leaves.grad(&loss, false)?;
    Ok((grads.detach(), loss.item().to_f64(), extra))
}

/// An episode as tensors.
#[derive(Clone, Debug)]
pub struct MamlTask<T: Scalar> {
    pub support_x: Tensor<T>,
    pub support_y: Tensor<T>,
    pub query_x: Tensor<T>,
    pub query_y: Tensor<T>,
    pub query_labels: Vec<usize>,
}

pub fn episode_task<T: Scalar>(ep: &Episode) -> Result<MamlTask<T>> {
    let n = ep.n_way();
    if ep.query.is_empty() {
        return Err(MetaError::Data(DataError::Spec(
            "episode has an empty query set".into(),
        )));
    }
    Ok(MamlTask {
        support_x: images_to_tensor(&ep.support_images())?,
        support_y: Tensor::from_f64(&ep.support_one_hot(), &[ep.support.len(), n])?,
        query_x: images_to_tensor(&ep.query_images())?,
        query_y: Tensor::from_f64(&ep.query_one_hot(), &[ep.query.len(), n])?,
        query_labels: ep.query_labels(),
    })
}

fn support_loss<'a, T: Scalar>(
    model: &'a ClassifierConfig,
    task: &'a MamlTask<T>,
    temperature: f64,
) -> impl Fn(&ParamSet<T>) -> Result<Tensor<T>> + 'a {
    move |p| {
        let logits = forward_classifier(p, model, &task.support_x)?;
        Ok(softmax_xent_temperature(&logits, &task.support_y, temperature)?)
    }
}

fn query_loss<'a, T: Scalar>(
    model: &'a ClassifierConfig,
    task: &'a MamlTask<T>,
) -> impl Fn(&ParamSet<T>) -> Result<(Tensor<T>, f64)> + 'a {
    move |p| {
        let logits = forward_classifier(p, model, &task.query_x)?;
        let acc = accuracy(&logits.argmax_rows()?, &task.query_labels);
        Ok((softmax_xent_temperature(&logits, &task.query_y, 1.0)?, acc))
    }
}

/// Adapted parameters `θ'` for one task's support set.
pub fn inner_adapt<T: Scalar>(
    theta: &ParamSet<T>,
    model: &ClassifierConfig,
    task: &MamlTask<T>,
    cfg: &MamlConfig,
) -> Result<ParamSet<T>> {
    cfg.validate()?;
    adapt(
        theta,
        support_loss(model, task, cfg.temperature_inner),
        cfg.alpha,
        cfg.inner_steps,
        cfg.second_order,
    )
}

/// One meta-update over `tasks`: per-task query gradients are summed in task
/// order and applied as `θ ← θ − β Σ ∇`. Reports the mean query loss and
/// accuracy before the update.
pub fn outer_step<T: Scalar>(
    theta: &ParamSet<T>,
    model: &ClassifierConfig,
    tasks: &[Episode],
    cfg: &MamlConfig,
    step: usize,
) -> Result<(ParamSet<T>, StepRecord)> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(MetaError::Config("outer step needs at least one task".into()));
    }
    let results: Vec<(GradMap<T>, f64, f64)> = tasks
        .par_iter()
        .map(|ep| {
            let task = episode_task::<T>(ep)?;
            task_meta_gradient(
                theta,
                support_loss(model, &task, cfg.temperature_inner),
                query_loss(model, &task),
                cfg.alpha,
                cfg.inner_steps,
                cfg.second_order,
            )
        })
        .collect::<Result<_>>()?;
    let mut total = GradMap::new();
    let (mut loss, mut acc) = (0.0, 0.0);
    for (g, l, a) in &results {
        check_loss(step, *l)?;
        total.accumulate(g)?;
        loss += l;
        acc += a;
    }
    if !total.all_finite() {
        return Err(MetaError::NonFiniteGradient { step });
    }
    let next = theta.detach().apply_update(&total, cfg.beta, false)?;
    let n = results.len() as f64;
    Ok((
        next,
        StepRecord {
            step,
            loss: loss / n,
            accuracy: acc / n,
        },
    ))
}

fn check_source(source: &Dataset, spec: &EpisodeSpec, pipeline: Option<&AugmentationPipeline>) -> Result<()> {
    spec.validate()?;
    match spec.mode {
        EpisodeMode::Unsupervised if pipeline.is_none() => Err(MetaError::Config(
            "unsupervised meta-training needs an augmentation pipeline".into(),
        )),
        EpisodeMode::Supervised if !source.is_labeled() => Err(MetaError::Data(DataError::Unlabeled {
            op: "supervised meta-training",
        })),
        _ => Ok(()),
    }
}

/// Samples the `tasks` training episodes of outer step `step`.
pub(crate) fn training_episodes(
    source: &Dataset,
    spec: &EpisodeSpec,
    pipeline: Option<&AugmentationPipeline>,
    seed: u64,
    step: usize,
    tasks: usize,
) -> Result<Vec<Episode>> {
    (0..tasks)
        .into_par_iter()
        .map(|t| {
            let mut rng = SeededRng::derive(seed, &[TRAIN_STREAM, step as u64, t as u64]);
            Ok(sample_episode(source, spec, pipeline, &mut rng)?)
        })
        .collect()
}

/// `cfg.outer_steps` outer steps from `init`, each on freshly sampled
/// episodes, with optional periodic validation.
#[allow(clippy::too_many_arguments)]
pub fn meta_train<T: Scalar>(
    model: &ClassifierConfig,
    init: &ParamSet<T>,
    source: &Dataset,
    spec: &EpisodeSpec,
    pipeline: Option<&AugmentationPipeline>,
    cfg: &MamlConfig,
    validation: Option<&Validation<'_>>,
    mut on_step: impl FnMut(&StepRecord, Option<&EvalRecord>),
) -> Result<(ParamSet<T>, RunMetrics)> {
    cfg.validate()?;
    check_source(source, spec, pipeline)?;
    if spec.n_way != model.n_way {
        return Err(MetaError::Config(format!(
            "episodes are {}-way but the classifier head is {}-way",
            spec.n_way, model.n_way
        )));
    }
    let mut theta = init.detach();
    let mut metrics = RunMetrics::default();
    for step in 1..=cfg.outer_steps {
        let episodes = training_episodes(source, spec, pipeline, cfg.seed, step, cfg.tasks_per_outer_step)?;
        let (next, rec) = outer_step(&theta, model, &episodes, cfg, step)?;
        theta = next;
        metrics.train.push(rec);
        let mut eval = None;
        if let Some(v) = validation.filter(|v| v.due(step, cfg.outer_steps)) {
            let mut e = evaluate(&theta, model, v.data, &v.spec, cfg, v.episodes, v.seed)?;
            e.step = step;
            metrics.evals.push(e);
            eval = metrics.evals.last();
        }
        on_step(&rec, eval);
    }
    Ok((theta, metrics))
}

/// Accuracy of `theta` on held-out episodes after `eval_inner_steps` of
/// adaptation each. The returned record has `step = 0`.
pub fn evaluate<T: Scalar>(
    theta: &ParamSet<T>,
    model: &ClassifierConfig,
    test_source: &Dataset,
    spec: &EpisodeSpec,
    cfg: &MamlConfig,
    episodes: usize,
    seed: u64,
) -> Result<EvalRecord> {
    cfg.validate()?;
    if spec.mode != EpisodeMode::Supervised {
        return Err(MetaError::Config("evaluation uses supervised episodes".into()));
    }
    if episodes == 0 {
        return Err(MetaError::Config("evaluation needs at least one episode".into()));
    }
    let theta = theta.detach();
    let per_episode: Vec<(f64, f64)> = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = SeededRng::derive(seed, &[EVAL_STREAM, e as u64]);
            let ep = sample_supervised_episode(test_source, spec, &mut rng)?;
            let task = episode_task::<T>(&ep)?;
            let adapted = adapt(
                &theta,
                support_loss(model, &task, cfg.temperature_inner),
                cfg.alpha,
                cfg.eval_inner_steps,
                false,
            )?
            .detach();
            let (loss, acc) = query_loss(model, &task)(&adapted)?;
            Ok((loss.item().to_f64(), acc))
        })
        .collect::<Result<_>>()?;
    let accs: Vec<f64> = per_episode.iter().map(|p| p.1).collect();
    let (accuracy, ci95) = mean_ci95(&accs);
    Ok(EvalRecord {
        step: 0,
        episodes,
        loss: per_episode.iter().map(|p| p.0).sum::<f64>() / episodes as f64,
        accuracy,
        ci95,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic_dataset;
    use crate::models::{BackboneConfig, ModelConfig};
    use crate::tensor::{finite_diff_grad, softmax_cross_entropy};

    fn scalars(values: &[(&str, f64)]) -> ParamSet<f64> {
        let mut p = ParamSet::new("toy");
        for (n, v) in values {
            p.insert(*n, Tensor::from_f64(&[*v], &[1]).unwrap()).unwrap();
        }
        p
    }

    fn value(p: &ParamSet<f64>, n: &str) -> f64 {
        p.get(n).unwrap().item()
    }

    fn logistic_data() -> (Tensor<f64>, Tensor<f64>, Vec<f64>, Vec<f64>) {
        let xs = vec![0.5, -1.2, 2.0, 0.1];
        let ys = vec![1.0, 0.0, 1.0, 0.0];
        let x = Tensor::from_f64(&xs, &[4, 1]).unwrap();
        let onehot: Vec<f64> = ys.iter().flat_map(|&y| [y, 1.0 - y]).collect();
        (x, Tensor::from_f64(&onehot, &[4, 2]).unwrap(), xs, ys)
    }

    /// logits `[w·x + b, 0]`
    fn logistic_loss<'a>(
        x: &'a Tensor<f64>,
        y: &'a Tensor<f64>,
        t: f64,
    ) -> impl Fn(&ParamSet<f64>) -> Result<Tensor<f64>> + 'a {
        move |p| {
            let z = x.mul(p.get("w")?)?.add(p.get("b")?)?;
            let logits = Tensor::concat(&[&z, &Tensor::zeros(&[4, 1])], 1)?;
            Ok(softmax_xent_temperature(&logits, y, t)?)
        }
    }

    #[test]
    fn logistic_step_matches_hand_derivation() {
        let (x, y, xs, ys) = logistic_data();
        for t in [1.0, 3.0] {
            let theta = scalars(&[("w", 0.3), ("b", -0.2)]);
            let out = adapt(&theta, logistic_loss(&x, &y, t), 0.5, 1, false).unwrap();
            // dL/dz_i = (σ(z_i/T) − y_i) / T, averaged over the batch
            let (mut dw, mut db) = (0.0, 0.0);
            for (xi, yi) in xs.iter().zip(&ys) {
                let z = 0.3 * xi - 0.2;
                let s = 1.0 / (1.0 + (-z / t).exp());
                dw += (s - yi) / t * xi / 4.0;
                db += (s - yi) / t / 4.0;
            }
            assert!((value(&out, "w") - (0.3 - 0.5 * dw)).abs() < 1e-10);
            assert!((value(&out, "b") - (-0.2 - 0.5 * db)).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_alpha_and_unit_temperature() {
        let (x, y, _, _) = logistic_data();
        let theta = scalars(&[("w", 0.3), ("b", -0.2)]);
        let same = adapt(&theta, logistic_loss(&x, &y, 2.0), 0.0, 3, true).unwrap();
        for (n, t) in theta.iter() {
            assert!(t.bit_eq(same.get(n).unwrap()));
        }
        let plain = adapt(
            &theta,
            |p| {
                let z = x.mul(p.get("w")?)?.add(p.get("b")?)?;
                let logits = Tensor::concat(&[&z, &Tensor::zeros(&[4, 1])], 1)?;
                Ok(softmax_cross_entropy(&logits, &y)?)
            },
            0.7,
            2,
            false,
        )
        .unwrap();
        let unit = adapt(&theta, logistic_loss(&x, &y, 1.0), 0.7, 2, false).unwrap();
        for (n, t) in plain.iter() {
            assert!(t.bit_eq(unit.get(n).unwrap()));
        }
    }

    #[test]
    fn single_step_is_linear_in_alpha() {
        let (x, y, _, _) = logistic_data();
        let theta = scalars(&[("w", 0.3), ("b", -0.2)]);
        let one = adapt(&theta, logistic_loss(&x, &y, 1.0), 0.1, 1, false).unwrap();
        let two = adapt(&theta, logistic_loss(&x, &y, 1.0), 0.2, 1, false).unwrap();
        for n in ["w", "b"] {
            let d1 = value(&theta, n) - value(&one, n);
            let d2 = value(&theta, n) - value(&two, n);
            assert!((d2 - 2.0 * d1).abs() < 1e-15);
        }
    }

    /// inner ½(θ − a)², query ½(θ − b)²
    fn quadratic(
        a: f64,
        b: f64,
    ) -> (
        impl Fn(&ParamSet<f64>) -> Result<Tensor<f64>>,
        impl Fn(&ParamSet<f64>) -> Result<(Tensor<f64>, ())>,
    ) {
        let half_sq = move |p: &ParamSet<f64>, c: f64| -> Result<Tensor<f64>> {
            let d = p.get("t")?.add_scalar(-c)?;
            Ok(d.mul(&d)?.scale(0.5)?.sum()?)
        };
        (
            move |p: &ParamSet<f64>| half_sq(p, a),
            move |p: &ParamSet<f64>| Ok((half_sq(p, b)?, ())),
        )
    }

    #[test]
    fn first_and_second_order_on_quadratic() {
        let (theta0, a, b, alpha) = (1.5, 0.2, -0.7, 0.3);
        let theta = scalars(&[("t", theta0)]);
        let (inner, query) = quadratic(a, b);
        let adapted = theta0 - alpha * (theta0 - a);
        let (fo, loss, _) = task_meta_gradient(&theta, &inner, &query, alpha, 1, false).unwrap();
        assert!((fo.get("t").unwrap().item() - (adapted - b)).abs() < 1e-12);
        assert!((loss - 0.5 * (adapted - b).powi(2)).abs() < 1e-12);
        let (so, _, _) = task_meta_gradient(&theta, &inner, &query, alpha, 1, true).unwrap();
        assert!((so.get("t").unwrap().item() - (1.0 - alpha) * (adapted - b)).abs() < 1e-12);
    }

    #[test]
    fn second_order_matches_finite_differences_over_several_steps() {
        let theta = scalars(&[("t", 0.9), ("u", -0.4)]);
        let inner = |p: &ParamSet<f64>| -> Result<Tensor<f64>> {
            let t = p.get("t")?;
            let u = p.get("u")?;
            Ok(t.mul(u)?.exp()?.add(&t.mul(t)?)?.sum()?)
        };
        let query = |p: &ParamSet<f64>| -> Result<(Tensor<f64>, ())> {
            let t = p.get("t")?;
            let u = p.get("u")?;
            Ok((t.sub(u)?.powf(4.0)?.add(&u.sigmoid()?)?.sum()?, ()))
        };
        let (g, _, _) = task_meta_gradient(&theta, inner, query, 0.1, 3, true).unwrap();
        let numeric = finite_diff_grad(
            |p| {
                Ok(query(&adapt(p, inner, 0.1, 3, false).unwrap().detach())
                    .unwrap()
                    .0
                    .item())
            },
            &theta,
            1e-6,
        )
        .unwrap();
        for n in ["t", "u"] {
            let (a, e) = (g.get(n).unwrap().item(), numeric.get(n).unwrap().item());
            assert!((a - e).abs() <= 1e-7 + 1e-5 * e.abs(), "{n}: {a} vs {e}");
        }
    }

    #[test]
    fn orders_coincide_on_linear_losses() {
        let theta = scalars(&[("t", 0.5), ("u", 2.0)]);
        let lin = |ct: f64, cu: f64| {
            move |p: &ParamSet<f64>| -> Result<Tensor<f64>> {
                Ok(p.get("t")?.scale(ct)?.add(&p.get("u")?.scale(cu)?)?.sum()?)
            }
        };
        let inner = lin(1.5, -0.5);
        let q = lin(0.25, 3.0);
        let query = |p: &ParamSet<f64>| Ok((q(p)?, ()));
        let (fo, _, _) = task_meta_gradient(&theta, inner, query, 0.3, 2, false).unwrap();
        let (so, _, _) = task_meta_gradient(&theta, inner, query, 0.3, 2, true).unwrap();
        for n in ["t", "u"] {
            assert_eq!(fo.get(n).unwrap().item(), so.get(n).unwrap().item());
        }
    }

    fn tiny_setup() -> (ClassifierConfig, ParamSet<f64>, Dataset) {
        let model = ClassifierConfig {
            backbone: BackboneConfig::new(1, 10, 10, 2),
            n_way: 3,
        };
        let theta = ModelConfig::Classifier(model).init_params(1).unwrap();
        (model, theta, synthetic_dataset(5, 4, 10, 10, 1, 2).unwrap())
    }

    fn tiny_cfg() -> MamlConfig {
        MamlConfig {
            alpha: 0.1,
            beta: 0.05,
            inner_steps: 1,
            tasks_per_outer_step: 2,
            outer_steps: 2,
            eval_inner_steps: 1,
            ..MamlConfig::default()
        }
    }

    #[test]
    fn zero_beta_keeps_theta_and_reports_loss() {
        let (model, theta, ds) = tiny_setup();
        let spec = EpisodeSpec::supervised(3, 1, 2).unwrap();
        let eps = training_episodes(&ds, &spec, None, 0, 1, 2).unwrap();
        let cfg = MamlConfig {
            beta: 0.0,
            ..tiny_cfg()
        };
        let (next, rec) = outer_step(&theta, &model, &eps, &cfg, 1).unwrap();
        for (n, t) in theta.iter() {
            assert!(t.bit_eq(next.get(n).unwrap()));
        }
        assert!(rec.loss.is_finite() && rec.loss > 0.0);
    }

    #[test]
    fn meta_train_is_deterministic_and_noop_at_zero_steps() {
        let (model, theta, ds) = tiny_setup();
        let spec = EpisodeSpec::supervised(3, 1, 2).unwrap();
        let cfg = tiny_cfg();
        let val = Validation {
            data: &ds,
            spec,
            episodes: 3,
            every: 1,
            seed: 4,
        };
        let run = || meta_train(&model, &theta, &ds, &spec, None, &cfg, Some(&val), |_, _| {}).unwrap();
        let (a, ma) = run();
        let (b, mb) = run();
        assert_eq!(ma, mb);
        assert_eq!(ma.train.len(), 2);
        assert_eq!(ma.evals.len(), 2);
        for (n, t) in a.iter() {
            assert!(t.bit_eq(b.get(n).unwrap()));
        }
        let zero = MamlConfig { outer_steps: 0, ..cfg };
        let (c, mc) = meta_train(&model, &theta, &ds, &spec, None, &zero, None, |_, _| {}).unwrap();
        assert!(mc.train.is_empty());
        for (n, t) in theta.iter() {
            assert!(t.bit_eq(c.get(n).unwrap()));
        }
    }

    #[test]
    fn mode_mismatches_rejected() {
        let (model, theta, ds) = tiny_setup();
        let cfg = tiny_cfg();
        let unsup = EpisodeSpec::unsupervised(3, 1).unwrap();
        assert!(meta_train(&model, &theta, &ds, &unsup, None, &cfg, None, |_, _| {}).is_err());
        let sup = EpisodeSpec::supervised(3, 1, 1).unwrap();
        assert!(meta_train(&model, &theta, &ds.erase_labels(), &sup, None, &cfg, None, |_, _| {}).is_err());
        let four = EpisodeSpec::supervised(4, 1, 1).unwrap();
        assert!(meta_train(&model, &theta, &ds, &four, None, &cfg, None, |_, _| {}).is_err());
    }

    #[test]
    fn predictions_without_adaptation_ignore_temperature() {
        let (model, theta, ds) = tiny_setup();
        let spec = EpisodeSpec::supervised(3, 1, 3).unwrap();
        let at = |t: f64| {
            let cfg = MamlConfig {
                temperature_inner: t,
                eval_inner_steps: 0,
                ..tiny_cfg()
            };
            evaluate(&theta, &model, &ds, &spec, &cfg, 8, 3).unwrap().accuracy
        };
        assert_eq!(at(1.0), at(100.0));
        assert_eq!(at(1.0), at(0.01));
    }

    #[test]
    fn single_episode_has_zero_half_width() {
        let (model, theta, ds) = tiny_setup();
        let spec = EpisodeSpec::supervised(3, 1, 2).unwrap();
        let e = evaluate(&theta, &model, &ds, &spec, &tiny_cfg(), 1, 0).unwrap();
        assert_eq!(e.ci95, 0.0);
        assert!((0.0..=1.0).contains(&e.accuracy));
        let wide = EpisodeSpec::supervised(6, 1, 1).unwrap();
        assert!(evaluate(&theta, &model, &ds, &wide, &tiny_cfg(), 1, 0).is_err());
    }

    #[test]
    fn default_temperatures() {
        assert_eq!(default_temperature(5, 3, EpisodeMode::Unsupervised), 100.0);
        assert_eq!(default_temperature(20, 3, EpisodeMode::Unsupervised), 10.0);
        assert_eq!(default_temperature(5, 1, EpisodeMode::Unsupervised), 1.0);
        assert_eq!(default_temperature(5, 3, EpisodeMode::Supervised), 1.0);
    }
}
