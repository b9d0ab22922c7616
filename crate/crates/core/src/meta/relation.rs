use rayon::prelude::*;

use super::maml::training_episodes;
use super::{
    accuracy, check_loss, mean_ci95, EvalRecord, MetaError, Result, RunMetrics, StepRecord, Validation, EVAL_STREAM,
};
use crate::dataset::{sample_supervised_episode, DataError, Dataset, Episode, EpisodeMode, EpisodeSpec};
use crate::image_ops::AugmentationPipeline;
use crate::models::{concat_features, forward_embedding, forward_relation, images_to_tensor, RelationConfig};
use crate::rng::SeededRng;
use crate::tensor::{mse_loss, GradMap, Graph, ParamSet, Scalar, Tensor, TensorError};

#[derive(Clone, Debug, PartialEq)]
pub struct RelationTrainConfig {
    pub lr: f64,
    pub outer_steps: usize,
    pub tasks_per_step: usize,
    pub seed: u64,
}

impl Default for RelationTrainConfig {
    fn default() -> Self {
        RelationTrainConfig {
            lr: 1e-3,
            outer_steps: 1000,
            tasks_per_step: 1,
            seed: 0,
        }
    }
}

impl RelationTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(MetaError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.tasks_per_step == 0 {
            return Err(MetaError::Config("tasks_per_step must be at least 1".into()));
        }
        Ok(())
    }
}

/// Scores `[n_query, n_way]`: every query paired with every class.
///
/// Support and query images are embedded in one batch; the k support
/// embeddings of a class are summed element-wise before pairing.
pub fn relation_scores<T: Scalar>(params: &ParamSet<T>, model: &RelationConfig, ep: &Episode) -> Result<Tensor<T>> {
    let (ns, nq, n_way) = (ep.support.len(), ep.query.len(), ep.n_way());
    if nq == 0 {
        return Err(MetaError::Data(DataError::Spec(
            "episode has an empty query set".into(),
        )));
    }
    let images: Vec<_> = ep.support_images().into_iter().chain(ep.query_images()).collect();
    let emb = forward_embedding(params, model, &images_to_tensor(&images)?)?;
    let support_labels: Vec<usize> = ep.support.iter().map(|s| s.label).collect();
    let classes = emb.narrow(0, 0, ns)?.index_add(&support_labels, n_way)?;
    let queries = emb.narrow(0, ns, nq)?;
    let class_rows: Vec<usize> = (0..nq).flat_map(|_| 0..n_way).collect();
    let query_rows: Vec<usize> = (0..nq).flat_map(|i| std::iter::repeat_n(i, n_way)).collect();
    let pairs = concat_features(&classes.index_select(&class_rows)?, &queries.index_select(&query_rows)?)?;
    Ok(forward_relation(params, model, &pairs)?.reshape(&[nq, n_way])?)
}

/// `Σ_i Σ_j (r_ij − y_ij)²` against one-hot targets.
pub fn relation_loss<T: Scalar>(scores: &Tensor<T>, labels: &Tensor<T>) -> Result<Tensor<T>> {
    if scores.rank() != 2 || scores.shape() != labels.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "relation_loss",
            lhs: scores.shape().to_vec(),
            rhs: labels.shape().to_vec(),
        }
        .into());
    }
    Ok(mse_loss(scores, &labels.detach())?)
}

fn episode_targets<T: Scalar>(ep: &Episode) -> Result<Tensor<T>> {
    Ok(Tensor::from_f64(&ep.query_one_hot(), &[ep.query.len(), ep.n_way()])?)
}

/// One SGD step on the summed relation loss of `tasks`.
pub fn relation_step<T: Scalar>(
    params: &ParamSet<T>,
    model: &RelationConfig,
    tasks: &[Episode],
    cfg: &RelationTrainConfig,
    step: usize,
) -> Result<(ParamSet<T>, StepRecord)> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(MetaError::Config("relation step needs at least one task".into()));
    }
    let results: Vec<(GradMap<T>, f64, f64)> = tasks
        .par_iter()
        .map(|ep| {
            let graph = Graph::new();
            let leaves = params.detach().attach(&graph);
            let scores = relation_scores(&leaves, model, ep)?;
            let loss = relation_loss(&scores, &episode_targets(ep)?)?;
            let acc = accuracy(&scores.argmax_rows()?, &ep.query_labels());
            Ok((leaves.grad(&loss, false)?.detach(), loss.item().to_f64(), acc))
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
    let n = results.len() as f64;
    Ok((
        params.detach().apply_update(&total, cfg.lr, false)?,
        StepRecord {
            step,
            loss: loss / n,
            accuracy: acc / n,
        },
    ))
}

#[allow(clippy::too_many_arguments)]
pub fn train_relation<T: Scalar>(
    model: &RelationConfig,
    init: &ParamSet<T>,
    source: &Dataset,
    spec: &EpisodeSpec,
    pipeline: Option<&AugmentationPipeline>,
    cfg: &RelationTrainConfig,
    validation: Option<&Validation<'_>>,
    mut on_step: impl FnMut(&StepRecord, Option<&EvalRecord>),
) -> Result<(ParamSet<T>, RunMetrics)> {
    cfg.validate()?;
    spec.validate()?;
    match spec.mode {
        EpisodeMode::Unsupervised if pipeline.is_none() => {
            return Err(MetaError::Config(
                "unsupervised training needs an augmentation pipeline".into(),
            ))
        }
        EpisodeMode::Supervised if !source.is_labeled() => {
            return Err(MetaError::Data(DataError::Unlabeled {
                op: "supervised relation training",
            }))
        }
        _ => {}
    }
    let mut params = init.detach();
    let mut metrics = RunMetrics::default();
    for step in 1..=cfg.outer_steps {
        let episodes = training_episodes(source, spec, pipeline, cfg.seed, step, cfg.tasks_per_step)?;
        let (next, rec) = relation_step(&params, model, &episodes, cfg, step)?;
        params = next;
        metrics.train.push(rec);
        let mut eval = None;
        if let Some(v) = validation.filter(|v| v.due(step, cfg.outer_steps)) {
            let mut e = evaluate_relation(&params, model, v.data, &v.spec, v.episodes, v.seed)?;
            e.step = step;
            metrics.evals.push(e);
            eval = metrics.evals.last();
        }
        on_step(&rec, eval);
    }
    Ok((params, metrics))
}

/// Accuracy of an arbitrary episode scorer (argmax over each score row).
pub fn evaluate_scorer<T: Scalar>(
    test_source: &Dataset,
    spec: &EpisodeSpec,
    episodes: usize,
    seed: u64,
    scorer: impl Fn(&Episode) -> Result<Tensor<T>> + Sync,
) -> Result<EvalRecord> {
    if spec.mode != EpisodeMode::Supervised {
        return Err(MetaError::Config("evaluation uses supervised episodes".into()));
    }
    if episodes == 0 {
        return Err(MetaError::Config("evaluation needs at least one episode".into()));
    }
    let per_episode: Vec<(f64, f64)> = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = SeededRng::derive(seed, &[EVAL_STREAM, e as u64]);
            let ep = sample_supervised_episode(test_source, spec, &mut rng)?;
            let scores = scorer(&ep)?;
            let loss = relation_loss(&scores, &episode_targets(&ep)?)?.item().to_f64();
            Ok((loss, accuracy(&scores.argmax_rows()?, &ep.query_labels())))
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

/// Held-out accuracy; the relation network does not adapt at test time.
pub fn evaluate_relation<T: Scalar>(
    params: &ParamSet<T>,
    model: &RelationConfig,
    test_source: &Dataset,
    spec: &EpisodeSpec,
    episodes: usize,
    seed: u64,
) -> Result<EvalRecord> {
    let params = params.detach();
    evaluate_scorer(test_source, spec, episodes, seed, |ep| {
        relation_scores(&params, model, ep)
    })
}
