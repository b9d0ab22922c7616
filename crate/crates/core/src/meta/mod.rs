//! Episodic meta-training: MAML with a temperature-scaled inner loop and the
//! relation network, sharing metrics, validation, and error types.

mod maml;
mod relation;

pub use maml::{
    adapt, default_temperature, episode_task, evaluate, inner_adapt, meta_train, outer_step, task_meta_gradient,
    MamlConfig, MamlTask,
};
pub use relation::{
    evaluate_relation, evaluate_scorer, relation_loss, relation_scores, relation_step, train_relation,
    RelationTrainConfig,
};

use crate::dataset::{DataError, Dataset, EpisodeSpec};
use crate::models::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum MetaError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("training diverged at step {step}: query loss {loss}")]
    Divergence { step: usize, loss: f64 },
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },
    #[error("invalid training config: {0}")]
    Config(String),
}

pub type Result<T, E = MetaError> = std::result::Result<T, E>;

/// Query losses above this abort training.
pub const DIVERGENCE_LOSS: f64 = 1e3;

/// One outer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// One evaluation over `episodes` held-out episodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRecord {
    /// Outer steps completed when the evaluation ran.
    pub step: usize,
    pub episodes: usize,
    pub loss: f64,
    pub accuracy: f64,
    /// Normal-approximation 95% half-width; 0 for a single episode.
    pub ci95: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub train: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
}

impl RunMetrics {
    /// First evaluated step whose accuracy reaches `threshold`.
    pub fn steps_to_threshold(&self, threshold: f64) -> Option<usize> {
        self.evals.iter().find(|e| e.accuracy >= threshold).map(|e| e.step)
    }

    pub fn final_eval(&self) -> Option<&EvalRecord> {
        self.evals.last()
    }
}

/// Periodic evaluation on labeled held-out data during training.
#[derive(Clone, Copy, Debug)]
pub struct Validation<'a> {
    pub data: &'a Dataset,
    pub spec: EpisodeSpec,
    pub episodes: usize,
    /// Evaluate after every `every` outer steps (and after the last one).
    pub every: usize,
    pub seed: u64,
}

impl Validation<'_> {
    fn due(&self, step: usize, last: usize) -> bool {
        step == last || (self.every > 0 && step.is_multiple_of(self.every))
    }
}

/// Stream ids mixed into seeds so training and evaluation never share draws.
pub(crate) const TRAIN_STREAM: u64 = 0x74_7261_696e;
pub(crate) const EVAL_STREAM: u64 = 0x6576_616c;

/// Mean accuracy and its 95% half-width `1.96 · sd / √n` (sample sd).
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
}

pub(crate) fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len().max(1) as f64
}

pub(crate) fn check_loss(step: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() || loss > DIVERGENCE_LOSS {
        return Err(MetaError::Divergence { step, loss });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_conventions() {
        assert_eq!(mean_ci95(&[0.4]), (0.4, 0.0));
        let (m, h) = mean_ci95(&[0.0, 1.0]);
        assert_eq!(m, 0.5);
        // sd = √0.5, n = 2
        assert!((h - 1.96 * 0.5f64.sqrt() / 2f64.sqrt()).abs() < 1e-12);
        assert!(mean_ci95(&[0.25; 10]).1 == 0.0);
    }

    #[test]
    fn threshold_lookup() {
        let rec = |step, accuracy| EvalRecord {
            step,
            episodes: 1,
            loss: 0.0,
            accuracy,
            ci95: 0.0,
        };
        let m = RunMetrics {
            train: vec![],
            evals: vec![rec(10, 0.5), rec(20, 0.81), rec(30, 0.7)],
        };
        assert_eq!(m.steps_to_threshold(0.8), Some(20));
        assert_eq!(m.steps_to_threshold(0.9), None);
    }
}
