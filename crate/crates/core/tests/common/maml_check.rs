//! Outer-gradient checks for MAML on a tiny conv classifier.

use ssml::dataset::{sample_supervised_episode, synthetic_dataset, EpisodeSpec};
use ssml::meta::{adapt, episode_task, task_meta_gradient, MamlTask};
use ssml::models::{forward_classifier, BackboneConfig, ClassifierConfig, ModelConfig};
use ssml::rng::SeededRng;
use ssml::tensor::{finite_diff_grad, softmax_xent_temperature, GradMap, ParamSet, Tensor};

pub const RTOL: f64 = 1e-3;
pub const ATOL: f64 = 1e-6;

pub struct Setup {
    pub model: ClassifierConfig,
    pub theta: ParamSet<f64>,
    pub task: MamlTask<f64>,
}

/// filters = 2 on 14×14 grayscale, 3-way 1-shot with 2 queries.
pub fn tiny_setup(seed: u64) -> Setup {
    let model = ClassifierConfig {
        backbone: BackboneConfig::new(1, 14, 14, 2),
        n_way: 3,
    };
    let theta = ModelConfig::Classifier(model).init_params::<f64>(seed).unwrap();
    let data = synthetic_dataset(5, 4, 14, 14, 1, seed + 10).unwrap();
    let spec = EpisodeSpec::supervised(3, 1, 2).unwrap();
    let ep = sample_supervised_episode(&data, &spec, &mut SeededRng::new(seed)).unwrap();
    Setup {
        model,
        theta,
        task: episode_task(&ep).unwrap(),
    }
}

pub fn meta_gradient(s: &Setup, alpha: f64, steps: usize, temperature: f64, second_order: bool) -> GradMap<f64> {
    let (model, task) = (&s.model, &s.task);
    let inner = |p: &ParamSet<f64>| {
        let logits = forward_classifier(p, model, &task.support_x)?;
        Ok(softmax_xent_temperature(&logits, &task.support_y, temperature)?)
    };
    let query = |p: &ParamSet<f64>| {
        let logits = forward_classifier(p, model, &task.query_x)?;
        Ok((softmax_xent_temperature(&logits, &task.query_y, 1.0)?, ()))
    };
    task_meta_gradient(&s.theta, inner, query, alpha, steps, second_order)
        .unwrap()
        .0
}

/// Central differences of `θ ↦ L_query(adapt(θ))`.
pub fn finite_difference(s: &Setup, alpha: f64, steps: usize, temperature: f64) -> GradMap<f64> {
    let (model, task) = (&s.model, &s.task);
    let objective = |theta: &ParamSet<f64>| {
        let inner = |p: &ParamSet<f64>| {
            let logits = forward_classifier(p, model, &task.support_x)?;
            Ok(softmax_xent_temperature(&logits, &task.support_y, temperature)?)
        };
        let adapted = adapt(theta, inner, alpha, steps, false).unwrap();
        let logits = forward_classifier(&adapted, model, &task.query_x).unwrap();
        Ok(softmax_xent_temperature(&logits, &task.query_y, 1.0)?.item())
    };
    finite_diff_grad(objective, &s.theta, 1e-6).unwrap()
}

/// Worst `|a − n| / (atol + rtol·|n|)` over every parameter.
pub fn worst_error(analytic: &GradMap<f64>, numeric: &GradMap<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for (name, n) in numeric.iter() {
        let a = analytic.get(name).expect("same parameter names");
        for (x, y) in a.data().iter().zip(n.data()) {
            worst = worst.max((x - y).abs() / (ATOL + RTOL * y.abs()));
        }
    }
    worst
}

pub fn max_abs_diff(a: &GradMap<f64>, b: &GradMap<f64>) -> f64 {
    a.iter()
        .flat_map(|(name, x)| {
            let y = b.get(name).expect("same parameter names");
            x.data()
                .iter()
                .zip(y.data())
                .map(|(p, q)| (p - q).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

/// First- and second-order meta-gradients for losses linear in θ:
/// `L_in = Σ a⊙θ`, `L_q = Σ b⊙θ`.
pub fn linear_model_gradients(seed: u64) -> (GradMap<f64>, GradMap<f64>) {
    let mut rng = SeededRng::new(seed);
    let mut draw = |n: usize| Tensor::from_f64(&(0..n).map(|_| rng.normal()).collect::<Vec<_>>(), &[n]).unwrap();
    let mut theta = ParamSet::new("linear");
    theta.insert("w", draw(6)).unwrap();
    theta.insert("b", draw(2)).unwrap();
    let (aw, ab, bw, bb) = (draw(6), draw(2), draw(6), draw(2));
    let run = |second_order| {
        let inner = |p: &ParamSet<f64>| Ok(p.get("w")?.mul(&aw)?.sum()?.add(&p.get("b")?.mul(&ab)?.sum()?)?);
        let query = |p: &ParamSet<f64>| Ok((p.get("w")?.mul(&bw)?.sum()?.add(&p.get("b")?.mul(&bb)?.sum()?)?, ()));
        task_meta_gradient(&theta, inner, query, 0.3, 3, second_order)
            .unwrap()
            .0
    };
    (run(false), run(true))
}
