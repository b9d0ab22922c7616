//! Central finite differences against reverse-mode gradients for every
//! differentiable tensor operation, on randomized float64 instances.

use std::sync::Arc;

use ssml::rng::SeededRng;
use ssml::tensor::{
    batchnorm2d, conv2d, grad, maxpool2d, maxpool2d_ceil, mse_loss, softmax_cross_entropy, softmax_xent_temperature,
    Graph, Result, Tensor,
};

pub const RTOL: f64 = 1e-4;
pub const ATOL: f64 = 1e-6;
pub const INSTANCES: usize = 20;
const H: f64 = 1e-5;

type Op = Box<dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>>;

/// One randomized instance: inputs plus the function of them.
pub struct Case {
    pub inputs: Vec<Tensor<f64>>,
    pub f: Op,
}

fn t(data: Vec<f64>, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_f64(&data, shape).unwrap()
}

fn normal(rng: &mut SeededRng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    t((0..n).map(|_| rng.normal()).collect(), shape)
}

fn positive(rng: &mut SeededRng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    t((0..n).map(|_| rng.uniform_range(0.3, 2.0)).collect(), shape)
}

/// Values bounded away from zero (ReLU kink).
fn off_kink(rng: &mut SeededRng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    t(
        (0..n)
            .map(|_| {
                let v = rng.uniform_range(0.05, 2.0);
                if rng.bernoulli(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect(),
        shape,
    )
}

/// Distinct values at least 0.01 apart (max ties), randomly ordered.
fn distinct(rng: &mut SeededRng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - n as f64 * 0.025).collect();
    rng.shuffle(&mut v);
    t(v, shape)
}

fn dim(rng: &mut SeededRng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

fn one_hot(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor<f64> {
    let mut v = vec![0.0; rows * cols];
    for r in 0..rows {
        v[r * cols + rng.below(cols)] = 1.0;
    }
    t(v, &[rows, cols])
}

fn case(inputs: Vec<Tensor<f64>>, f: impl Fn(&[Tensor<f64>]) -> Result<Tensor<f64>> + 'static) -> Case {
    Case { inputs, f: Box::new(f) }
}

/// Builds instance `i` of operation `op`.
pub fn make_case(op: &str, rng: &mut SeededRng) -> Case {
    let (r, c) = (dim(rng, 1, 4), dim(rng, 1, 5));
    match op {
        "add" => case(vec![normal(rng, &[r, c]), normal(rng, &[c])], |x| x[0].add(&x[1])),
        "sub" => case(vec![normal(rng, &[r, c]), normal(rng, &[r, 1])], |x| x[0].sub(&x[1])),
        "mul" => case(vec![normal(rng, &[2, r, c]), normal(rng, &[r, 1])], |x| x[0].mul(&x[1])),
        "neg" => case(vec![normal(rng, &[r, c])], |x| x[0].neg()),
        "scale" => {
            let k = rng.normal();
            case(vec![normal(rng, &[r, c])], move |x| x[0].scale(k))
        }
        "add_scalar" => {
            let k = rng.normal();
            case(vec![normal(rng, &[r, c])], move |x| x[0].add_scalar(k))
        }
        "relu" => case(vec![off_kink(rng, &[r, c])], |x| x[0].relu()),
        "sigmoid" => case(vec![normal(rng, &[r, c])], |x| x[0].sigmoid()),
        "exp" => case(vec![normal(rng, &[r, c])], |x| x[0].exp()),
        "log" => case(vec![positive(rng, &[r, c])], |x| x[0].log()),
        "powf" => {
            let p = rng.uniform_range(-1.5, 2.5);
            case(vec![positive(rng, &[r, c])], move |x| x[0].powf(p))
        }
        "sum_to" => {
            let target = if rng.bernoulli(0.5) { [r, 1] } else { [1, c] };
            case(vec![normal(rng, &[r, c])], move |x| x[0].sum_to(&target))
        }
        "broadcast_to" => case(vec![normal(rng, &[1, c])], move |x| x[0].broadcast_to(&[r, c])),
        "sum" => case(vec![normal(rng, &[r, c])], |x| x[0].sum()),
        "mean" => case(vec![normal(rng, &[r, c])], |x| x[0].mean()),
        "reshape" => case(vec![normal(rng, &[r, c])], move |x| x[0].reshape(&[c, r])),
        "gather" => {
            let n = dim(rng, 1, 7);
            let idx: Vec<usize> = (0..n).map(|_| rng.below(r * c)).collect();
            let idx = Arc::new(idx);
            case(vec![normal(rng, &[r, c])], move |x| x[0].gather(idx.clone(), &[n]))
        }
        "scatter_add" => {
            let idx: Vec<usize> = (0..r * c).map(|_| rng.below(3)).collect();
            let idx = Arc::new(idx);
            case(vec![normal(rng, &[r, c])], move |x| x[0].scatter_add(idx.clone(), &[3]))
        }
        "index_select" => {
            let rows: Vec<usize> = (0..dim(rng, 1, 6)).map(|_| rng.below(r)).collect();
            case(vec![normal(rng, &[r, c])], move |x| x[0].index_select(&rows))
        }
        "index_add" => {
            let groups = dim(rng, 1, 3);
            let of: Vec<usize> = (0..r).map(|_| rng.below(groups)).collect();
            case(vec![normal(rng, &[r, c])], move |x| x[0].index_add(&of, groups))
        }
        "narrow" => {
            let start = rng.below(c);
            let len = 1 + rng.below(c - start);
            case(vec![normal(rng, &[r, c])], move |x| x[0].narrow(1, start, len))
        }
        "concat" => {
            let axis = rng.below(2);
            let other = if axis == 0 {
                [dim(rng, 1, 3), c]
            } else {
                [r, dim(rng, 1, 3)]
            };
            case(vec![normal(rng, &[r, c]), normal(rng, &other)], move |x| {
                Tensor::concat(&[&x[0], &x[1]], axis)
            })
        }
        "matmul" => {
            let k = dim(rng, 1, 5);
            case(vec![normal(rng, &[r, k]), normal(rng, &[k, c])], |x| x[0].matmul(&x[1]))
        }
        "conv2d" => {
            let (n, ci, co) = (dim(rng, 1, 2), dim(rng, 1, 3), dim(rng, 1, 3));
            let k = dim(rng, 1, 3);
            let stride = dim(rng, 1, 2);
            let padding = rng.below(2);
            let hw = dim(rng, k.max(2), 6);
            case(
                vec![
                    normal(rng, &[n, ci, hw, hw]),
                    normal(rng, &[co, ci, k, k]),
                    normal(rng, &[co]),
                ],
                move |x| conv2d(&x[0], &x[1], Some(&x[2]), stride, padding),
            )
        }
        "maxpool2d" => {
            let (n, ch, h, w) = (dim(rng, 1, 2), dim(rng, 1, 2), dim(rng, 2, 7), dim(rng, 2, 7));
            case(vec![distinct(rng, &[n, ch, h, w])], |x| maxpool2d(&x[0], 2, 2))
        }
        "maxpool2d_ceil" => {
            let (n, ch, h, w) = (dim(rng, 1, 2), dim(rng, 1, 2), dim(rng, 1, 7), dim(rng, 1, 7));
            case(vec![distinct(rng, &[n, ch, h, w])], |x| maxpool2d_ceil(&x[0], 2, 2))
        }
        "batchnorm2d" => {
            let (n, ch, h, w) = (dim(rng, 2, 3), dim(rng, 1, 3), dim(rng, 1, 4), dim(rng, 1, 4));
            case(
                vec![normal(rng, &[n, ch, h, w]), positive(rng, &[ch]), normal(rng, &[ch])],
                |x| batchnorm2d(&x[0], &x[1], &x[2], 1e-5),
            )
        }
        "softmax_cross_entropy" => {
            let k = dim(rng, 2, 5);
            let y = one_hot(rng, r, k);
            case(vec![normal(rng, &[r, k])], move |x| softmax_cross_entropy(&x[0], &y))
        }
        "softmax_xent_temperature" => {
            let k = dim(rng, 2, 5);
            let y = one_hot(rng, r, k);
            let temp = rng.uniform_range(0.2, 20.0);
            case(vec![normal(rng, &[r, k]).scale(3.0).unwrap()], move |x| {
                softmax_xent_temperature(&x[0], &y, temp)
            })
        }
        "mse_loss" => case(vec![normal(rng, &[r, c]), normal(rng, &[r, c])], |x| {
            mse_loss(&x[0], &x[1])
        }),
        "second_order" => {
            // Hessian-vector products through a small network
            let k = dim(rng, 2, 4);
            let y = one_hot(rng, r, k);
            let v = normal(rng, &[c, k]);
            case(vec![normal(rng, &[r, c]), normal(rng, &[c, k])], move |x| {
                let loss = softmax_cross_entropy(&x[0].sigmoid()?.matmul(&x[1])?.relu()?.exp()?.log()?, &y)?;
                let g = grad(&loss, &[&x[1]], true)?.remove(0);
                g.mul(&v)?.sum()
            })
        }
        other => panic!("unknown op {other}"),
    }
}

pub const OPS: &[&str] = &[
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "add_scalar",
    "relu",
    "sigmoid",
    "exp",
    "log",
    "powf",
    "sum_to",
    "broadcast_to",
    "sum",
    "mean",
    "reshape",
    "gather",
    "scatter_add",
    "index_select",
    "index_add",
    "narrow",
    "concat",
    "matmul",
    "conv2d",
    "maxpool2d",
    "maxpool2d_ceil",
    "batchnorm2d",
    "softmax_cross_entropy",
    "softmax_xent_temperature",
    "mse_loss",
    "second_order",
];

/// Worst normalized error `|a − n| / (atol + rtol·|n|)` of one instance;
/// at most 1 means it passes.
pub fn check_case(case: &Case, rng: &mut SeededRng) -> f64 {
    let graph = Graph::new();
    let leaves: Vec<Tensor<f64>> = case.inputs.iter().map(|x| graph.leaf(x)).collect();
    let out = (case.f)(&leaves).unwrap();
    // random upstream weights so every output element matters differently
    let w = normal(rng, out.shape());
    let loss = out.mul(&w).unwrap().sum().unwrap();
    let analytic = grad(&loss, &leaves.iter().collect::<Vec<_>>(), false).unwrap();

    let eval = |inputs: &[Tensor<f64>]| -> f64 {
        let graph = Graph::new();
        let leaves: Vec<Tensor<f64>> = inputs.iter().map(|x| graph.leaf(x)).collect();
        (case.f)(&leaves).unwrap().mul(&w).unwrap().sum().unwrap().item()
    };
    let mut worst: f64 = 0.0;
    for (i, x) in case.inputs.iter().enumerate() {
        for j in 0..x.numel() {
            let bumped = |delta: f64| {
                let mut inputs = case.inputs.clone();
                let mut v = x.to_vec();
                v[j] += delta;
                inputs[i] = t(v, x.shape());
                eval(&inputs)
            };
            let numeric = (bumped(H) - bumped(-H)) / (2.0 * H);
            let a = analytic[i].data()[j];
            worst = worst.max((a - numeric).abs() / (ATOL + RTOL * numeric.abs()));
        }
    }
    worst
}

/// `(instances, failures, worst normalized error)` for one operation.
pub fn check_op(op: &str, seed: u64) -> (usize, usize, f64) {
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for i in 0..INSTANCES {
        let mut rng = SeededRng::derive(seed, &[i as u64]);
        let case = make_case(op, &mut rng);
        let e = check_case(&case, &mut rng);
        if !(e <= 1.0) {
            failures += 1;
        }
        worst = worst.max(e);
    }
    (INSTANCES, failures, worst)
}
