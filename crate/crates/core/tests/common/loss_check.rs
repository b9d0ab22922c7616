//! Reference checks for the temperature-scaled and relation losses.

use ssml::meta::relation_loss;
use ssml::rng::SeededRng;
use ssml::tensor::{softmax_cross_entropy, softmax_xent_temperature, Tensor};

fn random_logits(rng: &mut SeededRng, rows: usize, cols: usize) -> (Tensor<f64>, Tensor<f64>, Vec<usize>) {
    let z: Vec<f64> = (0..rows * cols).map(|_| 4.0 * rng.normal()).collect();
    let labels: Vec<usize> = (0..rows).map(|_| rng.below(cols)).collect();
    let mut y = vec![0.0; rows * cols];
    for (r, &l) in labels.iter().enumerate() {
        y[r * cols + l] = 1.0;
    }
    (
        Tensor::from_f64(&z, &[rows, cols]).unwrap(),
        Tensor::from_f64(&y, &[rows, cols]).unwrap(),
        labels,
    )
}

/// `(T=1 bit-exact mismatches, worst |L(T=10⁶) − ln n|, argmax changes)`
/// over `instances` random logit matrices.
pub fn temperature_semantics(instances: usize, seed: u64) -> (usize, f64, usize) {
    let (mut mismatches, mut worst, mut flips) = (0, 0.0f64, 0);
    for i in 0..instances {
        let mut rng = SeededRng::derive(seed, &[i as u64]);
        let (rows, cols) = (1 + rng.below(8), 2 + rng.below(19));
        let (z, y, _) = random_logits(&mut rng, rows, cols);
        let plain = softmax_cross_entropy(&z, &y).unwrap().item();
        let t1 = softmax_xent_temperature(&z, &y, 1.0).unwrap().item();
        if plain.to_bits() != t1.to_bits() {
            mismatches += 1;
        }
        let hot = softmax_xent_temperature(&z, &y, 1e6).unwrap().item();
        worst = worst.max((hot - (cols as f64).ln()).abs());
        let base = z.argmax_rows().unwrap();
        for t in [0.01, 0.5, 3.0, 100.0, 1e6] {
            if z.scale(1.0 / t).unwrap().argmax_rows().unwrap() != base {
                flips += 1;
            }
        }
    }
    (mismatches, worst, flips)
}

/// Explicit double loop `Σ_i Σ_j (s_ij − 1[y_i = j])²`.
pub fn relation_loss_reference(scores: &[f64], labels: &[usize], n_way: usize) -> f64 {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        for j in 0..n_way {
            let target = if y == j { 1.0 } else { 0.0 };
            total += (scores[i * n_way + j] - target).powi(2);
        }
    }
    total
}

/// `(worst |library − reference|, zero-iff-indicator violations)`.
pub fn relation_loss_agreement(instances: usize, seed: u64) -> (f64, usize) {
    let (mut worst, mut violations) = (0.0f64, 0);
    for i in 0..instances {
        let mut rng = SeededRng::derive(seed, &[i as u64]);
        let (nq, n_way) = (1 + rng.below(12), 2 + rng.below(9));
        let labels: Vec<usize> = (0..nq).map(|_| rng.below(n_way)).collect();
        let scores: Vec<f64> = (0..nq * n_way).map(|_| rng.uniform()).collect();
        let mut onehot = vec![0.0; nq * n_way];
        for (r, &l) in labels.iter().enumerate() {
            onehot[r * n_way + l] = 1.0;
        }
        let target: Tensor<f64> = Tensor::from_f64(&onehot, &[nq, n_way]).unwrap();
        let s = Tensor::from_f64(&scores, &[nq, n_way]).unwrap();
        let lib: f64 = relation_loss(&s, &target).unwrap().item();
        worst = worst.max((lib - relation_loss_reference(&scores, &labels, n_way)).abs());
        // exact indicators give zero, any single perturbation gives a positive loss
        if relation_loss(&target, &target).unwrap().item() != 0.0 {
            violations += 1;
        }
        let mut nudged = onehot.clone();
        let k = rng.below(nq * n_way);
        nudged[k] += if nudged[k] > 0.5 { -1e-3 } else { 1e-3 };
        let nudged = Tensor::from_f64(&nudged, &[nq, n_way]).unwrap();
        if !(relation_loss(&nudged, &target).unwrap().item() > 0.0) {
            violations += 1;
        }
    }
    (worst, violations)
}
