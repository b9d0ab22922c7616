use super::{DataError, Result};
use crate::rng::SeededRng;

/// Probability that `n` draws without replacement from a pool of `c`
/// classes × `m` samples land in `n` distinct classes:
/// `∏_{i=1}^{n-1} (c − i)·m / (c·m − i)`.
pub fn distinct_class_probability(c: usize, m: usize, n: usize) -> Result<f64> {
    if m == 0 {
        return Err(DataError::Invalid("samples per class must be at least 1".into()));
    }
    if n > c {
        return Err(DataError::Invalid(format!("cannot draw {n} distinct classes from {c}")));
    }
    let (cf, mf) = (c as f64, m as f64);
    let log: f64 = (1..n)
        .map(|i| {
            let i = i as f64;
            ((cf - i) * mf).ln() - (cf * mf - i).ln()
        })
        .sum();
    Ok(log.exp())
}

/// Fraction of `trials` random draws that hit distinct classes.
pub fn monte_carlo_distinct_estimate(c: usize, m: usize, n: usize, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(DataError::Invalid("trials must be at least 1".into()));
    }
    if n > c * m {
        return Err(DataError::Invalid(format!(
            "cannot draw {n} samples from a pool of {}",
            c * m
        )));
    }
    let mut rng = SeededRng::new(seed);
    let mut hits = 0usize;
    let mut seen = Vec::with_capacity(n);
    for _ in 0..trials {
        seen.clear();
        let mut distinct = true;
        for idx in rng.sample_indices(c * m, n) {
            let class = idx / m;
            if seen.contains(&class) {
                distinct = false;
                break;
            }
            seen.push(class);
        }
        hits += distinct as usize;
    }
    Ok(hits as f64 / trials as f64)
}
