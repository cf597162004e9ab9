//! Numerical kernel checks against closed forms and central finite
//! differences.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfseed_core::classifier::{adam_update, softmax, softmax_cross_entropy};
use selfseed_core::{LabeledBatch, LinearClassifier, TrainConfig};

pub const SUM_TOL: f64 = 1e-6;
pub const FD_REL_TOL: f64 = 1e-4;

/// Largest deviation of a softmax row sum from 1 over random logits,
/// including large magnitudes.
pub fn softmax_row_sum_error(instances: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let rows = rng.random_range(1..6);
        let cols = rng.random_range(1..8);
        let scale = [1.0, 10.0, 500.0][rng.random_range(0..3)];
        let logits = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0) * scale);
        for row in softmax(logits.view()).rows() {
            worst = worst.max((row.sum() - 1.0).abs());
        }
    }
    worst
}

/// `|CE(uniform logits) - ln N|` worst case over `N` in `2..=max_n`.
pub fn uniform_cross_entropy_error(max_n: usize) -> f64 {
    (2..=max_n)
        .flat_map(|n| [0.0, 3.5, -12.0].map(move |v| (n, v)))
        .map(|(n, v)| {
            let logits = Array2::from_elem((3, n), v);
            let (loss, _) = softmax_cross_entropy(logits.view(), &[0, n - 1, n / 2]).unwrap();
            (loss - (n as f64).ln()).abs()
        })
        .fold(0.0, f64::max)
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn loss_of(weights: &Array2<f64>, bias: &Array1<f64>, batch: &LabeledBatch) -> f64 {
    LinearClassifier::from_parameters(weights.clone(), bias.clone())
        .gradients(batch)
        .unwrap()
        .loss
}

/// Worst relative error between analytic and central-difference gradients
/// for weights, bias and logits over `instances` random small problems.
pub fn gradient_check(instances: usize) -> f64 {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(2..5);
        let d = rng.random_range(1..5);
        let b = rng.random_range(1..6);
        let x = Array2::from_shape_fn((b, d), |_| rng.random_range(-2.0..2.0));
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..n)).collect();
        let batch = LabeledBatch::new(x, labels.clone(), n).unwrap();
        let w = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let bias = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
        let grads = LinearClassifier::from_parameters(w.clone(), bias.clone())
            .gradients(&batch)
            .unwrap();

        for idx in 0..n * d {
            let (c, j) = (idx / d, idx % d);
            let (mut plus, mut minus) = (w.clone(), w.clone());
            plus[[c, j]] += h;
            minus[[c, j]] -= h;
            let numeric =
                (loss_of(&plus, &bias, &batch) - loss_of(&minus, &bias, &batch)) / (2.0 * h);
            worst = worst.max(rel_err(grads.weights[[c, j]], numeric));
        }
        for c in 0..n {
            let (mut plus, mut minus) = (bias.clone(), bias.clone());
            plus[c] += h;
            minus[c] -= h;
            let numeric = (loss_of(&w, &plus, &batch) - loss_of(&w, &minus, &batch)) / (2.0 * h);
            worst = worst.max(rel_err(grads.bias[c], numeric));
        }

        let logits = Array2::from_shape_fn((b, n), |_| rng.random_range(-3.0..3.0));
        let (_, g) = softmax_cross_entropy(logits.view(), &labels).unwrap();
        for r in 0..b {
            for c in 0..n {
                let (mut plus, mut minus) = (logits.clone(), logits.clone());
                plus[[r, c]] += h;
                minus[[r, c]] -= h;
                let lp = softmax_cross_entropy(plus.view(), &labels).unwrap().0;
                let lm = softmax_cross_entropy(minus.view(), &labels).unwrap().0;
                worst = worst.max(rel_err(g[[r, c]], (lp - lm) / (2.0 * h)));
            }
        }
    }
    worst
}

/// `| |first Adam displacement| - lr |` on a scalar, for several gradients
/// and learning rates.
pub fn adam_first_step_error() -> f64 {
    let mut worst = 0.0f64;
    for lr in [0.001, 0.0001, 0.1] {
        for g in [3.0, -0.02, 0.5, 250.0] {
            let config = TrainConfig {
                learning_rate: lr,
                ..TrainConfig::default()
            };
            let (mut p, mut m, mut v) = ([0.7], [0.0], [0.0]);
            adam_update(&mut p, &[g], &mut m, &mut v, 1, &config);
            worst = worst.max(((p[0] - 0.7f64).abs() - lr).abs());
        }
    }
    worst
}
