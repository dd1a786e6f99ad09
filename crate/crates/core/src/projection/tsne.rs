//! Exact O(m²) t-SNE.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::knn::squared_distance;
use super::{check_finite, DrParams, ProjectionError};

/// Largest input accepted by the exact method.
pub const TSNE_MAX_POINTS: usize = 5_000;

const PERPLEXITY_TOLERANCE: f64 = 1e-5;
const PERPLEXITY_STEPS: usize = 50;
const ITERATIONS: usize = 1_000;
const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 250;
const MOMENTUM_SWITCH: usize = 250;
const INITIAL_MOMENTUM: f64 = 0.5;
const FINAL_MOMENTUM: f64 = 0.8;
const LEARNING_RATE: f64 = 200.0;
const MIN_GAIN: f64 = 0.01;
const INIT_STD: f64 = 1e-4;

/// Conditional probabilities `p(j|i)` with per-row precision found by
/// bisection so that the row entropy equals `ln(perplexity)`.
fn conditional_probabilities(dist2: &[f64], m: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let mut p = vec![0.0; m * m];
    let mut row = vec![0.0; m];
    for i in 0..m {
        let d = &dist2[i * m..(i + 1) * m];
        let (mut beta, mut lo, mut hi) = (1.0f64, f64::NEG_INFINITY, f64::INFINITY);
        for _ in 0..PERPLEXITY_STEPS {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..m {
                row[j] = if j == i { 0.0 } else { (-d[j] * beta).exp() };
                sum += row[j];
                weighted += d[j] * row[j];
            }
            let sum = sum.max(f64::MIN_POSITIVE);
            let entropy = sum.ln() + beta * weighted / sum;
            let diff = entropy - target;
            if diff.abs() < PERPLEXITY_TOLERANCE {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_infinite() { beta * 2.0 } else { (beta + hi) / 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_infinite() { beta / 2.0 } else { (beta + lo) / 2.0 };
            }
        }
        let sum: f64 = row.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        for j in 0..m {
            p[i * m + j] = row[j] / sum;
        }
    }
    p
}

pub fn tsne(x: ArrayView2<f64>, params: &DrParams) -> Result<Array2<f64>, ProjectionError> {
    check_finite(x)?;
    let m = x.nrows();
    if m > TSNE_MAX_POINTS {
        return Err(ProjectionError::TooManyPoints {
            max: TSNE_MAX_POINTS,
            got: m,
        });
    }
    let perplexity = params.tsne_perplexity;
    if !(perplexity > 0.0) || perplexity >= (m as f64 - 1.0) / 3.0 {
        return Err(ProjectionError::InvalidParam(format!(
            "perplexity {perplexity} must be below (m - 1) / 3 for {m} points"
        )));
    }

    let x = x.as_standard_layout();
    let d = x.ncols();
    let flat = x.as_slice().expect("standard layout");
    let mut dist2 = vec![0.0; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            let v = squared_distance(&flat[i * d..(i + 1) * d], &flat[j * d..(j + 1) * d]);
            dist2[i * m + j] = v;
            dist2[j * m + i] = v;
        }
    }

    let cond = conditional_probabilities(&dist2, m, perplexity);
    let mut p = vec![0.0; m * m];
    let total: f64 = {
        for i in 0..m {
            for j in 0..m {
                p[i * m + j] = cond[i * m + j] + cond[j * m + i];
            }
        }
        p.iter().sum()
    };
    p.iter_mut().for_each(|v| *v = (*v / total).max(1e-12));
    drop(cond);

    let mut rng = ChaCha8Rng::seed_from_u64(params.random_state);
    let init = Normal::new(0.0, INIT_STD).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..m).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let mut update = vec![[0.0f64; 2]; m];
    let mut gains = vec![[1.0f64; 2]; m];
    let mut num = vec![0.0; m * m];
    let mut grad = vec![[0.0f64; 2]; m];

    for iter in 0..ITERATIONS {
        let exaggeration = if iter < EXAGGERATION_ITERS { EXAGGERATION } else { 1.0 };
        let momentum = if iter < MOMENTUM_SWITCH { INITIAL_MOMENTUM } else { FINAL_MOMENTUM };

        let mut sum_num = 0.0;
        for i in 0..m {
            num[i * m + i] = 0.0;
            for j in (i + 1)..m {
                let q = 1.0 / (1.0 + (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2));
                num[i * m + j] = q;
                num[j * m + i] = q;
                sum_num += 2.0 * q;
            }
        }
        for i in 0..m {
            let mut g = [0.0, 0.0];
            for j in 0..m {
                if i == j {
                    continue;
                }
                let nij = num[i * m + j];
                let q = (nij / sum_num).max(1e-12);
                let coeff = (exaggeration * p[i * m + j] - q) * nij;
                g[0] += coeff * (y[i][0] - y[j][0]);
                g[1] += coeff * (y[i][1] - y[j][1]);
            }
            grad[i] = [4.0 * g[0], 4.0 * g[1]];
        }

        for i in 0..m {
            for k in 0..2 {
                let same_sign = (grad[i][k] > 0.0) == (update[i][k] > 0.0);
                gains[i][k] = if same_sign { gains[i][k] * 0.8 } else { gains[i][k] + 0.2 };
                gains[i][k] = gains[i][k].max(MIN_GAIN);
                update[i][k] = momentum * update[i][k] - LEARNING_RATE * gains[i][k] * grad[i][k];
                y[i][k] += update[i][k];
            }
        }
        for k in 0..2 {
            let mean = y.iter().map(|p| p[k]).sum::<f64>() / m as f64;
            y.iter_mut().for_each(|p| p[k] -= mean);
        }
    }

    let mut out = Array2::zeros((m, 2));
    for (i, p) in y.iter().enumerate() {
        out[[i, 0]] = p[0];
        out[[i, 1]] = p[1];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::Algorithm;

    #[test]
    fn perplexity_calibration() {
        let m = 40;
        let dist2: Vec<f64> = (0..m * m)
            .map(|k| {
                let (i, j) = (k / m, k % m);
                ((i as f64 - j as f64) * 0.3).powi(2)
            })
            .collect();
        let p = conditional_probabilities(&dist2, m, 5.0);
        for i in 0..m {
            let row = &p[i * m..(i + 1) * m];
            let h: f64 = row.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
            assert!((h.exp() - 5.0).abs() < 1e-3, "row {i}: perplexity {}", h.exp());
        }
    }

    #[test]
    fn rejects_large_inputs() {
        let x = Array2::<f64>::zeros((TSNE_MAX_POINTS + 1, 2));
        let p = DrParams::with_algorithm(Algorithm::Tsne);
        assert!(matches!(tsne(x.view(), &p), Err(ProjectionError::TooManyPoints { .. })));
    }

    #[test]
    fn small_run_is_finite_and_deterministic() {
        let x = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 13 + j * 7) % 11) as f64 + (i / 20) as f64 * 20.0);
        let p = DrParams {
            tsne_perplexity: 5.0,
            ..DrParams::with_algorithm(Algorithm::Tsne)
        };
        let a = tsne(x.view(), &p).unwrap();
        let b = tsne(x.view(), &p).unwrap();
        assert!(a.iter().all(|v| v.is_finite()));
        assert_eq!(a, b);
    }
}
