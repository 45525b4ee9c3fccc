#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense normal-equation OLS, independent of the QR path in the library:
/// forms X'X and X'y, inverts X'X by Gauss-Jordan with partial pivoting.
pub struct NormalFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub r2: f64,
}

pub fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let k = a.len();
    let mut inv: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        assert!(d.abs() > 1e-300, "singular normal matrix");
        for j in 0..k {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..k {
            if i != col {
                let f = a[i][col];
                for j in 0..k {
                    a[i][j] -= f * a[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

pub fn normal_equation_fit(rows: &[Vec<f64>], y: &[f64]) -> NormalFit {
    let n = rows.len();
    let k = rows[0].len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (row, &yi) in rows.iter().zip(y) {
        for i in 0..k {
            xty[i] += row[i] * yi;
            for j in 0..k {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    let inv = invert(xtx);
    let beta: Vec<f64> = (0..k)
        .map(|i| (0..k).map(|j| inv[i][j] * xty[j]).sum())
        .collect();
    let rss: f64 = rows
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let fitted: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (yi - fitted).powi(2)
        })
        .sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let s2 = rss / (n - k) as f64;
    NormalFit {
        se: (0..k).map(|i| (s2 * inv[i][i]).sqrt()).collect(),
        beta,
        r2: 1.0 - rss / tss,
    }
}

/// Intercept plus `k - 1` standard-uniform-ish regressors and a noisy linear
/// response; well conditioned by construction.
pub fn random_instance(seed: u64, n: usize, k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            std::iter::once(1.0)
                .chain((1..k).map(|_| rng.random_range(-3.0..3.0)))
                .collect()
        })
        .collect();
    let y = rows
        .iter()
        .map(|r| {
            r.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-2.0..2.0)
        })
        .collect();
    (rows, y)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
