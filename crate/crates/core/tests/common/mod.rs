//! Dense weighted least squares reference for local regression.

#![allow(dead_code)]

use epidetect::rng::RngStream;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub struct DenseFit {
    pub mean: f64,
    pub kernel: Vec<f64>,
}

fn sample_sd(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd > 0.0 {
        sd
    } else {
        1.0
    }
}

fn monomials(z: &[f64], degree: u8) -> Vec<f64> {
    let mut out = vec![1.0];
    if degree >= 1 {
        out.extend_from_slice(z);
    }
    if degree >= 2 {
        for i in 0..z.len() {
            for j in i..z.len() {
                out.push(z[i] * z[j]);
            }
        }
    }
    out
}

/// Tricube-weighted local polynomial fit at `x` using a pseudo-inverse of
/// the square-root-weighted design matrix.
pub fn dense_fit(
    xs: &[Vec<f64>],
    ys: &[f64],
    x: &[f64],
    span: f64,
    min_neighbors: usize,
    degree: u8,
) -> DenseFit {
    let n = xs.len();
    let d = x.len();
    let scales: Vec<f64> = (0..d)
        .map(|j| sample_sd(&xs.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let dist: Vec<f64> = xs
        .iter()
        .map(|r| {
            (0..d)
                .map(|j| ((r[j] - x[j]) / scales[j]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let k = ((span * n as f64).ceil() as usize).max(min_neighbors).min(n);
    let mut sorted = dist.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let radius = sorted[k - 1];
    let mut w: Vec<f64> = dist
        .iter()
        .map(|&di| {
            if di > radius {
                0.0
            } else if radius == 0.0 {
                1.0
            } else {
                (1.0 - (di / radius).powi(3)).powi(3)
            }
        })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        for (wi, di) in w.iter_mut().zip(&dist) {
            if *di <= radius {
                *wi = 1.0;
            }
        }
    }
    let rows: Vec<Vec<f64>> = xs
        .iter()
        .map(|r| {
            let z: Vec<f64> = (0..d).map(|j| r[j] - x[j]).collect();
            monomials(&z, degree)
        })
        .collect();
    let p = rows[0].len();
    let sw = DMatrix::from_fn(n, p, |i, j| w[i].sqrt() * rows[i][j]);
    let pinv = sw.pseudo_inverse(1e-12).expect("svd");
    let kernel: Vec<f64> = (0..n).map(|i| pinv[(0, i)] * w[i].sqrt()).collect();
    let y = DVector::from_column_slice(ys);
    let mean = kernel.iter().zip(y.iter()).map(|(l, v)| l * v).sum();
    DenseFit { mean, kernel }
}

/// Random data set with `n` points in `d` dimensions and a smooth response
/// plus noise; coordinates have unequal spreads.
pub fn random_dataset(n: usize, d: usize, rng: &mut RngStream) -> (Vec<Vec<f64>>, Vec<f64>) {
    let spreads: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..20.0)).collect();
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| spreads.iter().map(|s| rng.random_range(0.0..*s)).collect())
        .collect();
    let ys = xs
        .iter()
        .map(|r| {
            let z: f64 = r.iter().zip(&spreads).map(|(v, s)| (v / s).sin()).sum();
            z + 0.1 * rng.random_range(-1.0..1.0)
        })
        .collect();
    (xs, ys)
}
