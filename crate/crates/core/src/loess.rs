//! Local weighted polynomial regression (Loess) with tricube weights.
//!
//! The model is memory based: fitting only stores the design and the
//! per-coordinate scales used for nearest-neighbour distances. Each prediction
//! selects the `ceil(span * N)` nearest design points, weights them with the
//! tricube kernel and solves a small weighted least-squares problem. The
//! prediction is a linear combination `sum_n l_n(x) y_n` of the responses; the
//! weights `l(x)` form the equivalent kernel and drive the standard error
//! `sigma(x) * ||l(x)||`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neighbourhood weighting function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// `(1 - u^3)^3` on `u = dist / max_dist`.
    #[default]
    Tricube,
    /// Equal weights over the neighbourhood.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoessConfig {
    /// Fraction of the design used in each local fit.
    pub span: f64,
    /// Local polynomial degree (0, 1 or 2).
    pub degree: u8,
    /// Floor on the neighbourhood size.
    pub min_neighbors: usize,
    pub kernel: Kernel,
}

impl Default for LoessConfig {
    fn default() -> Self {
        Self {
            span: 0.4,
            degree: 1,
            min_neighbors: 10,
            kernel: Kernel::Tricube,
        }
    }
}

impl LoessConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.span > 0.0 && self.span <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "loess span must lie in (0, 1], got {}",
                self.span
            )));
        }
        if self.degree > 2 {
            return Err(Error::InvalidParameter(format!(
                "loess degree must be 0, 1 or 2, got {}",
                self.degree
            )));
        }
        let r = basis_size(dim, self.degree);
        if self.min_neighbors < r {
            return Err(Error::InvalidParameter(format!(
                "min_neighbors = {} is below the {r} basis terms",
                self.min_neighbors
            )));
        }
        Ok(())
    }
}

/// Number of local basis functions for `dim` inputs and the given degree.
pub fn basis_size(dim: usize, degree: u8) -> usize {
    match degree {
        0 => 1,
        1 => 1 + dim,
        _ => 1 + dim + dim * (dim + 1) / 2,
    }
}

fn fill_basis(z: &[f64], degree: u8, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
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
}

/// Result of a local fit at one location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoessPrediction {
    pub mean: f64,
    /// `sqrt(local_sigma2) * kernel_norm`.
    pub stderr: f64,
    /// Euclidean norm of the equivalent kernel.
    pub kernel_norm: f64,
    /// Weighted residual variance over the neighbourhood.
    pub local_sigma2: f64,
    /// The local system was singular and a weighted mean was used instead.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoessModel {
    dim: usize,
    /// Row-major `N x dim` design.
    inputs: Vec<f64>,
    responses: Vec<f64>,
    config: LoessConfig,
    /// Per-coordinate distance scales (sample standard deviations).
    scales: Vec<f64>,
}

struct LocalFit {
    neighbors: Vec<usize>,
    weights: Vec<f64>,
    /// Basis rows of the neighbours, `neighbors.len() x r`.
    basis: Vec<f64>,
    r: usize,
    coef: Vec<f64>,
    /// `A^{-1} e_0`, the row producing the equivalent kernel.
    kernel_row: Vec<f64>,
    degenerate: bool,
}

impl LoessModel {
    /// Stores the design. `inputs` holds one location per row.
    pub fn fit(inputs: &[Vec<f64>], responses: &[f64], config: LoessConfig) -> Result<Self> {
        let dim = inputs.first().map_or(0, Vec::len);
        if let Some(bad) = inputs.iter().find(|row| row.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let flat: Vec<f64> = inputs.iter().flatten().copied().collect();
        Self::fit_flat(dim.max(1), flat, responses.to_vec(), config)
    }

    /// Same as [`fit`](Self::fit) on a row-major flat design.
    pub fn fit_flat(
        dim: usize,
        inputs: Vec<f64>,
        responses: Vec<f64>,
        config: LoessConfig,
    ) -> Result<Self> {
        if !(1..=4).contains(&dim) {
            return Err(Error::InvalidParameter(format!(
                "loess supports 1 to 4 inputs, got {dim}"
            )));
        }
        config.validate(dim)?;
        if inputs.len() != responses.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: responses.len() * dim,
                got: inputs.len(),
            });
        }
        let n = responses.len();
        if n < config.min_neighbors {
            return Err(Error::TooFewPoints {
                required: config.min_neighbors,
                got: n,
            });
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("inputs"));
        }
        if responses.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("responses"));
        }
        let scales = (0..dim)
            .map(|j| {
                let col = inputs.iter().skip(j).step_by(dim);
                let mean = col.clone().sum::<f64>() / n as f64;
                let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
                let sd = var.sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            dim,
            inputs,
            responses,
            config,
            scales,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn config(&self) -> &LoessConfig {
        &self.config
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn input(&self, n: usize) -> &[f64] {
        &self.inputs[n * self.dim..(n + 1) * self.dim]
    }

    pub fn inputs(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.dim)
    }

    /// Neighbourhood size `max(ceil(span N), min_neighbors)`, capped at `N`.
    pub fn neighborhood_size(&self) -> usize {
        let n = self.len();
        let k = (self.config.span * n as f64).ceil() as usize;
        k.max(self.config.min_neighbors).min(n)
    }

    fn local_fit(&self, x: &[f64]) -> LocalFit {
        assert_eq!(x.len(), self.dim, "query dimension mismatch");
        let n = self.len();
        let dist2: Vec<f64> = self
            .inputs
            .chunks_exact(self.dim)
            .map(|row| {
                row.iter()
                    .zip(x)
                    .zip(&self.scales)
                    .map(|((a, b), s)| ((a - b) / s).powi(2))
                    .sum()
            })
            .collect();
        let k = self.neighborhood_size();
        let mut scratch = dist2.clone();
        let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
        let max2 = *kth;
        // Ties at the boundary distance all join the neighbourhood.
        let neighbors: Vec<usize> = (0..n).filter(|&i| dist2[i] <= max2).collect();
        let max_dist = max2.sqrt();

        let mut weights: Vec<f64> = neighbors
            .iter()
            .map(|&i| match self.config.kernel {
                Kernel::Uniform => 1.0,
                Kernel::Tricube if max_dist == 0.0 => 1.0,
                Kernel::Tricube => {
                    let u = (dist2[i].sqrt() / max_dist).min(1.0);
                    let t = 1.0 - u * u * u;
                    t * t * t
                }
            })
            .collect();
        if weights.iter().all(|&w| w == 0.0) {
            weights.iter_mut().for_each(|w| *w = 1.0);
        }

        let degree = self.config.degree;
        let r = basis_size(self.dim, degree);
        let mut basis = Vec::with_capacity(neighbors.len() * r);
        let mut z = vec![0.0; self.dim];
        let mut row = Vec::with_capacity(r);
        for &i in &neighbors {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = (self.inputs[i * self.dim + j] - x[j]) / self.scales[j];
            }
            fill_basis(&z, degree, &mut row);
            basis.extend_from_slice(&row);
        }

        if let Some(fit) = self.solve_local(&neighbors, &weights, &basis, r) {
            return LocalFit {
                neighbors,
                weights,
                basis,
                r,
                coef: fit.0,
                kernel_row: fit.1,
                degenerate: false,
            };
        }

        // Weighted mean fallback.
        let sw: f64 = weights.iter().sum();
        let mean = neighbors
            .iter()
            .zip(&weights)
            .map(|(&i, w)| w * self.responses[i])
            .sum::<f64>()
            / sw;
        let basis = vec![1.0; neighbors.len()];
        LocalFit {
            neighbors,
            weights,
            basis,
            r: 1,
            coef: vec![mean],
            kernel_row: vec![1.0 / sw],
            degenerate: true,
        }
    }

    /// Solves the local normal equations; `None` when they are singular.
    fn solve_local(
        &self,
        neighbors: &[usize],
        weights: &[f64],
        basis: &[f64],
        r: usize,
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut a = vec![0.0; r * r];
        let mut rhs = vec![0.0; r];
        for ((&i, &w), b) in neighbors.iter().zip(weights).zip(basis.chunks_exact(r)) {
            if w == 0.0 {
                continue;
            }
            let y = self.responses[i];
            for p in 0..r {
                let wb = w * b[p];
                rhs[p] += wb * y;
                for q in 0..=p {
                    a[p * r + q] += wb * b[q];
                }
            }
        }
        let chol = Cholesky::new(a, r)?;
        let coef = chol.solve(&rhs);
        let mut e0 = vec![0.0; r];
        e0[0] = 1.0;
        let kernel_row = chol.solve(&e0);
        Some((coef, kernel_row))
    }

    /// Point prediction only.
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        self.local_fit(x).coef[0]
    }

    pub fn predict(&self, x: &[f64]) -> LoessPrediction {
        let fit = self.local_fit(x);
        let r = fit.r;
        let mut norm2 = 0.0;
        let mut sw = 0.0;
        let mut swr2 = 0.0;
        for ((&i, &w), b) in fit
            .neighbors
            .iter()
            .zip(&fit.weights)
            .zip(fit.basis.chunks_exact(r))
        {
            let l = w * dot(&fit.kernel_row, b);
            norm2 += l * l;
            let resid = self.responses[i] - dot(&fit.coef, b);
            sw += w;
            swr2 += w * resid * resid;
        }
        let k = fit.neighbors.len() as f64;
        let dof = 1.0 - r as f64 / k;
        let local_sigma2 = if sw > 0.0 {
            if dof > 0.0 {
                swr2 / (sw * dof)
            } else {
                swr2 / sw
            }
        } else {
            0.0
        };
        let kernel_norm = norm2.sqrt();
        LoessPrediction {
            mean: fit.coef[0],
            stderr: local_sigma2.sqrt() * kernel_norm,
            kernel_norm,
            local_sigma2,
            degenerate: fit.degenerate,
        }
    }

    /// Equivalent-kernel row `l(x)` over all `N` design points (zero outside
    /// the neighbourhood).
    pub fn equivalent_kernel(&self, x: &[f64]) -> Vec<f64> {
        let fit = self.local_fit(x);
        let mut l = vec![0.0; self.len()];
        for ((&i, &w), b) in fit
            .neighbors
            .iter()
            .zip(&fit.weights)
            .zip(fit.basis.chunks_exact(fit.r))
        {
            l[i] = w * dot(&fit.kernel_row, b);
        }
        l
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor of a small dense SPD matrix.
struct Cholesky {
    l: Vec<f64>,
    r: usize,
}

impl Cholesky {
    /// Reads the lower triangle of `a`. Fails on a pivot that is not clearly
    /// positive relative to the diagonal it came from.
    fn new(mut a: Vec<f64>, r: usize) -> Option<Self> {
        const REL_PIVOT: f64 = 1e-10;
        for j in 0..r {
            let orig = a[j * r + j];
            let mut d = orig;
            for k in 0..j {
                d -= a[j * r + k] * a[j * r + k];
            }
            if !(d > REL_PIVOT * orig && d.is_finite()) {
                return None;
            }
            let d = d.sqrt();
            a[j * r + j] = d;
            for i in j + 1..r {
                let mut s = a[i * r + j];
                for k in 0..j {
                    s -= a[i * r + k] * a[j * r + k];
                }
                a[i * r + j] = s / d;
            }
        }
        Some(Self { l: a, r })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let r = self.r;
        let mut y = b.to_vec();
        for i in 0..r {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * r + k] * y[k];
            }
            y[i] = s / self.l[i * r + i];
        }
        for i in (0..r).rev() {
            let mut s = y[i];
            for k in i + 1..r {
                s -= self.l[k * r + i] * y[k];
            }
            y[i] = s / self.l[i * r + i];
        }
        y
    }
}
