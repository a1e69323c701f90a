//! Experimental design for the sequential regression: Latin hypercube
//! candidates, boundary-misclassification probabilities, acquisition weights
//! and multinomial batch sampling.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::reduced::ModelVariant;
use crate::rng::RngStream;

/// Axis-aligned regression domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Coordinates holding counts, rounded to the nearest integer.
    pub integer: Vec<bool>,
}

/// Highest outbreak probability placed in designs; `P = 1` is absorbing.
pub const MAX_DESIGN_P: f64 = 0.999;

impl StateBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, integer: Vec<bool>) -> Result<Self> {
        let b = Self {
            lower,
            upper,
            integer,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.lower.len() != self.integer.len() {
            return Err(Error::InvalidParameter(
                "state box bounds and flags differ in length".into(),
            ));
        }
        if self.lower.is_empty() {
            return Err(Error::InvalidParameter("state box has no coordinates".into()));
        }
        for (j, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidParameter(format!(
                    "coordinate {j}: lower {lo} is not below upper {hi}"
                )));
            }
        }
        Ok(())
    }

    /// Regression domain used in the case study, scaled to a Pool-1 size
    /// `m1`: `S in [m1/2, m1]`, `I in [0, m1/5]`, `P in [0, 0.999]`. For
    /// `m1 = 2000` these are `S in {1000..2000}` and `I in {0..400}`.
    pub fn case_study(variant: ModelVariant, m1: u64) -> Self {
        let m = m1 as f64;
        let i_hi = (m / 5.0).round();
        match variant {
            ModelVariant::Full3d => Self {
                lower: vec![(m / 2.0).round(), 0.0, 0.0],
                upper: vec![m, i_hi, MAX_DESIGN_P],
                integer: vec![true, true, false],
            },
            ModelVariant::Lp2d => Self {
                lower: vec![0.0, 0.0],
                upper: vec![i_hi, MAX_DESIGN_P],
                integer: vec![true, false],
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Maps a point of the unit cube into the box, rounding count coordinates.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(j, &v)| {
                let x = self.lower[j] + v * (self.upper[j] - self.lower[j]);
                if self.integer[j] {
                    x.round().clamp(self.lower[j].ceil(), self.upper[j].floor())
                } else {
                    x
                }
            })
            .collect()
    }

    /// Regular lattice with `per_axis` points per coordinate, endpoints
    /// included, first coordinate varying slowest.
    pub fn lattice(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let axis = |j: usize| -> Vec<f64> {
            (0..per_axis)
                .map(|i| {
                    let f = if per_axis == 1 {
                        0.5
                    } else {
                        i as f64 / (per_axis - 1) as f64
                    };
                    let x = self.lower[j] + f * (self.upper[j] - self.lower[j]);
                    if self.integer[j] {
                        x.round()
                    } else {
                        x
                    }
                })
                .collect()
        };
        let axes: Vec<Vec<f64>> = (0..d).map(axis).collect();
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                let mut point = vec![0.0; d];
                for j in (0..d).rev() {
                    point[j] = axes[j][idx % per_axis];
                    idx /= per_axis;
                }
                point
            })
            .collect()
    }
}

/// Latin hypercube sample in the unit cube: in every coordinate the `count`
/// points occupy each of the `count` equal-width bins exactly once.
pub fn lhs_unit(dim: usize, count: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; count];
    let mut perm: Vec<usize> = (0..count).collect();
    for j in 0..dim {
        perm.shuffle(rng);
        for (point, &bin) in points.iter_mut().zip(&perm) {
            point[j] = (bin as f64 + rng.random::<f64>()) / count as f64;
        }
    }
    points
}

/// Latin hypercube sample of `count` points in `domain`.
///
/// Count coordinates are rounded after stratification, so when a count range
/// is narrower than `count` some rounded values repeat.
pub fn lhs(domain: &StateBox, count: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    lhs_unit(domain.dim(), count, rng)
        .iter()
        .map(|u| domain.from_unit(u))
        .collect()
}

/// Probability that the sign of `qhat - d` is misjudged under a Gaussian
/// posterior with standard deviation `stderr`.
pub fn boundary_probability(qhat: f64, stderr: f64, d: f64) -> f64 {
    let gap = (qhat - d).abs();
    if stderr <= 0.0 {
        return if gap == 0.0 { 0.5 } else { 0.0 };
    }
    Normal::standard().cdf(-gap / stderr)
}

/// Pointwise acquisition function on the misclassification probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionKind {
    /// `min(p, 1 - p)`
    #[default]
    Min,
    /// `p (1 - p)`
    Gini,
    /// `-p ln p - (1 - p) ln(1 - p)`
    Entropy,
}

pub fn acquisition_weight(p: f64, kind: AcquisitionKind) -> f64 {
    match kind {
        AcquisitionKind::Min => p.min(1.0 - p),
        AcquisitionKind::Gini => p * (1.0 - p),
        AcquisitionKind::Entropy => {
            let h = |v: f64| if v > 0.0 { -v * v.ln() } else { 0.0 };
            h(p) + h(1.0 - p)
        }
    }
}

/// Draws of a multinomial batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub points: Vec<T>,
    /// Indices into the candidate set.
    pub indices: Vec<usize>,
    /// Every weight was zero and candidates were drawn uniformly.
    pub uniform_fallback: bool,
}

/// `batch` draws with replacement, proportional to `weights`.
pub fn sample_batch<T: Clone>(
    candidates: &[T],
    weights: &[f64],
    batch: usize,
    rng: &mut RngStream,
) -> Result<Batch<T>> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("empty candidate set".into()));
    }
    if candidates.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: candidates.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter(
            "acquisition weights must be finite and non-negative".into(),
        ));
    }
    let (indices, uniform_fallback) = if weights.iter().all(|&w| w == 0.0) {
        log::warn!("all acquisition weights vanished; sampling candidates uniformly");
        let idx: Vec<usize> = (0..batch)
            .map(|_| rng.random_range(0..candidates.len()))
            .collect();
        (idx, true)
    } else {
        let dist = WeightedIndex::new(weights)
            .map_err(|e| Error::InvalidParameter(format!("acquisition weights: {e}")))?;
        ((0..batch).map(|_| dist.sample(rng)).collect(), false)
    };
    Ok(Batch {
        points: indices.iter().map(|&i: &usize| candidates[i].clone()).collect(),
        indices,
        uniform_fallback,
    })
}
