//! Reduced detection state: Pool-1 counts plus a pseudo-posterior `P` that
//! Pool 2 has been reached.
//!
//! `P` moves by
//!
//! ```text
//! P' = clamp(P + alpha * beta * I (1 - P) + noise, 0, 1)   if P < 1
//! P' = 1                                                   if P = 1
//! ```
//!
//! with `I` and `P` taken at the start of the period. Pool 1 is advanced
//! either as a one-pool SIR (`Full3d`) or as a linear birth-death branching
//! process that ignores depletion of susceptibles (`Lp2d`).

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::epidemic::{advance_pools, EpidemicParams, PoolState};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// The 3-D detection state `(S(1), I(1), P)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub s1: u64,
    pub i1: u64,
    pub p: f64,
}

impl ReducedState {
    /// Validated constructor; `pool_size` is `M(1)`.
    pub fn new(s1: u64, i1: u64, p: f64, pool_size: u64) -> Result<Self> {
        if s1 + i1 > pool_size {
            return Err(Error::InvalidState(format!(
                "S + I = {} exceeds pool size {pool_size}",
                s1 + i1
            )));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidState(format!("P = {p} outside [0, 1]")));
        }
        Ok(Self { s1, i1, p })
    }

    /// Whether an outbreak in Pool 2 is already certain.
    pub fn is_absorbed(&self) -> bool {
        self.p == 1.0
    }
}

/// Which Pool-1 dynamics drive the reduced model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    /// One-pool SIR for Pool 1; state `(S, I, P)`.
    Full3d,
    /// Large-population branching approximation; state `(I, P)`.
    Lp2d,
}

impl ModelVariant {
    /// Number of regression coordinates.
    pub fn dim(self) -> usize {
        match self {
            ModelVariant::Full3d => 3,
            ModelVariant::Lp2d => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Full3d => "full3d",
            ModelVariant::Lp2d => "lp2d",
        }
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full3d" => Ok(ModelVariant::Full3d),
            "lp2d" => Ok(ModelVariant::Lp2d),
            other => Err(Error::InvalidParameter(format!("unknown variant {other:?}"))),
        }
    }
}

/// Expected one-period increase of `P`: `alpha * beta * I (1 - P)`.
pub fn drift(x: &ReducedState, params: &EpidemicParams) -> f64 {
    params.alpha * params.beta * x.i1 as f64 * (1.0 - x.p)
}

/// Advances a linear birth-death process (birth `beta`, death `gamma` per
/// individual) for `duration`.
pub fn branching_interval(
    infected: u64,
    beta: f64,
    gamma: f64,
    duration: f64,
    rng: &mut RngStream,
) -> u64 {
    let mut i = infected;
    let per_capita = beta + gamma;
    let birth_share = beta / per_capita;
    let mut elapsed = 0.0;
    while i > 0 {
        elapsed += rng.sample::<f64, _>(Exp1) / (per_capita * i as f64);
        if elapsed > duration {
            break;
        }
        if rng.random::<f64>() < birth_share {
            i += 1;
        } else {
            i -= 1;
        }
    }
    i
}

/// One-period update with Gaussian noise of standard deviation
/// `params.sigma_delta`.
pub fn step(
    x: &ReducedState,
    params: &EpidemicParams,
    variant: ModelVariant,
    rng: &mut RngStream,
) -> ReducedState {
    let sigma = params.sigma_delta;
    step_with_noise(x, params, variant, rng, |rng| {
        sigma * rng.sample::<f64, _>(StandardNormal)
    })
}

/// One-period update with a caller-supplied noise sampler.
pub fn step_with_noise<F>(
    x: &ReducedState,
    params: &EpidemicParams,
    variant: ModelVariant,
    rng: &mut RngStream,
    mut noise: F,
) -> ReducedState
where
    F: FnMut(&mut RngStream) -> f64,
{
    let p = if x.is_absorbed() {
        1.0
    } else {
        (x.p + drift(x, params) + noise(rng)).clamp(0.0, 1.0)
    };
    let (s1, i1) = match variant {
        ModelVariant::Full3d => {
            let mut pool = [PoolState::new(x.s1, x.i1)];
            advance_pools(
                &mut pool,
                &params.pool_sizes[..1],
                params.beta,
                params.gamma,
                0.0,
                1.0,
                rng,
            );
            (pool[0].susceptible, pool[0].infected)
        }
        ModelVariant::Lp2d => (
            x.s1,
            branching_interval(x.i1, params.beta, params.gamma, 1.0, rng),
        ),
    };
    ReducedState { s1, i1, p }
}

/// Trajectory `x0, x1, ..., x_horizon`.
pub fn simulate_reduced(
    x0: &ReducedState,
    horizon: usize,
    params: &EpidemicParams,
    variant: ModelVariant,
    rng: &mut RngStream,
) -> Result<Vec<ReducedState>> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let mut path = Vec::with_capacity(horizon + 1);
    path.push(*x0);
    for _ in 0..horizon {
        let next = step(path.last().expect("non-empty"), params, variant, rng);
        path.push(next);
    }
    Ok(path)
}
