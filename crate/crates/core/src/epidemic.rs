//! Exact stochastic simulation of the K-pool SIR model.
//!
//! Each pool `k` has three kinds of reaction channel:
//!
//! | channel      | effect                 | rate                       |
//! |--------------|------------------------|----------------------------|
//! | infection    | `S(k) -> I(k)`         | `beta * I(k) * S(k) / M(k)`        |
//! | transmission | `S(k) -> I(k)` via `k'`| `alpha * beta * I(k') * S(k) / M(k)` |
//! | recovery     | `I(k) -> R(k)`         | `gamma * I(k)`             |
//!
//! Recovered counts are implicit: `R(k) = M(k) - S(k) - I(k)`. Trajectories
//! are produced with the Gillespie direct method, recomputing every rate
//! after each event.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Rates and population sizes shared by the full and reduced models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    /// Within-pool contact rate per unit time.
    pub beta: f64,
    /// Recovery rate per unit time.
    pub gamma: f64,
    /// Fraction of travellers; cross-pool contact rate is `alpha * beta`.
    pub alpha: f64,
    /// Pool populations `M(k)`.
    pub pool_sizes: Vec<u64>,
    /// Standard deviation of the noise on the outbreak probability.
    pub sigma_delta: f64,
}

impl EpidemicParams {
    pub fn new(
        beta: f64,
        gamma: f64,
        alpha: f64,
        pool_sizes: Vec<u64>,
        sigma_delta: f64,
    ) -> Result<Self> {
        let params = Self {
            beta,
            gamma,
            alpha,
            pool_sizes,
            sigma_delta,
        };
        params.validate()?;
        Ok(params)
    }

    /// The two-pool case-study parameters: `beta = 0.75`, `gamma = 0.5`,
    /// `alpha = 0.01`, two pools of 2000 and `sigma_delta = 0.01`.
    pub fn case_study() -> Self {
        Self {
            beta: 0.75,
            gamma: 0.5,
            alpha: 0.01,
            pool_sizes: vec![2000, 2000],
            sigma_delta: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.pool_sizes.is_empty() {
            return bad("at least one pool is required".into());
        }
        if let Some(k) = self.pool_sizes.iter().position(|&m| m == 0) {
            return bad(format!("pool {k} has zero population"));
        }
        if !(self.sigma_delta >= 0.0 && self.sigma_delta.is_finite()) {
            return bad(format!(
                "sigma_delta must be non-negative, got {}",
                self.sigma_delta
            ));
        }
        Ok(())
    }

    pub fn pools(&self) -> usize {
        self.pool_sizes.len()
    }
}

/// Susceptible and infected counts of one pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoolState {
    pub susceptible: u64,
    pub infected: u64,
}

impl PoolState {
    pub fn new(susceptible: u64, infected: u64) -> Self {
        Self {
            susceptible,
            infected,
        }
    }

    pub fn recovered(&self, size: u64) -> u64 {
        size - self.susceptible - self.infected
    }
}

/// Joint state of all pools at an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiPoolState {
    pub pools: Vec<PoolState>,
    pub time: f64,
}

impl MultiPoolState {
    pub fn new(pools: Vec<PoolState>, time: f64, params: &EpidemicParams) -> Result<Self> {
        if pools.len() != params.pools() {
            return Err(Error::DimensionMismatch {
                expected: params.pools(),
                got: pools.len(),
            });
        }
        for (k, (pool, &m)) in pools.iter().zip(&params.pool_sizes).enumerate() {
            if pool.susceptible + pool.infected > m {
                return Err(Error::InvalidState(format!(
                    "pool {k}: S + I = {} exceeds M = {m}",
                    pool.susceptible + pool.infected
                )));
            }
        }
        if !(time >= 0.0 && time.is_finite()) {
            return Err(Error::InvalidState(format!("bad epoch {time}")));
        }
        Ok(Self { pools, time })
    }
}

/// A reaction channel of the multi-pool SIR system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    /// Within-pool infection in `pool`.
    Infection { pool: usize },
    /// Infection of a susceptible in `target` by an infected from `source`.
    Transmission { target: usize, source: usize },
    /// Recovery in `pool`.
    Recovery { pool: usize },
}

#[derive(Clone, Copy)]
struct Rates {
    beta: f64,
    gamma: f64,
    alpha: f64,
}

fn fill_rates(pools: &[PoolState], sizes: &[u64], r: Rates, out: &mut Vec<(Channel, f64)>) {
    out.clear();
    for (k, (pool, &m)) in pools.iter().zip(sizes).enumerate() {
        let rate = r.beta * pool.infected as f64 * pool.susceptible as f64 / m as f64;
        out.push((Channel::Infection { pool: k }, rate));
    }
    for (k, (pool, &m)) in pools.iter().zip(sizes).enumerate() {
        for (source, other) in pools.iter().enumerate() {
            if source == k {
                continue;
            }
            let rate =
                r.alpha * r.beta * other.infected as f64 * pool.susceptible as f64 / m as f64;
            out.push((Channel::Transmission { target: k, source }, rate));
        }
    }
    for (k, pool) in pools.iter().enumerate() {
        out.push((Channel::Recovery { pool: k }, r.gamma * pool.infected as f64));
    }
}

/// All `2K + K(K-1)` channel rates of `state`.
pub fn transition_rates(state: &MultiPoolState, params: &EpidemicParams) -> Vec<(Channel, f64)> {
    let mut out = Vec::with_capacity(params.pools() * (params.pools() + 1));
    fill_rates(
        &state.pools,
        &params.pool_sizes,
        Rates {
            beta: params.beta,
            gamma: params.gamma,
            alpha: params.alpha,
        },
        &mut out,
    );
    out
}

/// Picks a channel with probability proportional to its rate.
///
/// Returns `None` when every rate is zero.
pub fn sample_channel<R: Rng + ?Sized>(rates: &[(Channel, f64)], rng: &mut R) -> Option<usize> {
    let total: f64 = rates.iter().map(|(_, r)| r).sum();
    if total <= 0.0 {
        return None;
    }
    pick(rates, total, rng.random::<f64>() * total)
}

fn pick(rates: &[(Channel, f64)], total: f64, target: f64) -> Option<usize> {
    let mut acc = 0.0;
    let mut last_positive = None;
    for (idx, &(_, rate)) in rates.iter().enumerate() {
        if rate <= 0.0 {
            continue;
        }
        acc += rate;
        last_positive = Some(idx);
        if target < acc {
            return Some(idx);
        }
    }
    // Rounding can leave `target` a hair above the accumulated sum.
    debug_assert!(target <= total * (1.0 + 1e-12));
    last_positive
}

fn apply(channel: Channel, pools: &mut [PoolState]) {
    match channel {
        Channel::Infection { pool: k } | Channel::Transmission { target: k, .. } => {
            pools[k].susceptible -= 1;
            pools[k].infected += 1;
        }
        Channel::Recovery { pool: k } => pools[k].infected -= 1,
    }
}

/// Advances `pools` by `duration` time units in place.
pub(crate) fn advance_pools(
    pools: &mut [PoolState],
    sizes: &[u64],
    beta: f64,
    gamma: f64,
    alpha: f64,
    duration: f64,
    rng: &mut RngStream,
) {
    let r = Rates { beta, gamma, alpha };
    let mut rates = Vec::with_capacity(pools.len() * (pools.len() + 1));
    let mut elapsed = 0.0;
    loop {
        fill_rates(pools, sizes, r, &mut rates);
        let total: f64 = rates.iter().map(|(_, rate)| rate).sum();
        if total <= 0.0 {
            return;
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
        elapsed += wait;
        if elapsed > duration {
            return;
        }
        let u = rng.random::<f64>() * total;
        let Some(idx) = pick(&rates, total, u) else {
            return;
        };
        apply(rates[idx].0, pools);
        debug_assert!(pools
            .iter()
            .zip(sizes)
            .all(|(p, &m)| p.susceptible + p.infected <= m));
    }
}

/// Simulates the SSA forward by `duration` and returns the state reached.
///
/// A state with no infecteds anywhere is returned unchanged apart from its
/// epoch.
pub fn simulate_interval(
    state: &MultiPoolState,
    params: &EpidemicParams,
    duration: f64,
    rng: &mut RngStream,
) -> MultiPoolState {
    assert!(duration > 0.0, "duration must be positive");
    assert_eq!(state.pools.len(), params.pools(), "pool count mismatch");
    let mut pools = state.pools.clone();
    advance_pools(
        &mut pools,
        &params.pool_sizes,
        params.beta,
        params.gamma,
        params.alpha,
        duration,
        rng,
    );
    MultiPoolState {
        pools,
        time: state.time + duration,
    }
}

/// Samples the state at epochs `0, 1, ..., horizon`.
pub fn simulate_trajectory(
    start: &MultiPoolState,
    params: &EpidemicParams,
    horizon: usize,
    rng: &mut RngStream,
) -> Vec<MultiPoolState> {
    let mut path = Vec::with_capacity(horizon + 1);
    path.push(start.clone());
    for _ in 0..horizon {
        let next = simulate_interval(path.last().expect("non-empty"), params, 1.0, rng);
        path.push(next);
    }
    path
}

/// First epoch at which Pool 2 (index 1) holds an infected after holding
/// none the epoch before.
///
/// An outbreak already present at epoch 0 is reported as `Some(0)`.
pub fn outbreak_time(trajectory: &[MultiPoolState]) -> Option<usize> {
    let counts: Vec<u64> = trajectory
        .iter()
        .map(|s| s.pools.get(1).map_or(0, |p| p.infected))
        .collect();
    outbreak_time_from_counts(&counts)
}

/// [`outbreak_time`] on a bare series of Pool-2 infected counts.
pub fn outbreak_time_from_counts(infected: &[u64]) -> Option<usize> {
    match infected.first() {
        None => None,
        Some(&i0) if i0 > 0 => Some(0),
        Some(_) => infected
            .windows(2)
            .position(|w| w[0] == 0 && w[1] > 0)
            .map(|t| t + 1),
    }
}
