//! Sequential regression Monte Carlo for the detection maps.
//!
//! Iteration `t` estimates the costs-to-go `q(t, x)`: the expected cost of
//! waiting one period from `x` and then following the maps of the earlier
//! iterations, stopping at the first step `s` where the state lies in the
//! announce set of map `t - s` (the empty map index means "announce
//! everywhere", so every path stops by step `t`). A Loess surrogate is fitted
//! to simulated pathwise costs on a design that is grown in batches towards
//! the estimated boundary `q = d`. From iteration `mpc_switch + 1` onwards
//! paths are tested against the latest map only (receding horizon).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{immediate_cost, pathwise_cost, CostParams};
use crate::design::{
    acquisition_weight, boundary_probability, lhs, sample_batch, AcquisitionKind, StateBox,
};
use crate::epidemic::EpidemicParams;
use crate::error::{Error, Result};
use crate::loess::{basis_size, LoessConfig, LoessModel, LoessPrediction};
use crate::reduced::{step, ModelVariant, ReducedState};
use crate::rng::{RngStream, StreamLabel};

/// Resolution in `P` of boundary bisection.
pub const BOUNDARY_RESOLUTION: f64 = 1e-3;

/// Band of the misclassification probability used to audit design density.
pub const BAND_LEVEL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SrmcConfig {
    /// Initial design size.
    pub n0: usize,
    /// Points added per augmentation round.
    pub n_batch: usize,
    /// Final design size.
    pub n_end: usize,
    /// Latin hypercube candidate set size per round.
    pub d_candidates: usize,
    pub acquisition: AcquisitionKind,
    /// Iteration cap.
    pub t_max: usize,
    /// Last iteration using the time-dependent maps; later iterations use
    /// the latest map only.
    pub mpc_switch: usize,
    /// Sup-norm tolerance on successive surrogates; `None` means
    /// `0.05 * c_delay`.
    pub tol: Option<f64>,
    pub master_seed: u64,
    pub loess: LoessConfig,
    /// Regression domain; `None` selects [`StateBox::case_study`].
    pub domain: Option<StateBox>,
    /// Audit lattice points per axis; `None` means 50 (2-D) or 20 (3-D).
    pub audit_per_axis: Option<usize>,
}

impl Default for SrmcConfig {
    fn default() -> Self {
        Self {
            n0: 200,
            n_batch: 200,
            n_end: 2000,
            d_candidates: 2500,
            acquisition: AcquisitionKind::Min,
            t_max: 20,
            mpc_switch: 5,
            tol: None,
            master_seed: 0,
            loess: LoessConfig::default(),
            domain: None,
            audit_per_axis: None,
        }
    }
}

impl SrmcConfig {
    pub fn validate(&self, variant: ModelVariant) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let dim = variant.dim();
        self.loess.validate(dim)?;
        let r = basis_size(dim, self.loess.degree);
        if self.n0 < r.max(self.loess.min_neighbors) {
            return bad(format!(
                "n0 = {} is below the loess floor of {}",
                self.n0,
                r.max(self.loess.min_neighbors)
            ));
        }
        if self.n_end < self.n0 {
            return bad(format!("n_end = {} is below n0 = {}", self.n_end, self.n0));
        }
        if self.n_end > self.n0 {
            if self.n_batch == 0 {
                return bad("n_batch must be positive".into());
            }
            if (self.n_end - self.n0) % self.n_batch != 0 {
                return bad(format!(
                    "n_end - n0 = {} is not a multiple of n_batch = {}",
                    self.n_end - self.n0,
                    self.n_batch
                ));
            }
        }
        if self.d_candidates == 0 {
            return bad("d_candidates must be positive".into());
        }
        if self.t_max == 0 {
            return bad("t_max must be at least 1".into());
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0) {
                return bad(format!("tol must be positive, got {tol}"));
            }
        }
        if let Some(domain) = &self.domain {
            domain.validate()?;
            if domain.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: domain.dim(),
                });
            }
        }
        if self.audit_per_axis == Some(0) {
            return bad("audit_per_axis must be positive".into());
        }
        Ok(())
    }

    /// Plain regression Monte Carlo: no augmentation rounds.
    pub fn is_sequential(&self) -> bool {
        self.n_end > self.n0
    }

    pub fn method_label(&self) -> &'static str {
        if self.is_sequential() {
            "SRMC"
        } else {
            "RMC (non-sequential)"
        }
    }

    pub fn tolerance(&self, costs: &CostParams) -> f64 {
        self.tol.unwrap_or(0.05 * costs.c_delay)
    }

    pub fn domain_for(&self, variant: ModelVariant, params: &EpidemicParams) -> StateBox {
        self.domain
            .clone()
            .unwrap_or_else(|| StateBox::case_study(variant, params.pool_sizes[0]))
    }

    pub fn audit_axis(&self, variant: ModelVariant) -> usize {
        self.audit_per_axis.unwrap_or(match variant {
            ModelVariant::Lp2d => 50,
            ModelVariant::Full3d => 20,
        })
    }
}

/// Regression coordinates of a state: `(S, I, P)` or `(I, P)`.
pub fn features(variant: ModelVariant, x: &ReducedState) -> ([f64; 3], usize) {
    match variant {
        ModelVariant::Full3d => ([x.s1 as f64, x.i1 as f64, x.p], 3),
        ModelVariant::Lp2d => ([x.i1 as f64, x.p, 0.0], 2),
    }
}

/// Inverse of [`features`]. Count coordinates are rounded; in the 3-D model
/// `S` is capped at `M - I` so the state is feasible. The 2-D model ignores
/// `S` and sets it to `M - I`.
pub fn state_from_features(variant: ModelVariant, f: &[f64], pool_size: u64) -> ReducedState {
    let count = |v: f64| v.round().max(0.0) as u64;
    match variant {
        ModelVariant::Full3d => {
            let i1 = count(f[1]).min(pool_size);
            ReducedState {
                s1: count(f[0]).min(pool_size - i1),
                i1,
                p: f[2].clamp(0.0, 1.0),
            }
        }
        ModelVariant::Lp2d => {
            let i1 = count(f[0]).min(pool_size);
            ReducedState {
                s1: pool_size - i1,
                i1,
                p: f[1].clamp(0.0, 1.0),
            }
        }
    }
}

/// A fitted surrogate `q(t, .)` with the announce rule `q - d > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMap {
    pub surrogate: LoessModel,
    pub costs: CostParams,
    pub epidemic: EpidemicParams,
    pub variant: ModelVariant,
    pub iteration: usize,
    pub domain: StateBox,
}

impl DetectionMap {
    pub fn q_hat(&self, x: &ReducedState) -> f64 {
        let (f, d) = features(self.variant, x);
        self.surrogate.predict_mean(&f[..d])
    }

    pub fn predict(&self, x: &ReducedState) -> LoessPrediction {
        let (f, d) = features(self.variant, x);
        self.surrogate.predict(&f[..d])
    }

    /// Estimated benefit of announcing now, `q(t, x) - d(x)`.
    pub fn margin(&self, x: &ReducedState) -> f64 {
        self.q_hat(x) - immediate_cost(x, &self.costs)
    }

    /// Whether `x` lies in the announce set. A certain outbreak (`P = 1`) is
    /// always announced: its immediate cost is zero while waiting costs at
    /// least `c_delay`.
    pub fn announce(&self, x: &ReducedState) -> bool {
        x.is_absorbed() || self.margin(x) > 0.0
    }

    pub fn pool_size(&self) -> u64 {
        self.epidemic.pool_sizes[0]
    }

    /// Lowest announcing `P` on the line through `(s1, i1)`, by bisection on
    /// the sign of `q - d`. Returns 0 when `P = 0` already announces.
    pub fn boundary_p(&self, s1: u64, i1: u64) -> f64 {
        let at = |p: f64| ReducedState { s1, i1, p };
        if self.announce(&at(0.0)) {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > BOUNDARY_RESOLUTION {
            let mid = 0.5 * (lo + hi);
            if self.announce(&at(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Maps of iterations `1, 2, ...`; iteration 0 is "announce everywhere".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSequence {
    maps: Vec<DetectionMap>,
    mpc_switch: usize,
}

impl MapSequence {
    pub fn new(mpc_switch: usize) -> Self {
        Self {
            maps: Vec::new(),
            mpc_switch,
        }
    }

    pub fn push(&mut self, map: DetectionMap) {
        debug_assert_eq!(map.iteration, self.maps.len() + 1);
        self.maps.push(map);
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn mpc_switch(&self) -> usize {
        self.mpc_switch
    }

    /// Map of iteration `t >= 1`.
    pub fn get(&self, t: usize) -> Option<&DetectionMap> {
        t.checked_sub(1).and_then(|i| self.maps.get(i))
    }

    pub fn last(&self) -> Option<&DetectionMap> {
        self.maps.last()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DetectionMap> {
        self.maps.iter()
    }

    pub fn into_maps(self) -> Vec<DetectionMap> {
        self.maps
    }

    /// Whether paths generated at iteration `t` use the receding-horizon rule.
    pub fn is_receding(&self, t: usize) -> bool {
        t > self.mpc_switch
    }

    /// Map tested at step `s` of a path generated for iteration `t`; `None`
    /// stands for the announce-everywhere map of iteration 0.
    pub fn stopping_map(&self, t: usize, s: usize) -> Option<&DetectionMap> {
        if s >= t {
            return None;
        }
        let idx = if self.is_receding(t) { t - 1 } else { t - s };
        Some(
            self.get(idx)
                .unwrap_or_else(|| panic!("map {idx} needed at iteration {t} is missing")),
        )
    }
}

/// Simulates one scenario from `x0` under the stopping rule of iteration `t`
/// and returns `(tau, cost)` with `1 <= tau <= t`.
pub fn path_and_cost(
    x0: &ReducedState,
    t: usize,
    maps: &MapSequence,
    params: &EpidemicParams,
    costs: &CostParams,
    variant: ModelVariant,
    rng: &mut RngStream,
) -> (usize, f64) {
    assert!(t >= 1, "iteration index starts at 1");
    let mut p_path = Vec::with_capacity(t + 1);
    p_path.push(x0.p);
    let mut x = *x0;
    for s in 1..=t {
        x = step(&x, params, variant, rng);
        p_path.push(x.p);
        let stop = match maps.stopping_map(t, s) {
            None => true,
            Some(map) => map.announce(&x),
        };
        if stop {
            let q = pathwise_cost(&p_path, s, costs).expect("tau within path");
            return (s, q);
        }
    }
    unreachable!("the iteration-0 map announces everywhere")
}

/// Bookkeeping of one augmentation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub design_size: usize,
    pub uniform_fallback: bool,
    /// Share of the new batch whose misclassification probability under the
    /// previous fit was at least [`BAND_LEVEL`].
    pub band_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct BuiltMap {
    pub map: DetectionMap,
    pub rounds: Vec<RoundStats>,
}

#[allow(clippy::too_many_arguments)]
fn simulate_costs(
    states: &[ReducedState],
    offset: usize,
    t: usize,
    maps: &MapSequence,
    config: &SrmcConfig,
    params: &EpidemicParams,
    costs: &CostParams,
    variant: ModelVariant,
) -> Vec<f64> {
    states
        .par_iter()
        .enumerate()
        .map(|(j, x0)| {
            let mut rng = RngStream::derive(
                config.master_seed,
                StreamLabel::Scenario,
                t as u64,
                (offset + j) as u64,
            );
            path_and_cost(x0, t, maps, params, costs, variant, &mut rng).1
        })
        .collect()
}

/// Builds the map of iteration `t` from the maps of iterations `1..t`.
pub fn build_map(
    t: usize,
    maps: &MapSequence,
    config: &SrmcConfig,
    params: &EpidemicParams,
    costs: &CostParams,
    variant: ModelVariant,
) -> Result<BuiltMap> {
    if maps.len() + 1 < t {
        return Err(Error::InvalidParameter(format!(
            "iteration {t} needs {} earlier maps, have {}",
            t - 1,
            maps.len()
        )));
    }
    let domain = config.domain_for(variant, params);
    let m1 = params.pool_sizes[0];
    let seed = config.master_seed;
    let to_states = |pts: &[Vec<f64>]| -> Vec<ReducedState> {
        pts.iter()
            .map(|f| state_from_features(variant, f, m1))
            .collect()
    };
    let to_features = |states: &[ReducedState]| -> Vec<f64> {
        states
            .iter()
            .flat_map(|x| {
                let (f, d) = features(variant, x);
                f.into_iter().take(d)
            })
            .collect()
    };

    let mut rng = RngStream::derive(seed, StreamLabel::InitialDesign, t as u64, 0);
    let mut design = to_states(&lhs(&domain, config.n0, &mut rng));
    let mut responses = simulate_costs(&design, 0, t, maps, config, params, costs, variant);
    let mut surrogate = LoessModel::fit_flat(
        variant.dim(),
        to_features(&design),
        responses.clone(),
        config.loess,
    )?;

    let mut rounds = Vec::new();
    let mut round = 0;
    while design.len() < config.n_end {
        round += 1;
        let mut rng = RngStream::derive(seed, StreamLabel::Candidates, t as u64, round as u64);
        let candidates = to_states(&lhs(&domain, config.d_candidates, &mut rng));
        let probs: Vec<f64> = candidates
            .par_iter()
            .map(|x| {
                let (f, d) = features(variant, x);
                let pred = surrogate.predict(&f[..d]);
                boundary_probability(pred.mean, pred.stderr, immediate_cost(x, costs))
            })
            .collect();
        let weights: Vec<f64> = probs
            .iter()
            .map(|&p| acquisition_weight(p, config.acquisition))
            .collect();
        let mut rng = RngStream::derive(seed, StreamLabel::Batch, t as u64, round as u64);
        let batch = sample_batch(&candidates, &weights, config.n_batch, &mut rng)?;
        if batch.uniform_fallback {
            log::warn!("iteration {t} round {round}: acquisition weights underflowed");
        }
        let in_band = batch
            .indices
            .iter()
            .filter(|&&i| probs[i] >= BAND_LEVEL)
            .count();
        let new_costs =
            simulate_costs(&batch.points, design.len(), t, maps, config, params, costs, variant);
        design.extend_from_slice(&batch.points);
        responses.extend_from_slice(&new_costs);
        surrogate = LoessModel::fit_flat(
            variant.dim(),
            to_features(&design),
            responses.clone(),
            config.loess,
        )?;
        rounds.push(RoundStats {
            round,
            design_size: design.len(),
            uniform_fallback: batch.uniform_fallback,
            band_fraction: in_band as f64 / config.n_batch as f64,
        });
    }

    Ok(BuiltMap {
        map: DetectionMap {
            surrogate,
            costs: *costs,
            epidemic: params.clone(),
            variant,
            iteration: t,
            domain,
        },
        rounds,
    })
}

/// Boundary location on one lattice line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    /// `None` for the 2-D model.
    pub s1: Option<u64>,
    pub i1: u64,
    pub p: f64,
}

/// Lattice lines `(S, I)` (3-D) or `I` (2-D) of the audit grid.
pub fn boundary_lines(variant: ModelVariant, domain: &StateBox, per_axis: usize, m1: u64) -> Vec<(u64, u64)> {
    let mut line_box = domain.clone();
    let d = domain.dim();
    line_box.lower.truncate(d - 1);
    line_box.upper.truncate(d - 1);
    line_box.integer.truncate(d - 1);
    line_box
        .lattice(per_axis)
        .into_iter()
        .map(|mut f| {
            f.push(0.0);
            let x = state_from_features(variant, &f, m1);
            (x.s1, x.i1)
        })
        .collect()
}

pub fn boundary_trace(map: &DetectionMap, lines: &[(u64, u64)]) -> Vec<BoundaryPoint> {
    lines
        .par_iter()
        .map(|&(s1, i1)| BoundaryPoint {
            s1: (map.variant == ModelVariant::Full3d).then_some(s1),
            i1,
            p: map.boundary_p(s1, i1),
        })
        .collect()
}

/// Largest gap in `P` between two boundary traces on the same lines.
pub fn boundary_distance(a: &[BoundaryPoint], b: &[BoundaryPoint]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.p - y.p).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub t: usize,
    pub receding: bool,
    /// `sup |q(t) - q(t-1)|` over the audit grid.
    pub sup_q_diff: Option<f64>,
    /// Largest boundary shift in `P` against the previous iteration.
    pub boundary_shift: Option<f64>,
    /// Mean of `min(d, q(t))` over the audit grid.
    pub mean_value: f64,
    pub boundary: Vec<BoundaryPoint>,
    pub rounds: Vec<RoundStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub method: String,
    pub variant: ModelVariant,
    pub tolerance: f64,
    pub converged: bool,
    pub warning: Option<String>,
    pub iterations: Vec<IterationReport>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub maps: MapSequence,
    pub report: ConvergenceReport,
}

impl Solution {
    /// The map used as the stationary detection rule.
    pub fn final_map(&self) -> &DetectionMap {
        self.maps.last().expect("solve builds at least one map")
    }
}

/// Audit lattice as states.
pub fn audit_states(config: &SrmcConfig, variant: ModelVariant, params: &EpidemicParams) -> Vec<ReducedState> {
    let domain = config.domain_for(variant, params);
    domain
        .lattice(config.audit_axis(variant))
        .iter()
        .map(|f| state_from_features(variant, f, params.pool_sizes[0]))
        .collect()
}

/// Iterates [`build_map`] until successive surrogates differ by less than
/// the tolerance on the audit grid, or until `t_max`.
pub fn solve(
    config: &SrmcConfig,
    params: &EpidemicParams,
    costs: &CostParams,
    variant: ModelVariant,
) -> Result<Solution> {
    params.validate()?;
    costs.validate()?;
    config.validate(variant)?;
    let tol = config.tolerance(costs);
    let domain = config.domain_for(variant, params);
    let grid = audit_states(config, variant, params);
    let lines = boundary_lines(variant, &domain, config.audit_axis(variant), params.pool_sizes[0]);

    let mut maps = MapSequence::new(config.mpc_switch);
    let mut iterations: Vec<IterationReport> = Vec::new();
    let mut previous_q: Option<Vec<f64>> = None;
    let mut converged = false;
    for t in 1..=config.t_max {
        let built = build_map(t, &maps, config, params, costs, variant)?;
        let q: Vec<f64> = grid.par_iter().map(|x| built.map.q_hat(x)).collect();
        let mean_value = grid
            .iter()
            .zip(&q)
            .map(|(x, &qv)| qv.min(immediate_cost(x, costs)))
            .sum::<f64>()
            / grid.len() as f64;
        let sup_q_diff = previous_q.as_ref().map(|prev| {
            prev.iter()
                .zip(&q)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        });
        let boundary = boundary_trace(&built.map, &lines);
        let boundary_shift = iterations
            .last()
            .map(|prev| boundary_distance(&prev.boundary, &boundary));
        log::info!(
            "iteration {t}: sup |dq| = {:?}, boundary shift = {:?}",
            sup_q_diff,
            boundary_shift
        );
        iterations.push(IterationReport {
            t,
            receding: maps.is_receding(t),
            sup_q_diff,
            boundary_shift,
            mean_value,
            boundary,
            rounds: built.rounds,
        });
        maps.push(built.map);
        previous_q = Some(q);
        if sup_q_diff.is_some_and(|d| d < tol) {
            converged = true;
            break;
        }
    }
    let warning = (!converged).then(|| {
        let msg = format!(
            "no convergence to tolerance {tol} within {} iterations",
            config.t_max
        );
        log::warn!("{msg}");
        msg
    });
    Ok(Solution {
        maps,
        report: ConvergenceReport {
            method: config.method_label().to_string(),
            variant,
            tolerance: tol,
            converged,
            warning,
            iterations,
        },
    })
}

/// Identifier written into serialized maps.
pub const MAP_FORMAT: &str = "epidetect.detection-map.v1";

/// Self-contained serialized detection map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDocument {
    pub format: String,
    pub method: String,
    pub receding: bool,
    pub srmc: SrmcConfig,
    pub map: DetectionMap,
    pub master_seed: u64,
    pub config_hash: Option<String>,
}

impl MapDocument {
    pub fn new(map: DetectionMap, config: &SrmcConfig, config_hash: Option<String>) -> Self {
        Self {
            format: MAP_FORMAT.to_string(),
            method: config.method_label().to_string(),
            receding: map.iteration > config.mpc_switch,
            srmc: config.clone(),
            master_seed: config.master_seed,
            map,
            config_hash,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        if doc.format != MAP_FORMAT {
            return Err(Error::InvalidParameter(format!(
                "unsupported map format {:?}",
                doc.format
            )));
        }
        Ok(doc)
    }
}
