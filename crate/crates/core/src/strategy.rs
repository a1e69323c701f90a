//! Detection policies and their evaluation on frozen scenario sets.
//!
//! A scenario set is a collection of reduced-model paths simulated once from
//! a common initial state. Every policy is evaluated on the same paths, which
//! makes paired comparisons between policies meaningful.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{pathwise_cost, CostParams};
use crate::epidemic::EpidemicParams;
use crate::error::{Error, Result};
use crate::reduced::{simulate_reduced, ModelVariant, ReducedState};
use crate::rng::{RngStream, StreamLabel};
use crate::srmc::DetectionMap;

/// Default evaluation horizon.
pub const DEFAULT_HORIZON: usize = 50;

#[derive(Debug, Clone)]
pub enum Policy {
    /// Announce when the state enters the announce set of a 3-D map.
    OptimalMap(Arc<DetectionMap>),
    /// Same rule with a map built on the 2-D `(I, P)` model.
    LpMap(Arc<DetectionMap>),
    /// Announce once `P >= level`.
    ThresholdP(f64),
    /// Announce at a fixed step.
    ThresholdT(usize),
}

impl Policy {
    pub fn from_map(map: DetectionMap) -> Self {
        match map.variant {
            ModelVariant::Full3d => Policy::OptimalMap(Arc::new(map)),
            ModelVariant::Lp2d => Policy::LpMap(Arc::new(map)),
        }
    }

    pub fn threshold_p(level: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&level) {
            return Err(Error::InvalidParameter(format!(
                "probability threshold must lie in [0, 1], got {level}"
            )));
        }
        Ok(Policy::ThresholdP(level))
    }

    pub fn threshold_t(stage: usize) -> Result<Self> {
        if stage == 0 {
            return Err(Error::InvalidParameter(
                "time threshold must be at least 1".into(),
            ));
        }
        Ok(Policy::ThresholdT(stage))
    }

    pub fn name(&self) -> String {
        match self {
            Policy::OptimalMap(_) => "Optimal".to_string(),
            Policy::LpMap(_) => "LP".to_string(),
            Policy::ThresholdP(level) => format!("Threshold-P({level})"),
            Policy::ThresholdT(stage) => format!("Threshold-t({stage})"),
        }
    }

    /// Whether to announce in state `x` reached at step `t >= 1`.
    pub fn decide(&self, x: &ReducedState, t: usize) -> bool {
        match self {
            Policy::OptimalMap(map) | Policy::LpMap(map) => map.announce(x),
            Policy::ThresholdP(level) => x.p >= *level,
            Policy::ThresholdT(stage) => t >= *stage,
        }
    }
}

/// Identity of a scenario set; reports built on equal keys are paired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioKey {
    pub master_seed: u64,
    pub n_paths: usize,
    pub horizon: usize,
    pub x0: ReducedState,
    pub variant: ModelVariant,
    pub epidemic: EpidemicParams,
}

/// Frozen reduced-model paths, each of length `horizon + 1`.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    pub key: ScenarioKey,
    pub paths: Vec<Vec<ReducedState>>,
}

impl ScenarioSet {
    /// Path `n` is driven by the stream `(master_seed, Evaluation, 0, n)`.
    pub fn simulate(
        x0: ReducedState,
        n_paths: usize,
        horizon: usize,
        params: &EpidemicParams,
        variant: ModelVariant,
        master_seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if n_paths == 0 {
            return Err(Error::InvalidParameter("need at least one path".into()));
        }
        let paths = (0..n_paths)
            .into_par_iter()
            .map(|n| {
                let mut rng =
                    RngStream::derive(master_seed, StreamLabel::Evaluation, 0, n as u64);
                simulate_reduced(&x0, horizon, params, variant, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            key: ScenarioKey {
                master_seed,
                n_paths,
                horizon,
                x0,
                variant,
                epidemic: params.clone(),
            },
            paths,
        })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path: usize,
    pub tau: usize,
    pub cost: f64,
    pub p_tau: f64,
    /// The policy never announced and the path was stopped at the horizon.
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub policy: String,
    pub n_paths: usize,
    pub mean_tau: f64,
    pub sd_tau: f64,
    pub mean_cost: f64,
    pub sd_cost: f64,
    /// Mean of `1 - P_tau`.
    pub pfa: f64,
    pub cap_hits: usize,
    pub scenarios: ScenarioKey,
    #[serde(skip)]
    pub records: Vec<PathRecord>,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Applies `policy` to one path.
pub fn stop_path(policy: &Policy, path: &[ReducedState], costs: &CostParams) -> PathRecord {
    let horizon = path.len() - 1;
    let (tau, capped) = (1..=horizon)
        .find(|&t| policy.decide(&path[t], t))
        .map_or((horizon, true), |t| (t, false));
    let p_path: Vec<f64> = path.iter().map(|x| x.p).collect();
    PathRecord {
        path: 0,
        tau,
        cost: pathwise_cost(&p_path, tau, costs).expect("tau within path"),
        p_tau: path[tau].p,
        capped,
    }
}

pub fn evaluate_frozen(policy: &Policy, scenarios: &ScenarioSet, costs: &CostParams) -> StrategyReport {
    let records: Vec<PathRecord> = scenarios
        .paths
        .par_iter()
        .enumerate()
        .map(|(n, path)| PathRecord {
            path: n,
            ..stop_path(policy, path, costs)
        })
        .collect();
    let cap_hits = records.iter().filter(|r| r.capped).count();
    if cap_hits > 0 {
        log::warn!(
            "{}: {cap_hits} of {} paths reached the horizon without announcing",
            policy.name(),
            records.len()
        );
    }
    let (mean_tau, sd_tau) = mean_sd(records.iter().map(|r| r.tau as f64));
    let (mean_cost, sd_cost) = mean_sd(records.iter().map(|r| r.cost));
    let pfa = records.iter().map(|r| 1.0 - r.p_tau).sum::<f64>() / records.len() as f64;
    StrategyReport {
        policy: policy.name(),
        n_paths: records.len(),
        mean_tau,
        sd_tau,
        mean_cost,
        sd_cost,
        pfa,
        cap_hits,
        scenarios: scenarios.key.clone(),
        records,
    }
}

/// Simulates a fresh scenario set and evaluates `policy` on it.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    policy: &Policy,
    x0: ReducedState,
    n_paths: usize,
    horizon: usize,
    params: &EpidemicParams,
    costs: &CostParams,
    variant: ModelVariant,
    master_seed: u64,
) -> Result<StrategyReport> {
    costs.validate()?;
    let scenarios = ScenarioSet::simulate(x0, n_paths, horizon, params, variant, master_seed)?;
    Ok(evaluate_frozen(policy, &scenarios, costs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub first: String,
    pub second: String,
    /// Mean of `cost(first) - cost(second)`.
    pub mean_difference: f64,
    pub sd_difference: f64,
    /// Share of paths where `first` is strictly cheaper.
    pub first_better: f64,
    pub ties: f64,
}

/// Path-by-path comparison of two reports on the same scenario set.
pub fn paired_compare(a: &StrategyReport, b: &StrategyReport) -> Result<PairedComparison> {
    if a.scenarios != b.scenarios || a.records.len() != b.records.len() {
        return Err(Error::ScenarioMismatch(format!(
            "{} and {} were evaluated on different scenario sets",
            a.policy, b.policy
        )));
    }
    let n = a.records.len() as f64;
    let diffs = a.records.iter().zip(&b.records).map(|(x, y)| x.cost - y.cost);
    let (mean_difference, sd_difference) = mean_sd(diffs.clone());
    Ok(PairedComparison {
        first: a.policy.clone(),
        second: b.policy.clone(),
        mean_difference,
        sd_difference,
        first_better: diffs.clone().filter(|&d| d < 0.0).count() as f64 / n,
        ties: diffs.filter(|&d| d == 0.0).count() as f64 / n,
    })
}

/// Threshold-t reports for every stage in `stages`.
pub fn sweep_threshold_t(
    scenarios: &ScenarioSet,
    costs: &CostParams,
    stages: impl IntoIterator<Item = usize>,
) -> Result<Vec<StrategyReport>> {
    stages
        .into_iter()
        .map(|s| Ok(evaluate_frozen(&Policy::threshold_t(s)?, scenarios, costs)))
        .collect()
}

#[derive(Serialize)]
struct CsvRow<'a> {
    policy: &'a str,
    path: usize,
    tau: usize,
    cost: f64,
    p_tau: f64,
    capped: bool,
}

/// Per-path records of all reports as CSV.
pub fn write_records_csv<W: Write>(reports: &[StrategyReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for report in reports {
        for r in &report.records {
            w.serialize(CsvRow {
                policy: &report.policy,
                path: r.path,
                tau: r.tau,
                cost: r.cost,
                p_tau: r.p_tau,
                capped: r.capped,
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(p: f64) -> ReducedState {
        ReducedState { s1: 1990, i1: 10, p }
    }

    fn scenarios(n: usize, seed: u64) -> ScenarioSet {
        ScenarioSet::simulate(
            state(0.1),
            n,
            DEFAULT_HORIZON,
            &EpidemicParams::case_study(),
            ModelVariant::Full3d,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn threshold_decisions() {
        let p = Policy::threshold_p(0.8).unwrap();
        assert!(p.decide(&state(0.85), 3));
        assert!(!p.decide(&state(0.79), 3));
        let t = Policy::threshold_t(8).unwrap();
        assert!(!t.decide(&state(0.99), 7));
        assert!(t.decide(&state(0.0), 8));
        assert!(Policy::threshold_p(1.5).is_err());
        assert!(Policy::threshold_t(0).is_err());
    }

    #[test]
    fn threshold_t_stops_at_its_stage() {
        let set = scenarios(50, 3);
        let costs = CostParams::case_study();
        let report = evaluate_frozen(&Policy::ThresholdT(8), &set, &costs);
        assert!(report.records.iter().all(|r| r.tau == 8 && !r.capped));
        assert_eq!(report.sd_tau, 0.0);
        let by_hand = set
            .paths
            .iter()
            .map(|p| p[..8].iter().map(|x| x.p).sum::<f64>() + 20.0 * (1.0 - p[8].p))
            .sum::<f64>()
            / 50.0;
        assert!((report.mean_cost - by_hand).abs() < 1e-9);
    }

    #[test]
    fn capped_paths_are_counted() {
        let set = scenarios(20, 4);
        let report = evaluate_frozen(&Policy::ThresholdT(60), &set, &CostParams::case_study());
        assert_eq!(report.cap_hits, 20);
        assert!(report.records.iter().all(|r| r.tau == DEFAULT_HORIZON));
    }

    #[test]
    fn sample_standard_deviation() {
        let (m, s) = mean_sd([1.0, 2.0, 3.0, 4.0].into_iter());
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_sd([7.0].into_iter()), (7.0, 0.0));
    }

    #[test]
    fn paired_comparison_requires_same_scenarios() {
        let costs = CostParams::case_study();
        let a = evaluate_frozen(&Policy::ThresholdT(3), &scenarios(30, 1), &costs);
        let b = evaluate_frozen(&Policy::ThresholdT(8), &scenarios(30, 2), &costs);
        assert!(matches!(paired_compare(&a, &b), Err(Error::ScenarioMismatch(_))));
        let set = scenarios(30, 1);
        let c = evaluate_frozen(&Policy::ThresholdT(8), &set, &costs);
        let cmp = paired_compare(&a, &c).unwrap();
        assert!((cmp.mean_difference - (a.mean_cost - c.mean_cost)).abs() < 1e-9);
        let same = paired_compare(&a, &a).unwrap();
        assert_eq!(same.ties, 1.0);
        assert_eq!(same.first_better, 0.0);
    }

    #[test]
    fn frozen_sets_are_reproducible() {
        let a = scenarios(40, 9);
        let b = scenarios(40, 9);
        assert_eq!(a.paths, b.paths);
        assert_eq!(a.key, b.key);
    }

    #[test]
    fn sweep_and_csv() {
        let set = scenarios(10, 5);
        let reports = sweep_threshold_t(&set, &CostParams::case_study(), 1..=3).unwrap();
        assert_eq!(reports.len(), 3);
        let mut buf = Vec::new();
        write_records_csv(&reports, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 31);
        assert!(text.starts_with("policy,path,tau,cost,p_tau,capped"));
    }
}
