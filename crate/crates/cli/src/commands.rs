//! Subcommand implementations.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use epidetect::epidemic::{outbreak_time, simulate_trajectory};
use epidetect::reduced::simulate_reduced;
use epidetect::srmc::{self, boundary_lines, boundary_trace, features, state_from_features, MapDocument};
use epidetect::strategy::{self, evaluate_frozen, paired_compare, Policy, ScenarioSet, StrategyReport};
use epidetect::{
    immediate_cost, CostParams, ModelVariant, MultiPoolState, PoolState, RngStream, StreamLabel,
};
use serde::Serialize;

use crate::config::{PolicySpec, RunConfig};
use crate::output::{OutputDir, Provenance};

/// Failure classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Runtime(e) => e,
        }
    }
}

pub trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn output_dir(cfg: &RunConfig) -> Result<OutputDir, Failure> {
    OutputDir::create(&cfg.output.dir, Provenance::new(cfg.hash(), cfg.seed())).runtime()
}

#[derive(Serialize)]
struct BoundaryRow {
    t: usize,
    s1: Option<u64>,
    i1: u64,
    p: f64,
}

pub fn solve(cfg: &RunConfig) -> Result<(), Failure> {
    let out = output_dir(cfg)?;
    log::info!(
        "solving {} with {} (seed {})",
        cfg.variant.name(),
        cfg.srmc.method_label(),
        cfg.seed()
    );
    let sol = srmc::solve(&cfg.srmc, &cfg.epidemic, &cfg.costs, cfg.variant).runtime()?;
    let hash = Some(cfg.hash());
    for map in sol.maps.iter() {
        let doc = MapDocument::new(map.clone(), &cfg.srmc, hash.clone());
        out.raw(
            &format!("maps/map_t{:02}.json", map.iteration),
            &doc.to_json().runtime()?,
        )
        .runtime()?;
    }
    let last = MapDocument::new(sol.final_map().clone(), &cfg.srmc, hash);
    out.raw("map_final.json", &last.to_json().runtime()?).runtime()?;

    let mut w = out.csv("boundaries.csv").runtime()?;
    for it in &sol.report.iterations {
        for b in &it.boundary {
            w.serialize(BoundaryRow {
                t: it.t,
                s1: b.s1,
                i1: b.i1,
                p: b.p,
            })
            .runtime()?;
        }
    }
    w.flush().runtime()?;
    out.json("convergence.json", &sol.report).runtime()?;
    match &sol.report.warning {
        Some(msg) => log::warn!("{msg}"),
        None => log::info!("converged after {} iterations", sol.maps.len()),
    }
    println!(
        "{}: {} maps written to {}",
        sol.report.method,
        sol.maps.len(),
        out.root.display()
    );
    Ok(())
}

fn load_map(path: &Path) -> anyhow::Result<MapDocument> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    MapDocument::from_json(&text).with_context(|| format!("loading map {}", path.display()))
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    policy: &'a str,
    c_fa: f64,
    c_delay: f64,
    n_paths: usize,
    mean_tau: f64,
    sd_tau: f64,
    mean_cost: f64,
    sd_cost: f64,
    pfa: f64,
    cap_hits: usize,
}

#[derive(Serialize)]
struct ReportEntry<'a> {
    #[serde(flatten)]
    report: &'a StrategyReport,
    costs: CostParams,
}

#[derive(Serialize)]
struct EvaluationSummary<'a> {
    reports: Vec<ReportEntry<'a>>,
    comparisons: Vec<strategy::PairedComparison>,
}

pub fn evaluate(
    cfg: &RunConfig,
    map_paths: &[PathBuf],
    allow_mismatch: bool,
    use_map_costs: bool,
) -> Result<(), Failure> {
    let docs = map_paths
        .iter()
        .map(|p| load_map(p))
        .collect::<anyhow::Result<Vec<_>>>()
        .config()?;
    for (doc, path) in docs.iter().zip(map_paths) {
        let m = &doc.map;
        if m.epidemic != cfg.epidemic && !allow_mismatch {
            return Err(Failure::Config(anyhow!(
                "map {} was built with epidemic parameters {:?} but the config has {:?}",
                path.display(),
                m.epidemic,
                cfg.epidemic
            )));
        }
        if !use_map_costs && m.costs != cfg.costs && !allow_mismatch {
            return Err(Failure::Config(anyhow!(
                "map {} was built with costs {:?} but the config has {:?}",
                path.display(),
                m.costs,
                cfg.costs
            )));
        }
    }

    let mut policies: Vec<(Policy, CostParams)> = Vec::new();
    for spec in &cfg.evaluate.policies {
        match spec {
            PolicySpec::Map => {
                if docs.is_empty() {
                    return Err(Failure::Config(anyhow!(
                        "policy \"map\" needs at least one --map"
                    )));
                }
                for doc in &docs {
                    let costs = if use_map_costs { doc.map.costs } else { cfg.costs };
                    policies.push((Policy::from_map(doc.map.clone()), costs));
                }
            }
            PolicySpec::ThresholdP { level } => {
                policies.push((Policy::threshold_p(*level).config()?, cfg.costs))
            }
            PolicySpec::ThresholdT { stage } => {
                policies.push((Policy::threshold_t(*stage).config()?, cfg.costs))
            }
        }
    }
    if policies.is_empty() {
        return Err(Failure::Config(anyhow!("no policies to evaluate")));
    }

    let out = output_dir(cfg)?;
    let ev = &cfg.evaluate;
    let scenarios = ScenarioSet::simulate(
        ev.x0,
        ev.n_paths,
        ev.horizon,
        &cfg.epidemic,
        cfg.variant,
        cfg.seed(),
    )
    .runtime()?;
    let mut reports: Vec<(StrategyReport, CostParams)> = policies
        .iter()
        .map(|(policy, costs)| (evaluate_frozen(policy, &scenarios, costs), *costs))
        .collect();
    if use_map_costs {
        for (r, costs) in &mut reports {
            if r.policy == "Optimal" || r.policy == "LP" {
                r.policy = format!("{} (C_FA={})", r.policy, costs.c_fa);
            }
        }
    }
    let comparisons = reports
        .iter()
        .skip(1)
        .filter(|(_, c)| *c == reports[0].1)
        .map(|(r, _)| paired_compare(&reports[0].0, r))
        .collect::<Result<Vec<_>, _>>()
        .runtime()?;

    let mut w = out.csv("summary.csv").runtime()?;
    for (r, costs) in &reports {
        w.serialize(SummaryRow {
            policy: &r.policy,
            c_fa: costs.c_fa,
            c_delay: costs.c_delay,
            n_paths: r.n_paths,
            mean_tau: r.mean_tau,
            sd_tau: r.sd_tau,
            mean_cost: r.mean_cost,
            sd_cost: r.sd_cost,
            pfa: r.pfa,
            cap_hits: r.cap_hits,
        })
        .runtime()?;
    }
    w.flush().runtime()?;
    let mut paths = out.stamped("paths.csv").runtime()?;
    let plain: Vec<StrategyReport> = reports.iter().map(|(r, _)| r.clone()).collect();
    strategy::write_records_csv(&plain, &mut paths).runtime()?;
    paths.flush().runtime()?;
    out.json(
        "summary.json",
        &EvaluationSummary {
            reports: reports
                .iter()
                .map(|(report, costs)| ReportEntry {
                    report,
                    costs: *costs,
                })
                .collect(),
            comparisons,
        },
    )
    .runtime()?;

    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(
        stdout,
        "{:<26} {:>8} {:>8} {:>8} {:>8} {:>7} {:>5}",
        "policy", "E[tau]", "sd(tau)", "E[cost]", "sd(cost)", "PFA", "caps"
    );
    for (r, _) in &reports {
        let _ = writeln!(
            stdout,
            "{:<26} {:>8.2} {:>8.2} {:>8.3} {:>8.3} {:>6.1}% {:>5}",
            r.policy,
            r.mean_tau,
            r.sd_tau,
            r.mean_cost,
            r.sd_cost,
            100.0 * r.pfa,
            r.cap_hits
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct ReducedRow {
    path: usize,
    t: usize,
    s1: u64,
    i1: u64,
    p: f64,
}

#[derive(Serialize)]
struct TwoPoolRow {
    path: usize,
    t: usize,
    s1: u64,
    i1: u64,
    s2: u64,
    i2: u64,
    theta: Option<usize>,
}

pub fn simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let sim = &cfg.simulate;
    if sim.two_pool && cfg.epidemic.pools() != 2 {
        return Err(Failure::Config(anyhow!(
            "two-pool simulation needs exactly two pools, got {}",
            cfg.epidemic.pools()
        )));
    }
    let out = output_dir(cfg)?;
    let seed = cfg.seed();
    let mut w = out.csv("trajectories.csv").runtime()?;
    for n in 0..sim.n_paths {
        let mut rng = RngStream::derive(seed, StreamLabel::Trajectory, 0, n as u64);
        let path = simulate_reduced(&sim.x0, sim.horizon, &cfg.epidemic, cfg.variant, &mut rng)
            .runtime()?;
        for (t, x) in path.iter().enumerate() {
            w.serialize(ReducedRow {
                path: n,
                t,
                s1: x.s1,
                i1: x.i1,
                p: x.p,
            })
            .runtime()?;
        }
    }
    w.flush().runtime()?;

    if sim.two_pool {
        let pool2 = sim
            .pool2
            .unwrap_or(PoolState::new(cfg.epidemic.pool_sizes[1], 0));
        let start = MultiPoolState::new(
            vec![PoolState::new(sim.x0.s1, sim.x0.i1), pool2],
            0.0,
            &cfg.epidemic,
        )
        .config()?;
        let mut w = out.csv("two_pool.csv").runtime()?;
        for n in 0..sim.n_paths {
            let mut rng = RngStream::derive(seed, StreamLabel::Trajectory, 1, n as u64);
            let path = simulate_trajectory(&start, &cfg.epidemic, sim.horizon, &mut rng);
            let theta = outbreak_time(&path);
            for (t, s) in path.iter().enumerate() {
                w.serialize(TwoPoolRow {
                    path: n,
                    t,
                    s1: s.pools[0].susceptible,
                    i1: s.pools[0].infected,
                    s2: s.pools[1].susceptible,
                    i2: s.pools[1].infected,
                    theta,
                })
                .runtime()?;
            }
        }
        w.flush().runtime()?;
    }
    println!("{} trajectories written to {}", sim.n_paths, out.root.display());
    Ok(())
}

#[derive(Serialize)]
struct GridRow {
    s1: Option<u64>,
    i1: u64,
    p: f64,
    q_hat: f64,
    stderr: f64,
    d: f64,
    announce: bool,
}

#[derive(Serialize)]
struct DesignRow {
    s1: Option<u64>,
    i1: u64,
    p: f64,
    q: f64,
}

pub fn export_map(map_path: &Path, out_root: &Path, per_axis: usize) -> Result<(), Failure> {
    if per_axis < 2 {
        return Err(Failure::Config(anyhow!("--grid must be at least 2")));
    }
    let doc = load_map(map_path).config()?;
    let provenance = Provenance::new(
        doc.config_hash.clone().unwrap_or_else(|| "unknown".into()),
        doc.master_seed,
    );
    let out = OutputDir::create(out_root, provenance).runtime()?;
    let map = &doc.map;
    let m1 = map.pool_size();
    let full = map.variant == ModelVariant::Full3d;
    let s1_of = |s: u64| full.then_some(s);

    let mut w = out.csv("map_grid.csv").runtime()?;
    for f in map.domain.lattice(per_axis) {
        let x = state_from_features(map.variant, &f, m1);
        let pred = map.predict(&x);
        w.serialize(GridRow {
            s1: s1_of(x.s1),
            i1: x.i1,
            p: x.p,
            q_hat: pred.mean,
            stderr: pred.stderr,
            d: immediate_cost(&x, &map.costs),
            announce: map.announce(&x),
        })
        .runtime()?;
    }
    w.flush().runtime()?;

    let mut w = out.csv("map_design.csv").runtime()?;
    for (n, &q) in map.surrogate.responses().iter().enumerate() {
        let x = state_from_features(map.variant, map.surrogate.input(n), m1);
        debug_assert_eq!(features(map.variant, &x).1, map.surrogate.dim());
        w.serialize(DesignRow {
            s1: s1_of(x.s1),
            i1: x.i1,
            p: x.p,
            q,
        })
        .runtime()?;
    }
    w.flush().runtime()?;

    let lines = boundary_lines(map.variant, &map.domain, per_axis, m1);
    let mut w = out.csv("map_boundary.csv").runtime()?;
    for b in boundary_trace(map, &lines) {
        w.serialize(BoundaryRow {
            t: map.iteration,
            s1: b.s1,
            i1: b.i1,
            p: b.p,
        })
        .runtime()?;
    }
    w.flush().runtime()?;
    println!(
        "map of iteration {} ({}) exported to {}",
        map.iteration,
        map.variant.name(),
        out.root.display()
    );
    Ok(())
}
