//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Every stochastic quantity is driven by the master seed below. The process
//! exits with status 0 after reporting so that a failed criterion shows up in
//! the log without hiding the others; set `ACCEPTANCE_STRICT=1` to turn any
//! failure into a non-zero exit.

mod common;

use std::time::Instant;

use epidetect::cost::{immediate_cost, pathwise_cost};
use epidetect::design::{acquisition_weight, lhs_unit, AcquisitionKind};
use epidetect::epidemic::{simulate_interval, transition_rates};
use epidetect::loess::{LoessConfig, LoessModel};
use epidetect::reduced::step;
use epidetect::srmc::{self, build_map, path_and_cost, MapDocument, MapSequence, SrmcConfig};
use epidetect::strategy::{evaluate_frozen, paired_compare, Policy, ScenarioSet, StrategyReport};
use epidetect::{
    CostParams, EpidemicParams, ModelVariant, MultiPoolState, PoolState, ReducedState, RngStream,
    StreamLabel,
};
use rand::Rng;

const SEED: u64 = 1;
const N_PATHS: usize = 1000;
const HORIZON: usize = 50;

struct Outcome {
    id: u32,
    name: &'static str,
    failures: Vec<String>,
    detail: String,
    secs: f64,
}

struct Check {
    failures: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Self { failures: Vec::new() }
    }

    fn that(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn within(&mut self, label: &str, value: f64, target: f64, tol: f64) {
        self.that(
            (value - target).abs() <= tol,
            format!("{label} = {value:.4} outside {target} +/- {tol}"),
        );
    }
}

fn x0() -> ReducedState {
    ReducedState { s1: 1990, i1: 10, p: 0.1 }
}

fn solve_full(c_fa: f64) -> epidetect::srmc::Solution {
    let cfg = SrmcConfig {
        master_seed: SEED,
        ..Default::default()
    };
    srmc::solve(
        &cfg,
        &EpidemicParams::case_study(),
        &CostParams::new(c_fa, 1.0).unwrap(),
        ModelVariant::Full3d,
    )
    .expect("solve")
}

fn summary(r: &StrategyReport) -> String {
    format!(
        "{}: cost {:.3} tau {:.2} sd(tau) {:.2} PFA {:.1}%",
        r.policy,
        r.mean_cost,
        r.mean_tau,
        r.sd_tau,
        100.0 * r.pfa
    )
}

struct PolicyTable {
    optimal: StrategyReport,
    threshold_p: StrategyReport,
}

fn criterion_1(scenarios: &ScenarioSet) -> (Outcome, PolicyTable) {
    let start = Instant::now();
    let costs = CostParams::case_study();
    let sol = solve_full(20.0);
    let optimal = evaluate_frozen(&Policy::from_map(sol.final_map().clone()), scenarios, &costs);
    let threshold_p = evaluate_frozen(&Policy::ThresholdP(0.8), scenarios, &costs);
    let threshold_t = evaluate_frozen(&Policy::ThresholdT(8), scenarios, &costs);
    let mut c = Check::new();
    c.within("Optimal mean cost", optimal.mean_cost, 6.53, 0.25);
    c.within("Optimal mean tau", optimal.mean_tau, 8.86, 0.45);
    c.within("Optimal PFA", optimal.pfa, 0.082, 0.025);
    c.within("Threshold-P mean cost", threshold_p.mean_cost, 7.03, 0.25);
    c.within("Threshold-P PFA", threshold_p.pfa, 0.153, 0.03);
    c.within("Threshold-t mean cost", threshold_t.mean_cost, 7.18, 0.3);
    c.that(threshold_t.sd_tau == 0.0, "Threshold-t sd(tau) is not 0");
    c.that(
        optimal.mean_cost < threshold_p.mean_cost && threshold_p.mean_cost < threshold_t.mean_cost,
        "mean-cost ordering Optimal < Threshold-P < Threshold-t violated",
    );
    let detail = [&optimal, &threshold_p, &threshold_t]
        .map(summary)
        .join("; ");
    (
        Outcome {
            id: 1,
            name: "case-study policy comparison",
            failures: c.failures,
            detail,
            secs: start.elapsed().as_secs_f64(),
        },
        PolicyTable {
            optimal,
            threshold_p,
        },
    )
}

fn criterion_2(scenarios: &ScenarioSet, at_20: &StrategyReport) -> Outcome {
    let start = Instant::now();
    let mut reports = Vec::new();
    for c_fa in [10.0, 30.0] {
        let sol = solve_full(c_fa);
        let costs = CostParams::new(c_fa, 1.0).unwrap();
        reports.push(evaluate_frozen(
            &Policy::from_map(sol.final_map().clone()),
            scenarios,
            &costs,
        ));
    }
    reports.insert(1, at_20.clone());
    let mut c = Check::new();
    let taus = [6.84, 8.87, 9.61];
    let pfas = [0.214, 0.083, 0.053];
    for (i, r) in reports.iter().enumerate() {
        let c_fa = [10, 20, 30][i];
        c.within(&format!("C_FA={c_fa} mean tau"), r.mean_tau, taus[i], 0.5);
        c.within(&format!("C_FA={c_fa} PFA"), r.pfa, pfas[i], 0.03);
    }
    c.that(
        reports[0].mean_tau < reports[1].mean_tau && reports[1].mean_tau < reports[2].mean_tau,
        "mean tau not strictly increasing in C_FA",
    );
    c.that(
        reports[0].pfa > reports[1].pfa && reports[1].pfa > reports[2].pfa,
        "PFA not strictly decreasing in C_FA",
    );
    let detail = reports
        .iter()
        .zip([10, 20, 30])
        .map(|(r, c_fa)| format!("C_FA={c_fa}: tau {:.2} PFA {:.1}%", r.mean_tau, 100.0 * r.pfa))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome {
        id: 2,
        name: "false-alarm cost sensitivity",
        failures: c.failures,
        detail,
        secs: start.elapsed().as_secs_f64(),
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let cfg = SrmcConfig {
        master_seed: SEED,
        ..Default::default()
    };
    let built = build_map(
        1,
        &MapSequence::new(cfg.mpc_switch),
        &cfg,
        &EpidemicParams::case_study(),
        &CostParams::case_study(),
        ModelVariant::Lp2d,
    )
    .expect("build");
    let b = built.map.boundary_p(1990, 10);
    let mut c = Check::new();
    c.that(
        (0.55..=0.65).contains(&b),
        format!("boundary at P = {b:.3} outside [0.55, 0.65]"),
    );
    Outcome {
        id: 3,
        name: "one-step boundary at I = 10",
        failures: c.failures,
        detail: format!("t = 1 boundary crosses at P = {b:.3} (analytic root 0.6)"),
        secs: start.elapsed().as_secs_f64(),
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut c = Check::new();
    let (mut worst_mean, mut worst_kernel, mut worst_sum) = (0.0f64, 0.0f64, 0.0f64);
    let mut datasets = 0;
    for case in 0..24u64 {
        let mut rng = RngStream::derive(SEED, StreamLabel::Custom(40), case, 0);
        let d = 1 + (case % 3) as usize;
        let n = rng.random_range(12..=50);
        let (xs, ys) = common::random_dataset(n, d, &mut rng);
        let cfg = LoessConfig {
            span: [0.4, 0.6, 0.9][(case / 3 % 3) as usize],
            min_neighbors: d + 4,
            ..Default::default()
        };
        let model = LoessModel::fit(&xs, &ys, cfg).expect("fit");
        datasets += 1;
        for q in 0..8 {
            let x: Vec<f64> = (0..d)
                .map(|j| xs[q][j] + rng.random_range(-0.5..0.5))
                .collect();
            let oracle = common::dense_fit(&xs, &ys, &x, cfg.span, cfg.min_neighbors, cfg.degree);
            let kernel = model.equivalent_kernel(&x);
            worst_mean = worst_mean.max((model.predict_mean(&x) - oracle.mean).abs());
            for (a, b) in kernel.iter().zip(&oracle.kernel) {
                worst_kernel = worst_kernel.max((a - b).abs());
            }
            worst_sum = worst_sum.max((kernel.iter().sum::<f64>() - 1.0).abs());
        }
    }
    c.that(worst_mean <= 1e-8, format!("mean differs by {worst_mean:e}"));
    c.that(worst_kernel <= 1e-8, format!("kernel differs by {worst_kernel:e}"));
    c.that(worst_sum <= 1e-10, format!("kernel sum off by {worst_sum:e}"));
    Outcome {
        id: 4,
        name: "loess oracle equivalence",
        failures: c.failures,
        detail: format!(
            "{datasets} datasets; max |mean diff| {worst_mean:.1e}, max |kernel diff| {worst_kernel:.1e}, max |sum l - 1| {worst_sum:.1e}"
        ),
        secs: start.elapsed().as_secs_f64(),
    }
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cfg = SrmcConfig {
        master_seed: SEED,
        n_end: 2000,
        t_max: 20,
        tol: Some(f64::MIN_POSITIVE),
        ..Default::default()
    };
    let sol = srmc::solve(
        &cfg,
        &EpidemicParams::case_study(),
        &CostParams::case_study(),
        ModelVariant::Lp2d,
    )
    .expect("solve");
    let mut c = Check::new();
    let its = &sol.report.iterations;
    c.that(its.len() == 20, format!("{} iterations instead of 20", its.len()));
    let shift = its.last().and_then(|it| it.boundary_shift).unwrap_or(f64::NAN);
    c.that(shift <= 0.05, format!("boundary shift {shift:.3} > 0.05"));
    Outcome {
        id: 5,
        name: "boundary convergence (LP2D, T = 20)",
        failures: c.failures,
        detail: format!("sup |dB(19) - dB(20)| = {shift:.4} in P over {} audit lines", its[0].boundary.len()),
        secs: start.elapsed().as_secs_f64(),
    }
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut c = Check::new();
    let params = EpidemicParams::case_study();
    let costs = CostParams::case_study();

    // SSA conservation and channel count.
    for k in 1..=4u64 {
        let p = EpidemicParams::new(0.75, 0.5, 0.01, vec![500; k as usize], 0.01).unwrap();
        let pools: Vec<PoolState> = (0..k).map(|i| PoolState::new(490 - 10 * i, 10 + i)).collect();
        let state = MultiPoolState::new(pools, 0.0, &p).unwrap();
        let rates = transition_rates(&state, &p);
        c.that(
            rates.len() as u64 == 2 * k + k * (k - 1),
            format!("K = {k}: {} channels", rates.len()),
        );
        let mut rng = RngStream::derive(SEED, StreamLabel::Custom(60), k, 0);
        let mut cur = state;
        for _ in 0..20 {
            let next = simulate_interval(&cur, &p, 1.0, &mut rng);
            for (a, b) in cur.pools.iter().zip(&next.pools) {
                c.that(b.susceptible <= a.susceptible, "susceptibles increased");
                c.that(b.susceptible + b.infected <= 500, "pool size exceeded");
            }
            cur = next;
        }
    }

    // P absorption and clamping.
    let mut rng = RngStream::derive(SEED, StreamLabel::Custom(61), 0, 0);
    let noisy = EpidemicParams {
        sigma_delta: 0.3,
        ..params.clone()
    };
    for n in 0..2000 {
        let p = if n % 5 == 0 { 1.0 } else { rng.random::<f64>() };
        let x = ReducedState { s1: 1900, i1: n % 60, p };
        for variant in [ModelVariant::Full3d, ModelVariant::Lp2d] {
            let y = step(&x, &noisy, variant, &mut rng);
            c.that((0.0..=1.0).contains(&y.p), "P left [0, 1]");
            c.that(!x.is_absorbed() || y.p == 1.0, "P = 1 not absorbing");
        }
    }

    // LHS marginal bins.
    for (dim, count) in [(1, 7), (2, 50), (3, 128)] {
        let pts = lhs_unit(dim, count, &mut rng);
        for j in 0..dim {
            let mut bins: Vec<usize> = pts.iter().map(|p| (p[j] * count as f64) as usize).collect();
            bins.sort_unstable();
            c.that(bins == (0..count).collect::<Vec<_>>(), "LHS bin occupied twice");
        }
    }

    // Acquisition symmetry.
    for i in 0..=100 {
        let p = i as f64 / 100.0;
        for kind in [AcquisitionKind::Min, AcquisitionKind::Gini, AcquisitionKind::Entropy] {
            let (a, b) = (acquisition_weight(p, kind), acquisition_weight(1.0 - p, kind));
            c.that((a - b).abs() < 1e-12, format!("{kind:?} not symmetric at {p}"));
        }
    }

    // Stopping times of the path generator and the zero-tau cost.
    let cfg = SrmcConfig {
        n0: 60,
        n_batch: 30,
        n_end: 120,
        d_candidates: 300,
        t_max: 4,
        mpc_switch: 2,
        master_seed: SEED,
        ..Default::default()
    };
    let sol = srmc::solve(&cfg, &params, &costs, ModelVariant::Full3d).expect("solve");
    for t in 1..=sol.maps.len() + 1 {
        for n in 0..300u64 {
            let mut rng = RngStream::derive(SEED, StreamLabel::Custom(62), t as u64, n);
            let x = ReducedState { s1: 1990 - n, i1: n, p: (n % 100) as f64 / 100.0 };
            let (tau, _) = path_and_cost(&x, t, &sol.maps, &params, &costs, ModelVariant::Full3d, &mut rng);
            c.that((1..=t).contains(&tau), format!("tau = {tau} outside [1, {t}]"));
            let p_path = [x.p, 0.5];
            c.that(
                pathwise_cost(&p_path, 0, &costs).unwrap() == immediate_cost(&x, &costs),
                "pathwise_cost at tau = 0 differs from immediate_cost",
            );
        }
    }

    // Bit-identical reruns, sequential and parallel.
    let rerun = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let sol = srmc::solve(&cfg, &params, &costs, ModelVariant::Full3d).unwrap();
                let doc = MapDocument::new(sol.final_map().clone(), &cfg, None);
                let set = ScenarioSet::simulate(x0(), 200, HORIZON, &params, ModelVariant::Full3d, SEED).unwrap();
                let r = evaluate_frozen(&Policy::from_map(doc.map.clone()), &set, &costs);
                format!("{}{:?}", doc.to_json().unwrap(), r.records)
            })
    };
    let reference = rerun(1);
    c.that(reference == rerun(1), "rerun with one worker differs");
    c.that(reference == rerun(4), "rerun with four workers differs");

    Outcome {
        id: 6,
        name: "property suites",
        failures: c.failures,
        detail: "SSA conservation and channel counts, P clamping and absorption, LHS bins, acquisition symmetry, tau in [1, t], zero-tau cost, bit-identical reruns (1 and 4 workers)".into(),
        secs: start.elapsed().as_secs_f64(),
    }
}

fn criterion_7(table: &PolicyTable) -> Outcome {
    let start = Instant::now();
    let cmp = paired_compare(&table.optimal, &table.threshold_p).expect("same scenarios");
    let mut c = Check::new();
    c.that(
        cmp.first_better > 0.70,
        format!("Optimal cheaper on only {:.1}% of paths", 100.0 * cmp.first_better),
    );
    Outcome {
        id: 7,
        name: "paired comparison vs Threshold-P",
        failures: c.failures,
        detail: format!(
            "Optimal strictly cheaper on {:.1}% of paths, ties {:.1}%, mean difference {:.3}",
            100.0 * cmp.first_better,
            100.0 * cmp.ties,
            cmp.mean_difference
        ),
        secs: start.elapsed().as_secs_f64(),
    }
}

fn main() {
    let scenarios = ScenarioSet::simulate(
        x0(),
        N_PATHS,
        HORIZON,
        &EpidemicParams::case_study(),
        ModelVariant::Full3d,
        SEED,
    )
    .expect("scenarios");
    let mut outcomes = Vec::new();
    let (c1, table) = criterion_1(&scenarios);
    outcomes.push(c1);
    outcomes.push(criterion_2(&scenarios, &table.optimal));
    outcomes.push(criterion_3());
    outcomes.push(criterion_4());
    outcomes.push(criterion_5());
    outcomes.push(criterion_6());
    outcomes.push(criterion_7(&table));

    println!("\nacceptance (master seed {SEED})");
    for o in &outcomes {
        let status = if o.failures.is_empty() { "PASS" } else { "FAIL" };
        println!("[{status}] {}. {} ({:.0}s): {}", o.id, o.name, o.secs, o.detail);
        for f in &o.failures {
            println!("         - {f}");
        }
    }
    let failed = outcomes.iter().filter(|o| !o.failures.is_empty()).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
