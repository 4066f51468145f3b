//! Acceptance suite. Prints one PASS/FAIL line per criterion with its
//! runtime against the budget; a criterion passes only if both hold.
//!
//! `cargo test --release --test acceptance -- 2 5` runs a subset.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use common::{angle_diff, one_agent, two_agent_marginal, Grid, RssModel};
use orispawn::eval::{
    benchmark_complexity, cumulative_frequency, run_experiment, BenchConfig, BenchPoint, ExperimentConfig,
    ExperimentReport, MethodSpec, OnError, ScenarioSpec,
};
use orispawn::inference::{run_spawn, AnchorStage, InferenceConfig, InferenceMode, OrientationProposal, Pairing, Spawn};
use orispawn::measurement::{
    log_likelihood, predict_rss, synthesize_measurements, AntennaModel, MeasurementSet, ModelParams, ParamsDoc,
};
use orispawn::model_selection::{estimate_parameters, select_model, FitOptions};
use orispawn::scenario::{
    angle_error, generate_library_scenario, generate_random_scenario, wrap_angle, LibraryConfig, NodeState,
    OrientationMode, Scenario, SupportBox,
};

// criterion 1
const C1_POS_TOL_M: f64 = 0.05;
const C1_ORI_TOL_DEG: f64 = 10.0;
const C1_GEOMETRIES: u64 = 20;
const C1_PARTICLES: usize = 5000;
const C1_GRID_M: f64 = 0.02;
const C1_GRID_ORIENT: usize = 36;
const C1_MESSAGE_GRID_M: f64 = 0.1;
// criteria 2 to 4
const C2_RUNS: usize = 50;
const C2_NEGLECT_FACTOR: f64 = 1.5;
const C3_RUNS: usize = 50;
const C4_RUNS: usize = 1;
const C4_DISCRETE_FACTOR: f64 = 1.3;
const C4_NEGLECT_FACTOR: f64 = 2.0;
// criteria 5 and 6
const C5_NOISELESS_TOL: f64 = 1e-6;
const C5_SE_MULTIPLE: f64 = 3.0;
const C5_SEEDS: u64 = 100;
const C5_REQUIRED: usize = 95;
const C6_SEEDS: u64 = 20;
const C6_REQUIRED: usize = 19;
const C6_MIN_LINKS: usize = 10_000;
// criterion 7
const BAND_PARTICLES: (f64, f64) = (1.6, 2.4);
const BAND_ORIENT: (f64, f64) = (2.8, 5.2);
const BAND_AGENTS: (f64, f64) = (3.2, 4.8);
// criterion 8
const LIK_QUADRATURE_TOL: f64 = 1e-6;
const NORMALIZATION_TOL: f64 = 1e-12;

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict { ok, detail: detail.into() }
}

fn criterion(n: u32, title: &str, budget_s: Option<f64>, f: impl FnOnce() -> Verdict) -> bool {
    let t = Instant::now();
    let v = f();
    let secs = t.elapsed().as_secs_f64();
    let in_time = budget_s.map_or(true, |b| secs <= b);
    let budget = match budget_s {
        Some(b) if in_time => format!("runtime {secs:.0} s, budget {b:.0} s"),
        Some(b) => format!("runtime {secs:.0} s OVER budget {b:.0} s"),
        None => format!("runtime {secs:.0} s"),
    };
    let pass = v.ok && in_time;
    println!("{} criterion {n} ({title}): {} [{budget}]", if pass { "PASS" } else { "FAIL" }, v.detail);
    pass
}

fn model1() -> (AntennaModel, ModelParams) {
    (AntennaModel::model1(), ModelParams::model1_default(1.0))
}

fn model2() -> (AntennaModel, ModelParams) {
    (AntennaModel::model2(), ModelParams::model2_default())
}

fn quadrants() -> Vec<f64> {
    vec![0.0, PI / 2.0, -PI, -PI / 2.0]
}

fn anchor_links(sc: &Scenario, meas: &MeasurementSet, agent: usize) -> Vec<((f64, f64), f64)> {
    meas.anchor_links
        .iter()
        .filter(|l| l.agent == agent)
        .map(|l| {
            let a = sc.node(l.anchor).position;
            ((a.x, a.y), l.z_db)
        })
        .collect()
}

fn c1_oracle() -> Verdict {
    let (model, params) = model1();
    let oracle = RssModel::model1(1.0);
    let support = SupportBox::square(5.0).unwrap();
    let fine = Grid::new((0.0, 0.0), (5.0, 5.0), C1_GRID_M, C1_GRID_ORIENT);
    let coarse = Grid::new((0.0, 0.0), (5.0, 5.0), C1_MESSAGE_GRID_M, C1_GRID_ORIENT);
    let mut good = [0u64; 2];
    let mut misses = Vec::new();
    let (mut worst_pos, mut worst_ori) = (0.0f64, 0.0f64);
    for (k, n_agents) in [1usize, 2].into_iter().enumerate() {
        for g in 0..C1_GEOMETRIES {
            let sc = generate_random_scenario(n_agents, 3, &support, &OrientationMode::Continuous, 1000 + g).unwrap();
            let meas = synthesize_measurements(&sc, &model, &params, 2000 + g).unwrap();
            let ids = sc.agent_ids().to_vec();
            let exact = if n_agents == 1 {
                vec![one_agent(&oracle, &anchor_links(&sc, &meas, ids[0]), &fine)]
            } else {
                let (a1, a2) = (anchor_links(&sc, &meas, ids[0]), anchor_links(&sc, &meas, ids[1]));
                let z = meas.agent_links[0].z_db;
                vec![
                    two_agent_marginal(&oracle, &a1, &a2, z, &fine, &coarse),
                    two_agent_marginal(&oracle, &a2, &a1, z, &fine, &coarse),
                ]
            };
            let cfg = InferenceConfig {
                n_particles: C1_PARTICLES,
                n_iterations: 1,
                pairing: Pairing::FullCross,
                early_stop_m: None,
                mcmc_steps: 100,
                seed: g,
                ..InferenceConfig::new(InferenceMode::Continuous)
            };
            let out = run_spawn(&sc, &meas, &model, &params, &cfg).unwrap();
            let mut all = true;
            for (e, o) in out.estimates.iter().zip(&exact) {
                let dp = (e.position.x - o.mean.0).hypot(e.position.y - o.mean.1);
                let dphi = angle_diff(e.orientation.unwrap(), o.phi).to_degrees();
                worst_pos = worst_pos.max(dp);
                worst_ori = worst_ori.max(dphi);
                if dp >= C1_POS_TOL_M || dphi >= C1_ORI_TOL_DEG {
                    all = false;
                    misses.push(format!(
                        "{n_agents}-agent geometry {g} agent {}: {dp:.3} m, {dphi:.1} deg (resultant {:.2})",
                        e.id, o.resultant
                    ));
                }
            }
            good[k] += u64::from(all);
        }
    }
    for m in &misses {
        println!("  miss: {m}");
    }
    let ok = good.iter().all(|&c| c == C1_GEOMETRIES);
    verdict(
        ok,
        format!(
            "1 agent {}/{C1_GEOMETRIES}, 2 agents {}/{C1_GEOMETRIES} geometries within {C1_POS_TOL_M} m and {C1_ORI_TOL_DEG} deg; worst {worst_pos:.3} m, {worst_ori:.1} deg",
            good[0], good[1]
        ),
    )
}

fn method(mode: InferenceMode, n_particles: usize) -> MethodSpec {
    MethodSpec::new(InferenceConfig { n_particles, ..InferenceConfig::new(mode) })
}

fn experiment(scenario: ScenarioSpec, (model, params): (AntennaModel, ModelParams), methods: Vec<MethodSpec>, runs: usize, seed: u64) -> ExperimentReport {
    let cfg = ExperimentConfig {
        scenario,
        model: ParamsDoc::new(&model, &params),
        methods,
        runs,
        base_seed: seed,
        on_error: OnError::Abort,
        refit_neglect: true,
        parallel_runs: true,
    };
    run_experiment(&cfg).unwrap()
}

fn rmse(r: &ExperimentReport, label: &str) -> f64 {
    r.summary(label).unwrap_or_else(|| panic!("no method {label}")).rmse_position_m
}

fn random_25(orientations: OrientationMode) -> ScenarioSpec {
    ScenarioSpec::Random {
        n_agents: 25,
        n_anchors: 5,
        side_m: 5.0,
        orientations,
        anchor_pattern: Default::default(),
    }
}

fn c2_ordering() -> Verdict {
    use InferenceMode::*;
    let mut methods = Vec::new();
    for n in [500, 2000] {
        for mode in [KnownOrientation, Discrete, Continuous, NeglectOrientation] {
            methods.push(method(mode, n));
        }
    }
    let r = experiment(random_25(OrientationMode::Continuous), model1(), methods, C2_RUNS, 1);
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [500, 2000] {
        let (known, disc, neg) = (rmse(&r, &format!("known_{n}")), rmse(&r, &format!("discrete_{n}")), rmse(&r, &format!("neglect_{n}")));
        let cont = rmse(&r, &format!("continuous_{n}"));
        ok &= known <= disc && neg > C2_NEGLECT_FACTOR * known;
        parts.push(format!("N_P={n}: known {known:.3}, discrete {disc:.3}, continuous {cont:.3}, neglect {neg:.3}"));
    }
    ok &= rmse(&r, "continuous_2000") < rmse(&r, "continuous_500");
    verdict(ok, format!("RMSE_p [m] over {C2_RUNS} runs; {}", parts.join("; ")))
}

fn c3_prior() -> Verdict {
    let set = quadrants();
    let pair = |stage: AnchorStage| {
        let disc = MethodSpec::labelled(
            "discrete",
            InferenceConfig { n_particles: 500, orientation_set: set.clone(), anchor_stage: stage, ..InferenceConfig::new(InferenceMode::Discrete) },
        );
        let cont = MethodSpec::labelled(
            "continuous_prior",
            InferenceConfig {
                n_particles: 500,
                orientation_set: set.clone(),
                proposal: OrientationProposal::DiscreteUniform,
                anchor_stage: stage,
                ..InferenceConfig::new(InferenceMode::Continuous)
            },
        );
        let r = experiment(random_25(OrientationMode::FiniteSet(set.clone())), model1(), vec![disc, cont], C3_RUNS, 3);
        (rmse(&r, "discrete"), rmse(&r, "continuous_prior"))
    };
    // single importance step at the anchors; tempering lets the continuous
    // mode catch up, so that pair is reported but not judged
    let (d, c) = pair(AnchorStage::SingleShot);
    let (dt, ct) = pair(AnchorStage::Tempered);
    verdict(
        d <= c,
        format!("RMSE_p over {C3_RUNS} runs: discrete |O|=4 {d:.3} m, continuous with discrete prior {c:.3} m (tempered anchor stage: {dt:.3} m vs {ct:.3} m)"),
    )
}

fn c4_library() -> Verdict {
    let scenario = ScenarioSpec::Library { geometry: LibraryConfig::default(), length_scale: 0.5 };
    let disc = MethodSpec::new(InferenceConfig {
        n_particles: 1000,
        orientation_set: quadrants(),
        ..InferenceConfig::new(InferenceMode::Discrete)
    });
    let methods = vec![method(InferenceMode::KnownOrientation, 1000), disc, method(InferenceMode::NeglectOrientation, 1000)];
    let r = experiment(scenario, model2(), methods, C4_RUNS, 4);
    let (k, d, n) = (rmse(&r, "known_1000"), rmse(&r, "discrete_1000"), rmse(&r, "neglect_1000"));
    let ok = d <= C4_DISCRETE_FACTOR * k && n >= C4_NEGLECT_FACTOR * k;
    verdict(
        ok,
        format!(
            "RMSE_p over {C4_RUNS} runs: known {k:.3} m, discrete {d:.3} m (ratio {:.2}, limit {C4_DISCRETE_FACTOR}), neglect {n:.3} m (ratio {:.2}, floor {C4_NEGLECT_FACTOR})",
            d / k,
            n / k
        ),
    )
}

/// `[P, n, α₁, β₁, …]` from the polar pattern parameters.
fn linear_params(p: &ModelParams, orders: &[u32]) -> Vec<f64> {
    let mut v = vec![p.p_db, p.n];
    for (k, _) in orders.iter().enumerate() {
        let (a, b) = (p.xi[2 * k], p.xi[2 * k + 1]);
        v.push(a * b.cos());
        v.push(-a * b.sin());
    }
    v
}

/// Regressors of one link: `1`, `-10 log10(d/d0)`, then `cos kψ`, `sin kψ`
/// summed over the directive ends, ψ the bearing to the other node minus the
/// node's orientation. Stacked nodes carry no pattern term.
fn design_row(i: &NodeState, j: &NodeState, orders: &[u32], d0: f64) -> Vec<f64> {
    let d = (j.position - i.position).norm();
    let mut row = vec![1.0, -10.0 * (d / d0).log10()];
    let (dx, dy) = (j.position.x - i.position.x, j.position.y - i.position.y);
    let stacked = dx.hypot(dy) < 1e-9;
    for &k in orders {
        let (mut c, mut s) = (0.0, 0.0);
        if !stacked {
            for (node, bearing) in [(i, dy.atan2(dx)), (j, (-dy).atan2(-dx))] {
                if !node.is_anchor() {
                    let psi = k as f64 * (bearing - node.orientation());
                    c += psi.cos();
                    s += psi.sin();
                }
            }
        }
        row.push(c);
        row.push(s);
    }
    row
}

/// Standard errors of `[P, n, α, β, …]` for least squares at noise `sigma`.
fn ls_standard_errors(sc: &Scenario, meas: &MeasurementSet, orders: &[u32], d0: f64, sigma: f64) -> Vec<f64> {
    let p = 2 + 2 * orders.len();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let pairs = meas
        .anchor_links
        .iter()
        .map(|l| (l.anchor, l.agent))
        .chain(meas.agent_links.iter().map(|l| (l.i, l.j)));
    for (a, b) in pairs {
        let r = DVector::from_vec(design_row(sc.node(a), sc.node(b), orders, d0));
        xtx += &r * r.transpose();
    }
    let cov = xtx.try_inverse().expect("design has full rank") * (sigma * sigma);
    (0..p).map(|k| cov[(k, k)].sqrt()).collect()
}

fn c5_recovery() -> Verdict {
    // noiseless model 1 on a random layout
    let (m1, p1) = model1();
    let truth = p1.clone().with_sigma(1e-300);
    let sc = generate_random_scenario(25, 5, &SupportBox::square(5.0).unwrap(), &OrientationMode::Continuous, 5).unwrap();
    let meas = synthesize_measurements(&sc, &m1, &truth, 6).unwrap();
    let fit = estimate_parameters(&meas, &sc, &m1, &FitOptions::default()).unwrap();
    let mut dev = (fit.params.p_db - truth.p_db).abs().max((fit.params.n - truth.n).abs());
    for (a, b) in fit.params.xi.iter().zip(&truth.xi) {
        dev = dev.max((a - b).abs());
    }
    dev = dev.max((fit.params.sigma_db - truth.sigma_db).abs());
    let noiseless_ok = dev < C5_NOISELESS_TOL;

    // noisy model 2 on the library
    let (m2, p2) = model2();
    let lib = generate_library_scenario(&LibraryConfig::default()).unwrap();
    let orders = m2.orders().to_vec();
    let truth_lin = linear_params(&p2, &orders);
    let mut se = Vec::new();
    let mut within = 0;
    let mut n_links = 0;
    let mut worst = 0.0f64;
    for s in 0..C5_SEEDS {
        let meas = synthesize_measurements(&lib, &m2, &p2, 500 + s).unwrap();
        if se.is_empty() {
            se = ls_standard_errors(&lib, &meas, &orders, p2.d0_m, p2.sigma_db);
            n_links = meas.len();
            se.push(p2.sigma_db / (2.0 * n_links as f64).sqrt());
        }
        let fit = estimate_parameters(&meas, &lib, &m2, &FitOptions::default()).unwrap();
        let mut est = linear_params(&fit.params, &orders);
        est.push(fit.params.sigma_db);
        let mut tru = truth_lin.clone();
        tru.push(p2.sigma_db);
        let z = est.iter().zip(&tru).zip(&se).map(|((e, t), s)| ((e - t) / s).abs()).fold(0.0, f64::max);
        worst = worst.max(z);
        within += usize::from(z <= C5_SE_MULTIPLE);
    }
    verdict(
        noiseless_ok && within >= C5_REQUIRED,
        format!(
            "noiseless max deviation {dev:.1e} (tol {C5_NOISELESS_TOL:.0e}); library ({n_links} links) all parameters within {C5_SE_MULTIPLE} SE in {within}/{C5_SEEDS} seeds (need {C5_REQUIRED}), worst {worst:.2} SE"
        ),
    )
}

fn c6_selection() -> Verdict {
    let (m2, p2) = model2();
    let lib = generate_library_scenario(&LibraryConfig::default().scaled_length(0.5)).unwrap();
    let candidates = [AntennaModel::uniform(), AntennaModel::model1(), AntennaModel::model2()];
    let mut picked = 0;
    let mut n_links = 0;
    let mut min_odds = f64::INFINITY;
    for s in 0..C6_SEEDS {
        let meas = synthesize_measurements(&lib, &m2, &p2, 600 + s).unwrap();
        n_links = meas.len();
        let sel = select_model(&meas, &lib, &candidates, &FitOptions::default()).unwrap();
        picked += usize::from(sel.best().model_k == 2);
        min_odds = min_odds.min(sel.log_odds(2, 1));
    }
    verdict(
        picked >= C6_REQUIRED && n_links >= C6_MIN_LINKS,
        format!("model 2 selected in {picked}/{C6_SEEDS} seeds (need {C6_REQUIRED}) with {n_links} links; smallest ln odds vs model 1 {min_odds:.1}"),
    )
}

fn c7_scaling() -> Verdict {
    use InferenceMode::*;
    let p = |mode, n_particles, n_agents, n_orient| BenchPoint { mode, n_particles, n_agents, n_orient };
    let cfg = BenchConfig {
        points: vec![
            p(Continuous, 1000, 25, 8),
            p(Continuous, 2000, 25, 8),
            p(Continuous, 1000, 50, 8),
            p(Discrete, 500, 25, 4),
            p(Discrete, 500, 25, 8),
        ],
        // short iterations need enough samples for a stable median
        repetitions: 15,
        ..BenchConfig::default()
    };
    let t: Vec<f64> = benchmark_complexity(&cfg).unwrap().iter().map(|r| r.per_iteration_s).collect();
    let checks = [
        ("N_P 1000->2000", t[1] / t[0], BAND_PARTICLES),
        ("|C| 25->50", t[2] / t[0], BAND_AGENTS),
        ("|O| 4->8", t[4] / t[3], BAND_ORIENT),
    ];
    let ok = checks.iter().all(|&(_, r, (lo, hi))| (lo..=hi).contains(&r));
    let detail: Vec<String> = checks.iter().map(|(n, r, (lo, hi))| format!("{n} ratio {r:.2} in [{lo}, {hi}]")).collect();
    verdict(ok, detail.join("; "))
}

fn runner() -> TestRunner {
    TestRunner::new_with_rng(Config { cases: 256, failure_persistence: None, ..Config::default() }, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn c8_properties() -> Verdict {
    let mut failed: Vec<String> = Vec::new();
    let mut check = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failed.push(format!("{name}: {e}"));
        }
    };

    // likelihood integrates to one over z
    let (m2, p2) = model2();
    let coords = (0.0..5.0f64, 0.0..5.0f64, -PI..PI, 0.0..5.0f64, 0.0..5.0f64, -PI..PI);
    check(
        "likelihood normalization",
        runner()
            .run(&coords, |(x1, y1, f1, x2, y2, f2)| {
                prop_assume!((x1 - x2).hypot(y1 - y2) > 0.05);
                let i = NodeState::agent(0, &[x1, y1], f1).unwrap();
                let j = NodeState::agent(1, &[x2, y2], f2).unwrap();
                let mu = predict_rss(&m2, &p2, &i, &j).unwrap();
                let (lo, hi, n) = (mu - 12.0 * p2.sigma_db, mu + 12.0 * p2.sigma_db, 4000);
                let h = (hi - lo) / n as f64;
                let f = |z: f64| log_likelihood(z, &i, &j, &m2, &p2).unwrap().exp();
                let mut s = f(lo) + f(hi);
                for k in 1..n {
                    s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
                }
                let integral = s * h / 3.0;
                prop_assert!((integral - 1.0).abs() < LIK_QUADRATURE_TOL, "integral {}", integral);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    // belief and PMF normalization through the iterations
    let (m1, p1) = model1();
    let support = SupportBox::square(5.0).unwrap();
    let sc = generate_random_scenario(4, 4, &support, &OrientationMode::Continuous, 80).unwrap();
    let meas = synthesize_measurements(&sc, &m1, &p1, 81).unwrap();
    let mut worst = 0.0f64;
    for mode in [InferenceMode::Continuous, InferenceMode::Discrete, InferenceMode::KnownOrientation, InferenceMode::NeglectOrientation] {
        let cfg = InferenceConfig { n_particles: 300, seed: 3, ..InferenceConfig::new(mode) };
        let mut s = Spawn::init_beliefs(&sc, &meas, &m1, &p1, &cfg).unwrap();
        s.incorporate_anchors().unwrap();
        for _ in 0..4 {
            s.iterate().unwrap();
            for a in s.agents() {
                worst = worst.max((a.particles.weights.iter().sum::<f64>() - 1.0).abs());
                if let Some(p) = &a.pmf {
                    worst = worst.max((p.probs().iter().sum::<f64>() - 1.0).abs());
                }
            }
        }
    }
    check(
        "belief normalization",
        if worst < NORMALIZATION_TOL { Ok(()) } else { Err(format!("deviation {worst:.1e}")) },
    );

    // |O| = 1 reduces to known orientation
    let phi = 0.7;
    let sc1 = generate_random_scenario(4, 4, &support, &OrientationMode::FiniteSet(vec![phi]), 82).unwrap();
    let meas1 = synthesize_measurements(&sc1, &m1, &p1, 83).unwrap();
    let single = InferenceConfig { n_particles: 300, orientation_set: vec![phi], ..InferenceConfig::new(InferenceMode::Discrete) };
    let known = InferenceConfig { n_particles: 300, ..InferenceConfig::new(InferenceMode::KnownOrientation) };
    let a = run_spawn(&sc1, &meas1, &m1, &p1, &single).unwrap();
    let b = run_spawn(&sc1, &meas1, &m1, &p1, &known).unwrap();
    check(
        "single orientation equals known",
        if a.estimates.iter().zip(&b.estimates).all(|(x, y)| x.position == y.position) {
            Ok(())
        } else {
            Err("positions differ".into())
        },
    );

    // zero amplitude reduces to neglect
    let zero = ModelParams::new(p1.p_db, p1.n, vec![0.0, 0.0], p1.sigma_db, p1.d0_m).unwrap();
    let meas0 = synthesize_measurements(&sc, &m1, &zero, 84).unwrap();
    let disc = InferenceConfig { n_particles: 300, ..InferenceConfig::new(InferenceMode::Discrete) };
    let mut s = Spawn::init_beliefs(&sc, &meas0, &m1, &zero, &disc).unwrap();
    s.incorporate_anchors().unwrap();
    let mut pmf_dev = 0.0f64;
    for _ in 0..3 {
        s.iterate().unwrap();
        for a in s.agents() {
            for (p, q) in a.pmf.as_ref().unwrap().probs().iter().zip(a.anchor_pmf.as_ref().unwrap().probs()) {
                pmf_dev = pmf_dev.max((p - q).abs());
            }
        }
    }
    // a uniform PMF over a symmetric set has no mean orientation, so compare beliefs directly
    let neglect = InferenceConfig { n_particles: 300, ..InferenceConfig::new(InferenceMode::NeglectOrientation) };
    let mut t = Spawn::init_beliefs(&sc, &meas0, &m1, &zero, &neglect).unwrap();
    t.incorporate_anchors().unwrap();
    for _ in 0..3 {
        t.iterate().unwrap();
    }
    let pos_dev = s.mmse_positions().iter().zip(t.mmse_positions()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    check(
        "zero amplitude equals neglect",
        if pmf_dev < NORMALIZATION_TOL && pos_dev < 1e-9 {
            Ok(())
        } else {
            Err(format!("PMF drift {pmf_dev:.1e}, position difference {pos_dev:.1e} m"))
        },
    );

    // angle wrapping
    check(
        "angle wrap",
        runner()
            .run(&(-1e4..1e4f64, -1e4..1e4f64), |(x, y)| {
                let w = wrap_angle(x).unwrap();
                prop_assert!((-PI..PI).contains(&w));
                let turns = (x - w) / (2.0 * PI);
                prop_assert!((turns - turns.round()).abs() < 1e-9);
                // signed error on (-π, π], antisymmetric away from the ±π seam
                let (e, r) = (angle_error(x, y), angle_error(y, x));
                prop_assert!(e > -PI && e <= PI);
                prop_assert!((e.abs() - r.abs()).abs() < 1e-9);
                if e.abs() < PI - 1e-9 {
                    prop_assert!((e + r).abs() < 1e-9);
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    // determinism of the experiment outputs
    let small = || {
        experiment(
            ScenarioSpec::Random { n_agents: 5, n_anchors: 4, side_m: 5.0, orientations: OrientationMode::Continuous, anchor_pattern: Default::default() },
            model1(),
            vec![method(InferenceMode::Continuous, 100), method(InferenceMode::Discrete, 100)],
            3,
            9,
        )
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        small().write(d.path()).unwrap();
    }
    let mut same = true;
    for f in std::fs::read_dir(dirs[0].path()).unwrap() {
        let name = f.unwrap().file_name();
        if name == "timing.json" {
            continue;
        }
        same &= std::fs::read(dirs[0].path().join(&name)).ok() == std::fs::read(dirs[1].path().join(&name)).ok();
    }
    check("determinism", if same { Ok(()) } else { Err("outputs differ between identical runs".into()) });

    // cumulative frequency
    check(
        "CF monotone",
        runner()
            .run(&prop::collection::vec(0.0..10.0f64, 1..200), |v| {
                let cf = cumulative_frequency(&v).unwrap();
                prop_assert!(cf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
                prop_assert_eq!(cf.last().unwrap().1, 1.0);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let n_failed = failed.len();
    for f in &failed {
        println!("  property failed: {f}");
    }
    verdict(n_failed == 0, format!("{} of 7 property checks green", 7 - n_failed))
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |n: u32| wanted.is_empty() || wanted.contains(&n);
    let mut all = true;
    if run(1) {
        all &= criterion(1, "oracle equivalence", Some(300.0), c1_oracle);
    }
    if run(2) {
        all &= criterion(2, "method ordering", Some(900.0), c2_ordering);
    }
    if run(3) {
        all &= criterion(3, "orientation prior", Some(600.0), c3_prior);
    }
    if run(4) {
        all &= criterion(4, "library ratios", Some(1800.0), c4_library);
    }
    if run(5) {
        all &= criterion(5, "parameter recovery", Some(300.0), c5_recovery);
    }
    if run(6) {
        all &= criterion(6, "model selection", Some(300.0), c6_selection);
    }
    if run(7) {
        all &= criterion(7, "complexity scaling", Some(600.0), c7_scaling);
    }
    if run(8) {
        all &= criterion(8, "property suites", None, c8_properties);
    }
    if !all {
        std::process::exit(1);
    }
}
