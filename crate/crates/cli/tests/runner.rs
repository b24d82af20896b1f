use std::path::Path;

use esigo_cli::config::{self, Experiment};
use esigo_cli::runner::{compare_discrete_ode, run_experiment, RunOptions};
use esigo_core::discrete::theta_distance;
use esigo_core::flow::{integrate, EsIgoField, SolverSettings, StopCriteria};
use esigo_core::{PointSet, RhsMode, WeightSpec};

fn parse(text: &str) -> config::LoadedConfig {
    config::parse(text, Path::new("inline.json")).unwrap()
}

fn no_files() -> RunOptions {
    RunOptions { out_dir: None }
}

#[test]
fn shipped_config_names_every_criterion() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/acceptance.json");
    let cfg = config::load(&path).unwrap();
    for n in 1..=10 {
        let prefix = format!("c{n}-");
        assert!(
            cfg.experiments.iter().any(|e| e.spec.id().starts_with(&prefix)),
            "criterion {n} has no experiment"
        );
    }
}

const LADDER: &str = r#"{"experiments": [
  {"id": "ladder", "mode": "discrete", "objective": {"name": "sphere", "dim": 2},
   "weights": {"kind": "truncation-linear"}, "theta0": {"m": [1, 1], "v": 1},
   "n": 20, "eta": [0.0, 0.1], "horizon": 2, "seeds": [5],
   "reference": {"points": {"n": 2048}, "outputs": 20}}
]}"#;

#[test]
fn zero_step_distance_is_the_constant_path_distance() {
    let cfg = parse(LADDER);
    let Experiment::Discrete(spec) = &cfg.experiments[0].spec else {
        panic!("discrete spec expected")
    };
    let rows = compare_discrete_ode(spec).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].eta, 0.0);

    // the reference rebuilt by hand from the same ingredients
    let obj = spec.objective.build().unwrap();
    let w = esigo_core::discrete::expected_weight(
        &WeightSpec::truncation_linear().midpoint_weights(20),
        20,
    )
    .unwrap();
    let pts = PointSet::sobol_normal(2048, 2, 1).unwrap();
    let field = EsIgoField::new(&obj, &w, &pts, RhsMode::Exact).unwrap();
    let stop = StopCriteria {
        convergence_factor: 0.0,
        divergence_factor: f64::INFINITY,
        ..StopCriteria::uniform(2.0, 20)
    };
    let theta0 = spec.theta0.build().unwrap();
    let reference = integrate(&theta0, &field, &SolverSettings::default(), &stop).unwrap();
    let expected = reference
        .records
        .iter()
        .map(|r| theta_distance(&theta0, &r.theta))
        .fold(0.0, f64::max);
    assert!((rows[0].median - expected).abs() <= 1e-12 * expected);
    assert_eq!(rows[0].q25, rows[0].q75);
}

#[test]
fn comparison_needs_two_step_sizes() {
    let text = LADDER.replace("[0.0, 0.1]", "[0.1]");
    let err = config::parse(&text, Path::new("c.json")).unwrap_err().to_string();
    assert!(err.contains("at least 2 eta"), "{err}");
    assert!(err.starts_with("c.json:2:"), "{err}");
}

#[test]
fn zero_alpha_weight_keeps_the_ode_variance_constant() {
    let cfg = parse(
        r#"{"experiments": [
  {"id": "flat", "mode": "ode-exact", "objective": {"name": "linear", "dim": 1},
   "weight": {"kind": "finite", "weights": [1.0, 0.0]}, "theta0": {"m": [0], "v": 2},
   "points": {"n": 8192}, "stop": {"horizon": 5, "outputs": 10}}
]}"#,
    );
    let r = run_experiment(&cfg.experiments[0].spec, &no_files()).unwrap();
    let slope: f64 = r
        .summary
        .iter()
        .find(|(k, _)| k == "fitted slope of ln v")
        .map(|(_, v)| v.split_whitespace().next().unwrap().parse().unwrap())
        .unwrap();
    assert!(slope.abs() < 1e-3, "slope {slope}");
}

#[test]
fn zero_alpha_discrete_variance_stays_near_start() {
    let cfg = parse(
        r#"{"experiments": [
  {"id": "walk", "mode": "discrete", "objective": {"name": "linear", "dim": 1},
   "weights": {"ranked": [1.0, 0.0]}, "theta0": {"m": [0], "v": 1},
   "n": 2, "eta": [0.01], "horizon": 1, "seeds": [1, 2, 3, 4, 5, 6, 7, 8],
   "checks": [{"check": "no-domain-error"}]}
]}"#,
    );
    let r = run_experiment(&cfg.experiments[0].spec, &no_files()).unwrap();
    assert!(r.pass, "{}", r.render());
}

#[test]
fn transform_report_flags_identical_trajectories() {
    let cfg = parse(
        r#"{"experiments": [
  {"id": "inv", "mode": "transform-invariance", "objective": {"name": "sphere", "dim": 2},
   "weight": {"kind": "truncation-linear"}, "theta0": {"m": [1, -1], "v": 0.3},
   "points": {"n": 1024}, "stop": {"horizon": 4, "outputs": 8},
   "discrete": {"eta": 0.1, "n": 8, "iterations": 30, "seed": 2}}
]}"#,
    );
    let r = run_experiment(&cfg.experiments[0].spec, &no_files()).unwrap();
    assert!(r.pass);
    assert!(r
        .summary
        .iter()
        .any(|(k, v)| k == "trajectories identical" && v == "true"));
}

#[test]
fn unknown_fields_are_rejected() {
    let err = config::parse(
        r#"{"experiments": [{"id": "x", "mode": "b2-report", "weight": {"kind": "truncation-linear"}, "typo": 1}]}"#,
        Path::new("u.json"),
    )
    .unwrap_err()
    .to_string();
    assert!(err.contains("typo"), "{err}");
}

#[test]
fn solver_settings_accept_partial_fields() {
    let cfg = parse(
        r#"{"experiments": [
  {"id": "rk", "mode": "ode-exact", "objective": {"name": "sphere", "dim": 2},
   "weight": {"kind": "truncation-linear"}, "theta0": {"m": [1, 0], "v": 0.5},
   "points": {"n": 1024}, "solver": {"method": {"method": "dopri5", "rtol": 1e-6}},
   "stop": {"horizon": 2, "outputs": 4}},
  {"id": "rk4", "mode": "ode-exact", "objective": {"name": "sphere", "dim": 2},
   "weight": {"kind": "truncation-linear"}, "theta0": {"m": [1, 0], "v": 0.5},
   "points": {"n": 1024}, "solver": {"method": {"method": "rk4", "h": 0.05}, "coordinates": "variance"},
   "stop": {"horizon": 2, "outputs": 4}}
]}"#,
    );
    for e in &cfg.experiments {
        let r = run_experiment(&e.spec, &no_files()).unwrap();
        assert_eq!(r.status.as_deref(), Some("budget-exhausted"));
    }
}
