//! Experiment configuration files.
//!
//! A config is a JSON object `{"experiments": [...]}`. Every experiment has a
//! unique `id`, a `mode` selecting one of the variants of [`Experiment`] and an
//! optional `outputs` prefix (defaults to the id) under the output directory.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use esigo_core::discrete::DiscreteWeights;
use esigo_core::flow::{Coordinates, SolverSettings, StopCriteria};
use esigo_core::objectives::{Objective, ObjectiveDescriptor, Transform};
use esigo_core::ode::Method;
use esigo_core::weights::{WeightDescriptor, WeightSpec};
use esigo_core::{PointSet, RhsMode, ThetaIso};
use serde::Deserialize;

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiments: Vec<Experiment>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Experiment {
    OdeRank(OdeSpec),
    OdeExact(OdeSpec),
    Discrete(DiscreteSpec),
    ExpectedUpdateCheck(ExpectedUpdateSpec),
    B2Report(B2Spec),
    TransformInvariance(TransformSpec),
    CoordinateInvariance(CoordinateSpec),
    DriftCheck(DriftSpec),
    SlopeCheck(SlopeSpec),
    OracleCheck(OracleSpec),
}

impl Experiment {
    pub fn id(&self) -> &str {
        self.common().id
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            Self::OdeRank(_) => "ode-rank",
            Self::OdeExact(_) => "ode-exact",
            Self::Discrete(_) => "discrete",
            Self::ExpectedUpdateCheck(_) => "expected-update-check",
            Self::B2Report(_) => "b2-report",
            Self::TransformInvariance(_) => "transform-invariance",
            Self::CoordinateInvariance(_) => "coordinate-invariance",
            Self::DriftCheck(_) => "drift-check",
            Self::SlopeCheck(_) => "slope-check",
            Self::OracleCheck(_) => "oracle-check",
        }
    }

    pub fn common(&self) -> Common<'_> {
        macro_rules! common {
            ($s:expr) => {
                Common {
                    id: &$s.id,
                    outputs: $s.outputs.as_deref(),
                    description: $s.description.as_deref(),
                }
            };
        }
        match self {
            Self::OdeRank(s) | Self::OdeExact(s) => common!(s),
            Self::Discrete(s) => common!(s),
            Self::ExpectedUpdateCheck(s) => common!(s),
            Self::B2Report(s) => common!(s),
            Self::TransformInvariance(s) => common!(s),
            Self::CoordinateInvariance(s) => common!(s),
            Self::DriftCheck(s) => common!(s),
            Self::SlopeCheck(s) => common!(s),
            Self::OracleCheck(s) => common!(s),
        }
    }

    /// Output prefix relative to the output directory.
    pub fn output_prefix(&self) -> &str {
        let c = self.common();
        c.outputs.unwrap_or(c.id)
    }
}

/// Fields shared by every experiment.
#[derive(Debug, Clone, Copy)]
pub struct Common<'a> {
    pub id: &'a str,
    pub outputs: Option<&'a str>,
    /// Free text printed with the report.
    pub description: Option<&'a str>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSpec {
    pub m: Vec<f64>,
    pub v: f64,
}

impl ThetaSpec {
    pub fn build(&self) -> esigo_core::Result<ThetaIso> {
        ThetaIso::new(self.m.clone(), self.v)
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsSpec {
    #[serde(default = "default_points")]
    pub n: usize,
    #[serde(default = "default_point_seed")]
    pub seed: u32,
}

impl Default for PointsSpec {
    fn default() -> Self {
        Self {
            n: default_points(),
            seed: default_point_seed(),
        }
    }
}

impl PointsSpec {
    pub fn build(&self, dim: usize) -> esigo_core::Result<PointSet> {
        PointSet::sobol_normal(self.n, dim, self.seed)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopSpec {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Number of equally spaced output times.
    #[serde(default = "default_outputs")]
    pub outputs: usize,
    #[serde(default = "default_convergence_factor")]
    pub convergence_factor: f64,
    #[serde(default)]
    pub convergence_threshold: Option<f64>,
    #[serde(default = "default_divergence_factor")]
    pub divergence_factor: f64,
    #[serde(default)]
    pub xstar: Option<Vec<f64>>,
}

impl Default for StopSpec {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            outputs: default_outputs(),
            convergence_factor: default_convergence_factor(),
            convergence_threshold: None,
            divergence_factor: default_divergence_factor(),
            xstar: None,
        }
    }
}

impl StopSpec {
    pub fn build(&self) -> StopCriteria {
        StopCriteria {
            convergence_factor: self.convergence_factor,
            convergence_threshold: self.convergence_threshold,
            divergence_factor: self.divergence_factor,
            xstar: self.xstar.clone(),
            ..StopCriteria::uniform(self.horizon, self.outputs.max(1))
        }
    }
}

/// Verdicts available to ODE experiments.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OdeCheck {
    /// Final status equals the given one.
    Status { is: esigo_core::Status },
    /// `V(T) <= max * V(0)`.
    LyapunovRatio { max: f64 },
    /// `V` strictly decreases between consecutive records.
    LyapunovDecreasing,
    /// Least-squares slope of `ln v` over `[0, t_max]` within `rel_tol` of alpha.
    Slope { t_max: f64, rel_tol: f64 },
    /// `|m(T) - x*| <= tol`.
    NearOptimum { tol: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSpec {
    pub id: String,
    #[serde(default)]
    pub outputs: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub objective: ObjectiveDescriptor,
    pub weight: WeightDescriptor,
    pub theta0: ThetaSpec,
    #[serde(default)]
    pub points: PointsSpec,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub stop: StopSpec,
    #[serde(default)]
    pub checks: Vec<OdeCheck>,
    #[serde(default = "yes")]
    pub log_scale: bool,
}

/// Rank weights of a discrete run: an explicit vector or `w((i - 1/2) / n)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DiscreteWeightsSpec {
    Ranked { ranked: Vec<f64> },
    Function(WeightDescriptor),
}

impl DiscreteWeightsSpec {
    pub fn build(&self) -> esigo_core::Result<DiscreteWeights> {
        Ok(match self {
            Self::Ranked { ranked } => DiscreteWeights::Ranked(ranked.clone()),
            Self::Function(d) => DiscreteWeights::Function(d.build()?),
        })
    }
}

/// ODE reference for comparing discrete runs with the flow of the expected weight.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    #[serde(default)]
    pub points: PointsSpec,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Number of equally spaced comparison times in `(0, horizon]`.
    #[serde(default = "default_outputs")]
    pub outputs: usize,
    /// Right-hand side used for the reference; exact when the objective allows it.
    #[serde(default)]
    pub rhs: Option<RhsMode>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DiscreteCheck {
    /// Median sup-distance to the reference strictly decreases along the eta ladder.
    TrackingMonotone,
    /// At least `min_fraction` of runs end with `V <= factor * V(0)`.
    ConvergedFraction { factor: f64, min_fraction: f64 },
    /// Median least-squares slope of `ln v` against `t` is positive.
    VarianceGrows,
    /// No run ended with a domain error.
    NoDomainError,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteSpec {
    pub id: String,
    #[serde(default)]
    pub outputs: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub objective: ObjectiveDescriptor,
    pub weights: DiscreteWeightsSpec,
    pub theta0: ThetaSpec,
    pub n: usize,
    /// Step sizes; two or more with a reference form a ladder.
    pub eta: Vec<f64>,
    /// Simulated time `iterations * eta`.
    pub horizon: f64,
    pub seeds: Vec<u64>,
    #[serde(default = "one")]
    pub output_stride: usize,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default)]
    pub reference: Option<ReferenceSpec>,
    #[serde(default)]
    pub checks: Vec<DiscreteCheck>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedUpdateSpec {
    pub id: String,
    #[serde(default)]
    pub outputs: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub objective: ObjectiveDescriptor,
    pub weights: DiscreteWeightsSpec,
    pub n: usize,
    pub thetas: Vec<ThetaSpec>,
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub points: PointsSpec,
    #[serde(default = "default_rank")]
    pub rhs: RhsMode,
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct B2Spec {
    pub id: String,
    #[serde(default)]
    pub outputs: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub weight: WeightDescriptor,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    /// Expected B2 outcome; the verdict passes when it matches.
    #[serde(default = "yes")]
    pub expect_b2: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteRunSpec {
    pub eta: f64,
    pub n: usize,
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    pub id: String,
    #[serde(default)]
    pub outputs: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    /// Base objective; its own transform is the reference.
    pub objective: ObjectiveDescriptor,
    pub weight: WeightDescriptor,
    pub theta0: ThetaSpec,
    #[serde(default = "default_transforms")]
    pub transforms: Vec<Transform>,
    #[serde(default)]
    pub points: PointsSpec,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub stop: StopSpec,
    #[serde(default)]
    pub discrete: Option<DiscreteRunSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinateSpec {
    pub id: String,
    #[serde(default)]
    pub outputs: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub objective: ObjectiveDescriptor,
    pub weight: WeightDescriptor,
    pub theta0: ThetaSpec,
    #[serde(default = "default_exact")]
    pub rhs: RhsMode,
    #[serde(default)]
    pub points: PointsSpec,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub stop: StopSpec,
    #[serde(default = "default_coord_tol")]
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub id: String,
    #[serde(default)]
    pub outputs: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub objective: ObjectiveDescriptor,
    pub weight: WeightDescriptor,
    #[serde(default)]
    pub points: PointsSpec,
    #[serde(default = "default_rank")]
    pub rhs: RhsMode,
    pub samples: usize,
    /// `v` is drawn log-uniformly from this range.
    pub v_range: [f64; 2],
    /// Half-width of the box around `x*` from which `m` is drawn.
    pub m_radius: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeSpec {
    pub id: String,
    #[serde(default)]
    pub outputs: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub objective: ObjectiveDescriptor,
    pub weight: WeightDescriptor,
    #[serde(default)]
    pub points: PointsSpec,
    pub count: usize,
    pub v: f64,
    /// Means are drawn uniformly from `[lo, hi]^d`.
    pub bounds: [f64; 2],
    /// Points with a smaller gradient norm are redrawn.
    #[serde(default = "one_f")]
    pub min_grad_norm: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ncx2OracleSpec {
    pub dofs: Vec<usize>,
    pub noncentralities: Vec<f64>,
    pub draws: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Chi2OracleSpec {
    pub xs: Vec<f64>,
    pub tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaOracleSpec {
    pub samples: usize,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub id: String,
    #[serde(default)]
    pub outputs: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub ncx2: Ncx2OracleSpec,
    pub chi2: Chi2OracleSpec,
    pub alpha: AlphaOracleSpec,
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
}

fn default_points() -> usize {
    4096
}
fn default_point_seed() -> u32 {
    1
}
fn default_horizon() -> f64 {
    100.0
}
fn default_outputs() -> usize {
    100
}
fn default_convergence_factor() -> f64 {
    1e-10
}
fn default_divergence_factor() -> f64 {
    1e12
}
fn default_retries() -> usize {
    esigo_core::discrete::DEFAULT_MAX_RETRIES
}
fn default_sigmas() -> f64 {
    3.0
}
fn default_grid() -> usize {
    10_001
}
fn default_coord_tol() -> f64 {
    1e-6
}
fn default_rank() -> RhsMode {
    RhsMode::Rank
}
fn default_exact() -> RhsMode {
    RhsMode::Exact
}
fn default_transforms() -> Vec<Transform> {
    vec![Transform::Exp, Transform::Arctan]
}
fn default_dims() -> Vec<usize> {
    vec![1]
}
fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}

/// A parsed and validated config file.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub experiments: Vec<LoadedExperiment>,
}

#[derive(Debug, Clone)]
pub struct LoadedExperiment {
    pub spec: Experiment,
    /// 1-based line of the experiment's id in the config file.
    pub line: usize,
}

impl LoadedConfig {
    pub fn get(&self, id: &str) -> Result<&LoadedExperiment> {
        self.experiments
            .iter()
            .find(|e| e.spec.id() == id)
            .ok_or_else(|| CliError::UnknownId(id.to_string()))
    }
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(io_err(format!("reading {}", path.display())))?;
    parse(&text, path)
}

/// Parses and validates config text; `path` is only used in messages.
pub fn parse(text: &str, path: &Path) -> Result<LoadedConfig> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut seen = HashSet::new();
    let mut occurrences: HashMap<String, usize> = HashMap::new();
    let mut experiments = Vec::with_capacity(file.experiments.len());
    for spec in file.experiments {
        let nth = occurrences.entry(spec.id().to_string()).or_insert(0);
        let line = line_of_id(text, spec.id(), *nth).unwrap_or(1);
        *nth += 1;
        let invalid = |message: String| CliError::Invalid {
            path: path.to_path_buf(),
            line,
            id: spec.id().to_string(),
            message,
        };
        if !seen.insert(spec.id().to_string()) {
            return Err(invalid("duplicate id".into()));
        }
        validate(&spec).map_err(invalid)?;
        experiments.push(LoadedExperiment { spec, line });
    }
    Ok(LoadedConfig {
        path: path.to_path_buf(),
        experiments,
    })
}

/// 1-based line of the `nth` occurrence of `"id": "<id>"`.
fn line_of_id(text: &str, id: &str, nth: usize) -> Option<usize> {
    let needle = format!("\"{id}\"");
    text.lines()
        .enumerate()
        .filter(|(_, l)| l.contains("\"id\"") && l.contains(&needle))
        .nth(nth)
        .map(|(i, _)| i + 1)
}

fn check_theta(theta: &ThetaSpec, obj: &Objective) -> std::result::Result<(), String> {
    let th = theta.build().map_err(|e| format!("theta0: {e}"))?;
    if th.dim() != obj.dim() {
        return Err(format!(
            "theta0 has dimension {}, objective has {}",
            th.dim(),
            obj.dim()
        ));
    }
    Ok(())
}

fn check_stop(stop: &StopSpec) -> std::result::Result<(), String> {
    if !(stop.horizon > 0.0 && stop.horizon.is_finite()) {
        return Err("stop.horizon must be positive".into());
    }
    if stop.outputs == 0 {
        return Err("stop.outputs must be positive".into());
    }
    Ok(())
}

fn build_objective(d: &ObjectiveDescriptor) -> std::result::Result<Objective, String> {
    d.build().map_err(|e| format!("objective: {e}"))
}

fn build_weight(d: &WeightDescriptor) -> std::result::Result<WeightSpec, String> {
    d.build().map_err(|e| format!("weight: {e}"))
}

fn require_exact(obj: &Objective) -> std::result::Result<(), String> {
    if obj.exact_shape().is_none() {
        return Err("exact quantiles need a linear or isotropic quadratic objective".into());
    }
    Ok(())
}

fn validate(spec: &Experiment) -> std::result::Result<(), String> {
    if spec.id().is_empty() {
        return Err("id must not be empty".into());
    }
    match spec {
        Experiment::OdeRank(s) | Experiment::OdeExact(s) => {
            let obj = build_objective(&s.objective)?;
            build_weight(&s.weight)?;
            check_theta(&s.theta0, &obj)?;
            check_stop(&s.stop)?;
            if matches!(spec, Experiment::OdeExact(_)) {
                require_exact(&obj)?;
            }
            let needs_optimum = s.checks.iter().any(|c| {
                matches!(
                    c,
                    OdeCheck::LyapunovRatio { .. }
                        | OdeCheck::LyapunovDecreasing
                        | OdeCheck::NearOptimum { .. }
                )
            });
            if needs_optimum && obj.optimum().is_none() && s.stop.xstar.is_none() {
                return Err("Lyapunov checks need an objective with an optimum or stop.xstar".into());
            }
        }
        Experiment::Discrete(s) => {
            let obj = build_objective(&s.objective)?;
            s.weights.build().map_err(|e| format!("weights: {e}"))?;
            check_theta(&s.theta0, &obj)?;
            if s.n < 2 {
                return Err("n must be at least 2".into());
            }
            if s.eta.is_empty() || s.eta.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
                return Err("eta must be a non-empty list of non-negative step sizes".into());
            }
            if s.seeds.is_empty() {
                return Err("seeds must not be empty".into());
            }
            if !(s.horizon > 0.0 && s.horizon.is_finite()) {
                return Err("horizon must be positive".into());
            }
            let tracking = s
                .checks
                .iter()
                .any(|c| matches!(c, DiscreteCheck::TrackingMonotone));
            if tracking && s.reference.is_none() {
                return Err("tracking-monotone needs a reference".into());
            }
            if s.reference.is_some() && s.eta.len() < 2 {
                return Err("a discrete/ODE comparison needs at least 2 eta values".into());
            }
            if let Some(r) = &s.reference {
                if r.rhs == Some(RhsMode::Exact) {
                    require_exact(&obj)?;
                }
            }
        }
        Experiment::ExpectedUpdateCheck(s) => {
            let obj = build_objective(&s.objective)?;
            s.weights.build().map_err(|e| format!("weights: {e}"))?;
            if s.n < 2 {
                return Err("n must be at least 2".into());
            }
            if s.samples < 2 {
                return Err("samples must be at least 2".into());
            }
            if s.thetas.is_empty() {
                return Err("thetas must not be empty".into());
            }
            for th in &s.thetas {
                check_theta(th, &obj)?;
            }
            if s.rhs == RhsMode::Exact {
                require_exact(&obj)?;
            }
        }
        Experiment::B2Report(s) => {
            build_weight(&s.weight)?;
            if s.dim == 0 {
                return Err("dim must be positive".into());
            }
            if s.grid_size < 2 {
                return Err("grid_size must be at least 2".into());
            }
        }
        Experiment::TransformInvariance(s) => {
            let obj = build_objective(&s.objective)?;
            build_weight(&s.weight)?;
            check_theta(&s.theta0, &obj)?;
            check_stop(&s.stop)?;
            if s.transforms.is_empty() {
                return Err("transforms must not be empty".into());
            }
            if let Some(d) = &s.discrete {
                if d.n < 2 || d.iterations == 0 || !(d.eta > 0.0) {
                    return Err("discrete needs n >= 2, iterations >= 1 and eta > 0".into());
                }
            }
        }
        Experiment::CoordinateInvariance(s) => {
            let obj = build_objective(&s.objective)?;
            build_weight(&s.weight)?;
            check_theta(&s.theta0, &obj)?;
            check_stop(&s.stop)?;
            if s.rhs == RhsMode::Exact {
                require_exact(&obj)?;
            }
        }
        Experiment::DriftCheck(s) => {
            let obj = build_objective(&s.objective)?;
            build_weight(&s.weight)?;
            if obj.optimum().is_none() {
                return Err("drift needs an objective with a declared optimum".into());
            }
            if s.rhs == RhsMode::Exact {
                require_exact(&obj)?;
            }
            let [lo, hi] = s.v_range;
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err("v_range must satisfy 0 < lo <= hi".into());
            }
            if s.samples == 0 || !(s.m_radius >= 0.0) {
                return Err("samples must be positive and m_radius non-negative".into());
            }
        }
        Experiment::SlopeCheck(s) => {
            let obj = build_objective(&s.objective)?;
            build_weight(&s.weight)?;
            obj.grad_h(&vec![0.0; obj.dim()])
                .map_err(|e| format!("objective: {e}"))?;
            let [lo, hi] = s.bounds;
            if !(lo < hi) || !(s.v > 0.0) || s.count == 0 {
                return Err("need lo < hi, v > 0 and count >= 1".into());
            }
        }
        Experiment::OracleCheck(s) => {
            if s.ncx2.dofs.is_empty() || s.ncx2.noncentralities.is_empty() {
                return Err("ncx2 grid must not be empty".into());
            }
            if s.ncx2.dofs.contains(&0) || s.ncx2.noncentralities.iter().any(|l| !(*l >= 0.0)) {
                return Err("ncx2 grid needs dof >= 1 and noncentrality >= 0".into());
            }
            if s.ncx2.draws < 2 || s.alpha.samples < 2 {
                return Err("draws and samples must be at least 2".into());
            }
            if s.alpha.dims.contains(&0) {
                return Err("alpha dims must be positive".into());
            }
        }
    }
    Ok(())
}

/// Solver settings with the coordinates overridden.
pub fn with_coordinates(method: Method, coordinates: Coordinates) -> SolverSettings {
    SolverSettings {
        method,
        coordinates,
    }
}
