//! The isotropic evolution-strategy flow.
//!
//! For `theta = (m, v)` the right-hand side is
//!
//! ```text
//! g_m(theta) = sqrt(v) E[ W(m + sqrt(v) z) z ]
//! g_v(theta) = v       E[ W(m + sqrt(v) z) (|z|^2 / d - 1) ]
//! ```
//!
//! with `z ~ N(0, I_d)` and `W(x) = w(q_theta(x))`. The expectation is taken
//! over a fixed standard-normal point set, so the estimated vector field is
//! a deterministic function of `theta`. The quantile comes either from the
//! ranks inside the point set (`Rank`) or from a closed form (`Exact`).

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::objectives::{ExactShape, Objective};
use crate::ode::{self, Control, Method, OdeError};
use crate::points::PointSet;
use crate::quantile::{exact_quantile_raw, QuantileModel};
use crate::weights::WeightSpec;

/// Below this many points the exact-quantile evaluation stays on one thread.
const PARALLEL_MIN_POINTS: usize = 512;

/// Mean and variance of the isotropic Gaussian `N(m, v I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaIso {
    m: Vec<f64>,
    v: f64,
}

impl ThetaIso {
    pub fn new(m: Vec<f64>, v: f64) -> Result<Self> {
        if m.is_empty() {
            return domain("mean vector is empty");
        }
        if m.iter().any(|c| !c.is_finite()) {
            return domain("mean has non-finite coordinates");
        }
        if !(v > 0.0 && v.is_finite()) {
            return domain(format!("variance must be positive and finite, got {v}"));
        }
        Ok(Self { m, v })
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

/// Estimated natural-gradient pair with iid-equivalent standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsEstimate {
    pub gm: Vec<f64>,
    pub gv: f64,
    /// Per-coordinate standard errors of `gm`.
    pub se_gm: Vec<f64>,
    pub se_gv: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhsMode {
    /// Quantiles from ranks within the point set.
    Rank,
    /// Quantiles from the closed form of the objective.
    Exact,
}

/// `grad V(theta)^T g(theta)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEstimate {
    pub value: f64,
    pub se: f64,
}

/// The estimated vector field for one objective, weight and point set.
#[derive(Debug, Clone)]
pub struct EsIgoField<'a> {
    objective: &'a Objective,
    weight: &'a WeightSpec,
    points: &'a PointSet,
    mode: RhsMode,
    shape: Option<ExactShape>,
}

impl<'a> EsIgoField<'a> {
    pub fn new(
        objective: &'a Objective,
        weight: &'a WeightSpec,
        points: &'a PointSet,
        mode: RhsMode,
    ) -> Result<Self> {
        if points.dim() != objective.dim() {
            return config(format!(
                "point set dimension {} does not match objective dimension {}",
                points.dim(),
                objective.dim()
            ));
        }
        if points.len() < 2 {
            return config("the right-hand side needs at least two points");
        }
        let shape = match mode {
            RhsMode::Rank => None,
            RhsMode::Exact => Some(objective.exact_shape().ok_or_else(|| {
                Error::Capability("exact mode needs a linear or isotropic quadratic objective".into())
            })?),
        };
        Ok(Self {
            objective,
            weight,
            points,
            mode,
            shape,
        })
    }

    pub fn mode(&self) -> RhsMode {
        self.mode
    }

    pub fn objective(&self) -> &Objective {
        self.objective
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    fn check_state(&self, m: &[f64], v: f64) -> Result<()> {
        if m.len() != self.dim() {
            return domain("mean dimension does not match the objective");
        }
        if m.iter().any(|c| !c.is_finite()) || !(v >= 0.0 && v.is_finite()) {
            return domain(format!("invalid state: v = {v}"));
        }
        Ok(())
    }

    fn candidate(&self, m: &[f64], sd: f64, j: usize, out: &mut [f64]) {
        for ((o, mi), zi) in out.iter_mut().zip(m).zip(self.points.point(j)) {
            *o = mi + sd * zi;
        }
    }

    /// Preference `u_j` of each point transported to `m + sqrt(v) z_j`.
    pub fn preferences(&self, m: &[f64], v: f64) -> Result<Vec<f64>> {
        self.check_state(m, v)?;
        let n = self.points.len();
        let sd = v.sqrt();
        match &self.shape {
            None => {
                let mut x = vec![0.0; self.dim()];
                let mut fvals = Vec::with_capacity(n);
                for j in 0..n {
                    self.candidate(m, sd, j, &mut x);
                    let f = self.objective.f_unchecked(&x);
                    if !f.is_finite() {
                        return domain("objective value is not finite");
                    }
                    fvals.push(f);
                }
                let u = counting_ranks(&fvals)
                    .into_iter()
                    .map(|r| self.weight.value((r as f64 - 0.5) / n as f64))
                    .collect();
                Ok(u)
            }
            Some(shape) => {
                let eval = |j: usize| -> Result<f64> {
                    let mut x = vec![0.0; self.dim()];
                    self.candidate(m, sd, j, &mut x);
                    let q = exact_quantile_raw(shape, m, v, &x)?;
                    Ok(self.weight.value(q))
                };
                if n >= PARALLEL_MIN_POINTS {
                    (0..n).into_par_iter().map(eval).collect()
                } else {
                    (0..n).map(eval).collect()
                }
            }
        }
    }

    fn estimate_from(&self, v: f64, u: &[f64]) -> RhsEstimate {
        let n = self.points.len();
        let d = self.dim();
        let nf = n as f64;
        let sd = v.sqrt();
        let mut gm = vec![0.0; d];
        let mut gm_sq = vec![0.0; d];
        let mut gv = 0.0;
        let mut gv_sq = 0.0;
        for (j, uj) in u.iter().enumerate() {
            for ((acc, acc_sq), zi) in gm.iter_mut().zip(gm_sq.iter_mut()).zip(self.points.point(j)) {
                let c = sd * uj * zi;
                *acc += c;
                *acc_sq += c * c;
            }
            let c = v * uj * (self.points.norm_sq(j) / d as f64 - 1.0);
            gv += c;
            gv_sq += c * c;
        }
        let se = |sum: f64, sum_sq: f64| {
            let mean = sum / nf;
            ((sum_sq / nf - mean * mean).max(0.0) / (nf - 1.0)).sqrt()
        };
        let se_gm = gm.iter().zip(&gm_sq).map(|(s, s2)| se(*s, *s2)).collect();
        let se_gv = se(gv, gv_sq);
        RhsEstimate {
            gm: gm.into_iter().map(|s| s / nf).collect(),
            gv: gv / nf,
            se_gm,
            se_gv,
            n_points: n,
        }
    }

    /// Right-hand side at `(m, v)`; `v = 0` is accepted and yields zero.
    pub fn eval_at(&self, m: &[f64], v: f64) -> Result<RhsEstimate> {
        let u = self.preferences(m, v)?;
        Ok(self.estimate_from(v, &u))
    }

    pub fn eval(&self, theta: &ThetaIso) -> Result<RhsEstimate> {
        self.eval_at(theta.m(), theta.v())
    }

    /// Lyapunov drift `2 (m - x*)^T g_m + d g_v`, with the standard error of
    /// the per-point contributions.
    pub fn drift(&self, theta: &ThetaIso, xstar: &[f64]) -> Result<DriftEstimate> {
        if xstar.len() != self.dim() {
            return domain("x* dimension does not match the objective");
        }
        let u = self.preferences(theta.m(), theta.v())?;
        let d = self.dim() as f64;
        let sd = theta.v().sqrt();
        let offset: Vec<f64> = theta.m().iter().zip(xstar).map(|(a, b)| a - b).collect();
        let n = u.len() as f64;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for (j, uj) in u.iter().enumerate() {
            let along: f64 = offset.iter().zip(self.points.point(j)).map(|(o, z)| o * z).sum();
            let c = 2.0 * sd * uj * along + d * theta.v() * uj * (self.points.norm_sq(j) / d - 1.0);
            sum += c;
            sum_sq += c * c;
        }
        let mean = sum / n;
        let se = ((sum_sq / n - mean * mean).max(0.0) / (n - 1.0)).sqrt();
        Ok(DriftEstimate { value: mean, se })
    }
}

/// `R_j = |{k : f_k <= f_j}|` for every `j`; tied values share the largest rank.
pub fn counting_ranks(fvals: &[f64]) -> Vec<usize> {
    let n = fvals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fvals[a].total_cmp(&fvals[b]));
    let mut ranks = vec![0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && fvals[order[end]] == fvals[order[start]] {
            end += 1;
        }
        for &j in &order[start..end] {
            ranks[j] = end;
        }
        start = end;
    }
    ranks
}

/// Rank-based estimate of the right-hand side.
pub fn rhs_rank(
    theta: &ThetaIso,
    obj: &Objective,
    w: &WeightSpec,
    points: &PointSet,
) -> Result<RhsEstimate> {
    EsIgoField::new(obj, w, points, RhsMode::Rank)?.eval(theta)
}

/// Right-hand side with exact quantiles; only cubature error remains.
pub fn rhs_exact(
    theta: &ThetaIso,
    obj: &Objective,
    w: &WeightSpec,
    qm: &QuantileModel,
    points: &PointSet,
) -> Result<RhsEstimate> {
    if qm.shape().is_none() {
        return Err(Error::Capability("quantile model is not exact".into()));
    }
    if qm.objective().exact_shape() != obj.exact_shape() {
        return Err(Error::Capability("quantile model was built for another objective".into()));
    }
    EsIgoField::new(obj, w, points, RhsMode::Exact)?.eval(theta)
}

/// `V(m, v) = |m - x*|^2 + d v`; also defined on the boundary `v = 0`.
pub fn lyapunov_value(m: &[f64], v: f64, xstar: &[f64]) -> Result<f64> {
    if m.len() != xstar.len() {
        return domain("x* dimension does not match the mean");
    }
    let dist: f64 = m.iter().zip(xstar).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(dist + m.len() as f64 * v)
}

pub fn lyapunov(theta: &ThetaIso, xstar: &[f64]) -> Result<f64> {
    lyapunov_value(theta.m(), theta.v(), xstar)
}

/// Lyapunov drift along the estimated vector field.
pub fn drift(
    theta: &ThetaIso,
    obj: &Objective,
    w: &WeightSpec,
    mode: RhsMode,
    points: &PointSet,
    xstar: &[f64],
) -> Result<DriftEstimate> {
    EsIgoField::new(obj, w, points, mode)?.drift(theta, xstar)
}

/// State variable used for the variance during integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coordinates {
    /// `(m, ln v)`: the solver can never step across `v = 0`.
    #[default]
    LogVariance,
    /// `(m, v)` directly.
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub coordinates: Coordinates,
}

/// When to record and when to stop.
#[derive(Debug, Clone, PartialEq)]
pub struct StopCriteria {
    pub horizon: f64,
    /// Sorted output times in `(0, horizon]`; `t = 0` is always recorded.
    pub output_times: Vec<f64>,
    /// Converged once `V < convergence_factor * V(theta0)`.
    pub convergence_factor: f64,
    /// Absolute threshold overriding `convergence_factor` when set.
    pub convergence_threshold: Option<f64>,
    /// Diverged once `v > divergence_factor * v0`.
    pub divergence_factor: f64,
    /// Centre of the Lyapunov function; the objective's optimum when `None`.
    pub xstar: Option<Vec<f64>>,
}

impl StopCriteria {
    /// `outputs` equally spaced output times up to `horizon`.
    pub fn uniform(horizon: f64, outputs: usize) -> Self {
        let output_times = (1..=outputs)
            .map(|k| horizon * k as f64 / outputs as f64)
            .collect();
        Self {
            horizon,
            output_times,
            convergence_factor: 1e-10,
            convergence_threshold: None,
            divergence_factor: 1e12,
            xstar: None,
        }
    }
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self::uniform(100.0, 100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    Diverged,
    BudgetExhausted,
    DomainError,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::Diverged => "diverged",
            Status::BudgetExhausted => "budget-exhausted",
            Status::DomainError => "domain-error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub theta: ThetaIso,
    pub lyapunov: Option<f64>,
    pub gv_over_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub status: Status,
    pub message: Option<String>,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryRecord {
        self.records.last().expect("trajectory has at least the initial record")
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.theta.v()).collect()
    }

    pub fn lyapunov_values(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.lyapunov).collect()
    }

    /// Record at time `t`, if one was taken.
    pub fn at(&self, t: f64) -> Option<&TrajectoryRecord> {
        self.records.iter().find(|r| r.t == t)
    }

    /// CSV with header `t,m_1..m_d,v,V,gv_over_v` and a trailing status comment.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let d = self.records.first().map(|r| r.theta.dim()).unwrap_or(0);
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("m_{i}")));
        header.extend(["v", "V", "gv_over_v"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.records {
            let mut row = vec![r.t.to_string()];
            row.extend(r.theta.m().iter().map(|c| c.to_string()));
            row.push(r.theta.v().to_string());
            row.push(opt(r.lyapunov));
            row.push(opt(r.gv_over_v));
            writeln!(out, "{}", row.join(","))?;
        }
        match &self.message {
            Some(msg) => writeln!(out, "# status: {} ({msg})", self.status.as_str()),
            None => writeln!(out, "# status: {}", self.status.as_str()),
        }
    }
}

fn split_state(y: &[f64], coords: Coordinates) -> (&[f64], f64) {
    let (m, s) = y.split_at(y.len() - 1);
    let v = match coords {
        Coordinates::LogVariance => s[0].exp(),
        Coordinates::Variance => s[0],
    };
    (m, v)
}

/// Integrates the flow from `theta0`.
///
/// Numerical failures end the trajectory with `Status::DomainError` instead
/// of returning an error; only invalid arguments are reported as `Err`.
pub fn integrate(
    theta0: &ThetaIso,
    field: &EsIgoField<'_>,
    solver: &SolverSettings,
    stop: &StopCriteria,
) -> Result<Trajectory> {
    let d = field.dim();
    if theta0.dim() != d {
        return domain("initial mean dimension does not match the objective");
    }
    if !(stop.horizon > 0.0 && stop.horizon.is_finite()) {
        return config("horizon must be positive and finite");
    }
    if stop.output_times.windows(2).any(|w| w[0] >= w[1]) {
        return config("output times must be strictly increasing");
    }
    let xstar: Option<Vec<f64>> = stop
        .xstar
        .clone()
        .or_else(|| field.objective().optimum().map(<[f64]>::to_vec));
    if xstar.as_ref().is_some_and(|x| x.len() != d) {
        return domain("x* dimension does not match the objective");
    }
    let coords = solver.coordinates;
    let v0 = theta0.v();
    let v_ceiling = stop.divergence_factor * v0;
    let lyap = |m: &[f64], v: f64| xstar.as_ref().map(|x| lyapunov_value(m, v, x).unwrap_or(f64::NAN));
    let v_conv = lyap(theta0.m(), v0).map(|v| stop.convergence_threshold.unwrap_or(stop.convergence_factor * v));
    let gv_over_v = |m: &[f64], v: f64| field.eval_at(m, v).ok().map(|r| r.gv / v);

    let mut records = vec![TrajectoryRecord {
        t: 0.0,
        theta: theta0.clone(),
        lyapunov: lyap(theta0.m(), v0),
        gv_over_v: gv_over_v(theta0.m(), v0),
    }];

    let mut y0 = theta0.m().to_vec();
    y0.push(match coords {
        Coordinates::LogVariance => v0.ln(),
        Coordinates::Variance => v0,
    });

    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let (m, v) = split_state(y, coords);
        if v.is_nan() || v <= 0.0 {
            return domain(format!("variance left the domain: {v}"));
        }
        let est = field.eval_at(m, v)?;
        dy[..d].copy_from_slice(&est.gm);
        dy[d] = match coords {
            Coordinates::LogVariance => est.gv / v,
            Coordinates::Variance => est.gv,
        };
        Ok(())
    };

    let mut status = Status::BudgetExhausted;
    let mut message = None;
    let observer = |step: ode::StepInfo<'_>| -> Control {
        let (m, v) = split_state(step.y, coords);
        let theta = match ThetaIso::new(m.to_vec(), v) {
            Ok(th) => th,
            Err(e) => {
                status = Status::DomainError;
                message = Some(e.to_string());
                return Control::Stop;
            }
        };
        let lv = lyap(m, v);
        let converged = matches!((lv, v_conv), (Some(a), Some(b)) if a < b);
        let diverged = v > v_ceiling;
        if step.at_output || converged || diverged {
            records.push(TrajectoryRecord {
                t: step.t,
                gv_over_v: gv_over_v(m, v),
                theta,
                lyapunov: lv,
            });
        }
        if converged {
            status = Status::Converged;
            Control::Stop
        } else if diverged {
            status = Status::Diverged;
            Control::Stop
        } else {
            Control::Continue
        }
    };

    let res = ode::solve(
        &solver.method,
        rhs,
        0.0,
        &y0,
        stop.horizon,
        &stop.output_times,
        observer,
    );
    match res {
        Ok(_) => {}
        Err(OdeError::Rhs { t, source }) => {
            status = Status::DomainError;
            message = Some(format!("t = {t}: {source}"));
        }
        Err(OdeError::NonFinite { t }) => {
            status = Status::DomainError;
            message = Some(format!("non-finite state at t = {t}"));
        }
        Err(OdeError::StepTooSmall { t, h }) => {
            status = Status::DomainError;
            message = Some(format!("step size {h:e} too small at t = {t}"));
        }
        Err(OdeError::MaxSteps { t }) => {
            status = Status::BudgetExhausted;
            message = Some(format!("step budget exhausted at t = {t}"));
        }
    }
    Ok(Trajectory {
        records,
        status,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{make_builtin, BuiltinParams, Transform};
    use crate::quadrature::QuadratureSettings;
    use crate::weights::alpha_b2;

    fn sphere(d: usize) -> Objective {
        make_builtin("sphere", d, &BuiltinParams::default()).unwrap()
    }

    #[test]
    fn theta_validation() {
        assert!(ThetaIso::new(vec![0.0], 0.0).is_err());
        assert!(ThetaIso::new(vec![0.0], -1.0).is_err());
        assert!(ThetaIso::new(vec![f64::NAN], 1.0).is_err());
        assert!(ThetaIso::new(vec![], 1.0).is_err());
        assert!(ThetaIso::new(vec![0.0], f64::INFINITY).is_err());
    }

    #[test]
    fn rank_rhs_hand_example() {
        let obj = sphere(1);
        let w = WeightSpec::truncation_linear();
        let pts = PointSet::from_points(&[vec![0.5], vec![-1.0]]).unwrap();
        let theta = ThetaIso::new(vec![0.0], 1.0).unwrap();
        let r = rhs_rank(&theta, &obj, &w, &pts).unwrap();
        assert!((r.gm[0] - 0.125).abs() < 1e-15);
        assert!((r.gv + 0.1875).abs() < 1e-15);
        assert_eq!(r.n_points, 2);
    }

    #[test]
    fn constant_weight_decouples() {
        let obj = sphere(3);
        let w = WeightSpec::constant(2.0).unwrap();
        let pts = PointSet::sobol_normal(1 << 12, 3, 1).unwrap();
        let theta = ThetaIso::new(vec![1.0, -2.0, 0.5], 0.8).unwrap();
        let r = rhs_rank(&theta, &obj, &w, &pts).unwrap();
        let mean_ns: f64 = (0..pts.len()).map(|j| pts.norm_sq(j)).sum::<f64>() / pts.len() as f64;
        assert!((r.gv - 2.0 * 0.8 * (mean_ns / 3.0 - 1.0)).abs() < 1e-12);
        assert!(r.gv.abs() < 0.01);
        assert!(r.gm.iter().all(|g| g.abs() < 0.01));
        let qm = QuantileModel::exact(&obj).unwrap();
        let e = rhs_exact(&theta, &obj, &w, &qm, &pts).unwrap();
        assert_eq!(e, r);
    }

    #[test]
    fn sphere_at_optimum_shrinks() {
        let obj = sphere(3);
        let w = WeightSpec::truncation_linear();
        let pts = PointSet::sobol_normal(1 << 14, 3, 2).unwrap();
        let qm = QuantileModel::exact(&obj).unwrap();
        for v in [1e-3, 1.0, 30.0] {
            let theta = ThetaIso::new(vec![0.0; 3], v).unwrap();
            let r = rhs_rank(&theta, &obj, &w, &pts).unwrap();
            for (g, se) in r.gm.iter().zip(&r.se_gm) {
                assert!(g.abs() <= 3.0 * se.max(1e-300));
            }
            assert!(r.gv < 0.0);
            let e = rhs_exact(&theta, &obj, &w, &qm, &pts).unwrap();
            assert!(e.gv < 0.0);
            assert!(e.gm.iter().all(|g| g.abs() < 5e-3 * v.sqrt()));
        }
    }

    #[test]
    fn exact_linear_rate_matches_alpha() {
        let w = WeightSpec::truncation_linear();
        let alpha1 = alpha_b2(&w, 1, &QuadratureSettings::default()).unwrap();
        for d in [1usize, 3] {
            let obj = make_builtin("linear", d, &BuiltinParams::default()).unwrap();
            let qm = QuantileModel::exact(&obj).unwrap();
            let pts = PointSet::sobol_normal(1 << 14, d, 3).unwrap();
            let alpha = alpha1 / d as f64;
            for (m, v) in [(0.0, 1.0), (5.0, 0.01), (-3.0, 40.0)] {
                let theta = ThetaIso::new(vec![m; d], v).unwrap();
                let r = rhs_exact(&theta, &obj, &w, &qm, &pts).unwrap();
                assert!((r.gv / v - alpha).abs() < 0.01 * alpha, "d={d} v={v}: {}", r.gv / v);
            }
        }
    }

    #[test]
    fn rhs_exact_capability() {
        let r = make_builtin("rosenbrock", 2, &BuiltinParams::default()).unwrap();
        let w = WeightSpec::truncation_linear();
        let pts = PointSet::sobol_normal(64, 2, 0).unwrap();
        assert!(matches!(
            EsIgoField::new(&r, &w, &pts, RhsMode::Exact),
            Err(Error::Capability(_))
        ));
        let s = sphere(2);
        let emp = QuantileModel::empirical(&s, pts.clone()).unwrap();
        let theta = ThetaIso::new(vec![0.0, 0.0], 1.0).unwrap();
        assert!(rhs_exact(&theta, &s, &w, &emp, &pts).is_err());
    }

    #[test]
    fn boundary_is_stationary() {
        let w = WeightSpec::truncation_linear();
        let pts = PointSet::sobol_normal(256, 2, 0).unwrap();
        let objs = [
            sphere(2),
            make_builtin("rosenbrock", 2, &BuiltinParams::default()).unwrap(),
            make_builtin("linear", 2, &BuiltinParams::default()).unwrap(),
        ];
        for obj in &objs {
            for mode in [RhsMode::Rank, RhsMode::Exact] {
                let Ok(field) = EsIgoField::new(obj, &w, &pts, mode) else {
                    continue;
                };
                let r = field.eval_at(&[0.3, -0.2], 0.0).unwrap();
                assert!(r.gm.iter().all(|g| *g == 0.0));
                assert_eq!(r.gv, 0.0);
            }
        }
    }

    #[test]
    fn lyapunov_examples() {
        assert_eq!(lyapunov_value(&[1.0, 2.0], 0.0, &[1.0, 2.0]).unwrap(), 0.0);
        let th = ThetaIso::new(vec![1.0, 0.0], 0.5).unwrap();
        assert_eq!(lyapunov(&th, &[0.0, 0.0]).unwrap(), 2.0);
        let th = ThetaIso::new(vec![0.0, 0.0], 1e-300).unwrap();
        assert!(lyapunov(&th, &[0.0, 0.0]).unwrap() > 0.0);
        assert!(lyapunov(&th, &[0.0]).is_err());
    }

    #[test]
    fn drift_signs() {
        let obj = sphere(2);
        let pts = PointSet::sobol_normal(1 << 12, 2, 4).unwrap();
        let w = WeightSpec::truncation_linear();
        let theta = ThetaIso::new(vec![0.0, 0.0], 0.5).unwrap();
        let dr = drift(&theta, &obj, &w, RhsMode::Exact, &pts, &[0.0, 0.0]).unwrap();
        let r = rhs_rank(&theta, &obj, &w, &pts).unwrap();
        assert!(dr.value + 3.0 * dr.se < 0.0);
        assert!(r.gv < 0.0);

        let c = WeightSpec::constant(1.0).unwrap();
        let theta = ThetaIso::new(vec![2.0, -1.0], 0.5).unwrap();
        let dc = drift(&theta, &obj, &c, RhsMode::Rank, &pts, &[0.0, 0.0]).unwrap();
        assert!(dc.value.abs() < 3.0 * dc.se + 1e-3);
    }

    #[test]
    fn drift_matches_rhs_combination() {
        let obj = sphere(3);
        let pts = PointSet::sobol_normal(1 << 10, 3, 9).unwrap();
        let w = WeightSpec::power(2.0).unwrap();
        let theta = ThetaIso::new(vec![1.0, 0.5, -2.0], 0.3).unwrap();
        let xstar = [0.0; 3];
        let r = rhs_rank(&theta, &obj, &w, &pts).unwrap();
        let expected: f64 = 2.0 * r.gm.iter().zip(theta.m()).map(|(g, m)| g * m).sum::<f64>() + 3.0 * r.gv;
        let dr = drift(&theta, &obj, &w, RhsMode::Rank, &pts, &xstar).unwrap();
        assert!((dr.value - expected).abs() < 1e-12);
    }

    #[test]
    fn rank_rhs_is_transform_invariant() {
        let base = sphere(2);
        let pts = PointSet::sobol_normal(2048, 2, 5).unwrap();
        let w = WeightSpec::truncation_linear();
        let theta = ThetaIso::new(vec![3.0, -1.0], 2.0).unwrap();
        let r0 = rhs_rank(&theta, &base, &w, &pts).unwrap();
        for t in [Transform::Exp, Transform::Arctan, Transform::Cube] {
            assert_eq!(rhs_rank(&theta, &base.with_transform(t), &w, &pts).unwrap(), r0);
        }
    }

    #[test]
    fn ties_share_the_largest_rank() {
        // both points are equidistant from the optimum
        let obj = sphere(1);
        let pts = PointSet::from_points(&[vec![1.0], vec![-1.0]]).unwrap();
        let w = WeightSpec::affine(1.0, -1.0).unwrap();
        let field = EsIgoField::new(&obj, &w, &pts, RhsMode::Rank).unwrap();
        let u = field.preferences(&[0.0], 1.0).unwrap();
        assert_eq!(u, vec![0.25, 0.25]);
    }

    #[test]
    fn integrate_sphere_exact_converges() {
        let obj = sphere(2);
        let pts = PointSet::sobol_normal(1 << 10, 2, 6).unwrap();
        let w = WeightSpec::truncation_linear();
        let field = EsIgoField::new(&obj, &w, &pts, RhsMode::Exact).unwrap();
        let theta0 = ThetaIso::new(vec![3.0, 4.0], 1.0).unwrap();
        let mut stop = StopCriteria::uniform(200.0, 200);
        stop.convergence_factor = 1e-6;
        let traj = integrate(&theta0, &field, &SolverSettings::default(), &stop).unwrap();
        assert_eq!(traj.status, Status::Converged, "{:?}", traj.message);
        let vs = traj.lyapunov_values().unwrap();
        assert!(vs.windows(2).all(|p| p[1] < p[0]));
        assert!(traj.times().windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn integrate_rejects_bad_horizon() {
        let obj = sphere(1);
        let pts = PointSet::sobol_normal(16, 1, 0).unwrap();
        let w = WeightSpec::truncation_linear();
        let field = EsIgoField::new(&obj, &w, &pts, RhsMode::Rank).unwrap();
        let theta0 = ThetaIso::new(vec![1.0], 1.0).unwrap();
        let mut stop = StopCriteria::uniform(1.0, 4);
        stop.horizon = 0.0;
        assert!(integrate(&theta0, &field, &SolverSettings::default(), &stop).is_err());
    }

    #[test]
    fn variance_coordinates_report_domain_error() {
        // a huge explicit step drives v negative in (m, v) coordinates
        let obj = sphere(1);
        let pts = PointSet::sobol_normal(256, 1, 0).unwrap();
        let w = WeightSpec::truncation_linear();
        let field = EsIgoField::new(&obj, &w, &pts, RhsMode::Exact).unwrap();
        let theta0 = ThetaIso::new(vec![0.0], 1.0).unwrap();
        let solver = SolverSettings {
            method: Method::Rk4 { h: 50.0 },
            coordinates: Coordinates::Variance,
        };
        let traj = integrate(&theta0, &field, &solver, &StopCriteria::uniform(100.0, 2)).unwrap();
        assert_eq!(traj.status, Status::DomainError);
        assert!(traj.records.iter().all(|r| r.theta.v() > 0.0));
    }

    #[test]
    fn csv_layout() {
        let traj = Trajectory {
            records: vec![TrajectoryRecord {
                t: 0.0,
                theta: ThetaIso::new(vec![1.0, 2.0], 0.5).unwrap(),
                lyapunov: Some(6.0),
                gv_over_v: None,
            }],
            status: Status::BudgetExhausted,
            message: None,
        };
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "t,m_1,m_2,v,V,gv_over_v\n0,1,2,0.5,6,\n# status: budget-exhausted\n");
    }
}
