use esigo_core::flow::{integrate, EsIgoField, Status, Trajectory};
use esigo_core::objectives::Inner;
use esigo_core::quadrature::QuadratureSettings;
use esigo_core::weights::alpha_b2;
use esigo_core::RhsMode;

use super::{fmt_vec, ls_slope, trajectory_panels, Check, Report, Sink};
use crate::config::{OdeCheck, OdeSpec};
use crate::error::Result;

/// Slope of `ln v` against `t` over records with `t <= t_max`.
pub(crate) fn log_variance_slope(traj: &Trajectory, t_max: f64) -> Option<f64> {
    let (ts, lv): (Vec<f64>, Vec<f64>) = traj
        .records
        .iter()
        .filter(|r| r.t <= t_max * (1.0 + 1e-12))
        .map(|r| (r.t, r.theta.v().ln()))
        .unzip();
    ls_slope(&ts, &lv)
}

pub(crate) fn run(spec: &OdeSpec, mode: RhsMode, report: &mut Report, sink: &mut Sink) -> Result<()> {
    let obj = spec.objective.build()?;
    let w = spec.weight.build()?;
    let theta0 = spec.theta0.build()?;
    let points = spec.points.build(obj.dim())?;
    let field = EsIgoField::new(&obj, &w, &points, mode)?;
    let stop = spec.stop.build();
    let traj = integrate(&theta0, &field, &spec.solver, &stop)?;
    let last = traj.last();

    report.status = Some(traj.status.as_str().to_string());
    if let Some(msg) = &traj.message {
        report.stat("message", msg);
    }
    report.stat("points", points.len());
    report.stat("final t", last.t);
    report.stat("final m", fmt_vec(last.theta.m()));
    report.stat("final v", format!("{:.6e}", last.theta.v()));
    let v0_lyap = traj.records[0].lyapunov;
    if let (Some(v0), Some(vt)) = (v0_lyap, last.lyapunov) {
        report.stat("V(0)", format!("{v0:.6e}"));
        report.stat("V(T)", format!("{vt:.6e}"));
        report.stat("V(T)/V(0)", format!("{:.3e}", vt / v0));
    }
    let xstar = stop
        .xstar
        .clone()
        .or_else(|| obj.optimum().map(<[f64]>::to_vec));
    let dist = xstar.as_ref().map(|x| {
        last.theta
            .m()
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    });
    if let Some(dist) = dist {
        report.stat("|m(T) - x*|", format!("{dist:.6e}"));
    }

    let is_linear = matches!(obj.inner(), Inner::Linear { .. });
    let slope_window = spec.checks.iter().find_map(|c| match c {
        OdeCheck::Slope { t_max, rel_tol } => Some((*t_max, Some(*rel_tol))),
        _ => None,
    });
    let slope_window = slope_window.or(is_linear.then_some((3.0f64.min(stop.horizon), None)));
    let mut slope_result = None;
    if let Some((t_max, _)) = slope_window {
        let alpha = alpha_b2(&w, obj.dim(), &QuadratureSettings::default())?;
        if let Some(slope) = log_variance_slope(&traj, t_max) {
            let dev = (slope - alpha).abs() / alpha.abs().max(f64::MIN_POSITIVE);
            report.stat("fitted slope of ln v", format!("{slope:.8} over [0, {t_max}]"));
            report.stat("alpha", format!("{alpha:.8}"));
            report.stat("relative deviation", format!("{dev:.3e}"));
            slope_result = Some((slope, alpha, dev));
        }
    }

    for c in &spec.checks {
        let check = match c {
            OdeCheck::Status { is } => Check::new(
                "status",
                traj.status == *is,
                format!("expected {}, got {}", is.as_str(), traj.status.as_str()),
            ),
            OdeCheck::LyapunovRatio { max } => match (v0_lyap, last.lyapunov) {
                (Some(v0), Some(vt)) => Check::new(
                    "lyapunov-ratio",
                    vt <= max * v0,
                    format!("V(T)/V(0) = {:.3e}, limit {max:e}", vt / v0),
                ),
                _ => Check::new("lyapunov-ratio", false, "no Lyapunov values"),
            },
            OdeCheck::LyapunovDecreasing => match traj.lyapunov_values() {
                Some(vs) => {
                    let bad = vs.windows(2).position(|w| !(w[1] < w[0]));
                    Check::new(
                        "lyapunov-decreasing",
                        bad.is_none(),
                        match bad {
                            None => format!("{} records strictly decreasing", vs.len()),
                            Some(i) => format!(
                                "increase at t = {} -> {}",
                                traj.records[i].t,
                                traj.records[i + 1].t
                            ),
                        },
                    )
                }
                None => Check::new("lyapunov-decreasing", false, "no Lyapunov values"),
            },
            OdeCheck::Slope { rel_tol, .. } => match slope_result {
                Some((slope, alpha, dev)) => Check::new(
                    "slope",
                    dev <= *rel_tol,
                    format!("slope {slope:.6}, alpha {alpha:.6}, deviation {dev:.2e} <= {rel_tol}"),
                ),
                None => Check::new("slope", false, "too few records to fit a slope"),
            },
            OdeCheck::NearOptimum { tol } => match dist {
                Some(dist) => Check::new(
                    "near-optimum",
                    dist <= *tol,
                    format!("|m(T) - x*| = {dist:.3e}, limit {tol:e}"),
                ),
                None => Check::new("near-optimum", false, "objective has no declared optimum"),
            },
        };
        report.check(check);
    }
    if traj.status == Status::DomainError && spec.checks.is_empty() {
        report.check(Check::new(
            "no-domain-error",
            false,
            traj.message.clone().unwrap_or_default(),
        ));
    }

    sink.trajectory("trajectory.csv", &traj)?;
    sink.plot(
        "trajectory.svg",
        &trajectory_panels(&[(report.id.clone(), &traj)], spec.log_scale),
    )?;
    Ok(())
}
