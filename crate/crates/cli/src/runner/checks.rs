use esigo_core::discrete::{mean_update_direction, run as run_discrete, RunConfig};
use esigo_core::flow::{integrate, Coordinates, EsIgoField, SolverSettings, Trajectory};
use esigo_core::objectives::Transform;
use esigo_core::quadrature::QuadratureSettings;
use esigo_core::weights::{alpha_b2, check_b1, B1Report, WeightSpec};
use esigo_core::{RhsMode, ThetaIso};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{fmt_vec, trajectory_panels, Check, Report, Sink};
use crate::config::{
    B2Spec, CoordinateSpec, DriftSpec, ExpectedUpdateSpec, SlopeSpec, TransformSpec,
};
use crate::error::Result;

/// `alpha` values at or below this are treated as zero.
pub const B2_ALPHA_TOL: f64 = 1e-12;

/// Outcome of the B1 grid check and the B2 constant.
#[derive(Debug, Clone)]
pub struct B2Summary {
    pub alpha: f64,
    pub b1: B1Report,
    pub b2_pass: bool,
}

pub fn b2_summary(w: &WeightSpec, dim: usize, grid_size: usize) -> Result<B2Summary> {
    let alpha = alpha_b2(w, dim, &QuadratureSettings::default())?;
    Ok(B2Summary {
        alpha,
        b1: check_b1(w, grid_size),
        b2_pass: alpha > B2_ALPHA_TOL,
    })
}

impl B2Summary {
    pub fn lines(&self) -> Vec<(String, String)> {
        let b1 = &self.b1;
        let mut v = vec![
            ("alpha".to_string(), format!("{:.15e}", self.alpha)),
            (
                "B1".to_string(),
                format!(
                    "{} (monotone: {}, lipschitz estimate {:.4} on {} points)",
                    if b1.pass { "pass" } else { "fail" },
                    b1.monotone,
                    b1.lipschitz_estimate,
                    b1.grid_size
                ),
            ),
            (
                "B2".to_string(),
                if self.b2_pass { "pass" } else { "fail" }.to_string(),
            ),
        ];
        if let Some(q) = b1.first_violation {
            v.push((
                "B1 first violation".into(),
                format!("q = {q}, increase {:.3e}", b1.gap),
            ));
        }
        v
    }
}

pub(crate) fn b2_report(spec: &B2Spec, report: &mut Report) -> Result<()> {
    let w = spec.weight.build()?;
    let s = b2_summary(&w, spec.dim, spec.grid_size)?;
    report.stat("dim", spec.dim);
    for (k, v) in s.lines() {
        report.stat(&k, v);
    }
    report.check(Check::new(
        "b2",
        s.b2_pass == spec.expect_b2,
        format!(
            "B2: {}, expected {}",
            if s.b2_pass { "pass" } else { "fail" },
            if spec.expect_b2 { "pass" } else { "fail" }
        ),
    ));
    Ok(())
}

/// Same status and bit-identical `t`, `m` and `v` in every record.
pub(crate) fn bit_identical(a: &Trajectory, b: &Trajectory) -> bool {
    let same = |x: f64, y: f64| x.to_bits() == y.to_bits();
    a.status == b.status
        && a.records.len() == b.records.len()
        && a.records.iter().zip(&b.records).all(|(p, q)| {
            same(p.t, q.t)
                && same(p.theta.v(), q.theta.v())
                && p.theta.m().iter().zip(q.theta.m()).all(|(x, y)| same(*x, *y))
        })
}

pub(crate) fn transform_invariance(spec: &TransformSpec, report: &mut Report, sink: &mut Sink) -> Result<()> {
    let base = spec.objective.build()?;
    let w = spec.weight.build()?;
    let theta0 = spec.theta0.build()?;
    let points = spec.points.build(base.dim())?;
    let stop = spec.stop.build();
    let mut transforms = vec![base.transform()];
    transforms.extend(spec.transforms.iter().copied().filter(|t| *t != base.transform()));

    let odes: Vec<(Transform, Trajectory)> = transforms
        .par_iter()
        .map(|&t| {
            let obj = base.with_transform(t);
            let field = EsIgoField::new(&obj, &w, &points, RhsMode::Rank)?;
            Ok((t, integrate(&theta0, &field, &spec.solver, &stop)?))
        })
        .collect::<Result<_>>()?;
    let reference = &odes[0].1;
    report.status = Some(reference.status.as_str().to_string());
    report.stat("ode records", reference.records.len());
    let mut all_same = true;
    for (t, tr) in &odes[1..] {
        let same = bit_identical(reference, tr);
        all_same &= same;
        report.check(Check::new(
            format!("ode {}", t.name()),
            same,
            format!("identical to {}: {same}", transforms[0].name()),
        ));
    }
    for (t, tr) in &odes {
        sink.trajectory(&format!("ode_{}.csv", t.name()), tr)?;
    }

    if let Some(d) = &spec.discrete {
        let weights = esigo_core::discrete::DiscreteWeights::Function(w.clone());
        let runs: Vec<(Transform, Trajectory)> = transforms
            .par_iter()
            .map(|&t| {
                let mut cfg = RunConfig::new(theta0.clone(), base.with_transform(t), weights.clone());
                cfg.eta = d.eta;
                cfg.n = d.n;
                cfg.iterations = d.iterations;
                cfg.seed = d.seed;
                Ok((t, run_discrete(&cfg)?.trajectory))
            })
            .collect::<Result<_>>()?;
        let reference = &runs[0].1;
        report.stat("discrete records", reference.records.len());
        for (t, tr) in &runs[1..] {
            let same = bit_identical(reference, tr);
            all_same &= same;
            report.check(Check::new(
                format!("discrete {}", t.name()),
                same,
                format!("identical to {}: {same}", transforms[0].name()),
            ));
        }
        for (t, tr) in &runs {
            sink.trajectory(&format!("discrete_{}.csv", t.name()), tr)?;
        }
    }
    report.stat("trajectories identical", all_same);
    let labelled: Vec<(String, &Trajectory)> =
        odes.iter().map(|(t, tr)| (t.name().to_string(), tr)).collect();
    sink.plot("trajectory.svg", &trajectory_panels(&labelled, true))?;
    Ok(())
}

pub(crate) fn coordinate_invariance(spec: &CoordinateSpec, report: &mut Report, sink: &mut Sink) -> Result<()> {
    let obj = spec.objective.build()?;
    let w = spec.weight.build()?;
    let theta0 = spec.theta0.build()?;
    let points = spec.points.build(obj.dim())?;
    let field = EsIgoField::new(&obj, &w, &points, spec.rhs)?;
    let stop = spec.stop.build();
    let solve = |coordinates| {
        integrate(
            &theta0,
            &field,
            &SolverSettings {
                method: spec.method,
                coordinates,
            },
            &stop,
        )
    };
    let log_v = solve(Coordinates::LogVariance)?;
    let lin_v = solve(Coordinates::Variance)?;

    let mut compared = 0usize;
    let mut worst_v: f64 = 0.0;
    let mut worst_m: f64 = 0.0;
    for t in &stop.output_times {
        let (Some(a), Some(b)) = (log_v.at(*t), lin_v.at(*t)) else {
            continue;
        };
        compared += 1;
        worst_v = worst_v.max((a.theta.v() - b.theta.v()).abs() / a.theta.v());
        let scale = a.theta.m().iter().map(|x| x.abs()).fold(a.theta.v().sqrt(), f64::max);
        for (x, y) in a.theta.m().iter().zip(b.theta.m()) {
            worst_m = worst_m.max((x - y).abs() / scale);
        }
    }
    report.status = Some(format!(
        "{} / {}",
        log_v.status.as_str(),
        lin_v.status.as_str()
    ));
    report.stat("output times compared", compared);
    report.stat("max relative v difference", format!("{worst_v:.3e}"));
    report.stat("max relative m difference", format!("{worst_m:.3e}"));
    report.check(Check::new(
        "all-outputs",
        compared == stop.output_times.len(),
        format!("{compared} of {} output times reached by both", stop.output_times.len()),
    ));
    report.check(Check::new(
        "variance-agreement",
        compared > 0 && worst_v <= spec.rel_tol,
        format!("max relative difference {worst_v:.3e} <= {:e}", spec.rel_tol),
    ));
    sink.trajectory("trajectory_log_variance.csv", &log_v)?;
    sink.trajectory("trajectory_variance.csv", &lin_v)?;
    sink.plot(
        "trajectory.svg",
        &trajectory_panels(
            &[("(m, ln v)".into(), &log_v), ("(m, v)".into(), &lin_v)],
            true,
        ),
    )?;
    Ok(())
}

/// `(component, mc mean, mc se, flow value, flow se)`
type Comparison = (String, f64, f64, f64, f64);

pub(crate) fn expected_update(spec: &ExpectedUpdateSpec, report: &mut Report, sink: &mut Sink) -> Result<()> {
    let obj = spec.objective.build()?;
    let weights = spec.weights.build()?;
    let expected = weights.expected(spec.n)?;
    let points = spec.points.build(obj.dim())?;
    let field = EsIgoField::new(&obj, &expected, &points, spec.rhs)?;
    let thetas: Vec<ThetaIso> = spec
        .thetas
        .iter()
        .map(|t| t.build())
        .collect::<esigo_core::Result<_>>()?;

    let rows: Vec<Vec<Comparison>> = thetas
        .par_iter()
        .enumerate()
        .map(|(i, th)| {
            let mc = mean_update_direction(th, &obj, &weights, spec.n, spec.samples, spec.seed + i as u64)?;
            let g = field.eval(th)?;
            let mut rows = Vec::new();
            for k in 0..th.dim() {
                rows.push((format!("m_{}", k + 1), mc.mean_m[k], mc.se_m[k], g.gm[k], g.se_gm[k]));
            }
            rows.push(("v".into(), mc.mean_v, mc.se_v, g.gv, g.se_gv));
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let mut csv = String::from("theta,component,mc_mean,mc_se,rhs,rhs_se,z\n");
    let mut worst_z: f64 = 0.0;
    let mut failures = 0usize;
    for (i, comps) in rows.iter().enumerate() {
        for (name, mc, mc_se, g, g_se) in comps {
            let se = (mc_se * mc_se + g_se * g_se).sqrt();
            let z = (mc - g).abs() / se.max(f64::MIN_POSITIVE);
            worst_z = worst_z.max(z);
            if z > spec.sigmas {
                failures += 1;
            }
            csv.push_str(&format!("{i},{name},{mc},{mc_se},{g},{g_se},{z}\n"));
        }
    }
    let comparisons: usize = rows.iter().map(Vec::len).sum();
    report.stat("thetas", thetas.len());
    report.stat("samples per theta", spec.samples);
    report.stat("max |mc - rhs| / combined se", format!("{worst_z:.3}"));
    report.check(Check::new(
        "expected-update",
        failures == 0,
        format!(
            "{} of {comparisons} components within {} combined standard errors",
            comparisons - failures,
            spec.sigmas
        ),
    ));
    sink.write("expected_update.csv", csv.as_bytes())?;
    Ok(())
}

pub(crate) fn drift_check(spec: &DriftSpec, report: &mut Report, sink: &mut Sink) -> Result<()> {
    let obj = spec.objective.build()?;
    let w = spec.weight.build()?;
    let xstar = obj
        .optimum()
        .expect("validated: objective declares an optimum")
        .to_vec();
    let points = spec.points.build(obj.dim())?;
    let field = EsIgoField::new(&obj, &w, &points, spec.rhs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let [lo, hi] = spec.v_range;
    let thetas: Vec<ThetaIso> = (0..spec.samples)
        .map(|_| {
            let m: Vec<f64> = xstar
                .iter()
                .map(|x| x + rng.random_range(-spec.m_radius..=spec.m_radius))
                .collect();
            let v = rng.random_range(lo.ln()..=hi.ln()).exp();
            ThetaIso::new(m, v)
        })
        .collect::<esigo_core::Result<_>>()?;
    let drifts: Vec<_> = thetas
        .par_iter()
        .map(|th| field.drift(th, &xstar))
        .collect::<esigo_core::Result<_>>()?;

    let mut csv = String::from("index,m,v,drift,se,upper\n");
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0;
    for (i, (th, d)) in thetas.iter().zip(&drifts).enumerate() {
        let upper = d.value + spec.sigmas * d.se;
        worst = worst.max(upper / d.value.abs().max(f64::MIN_POSITIVE));
        if !(upper < 0.0) {
            failures += 1;
        }
        let m: Vec<String> = th.m().iter().map(f64::to_string).collect();
        csv.push_str(&format!(
            "{i},{},{},{},{},{upper}\n",
            m.join(" "),
            th.v(),
            d.value,
            d.se
        ));
    }
    report.stat("thetas", thetas.len());
    report.stat("largest (drift + k se) / |drift|", format!("{worst:.4}"));
    report.check(Check::new(
        "negative-drift",
        failures == 0,
        format!(
            "{} of {} thetas with drift + {} se < 0",
            thetas.len() - failures,
            thetas.len(),
            spec.sigmas
        ),
    ));
    sink.write("drift.csv", csv.as_bytes())?;
    Ok(())
}

pub(crate) fn slope_check(spec: &SlopeSpec, report: &mut Report, sink: &mut Sink) -> Result<()> {
    let obj = spec.objective.build()?;
    let w = spec.weight.build()?;
    let points = spec.points.build(obj.dim())?;
    let field = EsIgoField::new(&obj, &w, &points, RhsMode::Rank)?;
    let alpha = alpha_b2(&w, obj.dim(), &QuadratureSettings::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let [lo, hi] = spec.bounds;
    let mut means = Vec::with_capacity(spec.count);
    let mut draws = 0usize;
    while means.len() < spec.count {
        draws += 1;
        if draws > 1000 * spec.count {
            return Err(esigo_core::Error::Configuration(
                "could not find points with the requested gradient norm".into(),
            )
            .into());
        }
        let m: Vec<f64> = (0..obj.dim()).map(|_| rng.random_range(lo..=hi)).collect();
        let g = obj.grad_h(&m)?;
        if g.iter().map(|x| x * x).sum::<f64>().sqrt() >= spec.min_grad_norm {
            means.push(m);
        }
    }
    let estimates: Vec<_> = means
        .par_iter()
        .map(|m| field.eval_at(m, spec.v))
        .collect::<esigo_core::Result<_>>()?;

    let mut csv = String::from("index,m,gv,se_gv,gv_over_v,lower\n");
    let mut failures = 0;
    let mut min_ratio = f64::INFINITY;
    for (i, (m, e)) in means.iter().zip(&estimates).enumerate() {
        let lower = e.gv - spec.sigmas * e.se_gv;
        if !(lower > 0.0) {
            failures += 1;
        }
        min_ratio = min_ratio.min(e.gv / spec.v / alpha);
        let ms: Vec<String> = m.iter().map(f64::to_string).collect();
        csv.push_str(&format!(
            "{i},{},{},{},{},{lower}\n",
            ms.join(" "),
            e.gv,
            e.se_gv,
            e.gv / spec.v
        ));
    }
    report.stat("points", means.len());
    report.stat("v", spec.v);
    report.stat("alpha", format!("{alpha:.6}"));
    report.stat("smallest (g_v / v) / alpha", format!("{min_ratio:.4}"));
    report.stat("first mean", fmt_vec(&means[0]));
    report.check(Check::new(
        "variance-increases",
        failures == 0,
        format!(
            "{} of {} points with g_v - {} se > 0",
            means.len() - failures,
            means.len(),
            spec.sigmas
        ),
    ));
    sink.write("slope.csv", csv.as_bytes())?;
    Ok(())
}
