use esigo_core::discrete::{self, sup_distance, DiscreteRun, RunConfig};
use esigo_core::flow::{integrate, EsIgoField, Status, StopCriteria, Trajectory};
use esigo_core::objectives::Objective;
use esigo_core::RhsMode;
use rayon::prelude::*;

use super::ode::log_variance_slope;
use super::{quantile_sorted, trajectory_panels, Check, Report, Sink};
use crate::config::{DiscreteCheck, DiscreteSpec};
use crate::error::{CliError, Result};

/// One row of the discrete-versus-ODE comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub eta: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub seeds: usize,
}

impl ComparisonRow {
    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }
}

fn iterations(eta: f64, horizon: f64) -> usize {
    if eta == 0.0 {
        1
    } else {
        ((horizon / eta).round() as usize).max(1)
    }
}

fn run_grid(spec: &DiscreteSpec, obj: &Objective) -> Result<Vec<Vec<DiscreteRun>>> {
    let weights = spec.weights.build()?;
    let theta0 = spec.theta0.build()?;
    spec.eta
        .iter()
        .map(|&eta| {
            spec.seeds
                .par_iter()
                .map(|&seed| {
                    let mut cfg = RunConfig::new(theta0.clone(), obj.clone(), weights.clone());
                    cfg.eta = eta;
                    cfg.n = spec.n;
                    cfg.iterations = iterations(eta, spec.horizon);
                    cfg.seed = seed;
                    cfg.output_stride = spec.output_stride;
                    cfg.max_retries = spec.max_retries;
                    Ok(discrete::run(&cfg)?)
                })
                .collect()
        })
        .collect()
}

/// ODE trajectory of the expected weight, recorded on the comparison grid.
fn reference(spec: &DiscreteSpec, obj: &Objective) -> Result<Option<Trajectory>> {
    let Some(r) = &spec.reference else {
        return Ok(None);
    };
    let w = spec.weights.build()?.expected(spec.n)?;
    let mode = r.rhs.unwrap_or(if obj.exact_shape().is_some() {
        RhsMode::Exact
    } else {
        RhsMode::Rank
    });
    let points = r.points.build(obj.dim())?;
    let field = EsIgoField::new(obj, &w, &points, mode)?;
    let stop = StopCriteria {
        convergence_factor: 0.0,
        divergence_factor: f64::INFINITY,
        ..StopCriteria::uniform(spec.horizon, r.outputs.max(1))
    };
    Ok(Some(integrate(&spec.theta0.build()?, &field, &r.solver, &stop)?))
}

fn table(spec: &DiscreteSpec, runs: &[Vec<DiscreteRun>], reference: &Trajectory) -> Vec<ComparisonRow> {
    spec.eta
        .iter()
        .zip(runs)
        .map(|(&eta, per_seed)| {
            let mut d: Vec<f64> = per_seed
                .iter()
                .map(|r| sup_distance(&r.trajectory, reference, spec.horizon))
                .collect();
            d.sort_by(f64::total_cmp);
            ComparisonRow {
                eta,
                median: quantile_sorted(&d, 0.5),
                q25: quantile_sorted(&d, 0.25),
                q75: quantile_sorted(&d, 0.75),
                seeds: d.len(),
            }
        })
        .collect()
}

/// Median and IQR over seeds of the sup-distance to the ODE of the expected weight, one row per eta.
pub fn compare_discrete_ode(spec: &DiscreteSpec) -> Result<Vec<ComparisonRow>> {
    if spec.eta.len() < 2 {
        return Err(CliError::Core(esigo_core::Error::Configuration(
            "a discrete/ODE comparison needs at least 2 eta values".into(),
        )));
    }
    let obj = spec.objective.build()?;
    let reference = reference(spec, &obj)?.ok_or_else(|| {
        CliError::Core(esigo_core::Error::Configuration(
            "a discrete/ODE comparison needs a reference".into(),
        ))
    })?;
    let runs = run_grid(spec, &obj)?;
    Ok(table(spec, &runs, &reference))
}

fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("eta,median_sup_distance,iqr,q25,q75,seeds\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.eta,
            r.median,
            r.iqr(),
            r.q25,
            r.q75,
            r.seeds
        ));
    }
    s
}

/// Strictly decreasing medians when the ladder is ordered by decreasing eta.
pub(crate) fn medians_decrease(rows: &[ComparisonRow]) -> bool {
    let mut sorted: Vec<&ComparisonRow> = rows.iter().collect();
    sorted.sort_by(|a, b| b.eta.total_cmp(&a.eta));
    sorted.windows(2).all(|w| w[1].median < w[0].median)
}

pub(crate) fn run(spec: &DiscreteSpec, report: &mut Report, sink: &mut Sink) -> Result<()> {
    let obj = spec.objective.build()?;
    let runs = run_grid(spec, &obj)?;
    let reference = reference(spec, &obj)?;

    let total = runs.iter().map(Vec::len).sum::<usize>();
    let domain_errors = runs
        .iter()
        .flatten()
        .filter(|r| r.trajectory.status == Status::DomainError)
        .count();
    let rejections: usize = runs.iter().flatten().map(|r| r.events.len()).sum();
    report.status = Some(if domain_errors == 0 {
        "budget-exhausted".into()
    } else {
        format!("{domain_errors} of {total} runs ended with domain-error")
    });
    report.stat("runs", total);
    report.stat("rejected proposals", rejections);

    for (eta, per_seed) in spec.eta.iter().zip(&runs) {
        for (seed, run) in spec.seeds.iter().zip(per_seed) {
            let stem = format!("eta{eta}_seed{seed}");
            sink.trajectory(&format!("trajectory_{stem}.csv"), &run.trajectory)?;
            let mut events = Vec::new();
            run.write_events(&mut events)
                .map_err(crate::error::io_err("formatting events"))?;
            sink.write(&format!("events_{stem}.jsonl"), &events)?;
        }
    }

    let rows = reference.as_ref().map(|r| table(spec, &runs, r));
    if let (Some(rows), Some(reference)) = (&rows, &reference) {
        for r in rows {
            report.stat(
                &format!("eta {}", r.eta),
                format!(
                    "median sup-distance {:.4e}, IQR {:.4e} over {} seeds",
                    r.median,
                    r.iqr(),
                    r.seeds
                ),
            );
        }
        sink.write("comparison.csv", comparison_csv(rows).as_bytes())?;
        sink.trajectory("reference.csv", reference)?;
    }

    for c in &spec.checks {
        let check = match c {
            DiscreteCheck::TrackingMonotone => match &rows {
                Some(rows) => {
                    let medians: Vec<String> =
                        rows.iter().map(|r| format!("{:.3e}", r.median)).collect();
                    Check::new(
                        "tracking-monotone",
                        medians_decrease(rows),
                        format!("medians {}", medians.join(" > ")),
                    )
                }
                None => Check::new("tracking-monotone", false, "no reference trajectory"),
            },
            DiscreteCheck::ConvergedFraction {
                factor,
                min_fraction,
            } => {
                let mut worst = f64::INFINITY;
                let mut details = Vec::new();
                for (eta, per_seed) in spec.eta.iter().zip(&runs) {
                    let ok = per_seed
                        .iter()
                        .filter(|r| {
                            let recs = &r.trajectory.records;
                            match (recs[0].lyapunov, r.trajectory.last().lyapunov) {
                                (Some(v0), Some(vt)) => vt < factor * v0,
                                _ => false,
                            }
                        })
                        .count();
                    let frac = ok as f64 / per_seed.len() as f64;
                    worst = worst.min(frac);
                    details.push(format!("eta {eta}: {ok}/{}", per_seed.len()));
                }
                Check::new(
                    "converged-fraction",
                    worst >= *min_fraction,
                    format!("{} with V(T) < {factor:e} V(0), need {min_fraction}", details.join(", ")),
                )
            }
            DiscreteCheck::VarianceGrows => {
                let mut slopes: Vec<f64> = runs
                    .iter()
                    .flatten()
                    .filter_map(|r| log_variance_slope(&r.trajectory, spec.horizon))
                    .collect();
                slopes.sort_by(f64::total_cmp);
                let med = if slopes.is_empty() {
                    f64::NAN
                } else {
                    quantile_sorted(&slopes, 0.5)
                };
                Check::new(
                    "variance-grows",
                    med > 0.0,
                    format!("median slope of ln v: {med:.4e}"),
                )
            }
            DiscreteCheck::NoDomainError => Check::new(
                "no-domain-error",
                domain_errors == 0,
                format!("{domain_errors} of {total} runs"),
            ),
        };
        report.check(check);
    }

    let mut labelled: Vec<(String, &Trajectory)> = spec
        .eta
        .iter()
        .zip(&runs)
        .filter_map(|(eta, per_seed)| {
            per_seed
                .first()
                .map(|r| (format!("eta {eta}, seed {}", spec.seeds[0]), &r.trajectory))
        })
        .collect();
    if let Some(r) = &reference {
        labelled.push(("ODE".into(), r));
    }
    sink.plot("trajectory.svg", &trajectory_panels(&labelled, true))?;
    Ok(())
}
