//! Executes experiments and renders their verdicts.

mod checks;
mod discrete;
mod ode;
mod oracle;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use esigo_core::flow::Trajectory;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Experiment, LoadedConfig};
use crate::error::{io_err, CliError, Result};
use crate::plot::Panel;

pub use checks::{b2_summary, B2Summary, B2_ALPHA_TOL};
pub use discrete::{compare_discrete_ode, ComparisonRow};

/// One verdict inside a report.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Outcome of one experiment.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub id: String,
    pub mode: String,
    pub pass: bool,
    pub status: Option<String>,
    /// Ordered `(name, value)` summary statistics.
    pub summary: Vec<(String, String)>,
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl Report {
    fn new(exp: &Experiment) -> Self {
        Self {
            id: exp.id().to_string(),
            mode: exp.mode_name().to_string(),
            pass: true,
            status: None,
            summary: Vec::new(),
            checks: Vec::new(),
            files: Vec::new(),
            elapsed: Duration::ZERO,
        }
    }

    pub(crate) fn stat(&mut self, name: &str, value: impl std::fmt::Display) {
        self.summary.push((name.to_string(), value.to_string()));
    }

    pub(crate) fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    fn finish(&mut self) {
        self.pass = self.checks.iter().all(|c| c.pass);
    }

    /// Human-readable block; the first line carries the verdict.
    pub fn render(&self) -> String {
        let mut s = format!(
            "[{}] {} ({}) {:.2}s\n",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.mode,
            self.elapsed.as_secs_f64()
        );
        if let Some(st) = &self.status {
            let _ = writeln!(s, "    status: {st}");
        }
        for (k, v) in &self.summary {
            let _ = writeln!(s, "    {k}: {v}");
        }
        for c in &self.checks {
            let _ = writeln!(
                s,
                "    check {}: {} ({})",
                c.name,
                if c.pass { "pass" } else { "fail" },
                c.detail
            );
        }
        s
    }
}

/// Where an experiment writes its files.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Output root; `None` disables file output.
    pub out_dir: Option<PathBuf>,
}

pub(crate) struct Sink {
    dir: Option<PathBuf>,
    files: Vec<PathBuf>,
}

impl Sink {
    fn new(opts: &RunOptions, prefix: &str) -> Self {
        Self {
            dir: opts.out_dir.as_ref().map(|d| d.join(prefix)),
            files: Vec::new(),
        }
    }

    pub(crate) fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        std::fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(io_err(format!("writing {}", path.display())))?;
        self.files.push(path);
        Ok(())
    }

    pub(crate) fn trajectory(&mut self, name: &str, traj: &Trajectory) -> Result<()> {
        if self.dir.is_none() {
            return Ok(());
        }
        let mut buf = Vec::new();
        traj.write_csv(&mut buf)
            .map_err(io_err(format!("formatting {name}")))?;
        self.write(name, &buf)
    }

    pub(crate) fn plot(&mut self, name: &str, panels: &[Panel]) -> Result<()> {
        if self.dir.is_none() {
            return Ok(());
        }
        self.write(name, crate::plot::render(panels).as_bytes())
    }
}

/// The `(t, V)` and `(t, ln v)` panels for a set of labelled trajectories.
pub(crate) fn trajectory_panels(trajs: &[(String, &Trajectory)], log_v: bool) -> Vec<Panel> {
    let mut lyap = Panel::new("Lyapunov function", "t", "V", log_v);
    let mut logv = Panel::new("log variance", "t", "ln v", false);
    for (label, tr) in trajs {
        let pts: Vec<(f64, f64)> = tr
            .records
            .iter()
            .filter_map(|r| r.lyapunov.map(|v| (r.t, v)))
            .collect();
        if !pts.is_empty() {
            lyap = lyap.with_series(label.clone(), pts);
        }
        logv = logv.with_series(
            label.clone(),
            tr.records.iter().map(|r| (r.t, r.theta.v().ln())).collect(),
        );
    }
    vec![lyap, logv]
}

/// Least-squares slope of `y` against `x`.
pub(crate) fn ls_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Linearly interpolated quantile of sorted data, `p` in `[0, 1]`.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn fmt_vec(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", items.join(", "))
}

/// Runs one experiment; configuration problems surface as `Err`, failed verdicts as `pass = false`.
pub fn run_experiment(exp: &Experiment, opts: &RunOptions) -> Result<Report> {
    let start = Instant::now();
    let mut report = Report::new(exp);
    let mut sink = Sink::new(opts, exp.output_prefix());
    if let Some(d) = exp.common().description {
        report.stat("description", d);
    }
    match exp {
        Experiment::OdeRank(s) => ode::run(s, esigo_core::RhsMode::Rank, &mut report, &mut sink)?,
        Experiment::OdeExact(s) => ode::run(s, esigo_core::RhsMode::Exact, &mut report, &mut sink)?,
        Experiment::Discrete(s) => discrete::run(s, &mut report, &mut sink)?,
        Experiment::ExpectedUpdateCheck(s) => checks::expected_update(s, &mut report, &mut sink)?,
        Experiment::B2Report(s) => checks::b2_report(s, &mut report)?,
        Experiment::TransformInvariance(s) => checks::transform_invariance(s, &mut report, &mut sink)?,
        Experiment::CoordinateInvariance(s) => {
            checks::coordinate_invariance(s, &mut report, &mut sink)?
        }
        Experiment::DriftCheck(s) => checks::drift_check(s, &mut report, &mut sink)?,
        Experiment::SlopeCheck(s) => checks::slope_check(s, &mut report, &mut sink)?,
        Experiment::OracleCheck(s) => oracle::run(s, &mut report, &mut sink)?,
    }
    report.finish();
    let json = serde_json::to_vec_pretty(&report).expect("reports serialize");
    sink.write("report.json", &json)?;
    report.files = sink.files;
    report.elapsed = start.elapsed();
    Ok(report)
}

/// Runs the selected experiments on a pool of `workers` threads.
///
/// Reports come back in config order. `only` empty selects every experiment.
pub fn run_config(
    cfg: &LoadedConfig,
    only: &[String],
    workers: Option<usize>,
    opts: &RunOptions,
) -> Result<Vec<Report>> {
    for id in only {
        cfg.get(id)?;
    }
    let selected: Vec<&Experiment> = cfg
        .experiments
        .iter()
        .map(|e| &e.spec)
        .filter(|e| only.is_empty() || only.iter().any(|id| id == e.id()))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = workers {
        builder = builder.num_threads(k.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Io {
            context: "starting worker pool".into(),
            source: std::io::Error::other(e),
        })?;
    pool.install(|| {
        selected
            .par_iter()
            .map(|e| run_experiment(e, opts))
            .collect()
    })
}

/// Default output root: `$ESIGO_OUT_DIR`, else `esigo-out`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(crate::OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new("esigo-out").to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        assert!((ls_slope(&xs, &ys).unwrap() - 2.5).abs() < 1e-14);
        assert!(ls_slope(&[1.0], &[1.0]).is_none());
        assert!(ls_slope(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_eq!(quantile_sorted(&s, 0.25), 1.75);
    }
}
