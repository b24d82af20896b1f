//! Acceptance suite: runs every `cN-` experiment of the shipped config and
//! prints one verdict line per criterion.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use esigo_cli::config;
use esigo_cli::runner::{run_experiment, Report, RunOptions};

struct Criterion {
    number: u32,
    title: &'static str,
    /// Runtime limit applied to each experiment of the criterion.
    per_experiment: Duration,
    /// Runtime limit for the criterion as a whole.
    total: Duration,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

const CRITERIA: [Criterion; 10] = [
    Criterion { number: 1, title: "linear-function variance law", per_experiment: secs(30), total: secs(30) },
    Criterion { number: 2, title: "global convergence on the sphere", per_experiment: secs(120), total: secs(240) },
    Criterion { number: 3, title: "monotone-transform invariance", per_experiment: secs(30), total: secs(30) },
    Criterion { number: 4, title: "parameterization invariance", per_experiment: secs(30), total: secs(30) },
    Criterion { number: 5, title: "negative Lyapunov drift", per_experiment: secs(120), total: secs(120) },
    Criterion { number: 6, title: "no premature convergence on slopes", per_experiment: secs(60), total: secs(60) },
    Criterion { number: 7, title: "local convergence on C2 composites", per_experiment: secs(120), total: secs(120) },
    Criterion { number: 8, title: "discrete-ODE tracking", per_experiment: secs(300), total: secs(300) },
    Criterion { number: 9, title: "expected-update identity", per_experiment: secs(180), total: secs(180) },
    Criterion { number: 10, title: "oracle agreement", per_experiment: secs(120), total: secs(120) },
];

fn main() -> ExitCode {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/acceptance.json");
    let cfg = match config::load(&path) {
        Ok(c) => c,
        Err(e) => {
            println!("acceptance: cannot load {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    };
    let out = tempfile::tempdir().expect("temporary output directory");
    let opts = RunOptions {
        out_dir: Some(out.path().to_path_buf()),
    };

    let mut lines = Vec::new();
    let mut all_pass = true;
    for c in &CRITERIA {
        let prefix = format!("c{}-", c.number);
        let specs: Vec<_> = cfg
            .experiments
            .iter()
            .filter(|e| e.spec.id().starts_with(&prefix))
            .collect();
        let start = Instant::now();
        let mut reports: Vec<Report> = Vec::new();
        let mut errors = Vec::new();
        for e in &specs {
            match run_experiment(&e.spec, &opts) {
                Ok(r) => reports.push(r),
                Err(err) => errors.push(format!("{}: {err}", e.spec.id())),
            }
        }
        let elapsed = start.elapsed();
        for r in &reports {
            print!("{}", r.render());
        }
        let slow: Vec<String> = reports
            .iter()
            .filter(|r| r.elapsed > c.per_experiment)
            .map(|r| format!("{} took {:.1}s", r.id, r.elapsed.as_secs_f64()))
            .collect();
        let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.id.as_str()).collect();
        let pass = !specs.is_empty()
            && errors.is_empty()
            && failed.is_empty()
            && slow.is_empty()
            && elapsed <= c.total;
        all_pass &= pass;
        let mut line = format!(
            "criterion {:>2} [{}] {}: {} experiment(s), {:.2}s (limit {}s)",
            c.number,
            if pass { "PASS" } else { "FAIL" },
            c.title,
            specs.len(),
            elapsed.as_secs_f64(),
            c.total.as_secs()
        );
        if specs.is_empty() {
            line.push_str("; no experiments in config");
        }
        for msg in errors.iter().chain(&slow) {
            line.push_str(&format!("; {msg}"));
        }
        if !failed.is_empty() {
            line.push_str(&format!("; failed: {}", failed.join(", ")));
        }
        println!("{line}");
        lines.push(line);
    }

    println!();
    println!("acceptance summary");
    for l in &lines {
        println!("{l}");
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
