use esigo_core::discrete::GaussianStream;
use esigo_core::ncx2_cdf;
use esigo_core::quadrature::QuadratureSettings;
use esigo_core::special::normal_cdf;
use esigo_core::weights::{alpha_b2, builtin_weights};
use rayon::prelude::*;

use super::{Check, Report, Sink};
use crate::config::OracleSpec;
use crate::error::Result;

const CHUNK: usize = 1 << 16;

/// Per-chunk `(sum, sum of squares)` of `f` over standard-normal vectors of length `width`.
fn mc_moments<F>(draws: usize, width: usize, seed: u64, outputs: usize, f: F) -> Vec<(f64, f64)>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let chunks = draws.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(draws - c * CHUNK);
            let mut z = vec![0.0; len * width];
            GaussianStream::at_block(seed, c as u64).fill(&mut z);
            let mut acc = vec![(0.0, 0.0); outputs];
            let mut out = vec![0.0; outputs];
            for row in z.chunks_exact(width) {
                f(row, &mut out);
                for (a, y) in acc.iter_mut().zip(&out) {
                    a.0 += y;
                    a.1 += y * y;
                }
            }
            acc
        })
        .reduce(
            || vec![(0.0, 0.0); outputs],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.0 += y.0;
                    x.1 += y.1;
                }
                a
            },
        )
}

/// Mean and standard error from moments of `n` samples.
fn mean_se((sum, sq): (f64, f64), n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sq / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

pub(crate) fn run(spec: &OracleSpec, report: &mut Report, sink: &mut Sink) -> Result<()> {
    let k = spec.sigmas;

    // Noncentral chi-square against simulation, evaluated at the mean dof + lambda.
    let grid: Vec<(usize, f64)> = spec
        .ncx2
        .dofs
        .iter()
        .flat_map(|&d| spec.ncx2.noncentralities.iter().map(move |&l| (d, l)))
        .collect();
    let mut csv = String::from("dof,noncentrality,x,cdf,mc,mc_se,z\n");
    let mut ncx2_fail = 0;
    let mut ncx2_worst: f64 = 0.0;
    for (i, &(dof, lambda)) in grid.iter().enumerate() {
        let x = dof as f64 + lambda;
        let shift = lambda.sqrt();
        let seed = spec.ncx2.seed.wrapping_add(i as u64);
        let mom = mc_moments(spec.ncx2.draws, dof, seed, 1, |z, out| {
            let s: f64 = (z[0] + shift).powi(2) + z[1..].iter().map(|v| v * v).sum::<f64>();
            out[0] = if s <= x { 1.0 } else { 0.0 };
        });
        let p_mc = mom[0].0 / spec.ncx2.draws as f64;
        let cdf = ncx2_cdf(x, dof, lambda)?;
        let se = (cdf * (1.0 - cdf) / spec.ncx2.draws as f64).sqrt();
        let z = (cdf - p_mc).abs() / se.max(f64::MIN_POSITIVE);
        ncx2_worst = ncx2_worst.max(z);
        if z > k {
            ncx2_fail += 1;
        }
        csv.push_str(&format!("{dof},{lambda},{x},{cdf},{p_mc},{se},{z}\n"));
    }
    sink.write("oracle_ncx2.csv", csv.as_bytes())?;
    report.stat("ncx2 max |cdf - mc| / se", format!("{ncx2_worst:.3}"));
    report.check(Check::new(
        "ncx2-vs-mc",
        ncx2_fail == 0,
        format!(
            "{} of {} grid points within {k} se of {} draws",
            grid.len() - ncx2_fail,
            grid.len(),
            spec.ncx2.draws
        ),
    ));

    // Central chi-square with two degrees of freedom in closed form.
    let mut csv = String::from("x,cdf,closed_form,abs_error\n");
    let mut chi2_worst: f64 = 0.0;
    for &x in &spec.chi2.xs {
        let cdf = ncx2_cdf(x, 2, 0.0)?;
        let exact = -(-x / 2.0).exp_m1();
        let err = (cdf - exact).abs();
        chi2_worst = chi2_worst.max(err);
        csv.push_str(&format!("{x},{cdf},{exact},{err}\n"));
    }
    sink.write("oracle_chi2.csv", csv.as_bytes())?;
    report.stat("chi2(2) max abs error", format!("{chi2_worst:.3e}"));
    report.check(Check::new(
        "chi2-closed-form",
        chi2_worst <= spec.chi2.tol,
        format!("max error {chi2_worst:.3e} <= {:e} at {} points", spec.chi2.tol, spec.chi2.xs.len()),
    ));

    // Divergence rate of every built-in weight against simulation.
    let weights = builtin_weights();
    let mom = mc_moments(spec.alpha.samples, 1, spec.alpha.seed, weights.len(), |z, out| {
        let q = normal_cdf(z[0]);
        let h = z[0] * z[0] - 1.0;
        for (o, (_, w)) in out.iter_mut().zip(&weights) {
            *o = w.eval(q).unwrap_or(f64::NAN) * h;
        }
    });
    let mut csv = String::from("weight,dim,quadrature,mc,mc_se,z\n");
    let mut alpha_fail = 0;
    let mut alpha_total = 0;
    for ((name, w), m) in weights.iter().zip(&mom) {
        let (mc1, se1) = mean_se(*m, spec.alpha.samples);
        for &d in &spec.alpha.dims {
            let quad = alpha_b2(w, d, &QuadratureSettings::default())?;
            let (mc, se) = (mc1 / d as f64, se1 / d as f64);
            let z = (quad - mc).abs() / se.max(f64::MIN_POSITIVE);
            alpha_total += 1;
            if !(z <= k) {
                alpha_fail += 1;
            }
            report.stat(
                &format!("alpha {name} d={d}"),
                format!("quadrature {quad:.8}, mc {mc:.8} +- {se:.1e}"),
            );
            csv.push_str(&format!("{name},{d},{quad},{mc},{se},{z}\n"));
        }
    }
    sink.write("oracle_alpha.csv", csv.as_bytes())?;
    report.check(Check::new(
        "alpha-vs-mc",
        alpha_fail == 0,
        format!(
            "{} of {alpha_total} weights within {k} se of {} samples",
            alpha_total - alpha_fail,
            spec.alpha.samples
        ),
    ));
    Ok(())
}
