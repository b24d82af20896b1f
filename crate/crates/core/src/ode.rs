//! Explicit Runge–Kutta integrators: Dormand–Prince 5(4) with step control, and classic RK4.
//!
//! Both integrators land exactly on the requested output times by shortening
//! the step that would cross one.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dopri5Settings {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for Dopri5Settings {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h0: 1e-3,
            h_min: 1e-14,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    Dopri5(Dopri5Settings),
    Rk4 { h: f64 },
}

impl Default for Method {
    fn default() -> Self {
        Method::Dopri5(Dopri5Settings::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OdeError<E> {
    Rhs { t: f64, source: E },
    StepTooSmall { t: f64, h: f64 },
    MaxSteps { t: f64 },
    NonFinite { t: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSummary {
    pub t: f64,
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub stopped_early: bool,
}

/// Accepted step passed to the observer.
pub struct StepInfo<'a> {
    pub t: f64,
    pub y: &'a [f64],
    /// Whether `t` is one of the requested output times.
    pub at_output: bool,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 5th-order minus embedded 4th-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = rhs(t, y)` from `t0` to `t_end`.
///
/// `outputs` must be sorted; entries outside `(t0, t_end]` are ignored. The
/// observer sees every accepted step and may stop the integration.
pub fn solve<E, F, O>(
    method: &Method,
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    outputs: &[f64],
    mut observer: O,
) -> Result<OdeSummary, OdeError<E>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    O: FnMut(StepInfo<'_>) -> Control,
{
    let mut targets: Vec<f64> = outputs
        .iter()
        .copied()
        .filter(|&t| t > t0 && t <= t_end)
        .collect();
    if targets.last().is_none_or(|&t| t < t_end) {
        targets.push(t_end);
    }
    let output_set: Vec<f64> = outputs.to_vec();
    match method {
        Method::Dopri5(s) => dopri5(s, &mut rhs, t0, y0, &targets, &output_set, &mut observer),
        Method::Rk4 { h } => rk4(*h, &mut rhs, t0, y0, &targets, &output_set, &mut observer),
    }
}

fn is_output(outputs: &[f64], t: f64) -> bool {
    outputs.binary_search_by(|o| o.total_cmp(&t)).is_ok()
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..y.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn dopri5<E, F, O>(
    s: &Dopri5Settings,
    rhs: &mut F,
    t0: f64,
    y0: &[f64],
    targets: &[f64],
    outputs: &[f64],
    observer: &mut O,
) -> Result<OdeSummary, OdeError<E>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    O: FnMut(StepInfo<'_>) -> Control,
{
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut evals = 1usize;
    rhs(t, &y, &mut k1).map_err(|e| OdeError::Rhs { t, source: e })?;
    let mut h = s.h0;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut target_idx = 0;

    while target_idx < targets.len() {
        let target = targets[target_idx];
        if accepted + rejected >= s.max_steps {
            return Err(OdeError::MaxSteps { t });
        }
        let hits_target = t + h >= target;
        let h_step = if hits_target { target - t } else { h };
        if h_step < s.h_min && !hits_target {
            return Err(OdeError::StepTooSmall { t, h: h_step });
        }
        let stage = |f: &mut F, tt: f64, yy: &[f64], k: &mut [f64]| {
            f(tt, yy, k).map_err(|e| OdeError::Rhs { t: tt, source: e })
        };
        axpy(&mut ytmp, &y, h_step, &[(A21, &k1)]);
        stage(rhs, t + C2 * h_step, &ytmp, &mut k2)?;
        axpy(&mut ytmp, &y, h_step, &[(A31, &k1), (A32, &k2)]);
        stage(rhs, t + C3 * h_step, &ytmp, &mut k3)?;
        axpy(&mut ytmp, &y, h_step, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        stage(rhs, t + C4 * h_step, &ytmp, &mut k4)?;
        axpy(&mut ytmp, &y, h_step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        stage(rhs, t + C5 * h_step, &ytmp, &mut k5)?;
        axpy(
            &mut ytmp,
            &y,
            h_step,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        );
        stage(rhs, t + h_step, &ytmp, &mut k6)?;
        axpy(
            &mut ynew,
            &y,
            h_step,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        let t_new = if hits_target { target } else { t + h_step };
        stage(rhs, t_new, &ynew, &mut k7)?;
        evals += 6;

        let mut err_sq = 0.0;
        for i in 0..n {
            let e = h_step
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = s.atol + s.rtol * y[i].abs().max(ynew[i].abs());
            err_sq += (e / scale).powi(2);
        }
        let err = (err_sq / n as f64).sqrt();
        if !err.is_finite() || ynew.iter().any(|v| !v.is_finite()) {
            if h_step <= s.h_min {
                return Err(OdeError::NonFinite { t });
            }
            h = h_step * 0.1;
            rejected += 1;
            continue;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        if err <= 1.0 {
            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            accepted += 1;
            if hits_target {
                target_idx += 1;
            }
            // keep the proposed step when the last one was only shortened to hit a target
            h = if hits_target { h.max(h_step * factor) } else { h_step * factor };
            let info = StepInfo {
                t,
                y: &y,
                at_output: hits_target && is_output(outputs, t),
            };
            if observer(info) == Control::Stop {
                return Ok(OdeSummary {
                    t,
                    y,
                    accepted,
                    rejected,
                    rhs_evals: evals,
                    stopped_early: true,
                });
            }
        } else {
            rejected += 1;
            h = h_step * factor.min(1.0);
            if h < s.h_min {
                return Err(OdeError::StepTooSmall { t, h });
            }
        }
    }
    Ok(OdeSummary {
        t,
        y,
        accepted,
        rejected,
        rhs_evals: evals,
        stopped_early: false,
    })
}

fn rk4<E, F, O>(
    h: f64,
    rhs: &mut F,
    t0: f64,
    y0: &[f64],
    targets: &[f64],
    outputs: &[f64],
    observer: &mut O,
) -> Result<OdeSummary, OdeError<E>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    O: FnMut(StepInfo<'_>) -> Control,
{
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut evals = 0usize;
    let mut accepted = 0usize;
    let mut target_idx = 0;
    if !(h > 0.0 && h.is_finite()) {
        return Err(OdeError::StepTooSmall { t, h });
    }
    while target_idx < targets.len() {
        let target = targets[target_idx];
        // a target within round-off of a full step counts as reached
        let hits_target = t + h >= target - 1e-12 * target.abs().max(1.0);
        let h_step = if hits_target { target - t } else { h };
        let wrap = |t: f64| move |e| OdeError::Rhs { t, source: e };
        rhs(t, &y, &mut k1).map_err(wrap(t))?;
        axpy(&mut ytmp, &y, 0.5 * h_step, &[(1.0, &k1)]);
        rhs(t + 0.5 * h_step, &ytmp, &mut k2).map_err(wrap(t))?;
        axpy(&mut ytmp, &y, 0.5 * h_step, &[(1.0, &k2)]);
        rhs(t + 0.5 * h_step, &ytmp, &mut k3).map_err(wrap(t))?;
        axpy(&mut ytmp, &y, h_step, &[(1.0, &k3)]);
        rhs(t + h_step, &ytmp, &mut k4).map_err(wrap(t))?;
        evals += 4;
        for i in 0..n {
            y[i] += h_step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite { t });
        }
        t = if hits_target { target } else { t + h_step };
        accepted += 1;
        if hits_target {
            target_idx += 1;
        }
        let info = StepInfo {
            t,
            y: &y,
            at_output: hits_target && is_output(outputs, t),
        };
        if observer(info) == Control::Stop {
            return Ok(OdeSummary {
                t,
                y,
                accepted,
                rejected: 0,
                rhs_evals: evals,
                stopped_early: true,
            });
        }
    }
    Ok(OdeSummary {
        t,
        y,
        accepted,
        rejected: 0,
        rhs_evals: evals,
        stopped_early: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ()> {
        dy[0] = -y[0];
        Ok(())
    }

    fn oscillator(_t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ()> {
        dy[0] = y[1];
        dy[1] = -y[0];
        Ok(())
    }

    #[test]
    fn dopri5_exponential_decay() {
        let outs: Vec<f64> = (1..=10).map(|k| k as f64).collect();
        let mut seen = Vec::new();
        let res = solve(&Method::default(), decay, 0.0, &[1.0], 10.0, &outs, |s| {
            if s.at_output {
                seen.push((s.t, s.y[0]));
            }
            Control::Continue
        })
        .unwrap();
        assert_eq!(seen.len(), 10);
        for (t, y) in seen {
            assert!((y - (-t).exp()).abs() < 1e-7 * (-t).exp() + 1e-9, "t={t}");
        }
        assert_eq!(res.t, 10.0);
        assert!(!res.stopped_early);
    }

    #[test]
    fn dopri5_oscillator_phase() {
        let res = solve(&Method::default(), oscillator, 0.0, &[1.0, 0.0], 20.0, &[], |_| {
            Control::Continue
        })
        .unwrap();
        assert!((res.y[0] - 20f64.cos()).abs() < 1e-7);
        assert!((res.y[1] + 20f64.sin()).abs() < 1e-7);
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        let err = |h: f64| {
            let r = solve(&Method::Rk4 { h }, decay, 0.0, &[1.0], 2.0, &[], |_| Control::Continue)
                .unwrap();
            (r.y[0] - (-2f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn rk4_hits_outputs_exactly() {
        let outs = [0.25, 0.5, 0.75];
        let mut hit = Vec::new();
        solve(&Method::Rk4 { h: 0.1 }, decay, 0.0, &[1.0], 1.0, &outs, |s| {
            if s.at_output {
                hit.push(s.t);
            }
            Control::Continue
        })
        .unwrap();
        assert_eq!(hit, outs);
    }

    #[test]
    fn observer_can_stop() {
        let res = solve(&Method::default(), decay, 0.0, &[1.0], 100.0, &[], |s| {
            if s.y[0] < 0.5 {
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert!(res.stopped_early);
        assert!(res.t < 100.0 && res.y[0] < 0.5);
    }

    #[test]
    fn rhs_errors_propagate() {
        let res = solve(
            &Method::default(),
            |t: f64, _y: &[f64], dy: &mut [f64]| {
                dy[0] = 1.0;
                if t > 0.5 {
                    Err("boom")
                } else {
                    Ok(())
                }
            },
            0.0,
            &[0.0],
            1.0,
            &[],
            |_| Control::Continue,
        );
        assert!(matches!(res, Err(OdeError::Rhs { source: "boom", .. })));
    }

    #[test]
    fn max_steps_is_reported() {
        let m = Method::Dopri5(Dopri5Settings {
            max_steps: 3,
            h0: 1e-3,
            ..Default::default()
        });
        let res = solve(&m, decay, 0.0, &[1.0], 1e3, &[], |_| Control::Continue);
        assert!(matches!(res, Err(OdeError::MaxSteps { .. })));
    }
}
