//! The stochastic rank-based algorithm whose small-step limit is the flow.
//!
//! One iteration samples `n` candidates from `N(m, v I)`, ranks them by
//! objective value and moves `(m, v)` by `eta` times the rank-weighted
//! average of `(x_i - m, |x_i - m|^2 / d - v)`.

use std::io::{self, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{config, domain, Result};
use crate::flow::{counting_ranks, lyapunov_value, Status, ThetaIso, Trajectory, TrajectoryRecord};
use crate::objectives::Objective;
use crate::special::normal_inv_cdf;
use crate::weights::{bernstein_from_finite, WeightSpec};

/// Retries allowed for a step that would leave `v > 0`.
pub const DEFAULT_MAX_RETRIES: usize = 10;

/// Counter-based standard-normal source.
///
/// Block `k` is drawn from ChaCha8 stream `k` under the run seed, so every
/// block can be regenerated independently of the others.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GaussianStream {
    seed: u64,
    counter: u64,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    /// Stream positioned at block `block`.
    pub fn at_block(seed: u64, block: u64) -> Self {
        Self {
            seed,
            counter: block,
        }
    }

    /// Blocks drawn so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    /// Fills `out` with standard normals from the next block.
    pub fn fill(&mut self, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.counter);
        self.counter += 1;
        for z in out.iter_mut() {
            // 53 random bits, shifted to the centre of their cell so u is in (0, 1)
            let u = ((rng.next_u64() >> 11) as f64 + 0.5) * f64::EPSILON / 2.0;
            *z = normal_inv_cdf(u);
        }
    }
}

/// How ranks become preferences in the discrete step.
#[derive(Debug, Clone, PartialEq)]
pub enum DiscreteWeights {
    /// `u_i = w((R_i - 1/2) / n)`
    Function(WeightSpec),
    /// `u_i = w_{R_i}` for an explicit rank-weight vector of length `n`.
    Ranked(Vec<f64>),
}

impl DiscreteWeights {
    /// The weight `w_R` of rank `R = 1..=n`.
    pub fn rank_weights(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            DiscreteWeights::Function(w) => Ok(w.midpoint_weights(n)),
            DiscreteWeights::Ranked(ws) if ws.len() == n => Ok(ws.clone()),
            DiscreteWeights::Ranked(ws) => config(format!(
                "{} rank weights given for population size {n}",
                ws.len()
            )),
        }
    }

    /// The weight function whose flow this algorithm tracks as `eta -> 0`.
    pub fn expected(&self, n: usize) -> Result<WeightSpec> {
        expected_weight(&self.rank_weights(n)?, n)
    }
}

/// Bernstein smoothing of finite rank weights; the expected preference of a
/// candidate at quantile `p` in a population of `lambda`.
pub fn expected_weight(finite_weights: &[f64], lambda: usize) -> Result<WeightSpec> {
    bernstein_from_finite(finite_weights, lambda)
}

/// The direction `h = sum_i (w_{R_i} / n) (x_i - m, |x_i - m|^2 / d - v)` for given standard-normal draws.
///
/// `draws` holds `n` points of dimension `d`, row-major; `x_i = m + sqrt(v) z_i`.
pub fn update_direction(
    theta: &ThetaIso,
    obj: &Objective,
    rank_weights: &[f64],
    draws: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let d = theta.dim();
    if obj.dim() != d {
        return domain("theta and objective dimensions differ");
    }
    let n = rank_weights.len();
    if n < 2 || draws.len() != n * d {
        return config("need at least two candidates and n * d draws");
    }
    let sd = theta.v().sqrt();
    let mut x = vec![0.0; d];
    let mut fvals = Vec::with_capacity(n);
    for z in draws.chunks_exact(d) {
        for ((xi, mi), zi) in x.iter_mut().zip(theta.m()).zip(z) {
            *xi = mi + sd * zi;
        }
        let f = obj.f_unchecked(&x);
        if !f.is_finite() {
            return domain("objective value is not finite");
        }
        fvals.push(f);
    }
    let ranks = counting_ranks(&fvals);
    let nf = n as f64;
    let mut hm = vec![0.0; d];
    let mut hv = 0.0;
    for (z, r) in draws.chunks_exact(d).zip(&ranks) {
        let u = rank_weights[r - 1];
        for (h, zi) in hm.iter_mut().zip(z) {
            *h += sd * u * zi;
        }
        let ns: f64 = z.iter().map(|c| c * c).sum();
        hv += theta.v() * u * (ns / d as f64 - 1.0);
    }
    Ok((hm.into_iter().map(|h| h / nf).collect(), hv / nf))
}

/// Outcome of one attempted iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Accepted(ThetaIso),
    /// The proposal had `v' <= 0` and was discarded.
    Rejected { proposed_v: f64 },
}

/// One iteration from `theta` with population size `n` and step size `eta`.
pub fn step(
    theta: &ThetaIso,
    obj: &Objective,
    weights: &DiscreteWeights,
    n: usize,
    eta: f64,
    stream: &mut GaussianStream,
) -> Result<StepOutcome> {
    let rank_weights = weights.rank_weights(n)?;
    step_with(theta, obj, &rank_weights, eta, stream)
}

fn step_with(
    theta: &ThetaIso,
    obj: &Objective,
    rank_weights: &[f64],
    eta: f64,
    stream: &mut GaussianStream,
) -> Result<StepOutcome> {
    let mut draws = vec![0.0; rank_weights.len() * theta.dim()];
    stream.fill(&mut draws);
    apply_update(theta, obj, rank_weights, eta, &draws)
}

/// Applies one update for explicit standard-normal draws.
pub fn apply_update(
    theta: &ThetaIso,
    obj: &Objective,
    rank_weights: &[f64],
    eta: f64,
    draws: &[f64],
) -> Result<StepOutcome> {
    let (hm, hv) = update_direction(theta, obj, rank_weights, draws)?;
    let m: Vec<f64> = theta.m().iter().zip(&hm).map(|(m, h)| m + eta * h).collect();
    let v = theta.v() + eta * hv;
    if v > 0.0 {
        Ok(StepOutcome::Accepted(ThetaIso::new(m, v)?))
    } else {
        Ok(StepOutcome::Rejected { proposed_v: v })
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub theta0: ThetaIso,
    /// Step size; `0` leaves `theta` fixed.
    pub eta: f64,
    pub n: usize,
    pub iterations: usize,
    pub seed: u64,
    pub weights: DiscreteWeights,
    pub objective: Objective,
    /// Record every `output_stride` iterations (the last iteration is always recorded).
    pub output_stride: usize,
    /// Centre of the Lyapunov function; the objective's optimum when `None`.
    pub xstar: Option<Vec<f64>>,
    pub max_retries: usize,
}

impl RunConfig {
    pub fn new(theta0: ThetaIso, objective: Objective, weights: DiscreteWeights) -> Self {
        Self {
            theta0,
            eta: 0.01,
            n: 20,
            iterations: 1000,
            seed: 0,
            weights,
            objective,
            output_stride: 1,
            xstar: None,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return config("eta must be finite and non-negative");
        }
        if self.n < 2 {
            return config("population size must be at least 2");
        }
        if self.iterations == 0 {
            return config("at least one iteration is required");
        }
        if self.output_stride == 0 {
            return config("output stride must be positive");
        }
        if self.theta0.dim() != self.objective.dim() {
            return config("theta0 and objective dimensions differ");
        }
        Ok(())
    }
}

/// A discarded proposal, logged as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionEvent {
    pub iteration: usize,
    pub attempt: usize,
    pub proposed_v: f64,
}

#[derive(Debug, Clone)]
pub struct DiscreteRun {
    pub trajectory: Trajectory,
    pub events: Vec<RejectionEvent>,
}

impl DiscreteRun {
    pub fn write_events<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Iterates the algorithm; reproducible bit-for-bit from the seed.
///
/// Records carry `t = k * eta`. With `eta = 0` no time passes and only the
/// initial record is kept.
pub fn run(cfg: &RunConfig) -> Result<DiscreteRun> {
    cfg.validate()?;
    let rank_weights = cfg.weights.rank_weights(cfg.n)?;
    let xstar = cfg
        .xstar
        .clone()
        .or_else(|| cfg.objective.optimum().map(<[f64]>::to_vec));
    let record = |k: usize, theta: &ThetaIso| TrajectoryRecord {
        t: k as f64 * cfg.eta,
        lyapunov: xstar
            .as_ref()
            .and_then(|x| lyapunov_value(theta.m(), theta.v(), x).ok()),
        gv_over_v: None,
        theta: theta.clone(),
    };
    let mut stream = GaussianStream::new(cfg.seed);
    let mut theta = cfg.theta0.clone();
    let mut records = vec![record(0, &theta)];
    let mut events = Vec::new();
    let mut status = Status::BudgetExhausted;
    let mut message = None;

    if cfg.eta == 0.0 {
        return Ok(DiscreteRun {
            trajectory: Trajectory {
                records,
                status,
                message,
            },
            events,
        });
    }

    'iterations: for k in 1..=cfg.iterations {
        let mut attempt = 0;
        loop {
            match step_with(&theta, &cfg.objective, &rank_weights, cfg.eta, &mut stream) {
                Ok(StepOutcome::Accepted(next)) => {
                    theta = next;
                    break;
                }
                Ok(StepOutcome::Rejected { proposed_v }) => {
                    events.push(RejectionEvent {
                        iteration: k,
                        attempt,
                        proposed_v,
                    });
                    attempt += 1;
                    if attempt > cfg.max_retries {
                        status = Status::DomainError;
                        message = Some(format!(
                            "iteration {k}: {attempt} consecutive proposals with v <= 0"
                        ));
                        break 'iterations;
                    }
                }
                Err(e) => {
                    status = Status::DomainError;
                    message = Some(format!("iteration {k}: {e}"));
                    break 'iterations;
                }
            }
        }
        if k % cfg.output_stride == 0 || k == cfg.iterations {
            records.push(record(k, &theta));
        }
    }
    Ok(DiscreteRun {
        trajectory: Trajectory {
            records,
            status,
            message,
        },
        events,
    })
}

/// State of a piecewise-constant discrete path at time `t`.
pub fn state_at(path: &Trajectory, t: f64) -> &ThetaIso {
    let slack = 1e-9 * t.abs().max(1.0);
    let idx = path.records.partition_point(|r| r.t <= t + slack);
    &path.records[idx.saturating_sub(1)].theta
}

/// `sqrt(|m_1 - m_2|^2 + (v_1 - v_2)^2)`
pub fn theta_distance(a: &ThetaIso, b: &ThetaIso) -> f64 {
    let dm: f64 = a.m().iter().zip(b.m()).map(|(x, y)| (x - y) * (x - y)).sum();
    (dm + (a.v() - b.v()).powi(2)).sqrt()
}

/// Largest distance between a discrete path and reference records with `t <= t_max`.
pub fn sup_distance(discrete: &Trajectory, reference: &Trajectory, t_max: f64) -> f64 {
    reference
        .records
        .iter()
        .filter(|r| r.t <= t_max)
        .map(|r| theta_distance(state_at(discrete, r.t), &r.theta))
        .fold(0.0, f64::max)
}

/// Sample mean and standard error of the update direction over independent draws.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionStats {
    pub mean_m: Vec<f64>,
    pub mean_v: f64,
    pub se_m: Vec<f64>,
    pub se_v: f64,
    pub samples: usize,
}

/// Averages `update_direction` over `samples` independent populations at fixed `theta`.
///
/// The direction equals `(theta' - theta) / eta` for any `eta`, so this is the
/// mean one-step displacement per unit step size.
pub fn mean_update_direction(
    theta: &ThetaIso,
    obj: &Objective,
    weights: &DiscreteWeights,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<DirectionStats> {
    if samples < 2 {
        return config("need at least two samples");
    }
    let rank_weights = weights.rank_weights(n)?;
    let d = theta.dim();
    let mut stream = GaussianStream::new(seed);
    let mut draws = vec![0.0; n * d];
    let mut sum_m = vec![0.0; d];
    let mut sq_m = vec![0.0; d];
    let (mut sum_v, mut sq_v) = (0.0, 0.0);
    for _ in 0..samples {
        stream.fill(&mut draws);
        let (hm, hv) = update_direction(theta, obj, &rank_weights, &draws)?;
        for i in 0..d {
            sum_m[i] += hm[i];
            sq_m[i] += hm[i] * hm[i];
        }
        sum_v += hv;
        sq_v += hv * hv;
    }
    let s = samples as f64;
    let se = |sum: f64, sq: f64| ((sq / s - (sum / s).powi(2)).max(0.0) / (s - 1.0)).sqrt();
    Ok(DirectionStats {
        mean_m: sum_m.iter().map(|x| x / s).collect(),
        mean_v: sum_v / s,
        se_m: sum_m.iter().zip(&sq_m).map(|(a, b)| se(*a, *b)).collect(),
        se_v: se(sum_v, sq_v),
        samples,
    })
}
