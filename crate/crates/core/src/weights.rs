//! Preference weight functions `w: [0, 1] -> R`.
//!
//! A weight maps the quantile of a candidate under the current search
//! distribution to its preference. Smaller quantiles are better, so useful
//! weights are non-increasing. Two families are provided: a handful of named
//! analytic shapes, and the Bernstein polynomial built from a finite vector
//! of rank weights `(w_1, ..., w_lambda)`, which is the exact expected
//! preference of a rank-`i` candidate in a population of size `lambda`.

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::quadrature::{integrate_adaptive, QuadratureSettings};
use crate::special::{normal_cdf, normal_pdf};

/// Half-width of the truncated integration range for the linear-divergence rate.
pub const ALPHA_Z_RANGE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    NamedAnalytic,
    FiniteWeights,
}

/// Bernstein polynomial `p -> sum_i w_i C(lambda-1, i-1) p^(i-1) (1-p)^(lambda-i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinWeights {
    weights: Vec<f64>,
    ln_binom: Vec<f64>,
}

impl BernsteinWeights {
    fn new(weights: Vec<f64>) -> Self {
        let n = weights.len() - 1;
        let mut ln_binom = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        ln_binom.push(0.0);
        for k in 1..=n {
            acc += ((n - k + 1) as f64).ln() - (k as f64).ln();
            ln_binom.push(acc);
        }
        Self { weights, ln_binom }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn eval(&self, p: f64) -> f64 {
        let n = self.weights.len() - 1;
        if n == 0 || p <= 0.0 {
            return self.weights[0];
        }
        if p >= 1.0 {
            return self.weights[n];
        }
        let ln_p = p.ln();
        let ln_q = (-p).ln_1p();
        self.weights
            .iter()
            .zip(&self.ln_binom)
            .enumerate()
            .filter(|(_, (w, _))| **w != 0.0)
            .map(|(k, (w, lb))| w * (lb + k as f64 * ln_p + (n - k) as f64 * ln_q).exp())
            .sum()
    }
}

/// Shape of a weight function before the affine post-transform.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightForm {
    /// `max(0, 1 - 2q)`
    TruncationLinear,
    /// `(1 - q)^k`
    Power { k: f64 },
    /// `sigmoid(s (c - q)) - sigmoid(s (c - 1))`, zero at `q = 1`.
    Sigmoid { steepness: f64, center: f64 },
    /// `intercept + slope * q`; covers constant and linear weights.
    Affine { intercept: f64, slope: f64 },
    Bernstein(BernsteinWeights),
}

/// A weight function `q -> scale * form(q) + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    form: WeightForm,
    scale: f64,
    offset: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl WeightSpec {
    fn from_form(form: WeightForm) -> Self {
        Self {
            form,
            scale: 1.0,
            offset: 0.0,
        }
    }

    pub fn truncation_linear() -> Self {
        Self::from_form(WeightForm::TruncationLinear)
    }

    pub fn power(k: f64) -> Result<Self> {
        if !(k.is_finite() && k >= 1.0) {
            return config(format!("power weight needs a finite exponent k >= 1, got {k}"));
        }
        Ok(Self::from_form(WeightForm::Power { k }))
    }

    pub fn sigmoid(steepness: f64, center: f64) -> Result<Self> {
        if !(steepness.is_finite() && steepness > 0.0 && center.is_finite()) {
            return config("sigmoid weight needs a positive finite steepness and a finite center");
        }
        Ok(Self::from_form(WeightForm::Sigmoid { steepness, center }))
    }

    /// The shipped sigmoid member: steepness 10 centred at 0.3.
    pub fn default_sigmoid() -> Self {
        Self::from_form(WeightForm::Sigmoid {
            steepness: 10.0,
            center: 0.3,
        })
    }

    pub fn affine(intercept: f64, slope: f64) -> Result<Self> {
        if !(intercept.is_finite() && slope.is_finite()) {
            return config("affine weight coefficients must be finite");
        }
        Ok(Self::from_form(WeightForm::Affine { intercept, slope }))
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::affine(c, 0.0)
    }

    /// Returns `c * self + b`.
    pub fn scaled(&self, c: f64, b: f64) -> Self {
        Self {
            form: self.form.clone(),
            scale: self.scale * c,
            offset: self.offset * c + b,
        }
    }

    pub fn form(&self) -> &WeightForm {
        &self.form
    }

    pub fn kind(&self) -> WeightKind {
        match self.form {
            WeightForm::Bernstein(_) => WeightKind::FiniteWeights,
            _ => WeightKind::NamedAnalytic,
        }
    }

    /// Population size of the finite form.
    pub fn lambda(&self) -> Option<usize> {
        match &self.form {
            WeightForm::Bernstein(b) => Some(b.weights.len()),
            _ => None,
        }
    }

    pub fn finite_weights(&self) -> Option<Vec<f64>> {
        match &self.form {
            WeightForm::Bernstein(b) => Some(
                b.weights
                    .iter()
                    .map(|w| self.scale * w + self.offset)
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Lipschitz constant known from the closed form (a bound for the finite form).
    pub fn declared_lipschitz(&self) -> Option<f64> {
        let base = match &self.form {
            WeightForm::TruncationLinear => 2.0,
            WeightForm::Power { k } => *k,
            WeightForm::Sigmoid { steepness, .. } => steepness / 4.0,
            WeightForm::Affine { slope, .. } => slope.abs(),
            WeightForm::Bernstein(b) => {
                let max_jump = b
                    .weights
                    .windows(2)
                    .map(|p| (p[1] - p[0]).abs())
                    .fold(0.0, f64::max);
                b.weights.len() as f64 * max_jump
            }
        };
        let l = base * self.scale.abs();
        l.is_finite().then_some(l)
    }

    /// `w(q)` without the domain check; callers guarantee `q` in [0, 1].
    pub(crate) fn value(&self, q: f64) -> f64 {
        let base = match &self.form {
            WeightForm::TruncationLinear => (1.0 - 2.0 * q).max(0.0),
            WeightForm::Power { k } => (1.0 - q).powf(*k),
            WeightForm::Sigmoid { steepness, center } => {
                sigmoid(steepness * (center - q)) - sigmoid(steepness * (center - 1.0))
            }
            WeightForm::Affine { intercept, slope } => intercept + slope * q,
            WeightForm::Bernstein(b) => b.eval(q),
        };
        self.scale * base + self.offset
    }

    /// Evaluates `w(q)` for `q` in [0, 1].
    pub fn eval(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return domain(format!("weight argument {q} outside [0, 1]"));
        }
        Ok(self.value(q))
    }

    /// Rank weights `w((i - 1/2) / n)` for `i = 1..=n`.
    pub fn midpoint_weights(&self, n: usize) -> Vec<f64> {
        (1..=n)
            .map(|i| self.value((i as f64 - 0.5) / n as f64))
            .collect()
    }
}

/// Smooths finite rank weights into their Bernstein polynomial.
pub fn bernstein_from_finite(weights: &[f64], lambda: usize) -> Result<WeightSpec> {
    if lambda == 0 {
        return config("population size must be at least 1");
    }
    if weights.len() != lambda {
        return config(format!(
            "expected {lambda} finite weights, got {}",
            weights.len()
        ));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
        return config(format!("finite weights must be finite, got {w}"));
    }
    Ok(WeightSpec::from_form(WeightForm::Bernstein(
        BernsteinWeights::new(weights.to_vec()),
    )))
}

/// Evaluates `w(q)`; see [`WeightSpec::eval`].
pub fn eval_weight(w: &WeightSpec, q: f64) -> Result<f64> {
    w.eval(q)
}

/// Grid-based report of the necessary conditions of the weight assumption.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct B1Report {
    pub grid_size: usize,
    pub monotone: bool,
    /// First grid index `k` with `w(q_{k+1}) > w(q_k)`.
    pub first_violation: Option<usize>,
    /// `w(0) - w(1)`
    pub gap: f64,
    /// Largest adjacent slope magnitude on the grid.
    pub lipschitz_estimate: f64,
    pub declared_lipschitz: Option<f64>,
    pub pass: bool,
}

/// Relative slack allowed for round-off in flat regions.
const MONOTONE_SLACK: f64 = 1e-12;

/// Checks non-increase on a uniform grid and `w(0) > w(1)`.
///
/// The Lipschitz estimate is informational only; a finite grid cannot
/// certify Lipschitz continuity.
pub fn check_b1(w: &WeightSpec, grid_size: usize) -> B1Report {
    let grid_size = grid_size.max(2);
    let step = 1.0 / (grid_size - 1) as f64;
    let values: Vec<f64> = (0..grid_size)
        .map(|k| w.value(if k + 1 == grid_size { 1.0 } else { k as f64 * step }))
        .collect();
    let mut first_violation = None;
    let mut lipschitz_estimate: f64 = 0.0;
    for (k, pair) in values.windows(2).enumerate() {
        let diff = pair[1] - pair[0];
        let slack = MONOTONE_SLACK * pair[0].abs().max(1.0);
        if diff > slack && first_violation.is_none() {
            first_violation = Some(k);
        }
        lipschitz_estimate = lipschitz_estimate.max(diff.abs() / step);
    }
    let gap = values[0] - values[grid_size - 1];
    let monotone = first_violation.is_none() && values.iter().all(|v| v.is_finite());
    B1Report {
        grid_size,
        monotone,
        first_violation,
        gap,
        lipschitz_estimate,
        declared_lipschitz: w.declared_lipschitz(),
        pass: monotone && gap > 0.0,
    }
}

/// Linear-function divergence rate `alpha = E[w(Phi(Z)) (Z^2 - 1)] / d`, `Z ~ N(0, 1)`.
///
/// Computed by composite Gauss–Legendre quadrature on `[-10, 10]` with the
/// normal density folded into the integrand. A positive value means the
/// variance grows as `v0 exp(alpha t)` on every linear objective.
pub fn alpha_b2(w: &WeightSpec, d: usize, quadrature: &QuadratureSettings) -> Result<f64> {
    if d == 0 {
        return domain("dimension must be at least 1");
    }
    let integrand = |z: f64| w.value(normal_cdf(z)) * (z * z - 1.0) * normal_pdf(z);
    let one_dim = integrate_adaptive(&integrand, -ALPHA_Z_RANGE, ALPHA_Z_RANGE, quadrature)?;
    Ok(one_dim / d as f64)
}

/// Serializable weight description used in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightDescriptor {
    TruncationLinear,
    Power {
        k: f64,
    },
    Sigmoid {
        #[serde(default = "default_steepness")]
        steepness: f64,
        #[serde(default = "default_center")]
        center: f64,
    },
    Affine {
        intercept: f64,
        slope: f64,
    },
    Constant {
        value: f64,
    },
    Finite {
        weights: Vec<f64>,
    },
    /// Bernstein smoothing of the midpoint rank weights of an analytic shape.
    MidpointBernstein {
        of: Box<WeightDescriptor>,
        lambda: usize,
    },
}

fn default_steepness() -> f64 {
    10.0
}

fn default_center() -> f64 {
    0.3
}

impl WeightDescriptor {
    pub fn build(&self) -> Result<WeightSpec> {
        match self {
            Self::TruncationLinear => Ok(WeightSpec::truncation_linear()),
            Self::Power { k } => WeightSpec::power(*k),
            Self::Sigmoid { steepness, center } => WeightSpec::sigmoid(*steepness, *center),
            Self::Affine { intercept, slope } => WeightSpec::affine(*intercept, *slope),
            Self::Constant { value } => WeightSpec::constant(*value),
            Self::Finite { weights } => bernstein_from_finite(weights, weights.len()),
            Self::MidpointBernstein { of, lambda } => {
                let base = of.build()?;
                if *lambda == 0 {
                    return config("lambda must be positive");
                }
                bernstein_from_finite(&base.midpoint_weights(*lambda), *lambda)
            }
        }
    }
}

/// The named weights shipped with the crate, used by the oracle checks.
pub fn builtin_weights() -> Vec<(&'static str, WeightSpec)> {
    vec![
        ("truncation-linear", WeightSpec::truncation_linear()),
        ("power-2", WeightSpec::power(2.0).expect("valid exponent")),
        ("power-3", WeightSpec::power(3.0).expect("valid exponent")),
        ("sigmoid", WeightSpec::default_sigmoid()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> QuadratureSettings {
        QuadratureSettings {
            abs_tol: 1e-13,
            ..Default::default()
        }
    }

    #[test]
    fn truncation_linear_values() {
        let w = WeightSpec::truncation_linear();
        assert_eq!(w.eval(0.0).unwrap(), 1.0);
        assert_eq!(w.eval(0.25).unwrap(), 0.5);
        assert_eq!(w.eval(0.9).unwrap(), 0.0);
    }

    #[test]
    fn eval_rejects_out_of_range() {
        let w = WeightSpec::truncation_linear();
        assert!(w.eval(-1e-9).is_err());
        assert!(w.eval(1.5).is_err());
        assert!(w.eval(f64::NAN).is_err());
    }

    #[test]
    fn bernstein_two_weights_is_one_minus_p() {
        let w = bernstein_from_finite(&[1.0, 0.0], 2).unwrap();
        assert!((w.eval(0.3).unwrap() - 0.7).abs() < 1e-15);
        for k in 0..=10 {
            let p = k as f64 / 10.0;
            assert!((w.eval(p).unwrap() - (1.0 - p)).abs() < 1e-15);
        }
    }

    #[test]
    fn bernstein_three_weights_is_squared() {
        let w = bernstein_from_finite(&[1.0, 0.0, 0.0], 3).unwrap();
        for k in 0..=20 {
            let p = k as f64 / 20.0;
            assert!((w.eval(p).unwrap() - (1.0 - p).powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn bernstein_constant_weights() {
        let w = bernstein_from_finite(&[0.4; 9], 9).unwrap();
        for k in 0..=50 {
            assert!((w.eval(k as f64 / 50.0).unwrap() - 0.4).abs() < 1e-15);
        }
    }

    #[test]
    fn bernstein_length_mismatch() {
        assert!(bernstein_from_finite(&[1.0, 0.0], 3).is_err());
        assert!(bernstein_from_finite(&[], 0).is_err());
    }

    #[test]
    fn bernstein_matches_de_casteljau_for_large_lambda() {
        let lambda = 200;
        let ws: Vec<f64> = (0..lambda).map(|i| ((lambda - i) as f64).ln()).collect();
        let w = bernstein_from_finite(&ws, lambda).unwrap();
        for &p in &[1e-4, 0.1, 0.5, 0.93, 1.0 - 1e-5] {
            let mut b = ws.clone();
            for r in 1..lambda {
                for i in 0..lambda - r {
                    b[i] = (1.0 - p) * b[i] + p * b[i + 1];
                }
            }
            assert!((w.eval(p).unwrap() - b[0]).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn b1_truncation_linear_passes() {
        let r = check_b1(&WeightSpec::truncation_linear(), 1001);
        assert!(r.pass);
        assert_eq!(r.gap, 1.0);
        assert!((r.lipschitz_estimate - 2.0).abs() < 1e-9);
        assert_eq!(r.declared_lipschitz, Some(2.0));
    }

    #[test]
    fn b1_constant_fails_on_gap() {
        let r = check_b1(&WeightSpec::constant(1.0).unwrap(), 101);
        assert!(r.monotone);
        assert_eq!(r.gap, 0.0);
        assert!(!r.pass);
    }

    #[test]
    fn b1_increasing_fails_on_monotonicity() {
        let r = check_b1(&WeightSpec::affine(0.0, 1.0).unwrap(), 101);
        assert!(!r.monotone);
        assert_eq!(r.first_violation, Some(0));
        assert!(!r.pass);
    }

    #[test]
    fn builtin_weights_pass_b1() {
        for (name, w) in builtin_weights() {
            assert!(check_b1(&w, 2001).pass, "{name}");
        }
    }

    #[test]
    fn bernstein_lipschitz_bound() {
        let w = bernstein_from_finite(&[1.0, 0.5, 0.0], 3).unwrap();
        assert_eq!(w.declared_lipschitz(), Some(1.5));
        let r = check_b1(&w, 1001);
        assert!(r.lipschitz_estimate <= 1.5);
    }

    #[test]
    fn alpha_constant_weight_is_zero() {
        let w = WeightSpec::constant(3.0).unwrap();
        for d in [1, 4] {
            assert!(alpha_b2(&w, d, &quad()).unwrap().abs() < 1e-13);
        }
    }

    #[test]
    fn alpha_linear_weight_is_zero() {
        let w = WeightSpec::affine(1.0, -1.0).unwrap();
        assert!(alpha_b2(&w, 1, &quad()).unwrap().abs() < 1e-10);
    }

    #[test]
    fn alpha_truncation_linear_closed_form() {
        // E[(1 - 2 Phi(Z))^+ (Z^2 - 1)] evaluates to 1 / (2 pi)
        let a = alpha_b2(&WeightSpec::truncation_linear(), 1, &quad()).unwrap();
        assert!((a - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-12, "{a}");
    }

    #[test]
    fn alpha_dimension_scaling_is_exact() {
        let w = WeightSpec::power(3.0).unwrap();
        let a1 = alpha_b2(&w, 1, &quad()).unwrap();
        for d in [2, 3, 7] {
            assert_eq!(alpha_b2(&w, d, &quad()).unwrap(), a1 / d as f64);
        }
    }

    #[test]
    fn alpha_symmetric_sigmoid_is_zero() {
        let w = WeightSpec::sigmoid(10.0, 0.5).unwrap();
        assert!(check_b1(&w, 1001).pass);
        assert!(alpha_b2(&w, 1, &quad()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn alpha_rejects_zero_dimension() {
        assert!(alpha_b2(&WeightSpec::truncation_linear(), 0, &quad()).is_err());
    }

    #[test]
    fn descriptor_parsing() {
        let w: WeightDescriptor = serde_json::from_str(r#"{"kind": "truncation-linear"}"#).unwrap();
        assert_eq!(w, WeightDescriptor::TruncationLinear);
        let w: WeightDescriptor = serde_json::from_str(r#"{"kind": "power", "k": 2}"#).unwrap();
        assert_eq!(w.build().unwrap().eval(0.5).unwrap(), 0.25);
        let w: WeightDescriptor =
            serde_json::from_str(r#"{"kind": "finite", "weights": [1, 0, 0]}"#).unwrap();
        let spec = w.build().unwrap();
        assert_eq!(spec.lambda(), Some(3));
        assert!(serde_json::from_str::<WeightDescriptor>(r#"{"kind": "step"}"#).is_err());
    }

    #[test]
    fn midpoint_bernstein_descriptor() {
        let d = WeightDescriptor::MidpointBernstein {
            of: Box::new(WeightDescriptor::TruncationLinear),
            lambda: 4,
        };
        let w = d.build().unwrap();
        assert_eq!(w.finite_weights().unwrap(), vec![0.75, 0.25, 0.0, 0.0]);
    }
}
