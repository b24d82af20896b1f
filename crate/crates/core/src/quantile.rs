//! Quantiles `q_theta(x) = P_theta[y : f(y) <= f(x)]` under the isotropic Gaussian.
//!
//! Linear objectives and isotropic quadratics have closed forms (the latter
//! through the noncentral chi-square CDF). Everything else goes through an
//! empirical count over a fixed point set transported to `m + sqrt(v) z`.

use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{config, domain, Error, Result};
use crate::flow::ThetaIso;
use crate::objectives::{ExactShape, Objective};
use crate::points::PointSet;
use crate::special::normal_cdf;

/// Poisson mass allowed to remain outside the summed window, per side.
const NCX2_TAIL: f64 = 5e-15;
const NCX2_MAX_TERMS: usize = 2_000_000;
/// Re-anchor the gamma recurrences with a direct evaluation this often.
const NCX2_REANCHOR: usize = 256;

/// Noncentral chi-square CDF `P[chi2_dof(noncentrality) <= x]`.
///
/// Poisson mixture of central CDFs, summed outward from the Poisson mode
/// with the regularized gamma recurrences, stopped once the remaining
/// Poisson mass on both sides is below 1e-14.
pub fn ncx2_cdf(x: f64, dof: usize, noncentrality: f64) -> Result<f64> {
    if !(x.is_finite() && noncentrality.is_finite()) {
        return domain("ncx2_cdf inputs must be finite");
    }
    if dof == 0 {
        return domain("ncx2_cdf needs at least one degree of freedom");
    }
    if noncentrality < 0.0 {
        return domain("noncentrality must be non-negative");
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let half_dof = dof as f64 / 2.0;
    let y = x / 2.0;
    if noncentrality == 0.0 {
        return Ok(gamma_lr(half_dof, y));
    }
    let mu = noncentrality / 2.0;
    let j0 = mu.floor();
    let a0 = half_dof + j0;
    let p0 = (-mu + j0 * mu.ln() - ln_gamma(j0 + 1.0)).exp();
    let cdf0 = gamma_lr(a0, y);
    // t(a) = y^a e^-y / Gamma(a + 1), so P(a + 1) = P(a) - t(a)
    let t0 = (a0 * y.ln() - y - ln_gamma(a0 + 1.0)).exp();

    let mut sum = p0 * cdf0;
    let mut terms = 1usize;

    // upward: j = j0 + 1, j0 + 2, ...
    let (mut p, mut cdf, mut t, mut a, mut j) = (p0, cdf0, t0, a0, j0);
    loop {
        j += 1.0;
        p *= mu / j;
        cdf -= t;
        a += 1.0;
        t *= y / a;
        terms += 1;
        if terms.is_multiple_of(NCX2_REANCHOR) {
            cdf = gamma_lr(a, y);
            t = (a * y.ln() - y - ln_gamma(a + 1.0)).exp();
        }
        sum += p * cdf.max(0.0);
        let ratio = mu / (j + 1.0);
        if ratio < 1.0 && p * ratio / (1.0 - ratio) < NCX2_TAIL {
            break;
        }
        if terms > NCX2_MAX_TERMS {
            return Err(Error::Numerical("ncx2_cdf series budget exhausted".into()));
        }
    }

    // downward: j = j0 - 1, ..., 0
    let (mut p, mut cdf, mut t, mut a, mut j) = (p0, cdf0, t0, a0, j0);
    let mut steps = 0usize;
    while j >= 1.0 {
        // t(a - 1) = t(a) a / y and P(a - 1) = P(a) + t(a - 1)
        p *= j / mu;
        j -= 1.0;
        t *= a / y;
        a -= 1.0;
        cdf += t;
        steps += 1;
        terms += 1;
        if steps.is_multiple_of(NCX2_REANCHOR) {
            cdf = gamma_lr(a, y);
            t = (a * y.ln() - y - ln_gamma(a + 1.0)).exp();
        }
        sum += p * cdf.min(1.0);
        // remaining terms shrink at least geometrically with ratio j / mu
        let ratio = j / mu;
        if ratio < 1.0 && p * ratio / (1.0 - ratio) < NCX2_TAIL {
            break;
        }
        if terms > NCX2_MAX_TERMS {
            return Err(Error::Numerical("ncx2_cdf series budget exhausted".into()));
        }
    }
    Ok(sum.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantileKind {
    ExactLinear,
    ExactIsotropicQuadratic,
    Empirical,
}

/// Quantile evaluator bound to one objective.
#[derive(Debug, Clone)]
pub struct QuantileModel {
    kind: QuantileKind,
    shape: Option<ExactShape>,
    sample_set: Option<PointSet>,
    objective: Objective,
}

impl QuantileModel {
    /// Closed-form model; fails when the objective has no exact shape.
    pub fn exact(objective: &Objective) -> Result<Self> {
        let shape = objective.exact_shape().ok_or_else(|| {
            Error::Capability("objective has no closed-form quantile (needs linear or A = cI)".into())
        })?;
        let kind = match shape {
            ExactShape::Linear { .. } => QuantileKind::ExactLinear,
            ExactShape::IsotropicQuadratic { .. } => QuantileKind::ExactIsotropicQuadratic,
        };
        Ok(Self {
            kind,
            shape: Some(shape),
            sample_set: None,
            objective: objective.clone(),
        })
    }

    /// Counting model over a standard-normal sample set.
    pub fn empirical(objective: &Objective, sample_set: PointSet) -> Result<Self> {
        if sample_set.is_empty() {
            return config("empirical quantile needs a non-empty sample set");
        }
        if sample_set.dim() != objective.dim() {
            return config("sample set dimension does not match the objective");
        }
        Ok(Self {
            kind: QuantileKind::Empirical,
            shape: None,
            sample_set: Some(sample_set),
            objective: objective.clone(),
        })
    }

    pub fn kind(&self) -> QuantileKind {
        self.kind
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn is_exact(&self) -> bool {
        self.shape.is_some()
    }

    pub(crate) fn shape(&self) -> Option<&ExactShape> {
        self.shape.as_ref()
    }

    /// Dispatches to the exact or empirical evaluator.
    pub fn quantile(&self, theta: &ThetaIso, x: &[f64]) -> Result<f64> {
        match self.kind {
            QuantileKind::Empirical => empirical_quantile(self, theta, x),
            _ => exact_quantile(self, theta, x),
        }
    }
}

fn check_dims(obj: &Objective, theta: &ThetaIso, x: &[f64]) -> Result<()> {
    if theta.dim() != obj.dim() || x.len() != obj.dim() {
        return domain("theta, x and objective dimensions differ");
    }
    if x.iter().any(|c| !c.is_finite()) {
        return domain("point has non-finite coordinates");
    }
    Ok(())
}

/// Exact quantile of `x` given a closed-form shape. `v` may be zero, in
/// which case the distribution is the point mass at `m`.
pub(crate) fn exact_quantile_raw(shape: &ExactShape, m: &[f64], v: f64, x: &[f64]) -> Result<f64> {
    match shape {
        ExactShape::Linear { a } => {
            let diff: f64 = a.iter().zip(x.iter().zip(m)).map(|(ai, (xi, mi))| ai * (xi - mi)).sum();
            if v == 0.0 {
                return Ok(if diff >= 0.0 { 1.0 } else { 0.0 });
            }
            let norm_a = a.iter().map(|c| c * c).sum::<f64>().sqrt();
            Ok(normal_cdf(diff / (v.sqrt() * norm_a)))
        }
        ExactShape::IsotropicQuadratic { xstar, .. } => {
            let rx: f64 = x.iter().zip(xstar).map(|(a, b)| (a - b) * (a - b)).sum();
            let rm: f64 = m.iter().zip(xstar).map(|(a, b)| (a - b) * (a - b)).sum();
            if v == 0.0 {
                return Ok(if rm <= rx { 1.0 } else { 0.0 });
            }
            ncx2_cdf(rx / v, xstar.len(), rm / v)
        }
    }
}

/// Closed-form quantile for linear and isotropic quadratic objectives.
pub fn exact_quantile(model: &QuantileModel, theta: &ThetaIso, x: &[f64]) -> Result<f64> {
    let shape = model
        .shape
        .as_ref()
        .ok_or_else(|| Error::Capability("empirical model has no exact quantile".into()))?;
    check_dims(&model.objective, theta, x)?;
    exact_quantile_raw(shape, theta.m(), theta.v(), x)
}

/// Sorted objective values of the sample set transported to `theta`.
#[derive(Debug, Clone)]
pub struct EmpiricalQuantiles {
    sorted: Vec<f64>,
}

impl EmpiricalQuantiles {
    pub fn at(model: &QuantileModel, theta: &ThetaIso) -> Result<Self> {
        let set = model
            .sample_set
            .as_ref()
            .ok_or_else(|| Error::Capability("exact model carries no sample set".into()))?;
        if theta.dim() != model.objective.dim() {
            return domain("theta and objective dimensions differ");
        }
        let sd = theta.v().sqrt();
        let mut x = vec![0.0; set.dim()];
        let mut sorted = Vec::with_capacity(set.len());
        for z in set.iter() {
            for ((xi, mi), zi) in x.iter_mut().zip(theta.m()).zip(z) {
                *xi = mi + sd * zi;
            }
            sorted.push(model.objective.eval_f(&x)?);
        }
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    /// Fraction of samples with `f(y_k) <= fx`.
    pub fn of_value(&self, fx: f64) -> f64 {
        self.sorted.partition_point(|f| *f <= fx) as f64 / self.sorted.len() as f64
    }
}

/// `|{k : f(y_k) <= f(x)}| / M` over the transported sample set.
pub fn empirical_quantile(model: &QuantileModel, theta: &ThetaIso, x: &[f64]) -> Result<f64> {
    check_dims(&model.objective, theta, x)?;
    let fx = model.objective.eval_f(x)?;
    Ok(EmpiricalQuantiles::at(model, theta)?.of_value(fx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{make_builtin, BuiltinParams, Transform};

    fn sphere(d: usize) -> Objective {
        make_builtin("sphere", d, &BuiltinParams::default()).unwrap()
    }

    #[test]
    fn central_chi2_two_dof_median() {
        let x = 2.0 * 2f64.ln();
        assert!((ncx2_cdf(x, 2, 0.0).unwrap() - 0.5).abs() < 1e-15);
        for &x in &[0.01, 0.5, 3.0, 17.0, 60.0] {
            let exact = -(-x / 2.0f64).exp_m1();
            assert!((ncx2_cdf(x, 2, 0.0).unwrap() - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn left_endpoint_is_zero() {
        for dof in [1, 3, 10] {
            for nc in [0.0, 0.7, 40.0] {
                assert_eq!(ncx2_cdf(0.0, dof, nc).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ncx2_cdf(f64::NAN, 2, 1.0).is_err());
        assert!(ncx2_cdf(1.0, 0, 1.0).is_err());
        assert!(ncx2_cdf(1.0, 2, -1.0).is_err());
        assert!(ncx2_cdf(1.0, 2, f64::INFINITY).is_err());
    }

    #[test]
    fn one_dof_matches_normal_form() {
        // chi2_1(delta^2) CDF at x is Phi(sqrt x - delta) - Phi(-sqrt x - delta)
        for &(x, delta) in &[(0.3, 0.5), (2.0, 1.0), (9.0, 3.0), (150.0, 12.0), (0.01, 0.1)] {
            let s = f64::sqrt(x);
            let expected = normal_cdf(s - delta) - normal_cdf(-s - delta);
            let got = ncx2_cdf(x, 1, delta * delta).unwrap();
            assert!((got - expected).abs() < 1e-12, "x={x} delta={delta}: {got} vs {expected}");
        }
    }

    #[test]
    fn large_noncentrality_is_stable() {
        // chi2_3(lambda) has mean 3 + lambda and variance 6 + 4 lambda
        let nc: f64 = 2.0e5;
        let sd = (6.0 + 4.0 * nc).sqrt();
        let lo = ncx2_cdf(3.0 + nc - 8.0 * sd, 3, nc).unwrap();
        let mid = ncx2_cdf(3.0 + nc, 3, nc).unwrap();
        let hi = ncx2_cdf(3.0 + nc + 8.0 * sd, 3, nc).unwrap();
        assert!(lo < 1e-12);
        assert!((mid - 0.5).abs() < 0.01);
        assert!(hi > 1.0 - 1e-12);
    }

    #[test]
    fn exact_linear_at_mean_is_half() {
        let lin = make_builtin("linear", 2, &BuiltinParams::default()).unwrap();
        let model = QuantileModel::exact(&lin).unwrap();
        assert_eq!(model.kind(), QuantileKind::ExactLinear);
        let theta = ThetaIso::new(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(exact_quantile(&model, &theta, &[0.0, 9.0]).unwrap(), 0.5);
    }

    #[test]
    fn exact_sphere_examples() {
        let model = QuantileModel::exact(&sphere(2)).unwrap();
        let theta = ThetaIso::new(vec![0.0, 0.0], 1.0).unwrap();
        let r = (2.0 * 2f64.ln()).sqrt();
        let q = exact_quantile(&model, &theta, &[r, 0.0]).unwrap();
        assert!((q - 0.5).abs() < 1e-14);
        for v in [1e-6, 0.3, 50.0] {
            let theta = ThetaIso::new(vec![0.0, 0.0], v).unwrap();
            assert_eq!(exact_quantile(&model, &theta, &[0.0, 0.0]).unwrap(), 0.0);
        }
    }

    #[test]
    fn exact_rejects_other_shapes() {
        let r = make_builtin("rosenbrock", 2, &BuiltinParams::default()).unwrap();
        assert!(matches!(QuantileModel::exact(&r), Err(Error::Capability(_))));
        let points = PointSet::sobol_normal(64, 2, 0).unwrap();
        let emp = QuantileModel::empirical(&r, points).unwrap();
        let theta = ThetaIso::new(vec![0.0, 0.0], 1.0).unwrap();
        assert!(matches!(
            exact_quantile(&emp, &theta, &[0.0, 0.0]),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn empirical_counts() {
        // f(x) = x at m = 0, v = 1 gives sample f-values {1, 2, 3}
        let lin = make_builtin("linear", 1, &BuiltinParams::default()).unwrap();
        let points = PointSet::from_points(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let model = QuantileModel::empirical(&lin, points).unwrap();
        let theta = ThetaIso::new(vec![0.0], 1.0).unwrap();
        assert!((empirical_quantile(&model, &theta, &[2.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(empirical_quantile(&model, &theta, &[0.5]).unwrap(), 0.0);
        assert_eq!(empirical_quantile(&model, &theta, &[3.0]).unwrap(), 1.0);
    }

    #[test]
    fn empirical_matches_exact_at_median() {
        let obj = sphere(1);
        let points = PointSet::sobol_normal(100_000, 1, 11).unwrap();
        let emp = QuantileModel::empirical(&obj, points).unwrap();
        let exact = QuantileModel::exact(&obj).unwrap();
        let theta = ThetaIso::new(vec![0.0], 1.0).unwrap();
        // median of chi2_1
        let x = [0.454_936_423_119_572_7f64.sqrt()];
        let qe = exact_quantile(&exact, &theta, &x).unwrap();
        assert!((qe - 0.5).abs() < 1e-12);
        assert!((empirical_quantile(&emp, &theta, &x).unwrap() - qe).abs() < 0.01);
    }

    #[test]
    fn transform_does_not_change_quantiles() {
        let base = sphere(3);
        let points = PointSet::sobol_normal(2048, 3, 5).unwrap();
        let theta = ThetaIso::new(vec![0.5, -1.0, 2.0], 0.7).unwrap();
        let x = [1.0, 0.0, 1.5];
        let e0 = QuantileModel::empirical(&base, points.clone()).unwrap();
        let x0 = QuantileModel::exact(&base).unwrap();
        for t in [Transform::Exp, Transform::Arctan, Transform::Cube] {
            let obj = base.with_transform(t);
            let e1 = QuantileModel::empirical(&obj, points.clone()).unwrap();
            let x1 = QuantileModel::exact(&obj).unwrap();
            assert_eq!(
                empirical_quantile(&e0, &theta, &x).unwrap(),
                empirical_quantile(&e1, &theta, &x).unwrap()
            );
            assert_eq!(
                exact_quantile(&x0, &theta, &x).unwrap(),
                exact_quantile(&x1, &theta, &x).unwrap()
            );
        }
    }

    #[test]
    fn empirical_requires_samples() {
        let obj = sphere(2);
        let wrong_dim = PointSet::sobol_normal(8, 3, 0).unwrap();
        assert!(matches!(
            QuantileModel::empirical(&obj, wrong_dim),
            Err(Error::Configuration(_))
        ));
    }
}
