//! Monotone composite objectives `f = g o h`.
//!
//! The flow and the discrete algorithm only ever compare `f` values, so the
//! outer transform `g` never changes their behaviour. The inner function
//! `h` may expose an analytic gradient, a known optimum with its Hessian, and
//! a shape that admits exact quantiles.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};

/// Strictly increasing outer transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    Identity,
    Exp,
    Arctan,
    Cube,
}

impl Transform {
    pub fn apply(self, y: f64) -> f64 {
        match self {
            Transform::Identity => y,
            Transform::Exp => y.exp(),
            Transform::Arctan => y.atan(),
            Transform::Cube => y * y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::Exp => "exp",
            Transform::Arctan => "arctan",
            Transform::Cube => "cube",
        }
    }
}

type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Inner function `h`.
#[derive(Clone)]
pub enum Inner {
    /// `a^T x`
    Linear { a: Vec<f64> },
    /// `(x - x*)^T A (x - x*) / 2`
    Quadratic { a: DMatrix<f64>, xstar: Vec<f64> },
    /// `sum_i 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2`
    Rosenbrock,
    /// `(x_1^2 - 1)^2 + sum_{i>1} x_i^2`
    DoubleWell,
    /// User-supplied function without derivative information.
    Custom { name: String, f: CustomFn },
}

impl fmt::Debug for Inner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Inner::Linear { a } => f.debug_struct("Linear").field("a", a).finish(),
            Inner::Quadratic { a, xstar } => f
                .debug_struct("Quadratic")
                .field("a", a)
                .field("xstar", xstar)
                .finish(),
            Inner::Rosenbrock => f.write_str("Rosenbrock"),
            Inner::DoubleWell => f.write_str("DoubleWell"),
            Inner::Custom { name, .. } => f.debug_struct("Custom").field("name", name).finish(),
        }
    }
}

/// Objective shapes for which the quantile has a closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum ExactShape {
    Linear { a: Vec<f64> },
    /// `h = (c/2) ||x - x*||^2`
    IsotropicQuadratic { c: f64, xstar: Vec<f64> },
}

/// Monotone composite objective `f = g(h(x))` on `R^d`.
#[derive(Debug, Clone)]
pub struct Objective {
    inner: Inner,
    transform: Transform,
    dim: usize,
    optimum: Option<Vec<f64>>,
    hessian_at_optimum: Option<DMatrix<f64>>,
}

impl Objective {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inner(&self) -> &Inner {
        &self.inner
    }

    pub fn transform(&self) -> Transform {
        self.transform
    }

    pub fn optimum(&self) -> Option<&[f64]> {
        self.optimum.as_deref()
    }

    pub fn hessian_at_optimum(&self) -> Option<&DMatrix<f64>> {
        self.hessian_at_optimum.as_ref()
    }

    /// Same inner function under a different outer transform.
    pub fn with_transform(&self, transform: Transform) -> Self {
        Self {
            transform,
            ..self.clone()
        }
    }

    /// Wraps a user function; no optimum, gradient or exact quantile is known.
    pub fn custom<F>(name: impl Into<String>, dim: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if dim == 0 {
            return config("dimension must be at least 1");
        }
        Ok(Self {
            inner: Inner::Custom {
                name: name.into(),
                f: Arc::new(f),
            },
            transform: Transform::Identity,
            dim,
            optimum: None,
            hessian_at_optimum: None,
        })
    }

    /// Declares a known critical point of `h` and its Hessian.
    pub fn with_optimum(mut self, xstar: Vec<f64>, hessian: DMatrix<f64>) -> Result<Self> {
        if xstar.len() != self.dim || hessian.nrows() != self.dim || hessian.ncols() != self.dim {
            return config("optimum and Hessian must match the objective dimension");
        }
        if let Ok(g) = self.grad_h(&xstar) {
            if norm(&g) > 1e-12 {
                return config("declared optimum is not a critical point of h");
            }
        }
        check_spd(&hessian)?;
        self.optimum = Some(xstar);
        self.hessian_at_optimum = Some(hessian);
        Ok(self)
    }

    /// `h(x)` without the dimension and finiteness checks.
    pub(crate) fn h_unchecked(&self, x: &[f64]) -> f64 {
        match &self.inner {
            Inner::Linear { a } => dot(a, x),
            Inner::Quadratic { a, xstar } => {
                let n = xstar.len();
                let mut acc = 0.0;
                for i in 0..n {
                    let di = x[i] - xstar[i];
                    let mut row = 0.0;
                    for j in 0..n {
                        row += a[(i, j)] * (x[j] - xstar[j]);
                    }
                    acc += di * row;
                }
                0.5 * acc
            }
            Inner::Rosenbrock => x
                .windows(2)
                .map(|p| {
                    let t = p[1] - p[0] * p[0];
                    let u = 1.0 - p[0];
                    100.0 * t * t + u * u
                })
                .sum(),
            Inner::DoubleWell => {
                let t = x[0] * x[0] - 1.0;
                t * t + x[1..].iter().map(|v| v * v).sum::<f64>()
            }
            Inner::Custom { f, .. } => f(x),
        }
    }

    /// `f(x)` without input checks; non-finite results are returned as is.
    pub(crate) fn f_unchecked(&self, x: &[f64]) -> f64 {
        self.transform.apply(self.h_unchecked(x))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return domain(format!("point has {} coordinates, expected {}", x.len(), self.dim));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return domain("point has non-finite coordinates");
        }
        Ok(())
    }

    /// Inner value `h(x)`.
    pub fn eval_h(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let y = self.h_unchecked(x);
        if !y.is_finite() {
            return domain("h(x) is not finite");
        }
        Ok(y)
    }

    /// Objective value `g(h(x))`.
    pub fn eval_f(&self, x: &[f64]) -> Result<f64> {
        let y = self.transform.apply(self.eval_h(x)?);
        if !y.is_finite() {
            return domain(format!("{}(h(x)) overflows", self.transform.name()));
        }
        Ok(y)
    }

    /// Analytic gradient of the inner function.
    pub fn grad_h(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let g = match &self.inner {
            Inner::Linear { a } => a.clone(),
            Inner::Quadratic { a, xstar } => {
                let n = xstar.len();
                (0..n)
                    .map(|i| (0..n).map(|j| a[(i, j)] * (x[j] - xstar[j])).sum())
                    .collect()
            }
            Inner::Rosenbrock => {
                let n = x.len();
                let mut g = vec![0.0; n];
                for i in 0..n - 1 {
                    let t = x[i + 1] - x[i] * x[i];
                    g[i] += -400.0 * x[i] * t - 2.0 * (1.0 - x[i]);
                    g[i + 1] += 200.0 * t;
                }
                g
            }
            Inner::DoubleWell => {
                let mut g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
                g[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0);
                g
            }
            Inner::Custom { name, .. } => {
                return Err(Error::Capability(format!(
                    "custom objective '{name}' has no analytic gradient"
                )))
            }
        };
        Ok(g)
    }

    /// Closed-form quantile shape, when one exists.
    pub fn exact_shape(&self) -> Option<ExactShape> {
        match &self.inner {
            Inner::Linear { a } => Some(ExactShape::Linear { a: a.clone() }),
            Inner::Quadratic { a, xstar } => {
                let c = a[(0, 0)];
                let n = xstar.len();
                let isotropic = (0..n).all(|i| {
                    (0..n).all(|j| {
                        let expected = if i == j { c } else { 0.0 };
                        a[(i, j)] == expected
                    })
                });
                isotropic.then(|| ExactShape::IsotropicQuadratic {
                    c,
                    xstar: xstar.clone(),
                })
            }
            _ => None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_spd(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return config("matrix must be square");
    }
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let tol = 1e-12 * (m[(i, j)].abs() + m[(j, i)].abs()).max(1.0);
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return config("matrix is not symmetric");
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return config("matrix has non-finite entries");
    }
    let min_eig = m.clone().symmetric_eigenvalues().min();
    if min_eig <= 0.0 {
        return config(format!(
            "matrix is not positive definite (smallest eigenvalue {min_eig:e})"
        ));
    }
    Ok(())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// Parameters for [`make_builtin`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinParams {
    /// Linear coefficient vector `a`.
    #[serde(default)]
    pub a: Option<Vec<f64>>,
    /// Quadratic matrix `A`, row-major.
    #[serde(default)]
    pub matrix: Option<Vec<f64>>,
    /// Optimum `x*` of a quadratic.
    #[serde(default)]
    pub xstar: Option<Vec<f64>>,
}

/// Builds one of the named test objectives with the identity transform.
///
/// Names: `linear`, `quadratic`, `sphere`, `rosenbrock`, `double-well`.
pub fn make_builtin(name: &str, dim: usize, params: &BuiltinParams) -> Result<Objective> {
    if dim == 0 {
        return config("dimension must be at least 1");
    }
    let vec_param = |v: &Option<Vec<f64>>, what: &str| -> Result<Option<Vec<f64>>> {
        match v {
            Some(v) if v.len() != dim => config(format!(
                "{what} has length {}, expected {dim}",
                v.len()
            )),
            Some(v) if v.iter().any(|x| !x.is_finite()) => {
                config(format!("{what} has non-finite entries"))
            }
            other => Ok(other.clone()),
        }
    };
    let base = |inner: Inner| Objective {
        inner,
        transform: Transform::Identity,
        dim,
        optimum: None,
        hessian_at_optimum: None,
    };
    match name {
        "linear" => {
            let a = vec_param(&params.a, "a")?.unwrap_or_else(|| {
                let mut a = vec![0.0; dim];
                a[0] = 1.0;
                a
            });
            if a.iter().all(|v| *v == 0.0) {
                return config("linear objective needs a non-zero coefficient vector");
            }
            Ok(base(Inner::Linear { a }))
        }
        "quadratic" | "sphere" => {
            let xstar = vec_param(&params.xstar, "xstar")?.unwrap_or_else(|| vec![0.0; dim]);
            let a = if name == "sphere" {
                if params.matrix.is_some() {
                    return config("sphere takes no matrix; use quadratic");
                }
                DMatrix::identity(dim, dim)
            } else {
                let m = params
                    .matrix
                    .as_ref()
                    .ok_or_else(|| Error::Configuration("quadratic needs a matrix".into()))?;
                if m.len() != dim * dim {
                    return config(format!(
                        "matrix has {} entries, expected {}",
                        m.len(),
                        dim * dim
                    ));
                }
                DMatrix::from_row_slice(dim, dim, m)
            };
            check_spd(&a)?;
            Ok(Objective {
                optimum: Some(xstar.clone()),
                hessian_at_optimum: Some(a.clone()),
                ..base(Inner::Quadratic { a, xstar })
            })
        }
        "rosenbrock" => {
            if dim < 2 {
                return config("rosenbrock needs dimension >= 2");
            }
            let xstar = vec![1.0; dim];
            let hessian = rosenbrock_hessian(&xstar);
            check_spd(&hessian)?;
            Ok(Objective {
                optimum: Some(xstar),
                hessian_at_optimum: Some(hessian),
                ..base(Inner::Rosenbrock)
            })
        }
        "double-well" => {
            let mut xstar = vec![0.0; dim];
            xstar[0] = 1.0;
            let mut hessian = DMatrix::identity(dim, dim) * 2.0;
            hessian[(0, 0)] = 8.0;
            Ok(Objective {
                optimum: Some(xstar),
                hessian_at_optimum: Some(hessian),
                ..base(Inner::DoubleWell)
            })
        }
        other => config(format!("unknown builtin objective '{other}'")),
    }
}

fn rosenbrock_hessian(x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        h[(i, i)] += 1200.0 * x[i] * x[i] - 400.0 * x[i + 1] + 2.0;
        h[(i + 1, i + 1)] += 200.0;
        h[(i, i + 1)] += -400.0 * x[i];
        h[(i + 1, i)] += -400.0 * x[i];
    }
    h
}

/// Serializable objective description used in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveDescriptor {
    pub name: String,
    pub dim: usize,
    #[serde(default)]
    pub params: BuiltinParams,
    #[serde(default = "default_transform")]
    pub transform: Transform,
}

fn default_transform() -> Transform {
    Transform::Identity
}

impl ObjectiveDescriptor {
    pub fn build(&self) -> Result<Objective> {
        Ok(make_builtin(&self.name, self.dim, &self.params)?.with_transform(self.transform))
    }
}
