//! Continuous-time flow of isotropic evolution strategies and its discrete counterpart.
//!
//! The crate provides:
//!
//! - [`weights`]: preference weight functions, their grid validation, the
//!   Bernstein smoothing of finite rank weights and the linear-function
//!   divergence rate `alpha`;
//! - [`objectives`]: monotone composite test objectives `g o h`;
//! - [`quantile`]: exact and empirical quantiles under `N(m, v I)`,
//!   including the noncentral chi-square CDF;
//! - [`flow`]: the right-hand side of the flow, its integration, the
//!   Lyapunov function `|m - x*|^2 + d v` and its drift;
//! - [`discrete`]: the stochastic rank-based update and its expected weight.

pub mod discrete;
pub mod error;
pub mod flow;
pub mod objectives;
pub mod ode;
pub mod points;
pub mod quadrature;
pub mod quantile;
pub mod special;
pub mod weights;

pub use error::{Error, Result};
pub use flow::{
    drift, integrate, lyapunov, rhs_exact, rhs_rank, Coordinates, EsIgoField, RhsEstimate, RhsMode,
    SolverSettings, Status, StopCriteria, ThetaIso, Trajectory,
};
pub use objectives::{make_builtin, BuiltinParams, Objective, Transform};
pub use points::PointSet;
pub use quantile::{empirical_quantile, exact_quantile, ncx2_cdf, QuantileModel};
pub use weights::{alpha_b2, bernstein_from_finite, check_b1, eval_weight, WeightSpec};
