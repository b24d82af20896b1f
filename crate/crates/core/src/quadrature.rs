//! Composite Gauss–Legendre quadrature on bounded intervals.

use crate::error::{Error, Result};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the rule by Newton iteration on the Legendre polynomial roots.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess for the i-th root, descending from 1.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrates `f` over [a, b] with a single application of the rule.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Composite rule with `panels` equal sub-intervals.
    pub fn integrate_composite<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let lo = a + h * k as f64;
                self.integrate(f, lo, lo + h)
            })
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Settings for adaptive composite quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSettings {
    /// Target absolute error between successive panel doublings.
    pub abs_tol: f64,
    /// Points per Gauss–Legendre panel.
    pub order: usize,
    /// Panels used on the first pass.
    pub initial_panels: usize,
    /// Upper bound on the panel count.
    pub max_panels: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            order: 20,
            initial_panels: 16,
            max_panels: 1 << 14,
        }
    }
}

/// Doubles the panel count until two successive composite estimates agree to `abs_tol`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    settings: &QuadratureSettings,
) -> Result<f64> {
    let rule = GaussLegendre::new(settings.order);
    let mut panels = settings.initial_panels.max(1);
    let mut prev = rule.integrate_composite(f, a, b, panels);
    while panels * 2 <= settings.max_panels {
        panels *= 2;
        let next = rule.integrate_composite(f, a, b, panels);
        if !next.is_finite() {
            return Err(Error::Numerical("non-finite quadrature estimate".into()));
        }
        if (next - prev).abs() <= settings.abs_tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Numerical(format!(
        "quadrature did not reach {:e} within {} panels",
        settings.abs_tol, settings.max_panels
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(5);
        // degree 9 is the exactness limit of a 5-point rule
        let v = rule.integrate(&|x: f64| x.powi(8) + 3.0 * x.powi(3), -1.0, 1.0);
        assert!((v - 2.0 / 9.0).abs() < 1e-15);
        let s: f64 = rule.weights().iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn odd_order_has_center_node() {
        let rule = GaussLegendre::new(7);
        assert_eq!(rule.nodes()[3], 0.0);
        assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn adaptive_gaussian_mass() {
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let v = integrate_adaptive(&phi, -10.0, 10.0, &QuadratureSettings::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let settings = QuadratureSettings {
            abs_tol: 0.0,
            order: 2,
            initial_panels: 1,
            max_panels: 4,
        };
        let err = integrate_adaptive(&|x: f64| (50.0 * x).sin().abs(), 0.0, 1.0, &settings);
        assert!(matches!(err, Err(Error::Numerical(_))));
    }
}
