//! Smoothness-plus-reliability loss and its minimizer.
//!
//! With `S = D^{-1/2} W D^{-1/2}` and `α = 1/(1+λ)`, the loss
//!
//! ```text
//! ½ Σ_ij w_ij (F_i/√d_i − F_j/√d_j)² + λ Σ_i (F_i − Y_i)²
//! ```
//!
//! is minimized by the solution of `(I − αS) F = (1 − α) Y`. The system
//! matrix is symmetric positive definite because the spectrum of `S` lies in
//! `[-1, 1]` and `α < 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matvec, Cholesky};
use crate::model::{CorrelationGraph, Prediction, Slot};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Direct,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PropagationParams<T: Scalar> {
    pub lambda: T,
    pub solver: Solver,
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for PropagationParams<T> {
    fn default() -> Self {
        Self { lambda: T::of(0.3), solver: Solver::Direct, tol: T::of(1e-12), max_iter: 100_000 }
    }
}

impl<T: Scalar> PropagationParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return Err(Error::range("lambda", self.lambda, "(0, inf)"));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::range("tol", self.tol, "(0, inf)"));
        }
        if self.max_iter == 0 {
            return Err(Error::range("max_iter", 0, "[1, inf)"));
        }
        Ok(())
    }

    /// Propagation coefficient `1 / (1 + λ)`.
    pub fn alpha(&self) -> T {
        alpha(self.lambda)
    }
}

fn alpha<T: Scalar>(lambda: T) -> T {
    T::one() / (T::one() + lambda)
}

/// Rough per-node values Y that propagation refines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PreEstimate<T: Scalar> {
    pub anchor: Slot,
    pub values: Vec<T>,
}

impl<T: Scalar> PreEstimate<T> {
    pub fn new(anchor: Slot, values: Vec<T>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("pre-estimate entry {i} is not finite")));
        }
        Ok(Self { anchor, values })
    }
}

/// `S = D^{-1/2} W D^{-1/2}`, dense row-major.
pub fn normalized_affinity<T: Scalar>(g: &CorrelationGraph<T>) -> Vec<T> {
    let n = g.n();
    let inv_sqrt: Vec<T> = g.degrees().iter().map(|d| T::one() / d.sqrt()).collect();
    let mut s = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            s[i * n + j] = inv_sqrt[i] * g.weight(i, j) * inv_sqrt[j];
        }
    }
    s
}

fn check_dims<T: Scalar>(g: &CorrelationGraph<T>, len: usize, what: &str) -> Result<()> {
    if len != g.n() {
        return Err(Error::Contract(format!("{what} has {len} entries but the graph has {} nodes", g.n())));
    }
    Ok(())
}

/// Loss of a candidate estimate, summing the smoothness term over ordered
/// pairs.
pub fn loss<T: Scalar>(f: &[T], y: &[T], g: &CorrelationGraph<T>, lambda: T) -> Result<T> {
    check_dims(g, f.len(), "estimate")?;
    check_dims(g, y.len(), "pre-estimate")?;
    let n = g.n();
    let scaled: Vec<T> = f.iter().zip(g.degrees()).map(|(&fi, d)| fi / d.sqrt()).collect();
    let mut smooth = T::zero();
    for i in 0..n {
        for j in 0..n {
            let w = g.weight(i, j);
            if w > T::zero() {
                let diff = scaled[i] - scaled[j];
                smooth += w * diff * diff;
            }
        }
    }
    let reliability: T = f.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(smooth / (T::one() + T::one()) + lambda * reliability)
}

/// Analytic gradient of [`loss`]: `2 (F − S F) + 2 λ (F − Y)`.
pub fn loss_gradient<T: Scalar>(f: &[T], y: &[T], g: &CorrelationGraph<T>, lambda: T) -> Result<Vec<T>> {
    check_dims(g, f.len(), "estimate")?;
    check_dims(g, y.len(), "pre-estimate")?;
    let sf = matvec(&normalized_affinity(g), f);
    let two = T::one() + T::one();
    Ok((0..f.len()).map(|i| two * (f[i] - sf[i]) + two * lambda * (f[i] - y[i])).collect())
}

/// Minimizer by a Cholesky solve of `(I − αS) F = (1 − α) Y`.
pub fn solve_closed_form<T: Scalar>(g: &CorrelationGraph<T>, y: &PreEstimate<T>, lambda: T) -> Result<Prediction<T>> {
    check_dims(g, y.values.len(), "pre-estimate")?;
    if !(lambda > T::zero()) {
        return Err(Error::range("lambda", lambda, "(0, inf)"));
    }
    let n = g.n();
    let a = alpha(lambda);
    let mut m = normalized_affinity(g);
    for i in 0..n {
        for j in 0..n {
            let s = m[i * n + j];
            m[i * n + j] = if i == j { T::one() - a * s } else { -a * s };
        }
    }
    let rhs: Vec<T> = y.values.iter().map(|&v| (T::one() - a) * v).collect();
    let chol = Cholesky::factor(m, n).map_err(|e| match e {
        Error::Numerical(msg) => Error::Numerical(format!("closed-form solve (N = {n}, lambda = {lambda}): {msg}")),
        other => other,
    })?;
    Prediction::new(y.anchor, chol.solve(&rhs)?)
}

/// Minimizer by the iteration `F ← αSF + (1 − α)Y` started from `Y`.
pub fn solve_fixed_point<T: Scalar>(
    g: &CorrelationGraph<T>,
    y: &PreEstimate<T>,
    lambda: T,
    tol: T,
    max_iter: usize,
) -> Result<Prediction<T>> {
    check_dims(g, y.values.len(), "pre-estimate")?;
    let a = alpha(lambda);
    let s = normalized_affinity(g);
    let base: Vec<T> = y.values.iter().map(|&v| (T::one() - a) * v).collect();
    let mut f = y.values.clone();
    let mut last_step = T::infinity();
    for _ in 0..max_iter {
        let sf = matvec(&s, &f);
        let next: Vec<T> = sf.iter().zip(&base).map(|(&x, &b)| a * x + b).collect();
        last_step = next.iter().zip(&f).fold(T::zero(), |m, (&u, &v)| m.max((u - v).abs()));
        f = next;
        if !last_step.is_finite() {
            return Err(Error::Numerical("fixed-point iterate is not finite".into()));
        }
        if last_step < tol {
            return Prediction::new(y.anchor, f);
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, last_step: last_step.as_f64() })
}

/// Dispatches on the configured solver.
pub fn solve<T: Scalar>(g: &CorrelationGraph<T>, y: &PreEstimate<T>, params: &PropagationParams<T>) -> Result<Prediction<T>> {
    params.validate()?;
    match params.solver {
        Solver::Direct => solve_closed_form(g, y, params.lambda),
        Solver::FixedPoint => solve_fixed_point(g, y, params.lambda, params.tol, params.max_iter),
    }
}

/// Loss at the minimizer for a fixed graph.
pub fn minimized_loss<T: Scalar>(g: &CorrelationGraph<T>, y: &PreEstimate<T>, lambda: T) -> Result<T> {
    let f = solve_closed_form(g, y, lambda)?;
    loss(&f.values, &y.values, g, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Two nodes joined by a unit edge.
    fn pair() -> CorrelationGraph<f64> {
        CorrelationGraph::from_parts(0, None, vec![None; 2], vec![0.0, 1.0, 1.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    fn y(v: &[f64]) -> PreEstimate<f64> {
        PreEstimate::new(0, v.to_vec()).unwrap()
    }

    #[test]
    fn loss_examples() {
        let g = pair();
        assert_eq!(loss(&[1.0, 0.0], &[1.0, 0.0], &g, 0.3).unwrap(), 1.0);
        assert_eq!(loss(&[2.0, 2.0], &[2.0, 2.0], &g, 0.3).unwrap(), 0.0);
        let base = loss(&[0.7, -0.2], &[0.1, 0.4], &g, 0.3).unwrap();
        let scaled = loss(&[2.1, -0.6], &[0.3, 1.2], &g, 0.3).unwrap();
        assert_relative_eq!(scaled, 9.0 * base, max_relative = 1e-14);
    }

    #[test]
    fn two_node_closed_form() {
        let f = solve_closed_form(&pair(), &y(&[1.0, 0.0]), 0.3).unwrap();
        assert!((f.values[0] - 13.0 / 23.0).abs() < 1e-12);
        assert!((f.values[1] - 10.0 / 23.0).abs() < 1e-12);
    }

    #[test]
    fn two_node_fixed_point() {
        let f = solve_fixed_point(&pair(), &y(&[1.0, 0.0]), 0.3, 1e-12, 10_000).unwrap();
        assert!((f.values[0] - 13.0 / 23.0).abs() < 1e-10);
        assert!((f.values[1] - 10.0 / 23.0).abs() < 1e-10);
    }

    #[test]
    fn large_lambda_recovers_pre_estimate() {
        let f = solve_closed_form(&pair(), &y(&[3.0, -1.0]), 1e9).unwrap();
        assert_relative_eq!(f.values[0], 3.0, max_relative = 1e-6);
        assert_relative_eq!(f.values[1], -1.0, max_relative = 1e-6);
    }

    #[test]
    fn sqrt_degree_vector_is_fixed() {
        let g = CorrelationGraph::from_weights(0, None, vec![None; 3], vec![0.0, 0.2, 0.7, 0.2, 0.0, 0.4, 0.7, 0.4, 0.0])
            .unwrap();
        let yv: Vec<f64> = g.degrees().iter().map(|d: &f64| d.sqrt()).collect();
        let f = solve_closed_form(&g, &y(&yv), 0.3).unwrap();
        for (a, b) in f.values.iter().zip(&yv) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_alpha_iteration_is_identity() {
        // lambda → ∞ gives α → 0, so the first iterate is Y itself
        let f = solve_fixed_point(&pair(), &y(&[0.25, 4.0]), f64::MAX, 1e-12, 1).unwrap();
        assert_eq!(f.values, vec![0.25, 4.0]);
    }

    #[test]
    fn non_convergence_is_reported() {
        let r = solve_fixed_point(&pair(), &y(&[1.0, 0.0]), 1e-6, 1e-15, 3);
        assert!(matches!(r, Err(Error::NonConvergence { iterations: 3, .. })));
    }

    #[test]
    fn analytic_gradient_vanishes_at_minimizer() {
        let g = pair();
        let yv = y(&[1.0, 0.0]);
        let f = solve_closed_form(&g, &yv, 0.3).unwrap();
        let grad = loss_gradient(&f.values, &yv.values, &g, 0.3).unwrap();
        assert!(grad.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        assert!(matches!(solve_closed_form(&pair(), &y(&[1.0]), 0.3), Err(Error::Contract(_))));
        assert!(matches!(loss(&[1.0], &[1.0, 2.0], &pair(), 0.3), Err(Error::Contract(_))));
    }
}
