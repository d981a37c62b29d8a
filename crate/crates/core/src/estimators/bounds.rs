//! Closed-form variance bounds for importance-weighted PGPE.
//!
//! All bounds share the factor `(1 − γ^T)² B / (N' (1 − γ)²)` with
//! `B = Σ_i τ_i⁻²`; the `τ`-block bound is always twice the `η`-block one.

use crate::error::{Error, Result};
use crate::gaussian_prior::HyperParams;
use crate::scalar::{compensated_sum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    Eta,
    Tau,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::Eta => "eta",
            Block::Tau => "tau",
        }
    }

    fn multiplier<F: Scalar>(self) -> F {
        match self {
            Block::Eta => F::one(),
            Block::Tau => F::of(2.0),
        }
    }
}

/// Quantities the bounds depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs<F> {
    /// Rewards lie in `[−beta, beta]`.
    pub beta: F,
    /// Rewards are at least `alpha` (lower bounds only).
    pub alpha: F,
    pub gamma: F,
    pub horizon: usize,
    /// Number of samples `N'` behind the estimate.
    pub n_samples: usize,
    /// `B = Σ τ_i⁻²`.
    pub trace_b: F,
    pub w_max: F,
    pub w_min: F,
}

impl<F: Scalar> BoundInputs<F> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BoundPrecondition(m.to_string()));
        if !(self.beta > F::zero()) {
            return bad("beta must be positive");
        }
        if !(self.alpha >= F::zero()) {
            return bad("alpha must be non-negative");
        }
        if !(self.gamma >= F::zero() && self.gamma < F::one()) {
            return bad("gamma must lie in [0, 1)");
        }
        if self.horizon == 0 || self.n_samples == 0 {
            return bad("horizon and sample count must be positive");
        }
        if !(self.trace_b > F::zero()) {
            return bad("B must be positive");
        }
        if !(self.w_min >= F::zero() && self.w_max >= self.w_min) {
            return bad("need 0 <= w_min <= w_max");
        }
        Ok(())
    }

    /// `(1 − γ^T)² B / (N' (1 − γ)²)`.
    fn common_factor(&self) -> F {
        let g = (F::one() - self.gamma.powi(self.horizon as i32)) / (F::one() - self.gamma);
        g * g * self.trace_b / F::of_usize(self.n_samples)
    }
}

/// `B = Σ_i τ_i⁻²`.
pub fn trace_b<F: Scalar>(rho: &HyperParams<F>) -> F {
    compensated_sum(rho.tau().iter().map(|&t| F::one() / (t * t)))
}

/// Upper bound on the trace variance of the importance-weighted estimator
/// without baseline: `β² w_max (1 − γ^T)² B / (N' (1 − γ)²)`, doubled for `τ`.
pub fn variance_upper_bound<F: Scalar>(block: Block, inputs: &BoundInputs<F>) -> F {
    block.multiplier::<F>() * inputs.beta * inputs.beta * inputs.w_max * inputs.common_factor()
}

/// `[lower, upper]` interval for the variance removed by the optimal baseline.
pub fn variance_reduction_bounds<F: Scalar>(block: Block, inputs: &BoundInputs<F>) -> (F, F) {
    let lower = block.multiplier::<F>()
        * inputs.alpha
        * inputs.alpha
        * inputs.w_min
        * inputs.common_factor();
    (lower, variance_upper_bound(block, inputs))
}

/// Upper bound for the estimator with the optimal baseline:
/// `(β² w_max − α² w_min) (1 − γ^T)² B / (N' (1 − γ)²)`, doubled for `τ`.
pub fn ob_variance_upper_bound<F: Scalar>(block: Block, inputs: &BoundInputs<F>) -> Result<F> {
    let gap = inputs.beta * inputs.beta * inputs.w_max - inputs.alpha * inputs.alpha * inputs.w_min;
    if gap < F::zero() {
        return Err(Error::BoundPrecondition(format!(
            "beta^2 w_max ({}) < alpha^2 w_min ({})",
            inputs.beta * inputs.beta * inputs.w_max,
            inputs.alpha * inputs.alpha * inputs.w_min
        )));
    }
    Ok(block.multiplier::<F>() * gap * inputs.common_factor())
}

/// Extra variance of a constant baseline `b` over the optimum `b*`:
/// `(b − b*)² E[w² ‖∇ log p‖²] / N'`.
pub fn excess_variance<F: Scalar>(b: F, b_star: F, n: usize, second_moment: F) -> F {
    let d = b - b_star;
    d * d * second_moment / F::of_usize(n)
}
