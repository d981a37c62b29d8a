//! Factorized Gaussian prior over controller parameters.
//!
//! The prior `p(θ | ρ) = Π_i N(θ_i | η_i, τ_i²)` is the object PGPE learns.
//! This module holds its closed-form pieces: sampling, log-density, the score
//! `∇_ρ log p(θ | ρ)` and the importance weight between two priors.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{norm_sq, Scalar};

/// Means `eta` and standard deviations `tau` of the prior, one per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams<F> {
    eta: Vec<F>,
    tau: Vec<F>,
}

impl<F: Scalar> HyperParams<F> {
    pub fn new(eta: Vec<F>, tau: Vec<F>) -> Result<Self> {
        if eta.is_empty() {
            return Err(Error::InvalidHyperParams(
                "dimension must be positive".into(),
            ));
        }
        if eta.len() != tau.len() {
            return Err(Error::DimensionMismatch {
                expected: eta.len(),
                found: tau.len(),
            });
        }
        if let Some(i) = eta.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidHyperParams(format!("eta[{i}] is not finite")));
        }
        if let Some(i) = tau.iter().position(|v| !v.is_finite() || *v <= F::zero()) {
            return Err(Error::InvalidHyperParams(format!(
                "tau[{i}] = {} must be finite and strictly positive",
                tau[i]
            )));
        }
        Ok(Self { eta, tau })
    }

    /// `η = 0`, `τ = 1` in every dimension.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(vec![F::zero(); dim], vec![F::one(); dim])
    }

    pub fn dim(&self) -> usize {
        self.eta.len()
    }

    pub fn eta(&self) -> &[F] {
        &self.eta
    }

    pub fn tau(&self) -> &[F] {
        &self.tau
    }

    /// Means and deviations stacked as `[η…, τ…]`.
    pub fn stacked(&self) -> Vec<F> {
        self.eta.iter().chain(&self.tau).copied().collect()
    }

    /// Convert to another scalar type.
    pub fn cast<G: Scalar>(&self) -> Result<HyperParams<G>> {
        HyperParams::new(
            self.eta.iter().map(|v| G::of(v.to_f64_lossy())).collect(),
            self.tau.iter().map(|v| G::of(v.to_f64_lossy())).collect(),
        )
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }
}

/// One sampled parameter vector θ of the deterministic linear controller.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<F> {
    theta: Vec<F>,
}

impl<F: Scalar> PolicyParams<F> {
    pub fn new(theta: Vec<F>) -> Result<Self> {
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("theta[{i}]")));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> &[F] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// `∇_ρ log p(θ | ρ)` split into its mean and deviation blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector<F> {
    pub d_eta: Vec<F>,
    pub d_tau: Vec<F>,
}

impl<F: Scalar> ScoreVector<F> {
    pub fn norm_sq(&self) -> F {
        norm_sq(&self.d_eta) + norm_sq(&self.d_tau)
    }

    pub fn eta_norm_sq(&self) -> F {
        norm_sq(&self.d_eta)
    }

    pub fn tau_norm_sq(&self) -> F {
        norm_sq(&self.d_tau)
    }
}

/// Draw θ_i ~ N(η_i, τ_i²) independently per dimension.
pub fn sample_params<F: Scalar, R: Rng + ?Sized>(
    rho: &HyperParams<F>,
    rng: &mut R,
) -> PolicyParams<F> {
    let theta = rho
        .eta
        .iter()
        .zip(&rho.tau)
        .map(|(&m, &s)| m + s * F::standard_normal(rng))
        .collect();
    PolicyParams { theta }
}

fn half_log_two_pi<F: Scalar>() -> F {
    F::of(0.5 * (2.0 * std::f64::consts::PI).ln())
}

/// `Σ_i log N(θ_i | η_i, τ_i²)`.
pub fn log_density<F: Scalar>(rho: &HyperParams<F>, theta: &PolicyParams<F>) -> Result<F> {
    rho.check_dim(theta.dim())?;
    let half = F::of(0.5);
    let c = half_log_two_pi::<F>();
    let mut acc = crate::scalar::CompensatedSum::new();
    for ((&x, &m), &s) in theta.theta.iter().zip(&rho.eta).zip(&rho.tau) {
        let z = (x - m) / s;
        acc.add(-c - s.ln() - half * z * z);
    }
    Ok(acc.value())
}

/// `d_eta_i = (θ_i − η_i)/τ_i²`, `d_tau_i = ((θ_i − η_i)² − τ_i²)/τ_i³`.
pub fn score<F: Scalar>(rho: &HyperParams<F>, theta: &PolicyParams<F>) -> Result<ScoreVector<F>> {
    rho.check_dim(theta.dim())?;
    let mut d_eta = Vec::with_capacity(rho.dim());
    let mut d_tau = Vec::with_capacity(rho.dim());
    for ((&x, &m), &s) in theta.theta.iter().zip(&rho.eta).zip(&rho.tau) {
        let d = x - m;
        let s2 = s * s;
        d_eta.push(d / s2);
        d_tau.push((d * d - s2) / (s2 * s));
    }
    Ok(ScoreVector { d_eta, d_tau })
}

/// `log p(θ | target) − log p(θ | behavior)`, accumulated per dimension.
pub fn log_importance_weight<F: Scalar>(
    target: &HyperParams<F>,
    behavior: &HyperParams<F>,
    theta: &PolicyParams<F>,
) -> Result<F> {
    target.check_dim(behavior.dim())?;
    target.check_dim(theta.dim())?;
    let half = F::of(0.5);
    let mut acc = crate::scalar::CompensatedSum::new();
    for i in 0..target.dim() {
        let x = theta.theta[i];
        let zt = (x - target.eta[i]) / target.tau[i];
        let zb = (x - behavior.eta[i]) / behavior.tau[i];
        // identical priors give exactly zero here
        let term = (behavior.tau[i].ln() - target.tau[i].ln()) - half * (zt * zt - zb * zb);
        if !term.is_finite() {
            return Err(Error::NonFiniteWeight { dimension: i });
        }
        acc.add(term);
    }
    Ok(acc.value())
}

/// `w(θ) = p(θ | target) / p(θ | behavior)`, evaluated in log space.
///
/// A ratio below the smallest representable positive value is returned as
/// zero; a ratio above the largest finite value is an error naming the
/// dimension contributing most to it.
pub fn importance_weight<F: Scalar>(
    target: &HyperParams<F>,
    behavior: &HyperParams<F>,
    theta: &PolicyParams<F>,
) -> Result<F> {
    let log_w = log_importance_weight(target, behavior, theta)?;
    let w = log_w.exp();
    if !w.is_finite() {
        let half = F::of(0.5);
        let contribution = |i: usize| {
            let x = theta.theta[i];
            let zt = (x - target.eta[i]) / target.tau[i];
            let zb = (x - behavior.eta[i]) / behavior.tau[i];
            (behavior.tau[i].ln() - target.tau[i].ln()) - half * (zt * zt - zb * zb)
        };
        let dimension = (0..target.dim())
            .max_by(|&a, &b| {
                contribution(a)
                    .partial_cmp(&contribution(b))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(0);
        return Err(Error::NonFiniteWeight { dimension });
    }
    Ok(w)
}
