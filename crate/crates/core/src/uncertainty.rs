//! Interchangeable uncertainty quantifiers and the Bayesian linear-regression
//! posterior that ties them together.
//!
//! With ridge prior `w ~ N(0, I/λ)` and unit-variance Gaussian noise, the
//! posterior over `w` is `N(μ, Λ⁻¹)` where `Λ = Σ φᵢφᵢᵀ + λI` and
//! `μ = Λ⁻¹ Σ φᵢ yᵢ`. The predictive standard deviation at `φ` is therefore
//! `sqrt(φᵀΛ⁻¹φ)`, which is the LCB penalty divided by `β`. With one-hot
//! features `Λ` is diagonal and the penalty collapses to `1/sqrt(N + λ)`.

use crate::error::{Error, Result};
use crate::numerics::{Cholesky, Mat, SeededRng};

/// Population standard deviation of the ensemble predictions (divisor `K`).
pub fn ensemble_std(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::invalid(format!("ensemble_std needs K >= 2, got {}", values.len())));
    }
    let k = values.len() as f64;
    // Shifted by the first value so that equal values give exactly 0.
    let pivot = values[0];
    let mean = values.iter().map(|v| v - pivot).sum::<f64>() / k;
    let var = values.iter().map(|v| (v - pivot - mean).powi(2)).sum::<f64>() / k;
    Ok(var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub beta: f64,
    pub lambda: f64,
}

impl PenaltyConfig {
    pub fn new(beta: f64, lambda: f64) -> Result<Self> {
        if !(beta >= 0.0) || !(lambda > 0.0) {
            return Err(Error::invalid(format!("penalty needs beta >= 0 and lambda > 0 (got {beta}, {lambda})")));
        }
        Ok(Self { beta, lambda })
    }
}

/// `Σ φᵢφᵢᵀ + λI`.
pub fn covariate_matrix<'a, I>(d: usize, features: I, lambda: f64) -> Result<Mat>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut cov = Mat::identity(d);
    cov.scale(lambda);
    for phi in features {
        if phi.len() != d {
            return Err(Error::Dimension { what: "feature", expected: d, got: phi.len() });
        }
        cov.add_outer(1.0, phi);
    }
    Ok(cov)
}

/// Precomputed `Λ` factor for evaluating many penalties against one dataset.
#[derive(Debug, Clone)]
pub struct LcbPenalty {
    factor: Cholesky,
    beta: f64,
}

impl LcbPenalty {
    pub fn new(covariate: &Mat, beta: f64) -> Result<Self> {
        Ok(Self { factor: Cholesky::factor(covariate)?, beta })
    }

    pub fn from_features<'a, I>(d: usize, features: I, cfg: PenaltyConfig) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        Self::new(&covariate_matrix(d, features, cfg.lambda)?, cfg.beta)
    }

    /// `sqrt(φᵀΛ⁻¹φ)`.
    pub fn width(&self, phi: &[f64]) -> Result<f64> {
        Ok(self.factor.quad_form(phi)?.sqrt())
    }

    /// `β · sqrt(φᵀΛ⁻¹φ)`.
    pub fn penalty(&self, phi: &[f64]) -> Result<f64> {
        Ok(self.beta * self.width(phi)?)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn factor(&self) -> &Cholesky {
        &self.factor
    }
}

/// `β · sqrt(φᵀΛ⁻¹φ)` with `Λ = Σ φᵢφᵢᵀ + λI` built from `data_features`.
pub fn lcb_penalty(phi: &[f64], data_features: &[Vec<f64>], cfg: PenaltyConfig) -> Result<f64> {
    LcbPenalty::from_features(phi.len(), data_features.iter().map(Vec::as_slice), cfg)?.penalty(phi)
}

/// Gaussian posterior over linear weights.
#[derive(Debug, Clone)]
pub struct BayesPosterior {
    pub mean: Vec<f64>,
    /// `Λ⁻¹`.
    pub covariance: Mat,
    pub lambda: f64,
    precision_factor: Cholesky,
}

impl BayesPosterior {
    /// Posterior predictive standard deviation `sqrt(φᵀΛ⁻¹φ)`.
    pub fn predictive_std(&self, phi: &[f64]) -> Result<f64> {
        Ok(self.precision_factor.quad_form(phi)?.sqrt())
    }

    pub fn predictive_mean(&self, phi: &[f64]) -> f64 {
        crate::numerics::dot(&self.mean, phi)
    }
}

/// Exact posterior for `w ~ N(0, I/λ)` and `y = wᵀφ + N(0, 1)`.
pub fn bayes_posterior(d: usize, data: &[(Vec<f64>, f64)], lambda: f64) -> Result<BayesPosterior> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    let precision = covariate_matrix(d, data.iter().map(|(phi, _)| phi.as_slice()), lambda)?;
    let mut rhs = vec![0.0; d];
    for (phi, y) in data {
        crate::numerics::axpy(*y, phi, &mut rhs);
    }
    let factor = Cholesky::factor(&precision)?;
    let mean = factor.solve(&rhs)?;
    let covariance = factor.inverse();
    Ok(BayesPosterior { mean, covariance, lambda, precision_factor: factor })
}

/// Bootstrapped linear regressors with frozen random priors.
///
/// Member `k` draws a prior `p_k ~ N(0, I/λ)` and fits ridge regression to
/// `y + ε_k − φᵀp_k` with `ε_k ~ N(0, 1)`; its prediction is `φᵀ(w_k + p_k)`.
/// Each member is then an exact draw from the posterior of
/// [`bayes_posterior`], so the ensemble spread estimates `sqrt(φᵀΛ⁻¹φ)`.
#[derive(Debug, Clone)]
pub struct LinearPriorEnsemble {
    /// `w_k + p_k` per member.
    pub members: Vec<Vec<f64>>,
}

impl LinearPriorEnsemble {
    pub fn fit(d: usize, data: &[(Vec<f64>, f64)], lambda: f64, k: usize, rng: &mut SeededRng) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
        }
        if k < 2 {
            return Err(Error::invalid(format!("ensemble needs k >= 2, got {k}")));
        }
        let precision = covariate_matrix(d, data.iter().map(|(phi, _)| phi.as_slice()), lambda)?;
        let factor = Cholesky::factor(&precision)?;
        let prior_sd = 1.0 / lambda.sqrt();
        let mut members = Vec::with_capacity(k);
        for _ in 0..k {
            let prior: Vec<f64> = (0..d).map(|_| prior_sd * rng.normal()).collect();
            let mut rhs = vec![0.0; d];
            for (phi, y) in data {
                let target = y + rng.normal() - crate::numerics::dot(phi, &prior);
                crate::numerics::axpy(target, phi, &mut rhs);
            }
            let mut w = factor.solve(&rhs)?;
            crate::numerics::axpy(1.0, &prior, &mut w);
            members.push(w);
        }
        Ok(Self { members })
    }

    pub fn predictions(&self, phi: &[f64]) -> Vec<f64> {
        self.members.iter().map(|w| crate::numerics::dot(w, phi)).collect()
    }

    pub fn std(&self, phi: &[f64]) -> Result<f64> {
        ensemble_std(&self.predictions(phi))
    }
}

/// Reciprocal-count penalty `1 / sqrt(n + λ)`.
pub fn count_penalty(n: usize, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    Ok(1.0 / (n as f64 + lambda).sqrt())
}

/// Heuristic `β = c · T · sqrt(d) · ln(T / ξ)` for a ξ-uncertainty quantifier.
pub fn calibrate_beta(d: usize, horizon: usize, xi: f64, c: f64) -> Result<f64> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::invalid(format!("xi must lie in (0, 1), got {xi}")));
    }
    let t = horizon as f64;
    Ok(c * t * (d as f64).sqrt() * (t / xi).ln())
}
