//! Chi-bar-squared weights by four routes (closed form for planar cones,
//! level probabilities for order cones, Monte Carlo projection, and the
//! volume-of-tube expansion) plus tail and quantile evaluation of the
//! resulting mixture.

mod levelprob;
mod manifold;
mod montecarlo;
mod pava;
pub mod quad;
mod tube;

pub use levelprob::{level_probabilities, LevelProbMethod};
pub use manifold::ManifoldGeometry;
pub use montecarlo::weights_monte_carlo;
pub use pava::{isotonic_nondecreasing, level_count_nonincreasing};
pub use tube::{geometric_constants, weights_tube, GeometricConstants, QuadratureConfig};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("matrix error: {0}")]
    Matrix(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("weights not normalized: {0}")]
    NotNormalized(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("negative tube coefficient (critical radius below pi/2): {0}")]
    NonConvexManifold(String),
    #[error(transparent)]
    Cone(#[from] crate::cone::ConeError),
}

/// Route that produced a weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    ClosedForm,
    LevelProb,
    MonteCarlo,
    Tube,
}

/// Mixture weights of a chi-bar-squared distribution.
///
/// `weights[k]` is the mass placed on the chi-squared distribution with `k`
/// degrees of freedom, for `k = 0..=d`; `χ²_0` is the point mass at zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChiBarWeights {
    pub d: usize,
    pub weights: Vec<f64>,
    pub source: WeightSource,
    /// Per-weight binomial standard errors for the Monte Carlo route.
    pub mc_stderr: Option<Vec<f64>>,
}

impl ChiBarWeights {
    /// Validates the simplex constraints. The normalization tolerance is
    /// 1e-6 for deterministic routes and 1e-2 for Monte Carlo.
    pub fn new(
        d: usize,
        weights: Vec<f64>,
        source: WeightSource,
        mc_stderr: Option<Vec<f64>>,
    ) -> Result<Self, WeightsError> {
        if weights.len() != d + 1 {
            return Err(WeightsError::Dimension(format!(
                "{} weights for d = {d}",
                weights.len()
            )));
        }
        let tol = if source == WeightSource::MonteCarlo { 1e-2 } else { 1e-6 };
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(WeightsError::NotNormalized(format!("sum = {sum}")));
        }
        if weights.iter().any(|&w| !(-1e-12..=1.0 + 1e-9).contains(&w)) {
            return Err(WeightsError::NotNormalized("weight outside [0, 1]".into()));
        }
        Ok(ChiBarWeights {
            d,
            weights,
            source,
            mc_stderr,
        })
    }
}

/// Surface measure `ω_k` of the unit sphere `S^k`: `2 π^{(k+1)/2} / Γ((k+1)/2)`.
pub fn sphere_volume(k: usize) -> f64 {
    let a = (k as f64 + 1.0) / 2.0;
    2.0 * PI.powf(a) / gamma(a)
}

/// Closed-form chi-bar weights for a planar cone of angle `phi`:
/// `(1/2 − φ/2π, 1/2, φ/2π)` on `(χ²_0, χ²_1, χ²_2)`.
pub fn weights_closed_form_d2(phi: f64) -> Result<ChiBarWeights, WeightsError> {
    if !(0.0..=PI).contains(&phi) {
        return Err(WeightsError::Domain(format!("angle {phi} outside [0, pi]")));
    }
    let w2 = phi / (2.0 * PI);
    ChiBarWeights::new(
        2,
        vec![0.5 - w2, 0.5, w2],
        WeightSource::ClosedForm,
        None,
    )
}

/// Upper tail `P(chibar ≥ c) = Σ_k w_k P(χ²_k ≥ c)`, with the convention
/// that `χ²_0` contributes 0 for `c > 0` and 1 at `c = 0`.
pub fn chibar_tail(weights: &ChiBarWeights, c: f64) -> Result<f64, WeightsError> {
    if c < 0.0 {
        return Err(WeightsError::Domain(format!("negative statistic {c}")));
    }
    let sum: f64 = weights.weights.iter().sum();
    if (sum - 1.0).abs() > 1e-2 {
        return Err(WeightsError::NotNormalized(format!("sum = {sum}")));
    }
    if c == 0.0 {
        return Ok(1.0);
    }
    let mut tail = 0.0;
    for (k, &w) in weights.weights.iter().enumerate() {
        if k == 0 || w == 0.0 {
            continue;
        }
        let dist = ChiSquared::new(k as f64).expect("positive dof");
        tail += w * dist.sf(c);
    }
    Ok(tail)
}

/// Critical value `c` with `chibar_tail(c) = alpha`, by bisection to 1e-8.
///
/// When `alpha` is at least the mass above zero (`1 − w_0`), every positive
/// `c` has tail below `alpha` and the quantile is 0.
pub fn chibar_quantile(weights: &ChiBarWeights, alpha: f64) -> Result<f64, WeightsError> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(WeightsError::Domain(format!("alpha {alpha} outside (0, 1)")));
    }
    if alpha >= 1.0 - weights.weights[0] {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while chibar_tail(weights, hi)? > alpha {
        hi *= 2.0;
        if hi > 1e8 {
            return Err(WeightsError::Domain("quantile bracket exceeded".into()));
        }
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if chibar_tail(weights, mid)? > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
