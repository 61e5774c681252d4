//! The end-to-end generalized quasi-score test and local power
//! calculations.

mod power;

pub use power::{
    noncentral_chi_squared_tail, power_lower_bound, power_table, power_unrestricted_exact,
    reproduce_table1, PowerSpec, PowerTable, TABLE1_B1, TABLE1_B2,
};

use crate::cone::{canonicalize, cone_angle, CanonicalCone, ConeError, HypothesisSpec};
use crate::data::{CorrelationBasis, LinkFunction, LongitudinalDataset};
use crate::qif::{fit_all, project_direct_sum, QifError, QifFit, SolverOptions};
use crate::weights::{
    chibar_quantile, chibar_tail, geometric_constants, level_probabilities, weights_closed_form_d2,
    weights_monte_carlo, weights_tube, ChiBarWeights, LevelProbMethod, ManifoldGeometry,
    QuadratureConfig, WeightsError,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TestError {
    #[error(transparent)]
    Qif(#[from] QifError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("constraint error: {0}")]
    Constraint(String),
}

/// Route used to obtain the chi-bar null weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRoute {
    /// Planar closed form from the cone angle (`d = 2`).
    Closed,
    /// Level probabilities for order cones (`d ≤ 4` exact).
    Level,
    /// Volume-of-tube expansion (`d ≤ 4`, simplicial cones).
    Tube,
    /// Monte Carlo projection (any polyhedral cone).
    Mc,
    /// Cheapest applicable route: closed for `d = 2`, level probabilities
    /// for order cones up to `d = 4`, tube up to `d = 4`, otherwise Monte
    /// Carlo.
    Auto,
}

/// Outcome of the GQS test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    /// `S_N = Q_N(γ̄) − Q_N(γ̃)`.
    pub s_n: f64,
    /// `S_N⋆ = Q_N(γ̄) − Q_N(γ̂)`, the unrestricted statistic.
    pub s_n_star: f64,
    pub p_value: f64,
    pub weights_used: ChiBarWeights,
    pub critical_value: f64,
    pub alpha: f64,
    /// Distance between γ̃ and the `Ĵ`-metric projection of γ̂ onto `V ⊕ C`
    /// (a finite-sample diagnostic of the projection equivalence).
    pub projection_diag: f64,
    /// Set when `projection_diag` exceeds a tenth of `‖γ̂‖`.
    pub projection_warning: bool,
    #[serde(skip)]
    pub fit: Option<QifFit>,
}

/// Monte Carlo settings for the `Mc` weight route.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McSettings {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings {
            replicates: 200_000,
            seed: 0,
        }
    }
}

/// Computes chi-bar weights for a canonicalized hypothesis via the requested
/// route.
pub fn weights_for(
    spec: &HypothesisSpec,
    canon: &CanonicalCone,
    j_hat: &DMatrix<f64>,
    route: WeightRoute,
    mc: &McSettings,
) -> Result<ChiBarWeights, TestError> {
    let d = spec.d;
    let route = match route {
        WeightRoute::Auto => {
            if d == 2 {
                WeightRoute::Closed
            } else if spec.order_m.is_some() && d <= 4 {
                WeightRoute::Level
            } else if d <= 4 && spec.cone_generators.len() == d {
                // the tube parametrization needs a simplicial cone
                WeightRoute::Tube
            } else {
                WeightRoute::Mc
            }
        }
        r => r,
    };
    match route {
        WeightRoute::Closed => {
            let phi = cone_angle(canon)?;
            Ok(weights_closed_form_d2(phi)?)
        }
        WeightRoute::Level => {
            let m = spec.order_m.ok_or_else(|| {
                TestError::Domain(
                    "level-probability route requires an order-cone hypothesis".into(),
                )
            })?;
            let q = mean_block_variance(spec, j_hat, m);
            Ok(level_probabilities(
                m,
                &q,
                LevelProbMethod::ExactSmallM,
                0,
                0,
            )?)
        }
        WeightRoute::Tube => {
            let geom = ManifoldGeometry::from_embedded_generators(&canon.generators_embedded)?;
            let constants = geometric_constants(&geom, &QuadratureConfig::default())?;
            Ok(weights_tube(&constants, d)?)
        }
        WeightRoute::Mc => {
            let cone = canon.cone_in_rd()?;
            Ok(weights_monte_carlo(&cone, mc.replicates, mc.seed)?)
        }
        WeightRoute::Auto => unreachable!(),
    }
}

/// The diagonal weight matrix for the level-probability route: the mean
/// block of `Ĵ⁻¹` with off-diagonal entries dropped (groups are
/// asymptotically independent in balanced designs).
fn mean_block_variance(spec: &HypothesisSpec, j_hat: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let _ = spec;
    let j_inv = crate::linalg::sym_pinv(j_hat);
    DMatrix::from_fn(m, m, |i, j| if i == j { j_inv[(i, i)] } else { 0.0 })
}

/// Runs the full GQS test: fits the three estimators, forms
/// `S_N = Q_N(γ̄) − Q_N(γ̃)`, canonicalizes at `Ĵ`, computes weights via the
/// selected route and returns the p-value `P(chibar ≥ S_N)`.
#[allow(clippy::too_many_arguments)]
pub fn run_test(
    data: &LongitudinalDataset,
    link: LinkFunction,
    basis: &CorrelationBasis,
    spec: &HypothesisSpec,
    alpha: f64,
    route: WeightRoute,
    options: &SolverOptions,
    mc: &McSettings,
) -> Result<TestResult, TestError> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(TestError::Domain(format!("alpha {alpha} outside (0, 1)")));
    }
    let fit = fit_all(data, link, basis, spec, options)?;
    let s_n = (fit.q_bar() - fit.q_tilde()).max(0.0);
    let s_n_star = (fit.q_bar() - fit.q_hat()).max(0.0);
    let canon = canonicalize(spec, &fit.j_hat)?;
    let weights = weights_for(spec, &canon, &fit.j_hat, route, mc)?;
    let p_value = chibar_tail(&weights, s_n)?;
    let critical_value = chibar_quantile(&weights, alpha)?;

    // finite-N check that γ̃ is the Ĵ-metric projection of γ̂ onto V ⊕ C
    let gens = spec.alternative_generators();
    let cone_dirs = if gens.is_empty() {
        DMatrix::zeros(spec.r, 0)
    } else {
        DMatrix::from_columns(&gens)
    };
    let projected = project_direct_sum(&fit.gamma_hat, &fit.j_hat, &spec.null_basis, &cone_dirs)?;
    let projection_diag = (&fit.gamma_tilde - &projected).norm();
    let projection_warning = projection_diag > 0.1 * fit.gamma_hat.norm();

    Ok(TestResult {
        s_n,
        s_n_star,
        p_value,
        weights_used: weights,
        critical_value,
        alpha,
        projection_diag,
        projection_warning,
        fit: Some(fit),
    })
}

/// Noncentrality `δ = ‖H u⋆‖` for a local direction `u⋆`, after checking
/// membership of `u⋆` in the cone `N`.
pub fn noncentrality(
    canon: &CanonicalCone,
    spec: &HypothesisSpec,
    u_star: &DVector<f64>,
) -> Result<f64, TestError> {
    if u_star.len() != spec.d {
        return Err(TestError::Domain(format!(
            "direction has length {}, expected {}",
            u_star.len(),
            spec.d
        )));
    }
    let cone = spec.n_cone()?;
    let projected = cone.project(u_star, None)?;
    let dist = (&projected - u_star).norm();
    if dist > 1e-8 * (1.0 + u_star.norm()) {
        return Err(TestError::Constraint(format!(
            "direction is outside the cone (distance {dist:.3e})"
        )));
    }
    Ok(canon.noncentrality(u_star))
}
