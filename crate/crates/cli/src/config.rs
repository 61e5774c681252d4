use cone_infer_core::cone::{order_cone_with_regressors, HypothesisSpec, PolyhedralCone};
use cone_infer_core::data::{BasisKind, LinkFunction, SimulationSpec};
use cone_infer_core::qif::SolverOptions;
use cone_infer_core::testing::WeightRoute;
use cone_infer_core::weights::LevelProbMethod;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Top-level configuration file. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub link: Option<LinkFunction>,
    pub basis: Option<BasisKind>,
    pub hypothesis: Option<HypothesisConfig>,
    pub solver: Option<SolverConfig>,
    pub alpha: Option<f64>,
    pub weights_route: Option<WeightRoute>,
    pub mc: Option<McConfig>,
    pub weights: Option<WeightsCommandConfig>,
    pub power: Option<PowerConfig>,
    pub simulation: Option<SimulationConfig>,
}

impl Config {
    pub fn parse(bytes: &[u8]) -> Result<Self, CliError> {
        serde_json::from_slice(bytes).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn link(&self) -> LinkFunction {
        self.link.unwrap_or(LinkFunction::Identity)
    }

    pub fn basis_kind(&self) -> BasisKind {
        self.basis.unwrap_or(BasisKind::Independence)
    }

    pub fn solver_options(&self) -> SolverOptions {
        self.solver.clone().map(Into::into).unwrap_or_default()
    }

    pub fn hypothesis_spec(&self) -> Result<HypothesisSpec, CliError> {
        let hyp = self
            .hypothesis
            .as_ref()
            .ok_or_else(|| CliError::Config("missing 'hypothesis' block".into()))?;
        hyp.build()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub ridge: Option<f64>,
    pub max_halvings: Option<u32>,
    pub start: Option<Vec<f64>>,
}

impl From<SolverConfig> for SolverOptions {
    fn from(c: SolverConfig) -> Self {
        let mut o = SolverOptions::default();
        if let Some(v) = c.max_iter {
            o.max_iter = v;
        }
        if let Some(v) = c.tol {
            o.tol = v;
        }
        if let Some(v) = c.ridge {
            o.ridge = v;
        }
        if let Some(v) = c.max_halvings {
            o.max_halvings = v;
        }
        o.start = c.start;
        o
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub replicates: usize,
    pub seed: Option<u64>,
}

/// Hypothesis block: either a named order-cone constructor or an explicit
/// basis-and-generators description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum HypothesisConfig {
    OrderCone {
        m: usize,
        /// Unconstrained regression coordinates after the mean block;
        /// defaults to one slope per group.
        #[serde(skip_serializing_if = "Option::is_none")]
        regressors: Option<usize>,
    },
    Explicit {
        null_basis: Vec<Vec<f64>>,
        constraint_basis: Vec<Vec<f64>>,
        generators: Vec<Vec<f64>>,
    },
}

impl HypothesisConfig {
    pub fn build(&self) -> Result<HypothesisSpec, CliError> {
        match self {
            HypothesisConfig::OrderCone { m, regressors } => {
                order_cone_with_regressors(*m, regressors.unwrap_or(*m))
                    .map_err(|e| CliError::Config(format!("hypothesis: {e}")))
            }
            HypothesisConfig::Explicit {
                null_basis,
                constraint_basis,
                generators,
            } => {
                let nb = rows_to_matrix(null_basis, "null_basis")?;
                let cb = rows_to_matrix(constraint_basis, "constraint_basis")?;
                let gens = generators
                    .iter()
                    .map(|g| DVector::from_column_slice(g))
                    .collect();
                HypothesisSpec::new(nb, cb, gens)
                    .map_err(|e| CliError::Config(format!("hypothesis: {e}")))
            }
        }
    }
}

/// Cone description: generators and/or inward halfspace normals.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeConfig {
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub halfspaces: Option<Vec<Vec<f64>>>,
}

impl ConeConfig {
    pub fn build(&self) -> Result<PolyhedralCone, CliError> {
        let to_vecs = |rows: &Vec<Vec<f64>>| -> Vec<DVector<f64>> {
            rows.iter().map(|r| DVector::from_column_slice(r)).collect()
        };
        match (&self.generators, &self.halfspaces) {
            (Some(g), _) => PolyhedralCone::from_generators(self.dim, to_vecs(g))
                .map_err(|e| CliError::Config(format!("cone: {e}"))),
            (None, Some(h)) => PolyhedralCone::from_halfspaces(self.dim, to_vecs(h))
                .map_err(|e| CliError::Config(format!("cone: {e}"))),
            (None, None) => Err(CliError::Config(
                "cone needs 'generators' or 'halfspaces'".into(),
            )),
        }
    }
}

/// Route-specific configuration for the `weights` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "route", rename_all = "snake_case")]
pub enum WeightsCommandConfig {
    ClosedForm {
        phi: f64,
    },
    LevelProb {
        m: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        q_diag: Option<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        method: Option<LevelProbMethodConfig>,
        #[serde(skip_serializing_if = "Option::is_none")]
        replicates: Option<usize>,
    },
    MonteCarlo {
        cone: ConeConfig,
        #[serde(skip_serializing_if = "Option::is_none")]
        replicates: Option<usize>,
    },
    Tube {
        cone: ConeConfig,
        #[serde(skip_serializing_if = "Option::is_none")]
        quadrature_nodes: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelProbMethodConfig {
    ExactSmallM,
    MonteCarlo,
}

impl From<LevelProbMethodConfig> for LevelProbMethod {
    fn from(c: LevelProbMethodConfig) -> Self {
        match c {
            LevelProbMethodConfig::ExactSmallM => LevelProbMethod::ExactSmallM,
            LevelProbMethodConfig::MonteCarlo => LevelProbMethod::MonteCarlo,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub spec: SimulationSpec,
    /// When present, the generated dataset is written here as CSV.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<String>,
    /// When present, run the null-calibration study instead of emitting a
    /// single dataset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfigBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfigBlock {
    pub replicates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_points: Option<Vec<f64>>,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.is_empty() {
        return Err(CliError::Config(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Config(format!("{what}: ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}
