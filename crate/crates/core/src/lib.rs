//! Constrained inference for correlated longitudinal data.
//!
//! This crate fits marginal regression models by quadratic inference
//! functions (QIF), tests vector-space null hypotheses against convex-cone
//! alternatives with the generalized quasi-score (GQS) statistic, and
//! computes the chi-bar-squared null distribution of that statistic by four
//! routes: a closed form for planar cones, level probabilities for order
//! cones, Monte Carlo projection, and the volume-of-tube expansion driven by
//! quadrature over the cone's spherical cross-section.
//!
//! The main entry points are:
//!
//! * [`data`] — balanced longitudinal datasets, link functions, working
//!   correlation bases, CSV ingestion and simulation;
//! * [`qif`] — extended scores, the QIF objective and its constrained
//!   minimizers;
//! * [`cone`] — hypothesis encodings, canonical transformations and
//!   projections onto polyhedral cones;
//! * [`weights`] — chi-bar-squared weight computation and tail/quantile
//!   evaluation;
//! * [`testing`] — the end-to-end GQS test and local power calculations;
//! * [`calibration`] — the simulated null-calibration study.

pub mod calibration;
pub mod cone;
pub mod data;
pub mod linalg;
pub mod qif;
pub mod testing;
pub mod weights;

pub use cone::{CanonicalCone, HypothesisSpec, PolyhedralCone};
pub use data::{CorrelationBasis, LinkFunction, LongitudinalDataset};
pub use qif::{QifFit, ScoreState};
pub use testing::TestResult;
pub use weights::ChiBarWeights;
