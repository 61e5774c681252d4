//! Extended score functions, the quadratic inference function, and its
//! constrained minimizers.

mod fit;

pub use fit::{fit, fit_all, Constraint, FitComponent, FitInfo, QifFit, SolverOptions};
pub(crate) use fit::project_direct_sum;

use crate::data::{CorrelationBasis, DataError, LinkFunction, LongitudinalDataset};
use crate::linalg;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QifError {
    #[error("zero or invalid marginal variance at subject {subject}, time {time}: {value}")]
    Variance {
        subject: usize,
        time: usize,
        value: f64,
    },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("did not converge within {iterations} iterations (best objective {best_q})")]
    Convergence {
        iterations: usize,
        best_q: f64,
        best: Box<FitComponent>,
    },
    #[error("infeasible or malformed constraint: {0}")]
    Constraint(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Cone(#[from] crate::cone::ConeError),
}

/// Scores, their empirical second moment, and the exact jacobian of the mean
/// score, all evaluated at one parameter value.
#[derive(Debug, Clone)]
pub struct ScoreState {
    pub gamma: DVector<f64>,
    /// `N×(rs)`: row `i` is the stacked subject score `g_i(γ)`.
    pub subject_scores: DMatrix<f64>,
    /// `ḡ_N`, the row mean of `subject_scores`.
    pub mean_score: DVector<f64>,
    /// `Ĉ_N = N⁻¹ Σ g_i g_iᵀ`.
    pub second_moment: DMatrix<f64>,
    /// `∇ḡ_N`, the exact `rs×r` jacobian of the mean score.
    pub mean_score_jacobian: DMatrix<f64>,
    /// Diagonals of the `A_i` working variance matrices (`N×n`).
    pub marginal_variances: DMatrix<f64>,
    n_subjects: usize,
    second_moment_pinv: DMatrix<f64>,
}

impl ScoreState {
    /// `Q_N(γ) = N ḡᵀ Ĉ⁻ ḡ` with the eigenvalue-cutoff pseudo-inverse.
    pub fn qif_value(&self) -> f64 {
        let n = self.n_subjects as f64;
        (n * self.mean_score.dot(&(&self.second_moment_pinv * &self.mean_score))).max(0.0)
    }

    /// `Q_N` with an explicit ridge `Ĉ + λI` in place of the pseudo-inverse.
    pub fn qif_value_ridge(&self, lambda: f64) -> f64 {
        let k = self.second_moment.nrows();
        let ridged = &self.second_moment + DMatrix::identity(k, k) * lambda;
        let solved = ridged
            .lu()
            .solve(&self.mean_score)
            .expect("ridged matrix is invertible");
        self.n_subjects as f64 * self.mean_score.dot(&solved)
    }

    /// Gauss–Newton half-gradient `∇ḡᵀ Ĉ⁻ ḡ`.
    pub fn gn_gradient(&self) -> DVector<f64> {
        self.mean_score_jacobian.transpose() * (&self.second_moment_pinv * &self.mean_score)
    }

    /// `Ĵ = ∇ḡᵀ Ĉ⁻ ∇ḡ`.
    pub fn j_matrix(&self) -> DMatrix<f64> {
        self.mean_score_jacobian.transpose()
            * &self.second_moment_pinv
            * &self.mean_score_jacobian
    }


    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }
}

/// Builds the stacked extended scores
/// `g_i = [∇h_iᵀ A_i^{-1/2} M_l A_i^{-1/2} (Y_i − h_i)]_{l=1..s}`
/// together with `ḡ_N`, `Ĉ_N` and the exact jacobian `∇ḡ_N`.
pub fn extended_scores(
    gamma: &DVector<f64>,
    data: &LongitudinalDataset,
    link: LinkFunction,
    basis: &CorrelationBasis,
) -> Result<ScoreState, QifError> {
    let r = data.n_covariates();
    let n = data.n_times();
    let big_n = data.n_subjects();
    let s = basis.len();
    if gamma.len() != r {
        return Err(QifError::Dimension(format!(
            "gamma has length {}, expected {r}",
            gamma.len()
        )));
    }
    if gamma.iter().any(|v| !v.is_finite()) {
        return Err(QifError::Dimension("gamma has non-finite entries".into()));
    }
    if basis.dim() != n {
        return Err(QifError::Dimension(format!(
            "basis dimension {} does not match n = {n}",
            basis.dim()
        )));
    }

    let rs = r * s;
    let mut subject_scores = DMatrix::zeros(big_n, rs);
    let mut mean_score = DVector::zeros(rs);
    let mut second_moment = DMatrix::zeros(rs, rs);
    let mut mean_jac = DMatrix::zeros(rs, r);
    let mut marginal_variances = DMatrix::zeros(big_n, n);

    let mut g_i = DVector::zeros(rs);
    for i in 0..big_n {
        let x = data.design(i);
        let y = data.response(i);
        let eta = x * gamma;
        let mut mu = DVector::zeros(n);
        let mut dmu = DVector::zeros(n);
        let mut d2mu = DVector::zeros(n);
        let mut avar = DVector::zeros(n);
        let mut w = DVector::zeros(n);
        let mut kappa = DVector::zeros(n);
        for j in 0..n {
            mu[j] = link.mean(eta[j]);
            dmu[j] = link.mean_deriv(eta[j]);
            d2mu[j] = link.mean_second_deriv(eta[j]);
            let a = link.variance(mu[j]);
            if !(a > 0.0) || !a.is_finite() {
                return Err(QifError::Variance {
                    subject: i + 1,
                    time: j + 1,
                    value: a,
                });
            }
            avar[j] = a;
            marginal_variances[(i, j)] = a;
            w[j] = a.powf(-0.5);
            kappa[j] = -0.5 * a.powf(-1.5) * link.variance_deriv(mu[j]) * dmu[j];
        }
        let e = &y - &mu;
        let we = e.component_mul(&w);

        for (l, m) in basis.matrices().iter().enumerate() {
            let m_we = m * &we;
            let f = m_we.component_mul(&w); // W M_l W e
            // score block: Dᵀ f with D = diag(dmu) X
            let df = f.component_mul(&dmu);
            let block = x.transpose() * &df;
            for p in 0..r {
                g_i[l * r + p] = block[p];
            }

            // exact jacobian of the block:
            //   Xᵀ diag(d2μ∘f + dμ∘κ∘(M W e)) X
            // + Xᵀ diag(dμ∘w) M diag(κ∘e) X
            // − Xᵀ diag(dμ∘w) M diag(w∘dμ) X
            let diag1 = d2mu.component_mul(&f) + dmu.component_mul(&kappa).component_mul(&m_we);
            let left = x.transpose() * DMatrix::from_diagonal(&dmu.component_mul(&w)) * m;
            let jac_block = x.transpose() * DMatrix::from_diagonal(&diag1) * x
                + &left * DMatrix::from_diagonal(&kappa.component_mul(&e)) * x
                - &left * DMatrix::from_diagonal(&w.component_mul(&dmu)) * x;
            for row in 0..r {
                for col in 0..r {
                    mean_jac[(l * r + row, col)] += jac_block[(row, col)];
                }
            }
        }
        subject_scores.set_row(i, &g_i.transpose());
        mean_score += &g_i;
        second_moment.ger(1.0, &g_i, &g_i, 1.0);
    }
    let scale = 1.0 / big_n as f64;
    mean_score *= scale;
    second_moment *= scale;
    mean_jac *= scale;
    let second_moment = linalg::symmetrize(&second_moment);
    let second_moment_pinv = linalg::sym_pinv(&second_moment);

    Ok(ScoreState {
        gamma: gamma.clone(),
        subject_scores,
        mean_score,
        second_moment,
        mean_score_jacobian: mean_jac,
        marginal_variances,
        n_subjects: big_n,
        second_moment_pinv,
    })
}

/// `Q_N(γ)`, building the score state on the fly.
pub fn qif_value(
    gamma: &DVector<f64>,
    data: &LongitudinalDataset,
    link: LinkFunction,
    basis: &CorrelationBasis,
) -> Result<f64, QifError> {
    Ok(extended_scores(gamma, data, link, basis)?.qif_value())
}

/// Residual of the local quadratic approximation
/// `Q_N(γ) − Q_N(γ̂) − N (γ−γ̂)ᵀ Ĵ(γ) (γ−γ̂)`.
///
/// `Ĵ` is evaluated at `γ`; on an identity-link model with the independence
/// basis the residual then vanishes identically, and in general it is the
/// finite-`N` error term of the quadratic expansion.
pub fn quadratic_approx_residual(
    fit: &QifFit,
    gamma: &DVector<f64>,
    data: &LongitudinalDataset,
    link: LinkFunction,
    basis: &CorrelationBasis,
) -> Result<f64, QifError> {
    let state = extended_scores(gamma, data, link, basis)?;
    let delta = gamma - &fit.gamma_hat;
    let quad = data.n_subjects() as f64 * delta.dot(&(state.j_matrix() * &delta));
    Ok(state.qif_value() - fit.q_hat() - quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_basis, BasisKind};
    use approx::assert_relative_eq;

    fn tiny_dataset() -> LongitudinalDataset {
        // N = 2, n = 1, r = 1, X = 1, Y = (2, 4)
        let responses = DMatrix::from_row_slice(2, 1, &[2.0, 4.0]);
        let covariates = vec![
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        ];
        LongitudinalDataset::new(responses, covariates, None).unwrap()
    }

    #[test]
    fn scalar_example_scores() {
        let data = tiny_dataset();
        let basis = make_basis(BasisKind::Independence, 1).unwrap();
        let state = extended_scores(
            &DVector::from_column_slice(&[0.0]),
            &data,
            LinkFunction::Identity,
            &basis,
        )
        .unwrap();
        assert_relative_eq!(state.subject_scores[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(state.subject_scores[(1, 0)], 4.0, epsilon = 1e-14);
        assert_relative_eq!(state.mean_score[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(state.second_moment[(0, 0)], 10.0, epsilon = 1e-14);
        assert_relative_eq!(state.qif_value(), 1.8, epsilon = 1e-14);
    }

    #[test]
    fn zero_residuals_give_zero_scores() {
        // Y = X γ exactly
        let gamma = DVector::from_column_slice(&[1.5, -0.5]);
        let covariates: Vec<DMatrix<f64>> = (0..4)
            .map(|i| {
                DMatrix::from_fn(3, 2, |j, k| ((i + j + k) as f64 * 0.37).sin())
            })
            .collect();
        let mut responses = DMatrix::zeros(4, 3);
        for i in 0..4 {
            let mu = &covariates[i] * &gamma;
            for j in 0..3 {
                responses[(i, j)] = mu[j];
            }
        }
        let data = LongitudinalDataset::new(responses, covariates, None).unwrap();
        let basis = make_basis(BasisKind::Exchangeable, 3).unwrap();
        let state = extended_scores(&gamma, &data, LinkFunction::Identity, &basis).unwrap();
        assert!(state.mean_score.amax() < 1e-14);
        assert_relative_eq!(state.qif_value(), 0.0, epsilon = 1e-20);
    }

    #[test]
    fn score_width_is_r_times_s() {
        let gamma = DVector::from_column_slice(&[0.2, 0.1]);
        let covariates: Vec<DMatrix<f64>> = (0..3)
            .map(|i| DMatrix::from_fn(2, 2, |j, k| (i + j + 2 * k) as f64 * 0.1 + 0.3))
            .collect();
        let responses = DMatrix::from_fn(3, 2, |i, j| (i as f64 - j as f64) * 0.4);
        let data = LongitudinalDataset::new(responses, covariates, None).unwrap();
        let basis = make_basis(BasisKind::Ar1, 2).unwrap();
        let state = extended_scores(&gamma, &data, LinkFunction::Identity, &basis).unwrap();
        assert_eq!(state.subject_scores.ncols(), 4);
        assert_eq!(state.mean_score_jacobian.nrows(), 4);
        assert_eq!(state.mean_score_jacobian.ncols(), 2);
    }

    fn jacobian_matches_fd(link: LinkFunction, gamma: &[f64]) {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let r = gamma.len();
        let n = 3;
        let covariates: Vec<DMatrix<f64>> = (0..6)
            .map(|_| DMatrix::from_fn(n, r, |_, _| rng.random::<f64>() * 0.8 - 0.4))
            .collect();
        // keep responses strictly positive (log) and in (0, 1) (logit)
        let responses = DMatrix::from_fn(6, n, |_, _| 0.2 + 0.6 * rng.random::<f64>());
        let data = LongitudinalDataset::new(responses, covariates, None).unwrap();
        let basis = make_basis(BasisKind::Exchangeable, n).unwrap();
        let gamma = DVector::from_column_slice(gamma);
        let state = extended_scores(&gamma, &data, link, &basis).unwrap();
        let h = 1e-6;
        for p in 0..r {
            let mut hi = gamma.clone();
            let mut lo = gamma.clone();
            hi[p] += h;
            lo[p] -= h;
            let s_hi = extended_scores(&hi, &data, link, &basis).unwrap();
            let s_lo = extended_scores(&lo, &data, link, &basis).unwrap();
            let fd = (&s_hi.mean_score - &s_lo.mean_score) / (2.0 * h);
            for row in 0..state.mean_score_jacobian.nrows() {
                let an = state.mean_score_jacobian[(row, p)];
                let scale = an.abs().max(1e-3);
                assert!(
                    ((fd[row] - an) / scale).abs() < 1e-5,
                    "{link:?} jacobian ({row},{p}): analytic {an} vs fd {}",
                    fd[row]
                );
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences_identity() {
        jacobian_matches_fd(LinkFunction::Identity, &[0.3, -0.2]);
    }

    #[test]
    fn jacobian_matches_finite_differences_log() {
        jacobian_matches_fd(LinkFunction::Log, &[0.1, 0.2]);
    }

    #[test]
    fn jacobian_matches_finite_differences_logit() {
        jacobian_matches_fd(LinkFunction::Logit, &[-0.3, 0.4]);
    }

    #[test]
    fn rank_deficient_second_moment_matches_ridge_limit() {
        // two identical subjects: Ĉ has rank 1 while ḡ lies in its column
        // space, so the pseudo-inverse value is the ridge limit
        let responses = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        let covariates = vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
        ];
        let data = LongitudinalDataset::new(responses, covariates, None).unwrap();
        let basis = make_basis(BasisKind::Exchangeable, 2).unwrap();
        let state = extended_scores(
            &DVector::from_column_slice(&[0.2, 0.4]),
            &data,
            LinkFunction::Identity,
            &basis,
        )
        .unwrap();
        let q = state.qif_value();
        assert!(q.is_finite());
        let mut prev_gap = f64::INFINITY;
        for lambda in [1e-4, 1e-6, 1e-8] {
            let gap = (state.qif_value_ridge(lambda) - q).abs();
            assert!(gap < prev_gap + 1e-12, "ridge {lambda} gap {gap}");
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-6);
    }
}
