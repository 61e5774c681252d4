//! Hypothesis encodings, canonical transformations and projections onto
//! polyhedral cones.

mod nnls;
mod poly;

pub use nnls::nnls;
pub use poly::PolyhedralCone;

use crate::linalg;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConeError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("matrix error: {0}")]
    Matrix(String),
    #[error("projection error: {0}")]
    Projection(String),
}

/// A null space `V`, a basis `P` of `V⊥` carrying the constraints, and the
/// generators of `N = {u: Pu ∈ C}` describing the alternative cone.
#[derive(Debug, Clone)]
pub struct HypothesisSpec {
    /// Ambient parameter dimension `r`.
    pub r: usize,
    /// Number of constraints `d`.
    pub d: usize,
    /// `r×(r−d)` basis of the null space `V`.
    pub null_basis: DMatrix<f64>,
    /// `r×d` basis `P` of `V⊥`.
    pub constraint_basis: DMatrix<f64>,
    /// Generators of `N ⊂ R^d`.
    pub cone_generators: Vec<DVector<f64>>,
    /// For order-restricted hypotheses, the number of groups `m`; the first
    /// `m` coordinates of γ are the group means. Enables the
    /// level-probability weight route.
    pub order_m: Option<usize>,
}

impl HypothesisSpec {
    /// Validates orthogonality of the two bases and the rank of `P`.
    pub fn new(
        null_basis: DMatrix<f64>,
        constraint_basis: DMatrix<f64>,
        cone_generators: Vec<DVector<f64>>,
    ) -> Result<Self, ConeError> {
        let r = constraint_basis.nrows();
        let d = constraint_basis.ncols();
        if null_basis.nrows() != r {
            return Err(ConeError::Dimension(format!(
                "null basis has {} rows, P has {r}",
                null_basis.nrows()
            )));
        }
        if null_basis.ncols() + d != r {
            return Err(ConeError::Dimension(format!(
                "dim(V) + d = {} + {d} must equal r = {r}",
                null_basis.ncols()
            )));
        }
        let cross = constraint_basis.transpose() * &null_basis;
        if cross.amax() > 1e-10 * constraint_basis.amax().max(1.0) * null_basis.amax().max(1.0) {
            return Err(ConeError::Matrix(
                "constraint basis is not orthogonal to the null basis".into(),
            ));
        }
        let rank = constraint_basis
            .clone()
            .svd(false, false)
            .rank(1e-10 * constraint_basis.amax().max(1.0));
        if rank != d {
            return Err(ConeError::Matrix(format!(
                "constraint basis has rank {rank}, expected {d}"
            )));
        }
        for g in &cone_generators {
            if g.len() != d {
                return Err(ConeError::Dimension(format!(
                    "cone generator of length {} in dimension {d}",
                    g.len()
                )));
            }
        }
        Ok(HypothesisSpec {
            r,
            d,
            null_basis,
            constraint_basis,
            cone_generators,
            order_m: None,
        })
    }

    /// Generators of the alternative cone `C = {P u: u ∈ N}` in `R^r`.
    pub fn alternative_generators(&self) -> Vec<DVector<f64>> {
        self.cone_generators
            .iter()
            .map(|g| &self.constraint_basis * g)
            .collect()
    }

    /// The cone `N` as a polyhedral cone in `R^d`.
    pub fn n_cone(&self) -> Result<PolyhedralCone, ConeError> {
        PolyhedralCone::from_generators(self.d, self.cone_generators.clone())
    }
}

/// Order-restricted hypothesis for `m` treatment groups with one regression
/// coordinate per group: γ = (μ_1..μ_m, β_1..β_m), V = {μ_1 = ⋯ = μ_m} and
/// the alternative cone is μ_1 ≥ ⋯ ≥ μ_m.
pub fn order_cone(m: usize) -> Result<HypothesisSpec, ConeError> {
    order_cone_with_regressors(m, m)
}

/// Order-restricted hypothesis with an explicit number of unconstrained
/// regression coordinates following the `m` group means (`r = m + extra`).
pub fn order_cone_with_regressors(m: usize, extra: usize) -> Result<HypothesisSpec, ConeError> {
    if m < 2 {
        return Err(ConeError::Dimension(format!("order cone needs m >= 2, got {m}")));
    }
    let r = m + extra;
    let d = m - 1;

    // Helmert-style contrasts over the mean block: row k of Pᵀ is
    // (1, …, 1, −k, 0, …) with k leading ones.
    let mut p = DMatrix::zeros(r, d);
    for k in 1..=d {
        for i in 0..k {
            p[(i, k - 1)] = 1.0;
        }
        p[(k, k - 1)] = -(k as f64);
    }

    // V: equal means (normalized all-ones over the mean block) plus every
    // regression coordinate.
    let mut b = DMatrix::zeros(r, r - d);
    let scale = 1.0 / (m as f64).sqrt();
    for i in 0..m {
        b[(i, 0)] = scale;
    }
    for (col, row) in (m..r).enumerate() {
        b[(row, col + 1)] = 1.0;
    }

    // N = {u: differences of the mean block of Pu are nonnegative} is
    // simplicial: generators are the columns of the inverse of the
    // difference-constraint matrix, scaled to unit max coordinate.
    let p_mean = p.rows(0, m).into_owned();
    let mut diff = DMatrix::zeros(d, m);
    for k in 0..d {
        diff[(k, k)] = 1.0;
        diff[(k, k + 1)] = -1.0;
    }
    let a = diff * p_mean;
    let a_inv = a
        .try_inverse()
        .ok_or_else(|| ConeError::Matrix("singular order-cone constraint matrix".into()))?;
    let generators = a_inv
        .column_iter()
        .map(|c| {
            let c = c.into_owned();
            &c / c.amax()
        })
        .collect();

    let mut spec = HypothesisSpec::new(b, p, generators)?;
    spec.order_m = Some(m);
    Ok(spec)
}

/// The canonical transformation at a given information matrix: Cholesky
/// factor `L` with `LᵀL = J`, the transformed constraint basis `P⋆`, the
/// mapping matrix `H` and `Ω = Pᵀ J⁻¹ P`, together with the images `H·v` of
/// the cone generators.
#[derive(Debug, Clone)]
pub struct CanonicalCone {
    pub l_factor: DMatrix<f64>,
    pub p_star: DMatrix<f64>,
    pub h_matrix: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub generators_embedded: Vec<DVector<f64>>,
}

/// Builds the canonical cone data from a hypothesis and a symmetric positive
/// definite information matrix.
pub fn canonicalize(spec: &HypothesisSpec, j_hat: &DMatrix<f64>) -> Result<CanonicalCone, ConeError> {
    if j_hat.nrows() != spec.r || j_hat.ncols() != spec.r {
        return Err(ConeError::Dimension(format!(
            "information matrix is {}x{}, expected {0}x{0} with r = {r}",
            j_hat.nrows(),
            j_hat.ncols(),
            r = spec.r
        )));
    }
    let (min_ev, max_ev) = linalg::sym_eigen_range(j_hat);
    if !(min_ev > 1e-12 * max_ev.max(0.0)) {
        return Err(ConeError::Matrix(format!(
            "information matrix is not positive definite (eigenvalues in [{min_ev:.3e}, {max_ev:.3e}])"
        )));
    }
    let l = linalg::cholesky_upper(j_hat)
        .ok_or_else(|| ConeError::Matrix("Cholesky factorization failed".into()))?;
    let l_inv_t = l
        .clone()
        .try_inverse()
        .ok_or_else(|| ConeError::Matrix("Cholesky factor is singular".into()))?
        .transpose();
    let p = &spec.constraint_basis;
    let p_star = &l_inv_t * p;
    let ptjp = p.transpose() * j_hat * p;
    let ptjp_inv = ptjp
        .try_inverse()
        .ok_or_else(|| ConeError::Matrix("Pᵀ J P is singular".into()))?;
    let h = &p_star * ptjp_inv * p.transpose() * p;
    let j_inv = linalg::sym_pinv(j_hat);
    let omega = p.transpose() * j_inv * p;
    let generators_embedded = spec.cone_generators.iter().map(|v| &h * v).collect();
    Ok(CanonicalCone {
        l_factor: l,
        p_star,
        h_matrix: h,
        omega,
        generators_embedded,
    })
}

impl CanonicalCone {
    /// Number of constraints `d`.
    pub fn d(&self) -> usize {
        self.h_matrix.ncols()
    }

    /// The canonical cone `K = {H u: u ∈ N}` expressed in `d`-dimensional
    /// coordinates over an orthonormal basis of the column space of `H`.
    pub fn cone_in_rd(&self) -> Result<PolyhedralCone, ConeError> {
        let basis = linalg::column_space_basis(&self.h_matrix, 1e-12);
        if basis.ncols() != self.d() {
            return Err(ConeError::Matrix(format!(
                "H has rank {}, expected {}",
                basis.ncols(),
                self.d()
            )));
        }
        let gens = self
            .generators_embedded
            .iter()
            .map(|g| basis.transpose() * g)
            .collect();
        PolyhedralCone::from_generators(self.d(), gens)
    }

    /// Noncentrality `δ = ‖H u⋆‖` of a direction `u⋆ ∈ N`.
    pub fn noncentrality(&self, u_star: &DVector<f64>) -> f64 {
        (&self.h_matrix * u_star).norm()
    }
}

/// Angle of a planar (`d = 2`) canonical cone between its two embedded
/// generators, in `[0, π]`.
pub fn cone_angle(canon: &CanonicalCone) -> Result<f64, ConeError> {
    if canon.d() != 2 || canon.generators_embedded.len() != 2 {
        return Err(ConeError::Dimension(format!(
            "cone angle requires d = 2 with two generators, got d = {} with {}",
            canon.d(),
            canon.generators_embedded.len()
        )));
    }
    let a = &canon.generators_embedded[0];
    let b = &canon.generators_embedded[1];
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Err(ConeError::Matrix("degenerate embedded generator".into()));
    }
    Ok((a.dot(b) / denom).clamp(-1.0, 1.0).acos())
}

/// Orthogonal decomposition of `z` into its component in `V⋆ = L·V` and the
/// complement.
pub fn decompose(
    z: &DVector<f64>,
    canon: &CanonicalCone,
    spec: &HypothesisSpec,
) -> (DVector<f64>, DVector<f64>) {
    let v_star = &canon.l_factor * &spec.null_basis;
    let basis = linalg::column_space_basis(&v_star, 1e-12);
    let v_component = &basis * (basis.transpose() * z);
    let perp = z - &v_component;
    (v_component, perp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn order_cone_m3_matches_worked_example() {
        let spec = order_cone(3).unwrap();
        assert_eq!(spec.r, 6);
        assert_eq!(spec.d, 2);
        let pt = spec.constraint_basis.transpose();
        assert_eq!(
            pt.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, -1.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(
            pt.row(1).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 1.0, -2.0, 0.0, 0.0, 0.0]
        );
        let g = &spec.cone_generators;
        assert_eq!(g.len(), 2);
        assert_relative_eq!(g[0][0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(g[0][1], 1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(g[1][0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(g[1][1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn order_cone_m2_is_single_halfline() {
        let spec = order_cone(2).unwrap();
        assert_eq!(spec.d, 1);
        assert_eq!(spec.cone_generators.len(), 1);
    }

    #[test]
    fn order_cone_rejects_m1() {
        assert!(matches!(order_cone(1), Err(ConeError::Dimension(_))));
    }

    #[test]
    fn canonicalize_identity_matches_hand_values() {
        let spec = order_cone(3).unwrap();
        let canon = canonicalize(&spec, &DMatrix::identity(6, 6)).unwrap();
        let hv1 = &canon.generators_embedded[0];
        let hv2 = &canon.generators_embedded[1];
        let expect1 = [4.0 / 3.0, -2.0 / 3.0, -2.0 / 3.0, 0.0, 0.0, 0.0];
        let expect2 = [1.0, 1.0, -2.0, 0.0, 0.0, 0.0];
        for i in 0..6 {
            assert_relative_eq!(hv1[i], expect1[i], epsilon = 1e-12);
            assert_relative_eq!(hv2[i], expect2[i], epsilon = 1e-12);
        }
        assert_relative_eq!(canon.omega[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(canon.omega[(1, 1)], 6.0, epsilon = 1e-12);
        assert_relative_eq!(canon.omega[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn l_factor_reproduces_j() {
        let spec = order_cone(3).unwrap();
        let mut j = DMatrix::identity(6, 6) * 2.0;
        j[(0, 1)] = 0.4;
        j[(1, 0)] = 0.4;
        j[(3, 5)] = -0.2;
        j[(5, 3)] = -0.2;
        let canon = canonicalize(&spec, &j).unwrap();
        let back = canon.l_factor.transpose() * &canon.l_factor;
        for i in 0..6 {
            for k in 0..6 {
                assert_relative_eq!(back[(i, k)], j[(i, k)], epsilon = 1e-10 * 2.0);
            }
        }
        // Proposition-2 orthogonality: P⋆ ⊥ L·V
        let lv = &canon.l_factor * &spec.null_basis;
        let cross = canon.p_star.transpose() * lv;
        assert!(cross.amax() < 1e-10);
    }

    #[test]
    fn non_spd_matrix_is_rejected() {
        let spec = order_cone(3).unwrap();
        let mut j = DMatrix::identity(6, 6);
        j[(5, 5)] = 0.0;
        assert!(matches!(
            canonicalize(&spec, &j),
            Err(ConeError::Matrix(_))
        ));
    }

    #[test]
    fn balanced_m3_angle_is_pi_over_3() {
        let spec = order_cone(3).unwrap();
        let canon = canonicalize(&spec, &DMatrix::identity(6, 6)).unwrap();
        let phi = cone_angle(&canon).unwrap();
        assert_relative_eq!(phi, PI / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn angle_requires_two_constraints() {
        let spec = order_cone(4).unwrap();
        let canon = canonicalize(&spec, &DMatrix::identity(8, 8)).unwrap();
        assert!(matches!(cone_angle(&canon), Err(ConeError::Dimension(_))));
    }

    #[test]
    fn non_orthogonal_bases_are_rejected() {
        let spec = order_cone(3).unwrap();
        let mut bad_null = spec.null_basis.clone();
        bad_null[(0, 1)] = 0.5; // leaks into the span of P
        assert!(matches!(
            HypothesisSpec::new(bad_null, spec.constraint_basis.clone(), spec.cone_generators.clone()),
            Err(ConeError::Matrix(_))
        ));
    }

    #[test]
    fn orthogonal_generators_give_right_angle() {
        let spec = order_cone(3).unwrap();
        let mut canon = canonicalize(&spec, &DMatrix::identity(6, 6)).unwrap();
        canon.generators_embedded[0] = DVector::from_column_slice(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        canon.generators_embedded[1] = DVector::from_column_slice(&[0.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(cone_angle(&canon).unwrap(), PI / 2.0, epsilon = 1e-12);
        canon.generators_embedded[1] = DVector::from_column_slice(&[3.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(cone_angle(&canon).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn decompose_splits_orthogonally() {
        use rand::Rng;
        use rand::SeedableRng;
        let spec = order_cone(3).unwrap();
        let mut j = DMatrix::identity(6, 6);
        j[(0, 2)] = 0.3;
        j[(2, 0)] = 0.3;
        j[(1, 1)] = 1.7;
        let canon = canonicalize(&spec, &j).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let z = DVector::from_fn(6, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let (v, perp) = decompose(&z, &canon, &spec);
            assert!((&v + &perp - &z).norm() <= 1e-12 * z.norm().max(1.0));
            assert!(v.dot(&perp).abs() < 1e-10);
        }
        // z in V⋆ keeps no perpendicular part
        let z = &canon.l_factor * spec.null_basis.column(0).into_owned();
        let (_, perp) = decompose(&z, &canon, &spec);
        assert!(perp.norm() < 1e-10);
        // z in the column space of P⋆ keeps no V⋆ part
        let z = canon.p_star.column(1).into_owned();
        let (v, _) = decompose(&z, &canon, &spec);
        assert!(v.norm() < 1e-10);
    }
}
