use super::nnls::nnls;
use super::ConeError;
use crate::linalg;
use nalgebra::{DMatrix, DVector};
use std::sync::OnceLock;

/// Vertex enumeration is only attempted up to this ambient dimension.
const MAX_ENUM_DIM: usize = 6;

/// A polyhedral convex cone held in double description: extreme rays
/// (generators) and/or inward halfspace normals (`h·y ≥ 0`).
///
/// Whichever description is absent is derived lazily; derivation of
/// generators from halfspaces enumerates candidate active sets and is
/// restricted to dimension ≤ 6.
#[derive(Debug, Clone)]
pub struct PolyhedralCone {
    dim: usize,
    generators: Option<Vec<DVector<f64>>>,
    halfspaces: Option<Vec<DVector<f64>>>,
    derived_generators: OnceLock<Vec<DVector<f64>>>,
    derived_halfspaces: OnceLock<Vec<DVector<f64>>>,
}

impl PolyhedralCone {
    pub fn from_generators(dim: usize, generators: Vec<DVector<f64>>) -> Result<Self, ConeError> {
        for g in &generators {
            if g.len() != dim {
                return Err(ConeError::Dimension(format!(
                    "generator of length {} in dimension {dim}",
                    g.len()
                )));
            }
        }
        Ok(PolyhedralCone {
            dim,
            generators: Some(generators),
            halfspaces: None,
            derived_generators: OnceLock::new(),
            derived_halfspaces: OnceLock::new(),
        })
    }

    pub fn from_halfspaces(dim: usize, halfspaces: Vec<DVector<f64>>) -> Result<Self, ConeError> {
        for h in &halfspaces {
            if h.len() != dim {
                return Err(ConeError::Dimension(format!(
                    "halfspace normal of length {} in dimension {dim}",
                    h.len()
                )));
            }
        }
        Ok(PolyhedralCone {
            dim,
            generators: None,
            halfspaces: Some(halfspaces),
            derived_generators: OnceLock::new(),
            derived_halfspaces: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Extreme-ray description, deriving it from halfspaces when needed.
    pub fn generators(&self) -> Result<&[DVector<f64>], ConeError> {
        if let Some(g) = &self.generators {
            return Ok(g);
        }
        if self.derived_generators.get().is_none() {
            if self.dim > MAX_ENUM_DIM {
                return Err(ConeError::Dimension(format!(
                    "vertex enumeration limited to dimension {MAX_ENUM_DIM}, got {}",
                    self.dim
                )));
            }
            let rays = extreme_rays(self.dim, self.halfspaces.as_deref().unwrap_or(&[]));
            let _ = self.derived_generators.set(rays);
        }
        Ok(self.derived_generators.get().unwrap())
    }

    /// Halfspace description (inward normals), deriving it from generators
    /// when needed.
    pub fn halfspaces(&self) -> Result<&[DVector<f64>], ConeError> {
        if let Some(h) = &self.halfspaces {
            return Ok(h);
        }
        if self.derived_halfspaces.get().is_none() {
            if self.dim > MAX_ENUM_DIM {
                return Err(ConeError::Dimension(format!(
                    "halfspace enumeration limited to dimension {MAX_ENUM_DIM}, got {}",
                    self.dim
                )));
            }
            // K = {y: ⟨−w, y⟩ ≥ 0 for every generator w of the polar}
            let gens = self.generators.as_deref().unwrap_or(&[]);
            let polar_constraints: Vec<DVector<f64>> = gens.iter().map(|g| -g).collect();
            let polar_rays = extreme_rays(self.dim, &polar_constraints);
            let normals = polar_rays.into_iter().map(|r| -r).collect();
            let _ = self.derived_halfspaces.set(normals);
        }
        Ok(self.derived_halfspaces.get().unwrap())
    }

    /// Polar (dual) cone `K⁰ = {y: ⟨y, g⟩ ≤ 0 for all g ∈ K}`.
    pub fn polar(&self) -> Result<PolyhedralCone, ConeError> {
        let gens = self.generators()?;
        let halfspaces = gens.iter().map(|g| -g).collect();
        PolyhedralCone::from_halfspaces(self.dim, halfspaces)
    }

    /// Membership test via the halfspace description.
    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> Result<bool, ConeError> {
        let scale = z.amax().max(1.0);
        Ok(self
            .halfspaces()?
            .iter()
            .all(|h| h.dot(z) >= -tol * scale * h.amax().max(1.0)))
    }

    /// Projection of `z` onto the cone, optionally in the metric
    /// `⟨u, v⟩ = uᵀ M v` for symmetric positive definite `M`.
    ///
    /// Solved by active-set NNLS over the generators; the pivot cap scales
    /// with the number of generators and the ambient dimension.
    pub fn project(
        &self,
        z: &DVector<f64>,
        metric: Option<&DMatrix<f64>>,
    ) -> Result<DVector<f64>, ConeError> {
        if z.len() != self.dim {
            return Err(ConeError::Dimension(format!(
                "point of length {} in dimension {}",
                z.len(),
                self.dim
            )));
        }
        let gens = self.generators()?;
        if gens.is_empty() {
            return Ok(DVector::zeros(self.dim));
        }
        let g = DMatrix::from_columns(gens);
        let (a, b) = match metric {
            None => (g.clone(), z.clone()),
            Some(m) => {
                let l = linalg::cholesky_upper(m)
                    .ok_or_else(|| ConeError::Matrix("metric is not positive definite".into()))?;
                (&l * &g, &l * z)
            }
        };
        let cap = 50 * self.dim.max(gens.len());
        let lambda = nnls(&a, &b, cap)?;
        Ok(&g * lambda)
    }

    /// Projection together with the indices of generators active in the
    /// NNLS solution (coefficients above `activity_tol`).
    pub fn project_with_support(
        &self,
        z: &DVector<f64>,
        activity_tol: f64,
    ) -> Result<(DVector<f64>, Vec<usize>), ConeError> {
        let gens = self.generators()?;
        if gens.is_empty() {
            return Ok((DVector::zeros(self.dim), vec![]));
        }
        let g = DMatrix::from_columns(gens);
        let cap = 50 * self.dim.max(gens.len());
        let lambda = nnls(&g, z, cap)?;
        let support = (0..gens.len())
            .filter(|&j| lambda[j] > activity_tol)
            .collect();
        Ok((&g * lambda, support))
    }

    /// Whether the cone is pointed (contains no line), decided by checking
    /// whether the origin is a nontrivial nonnegative combination of
    /// generators.
    pub fn is_pointed(&self) -> Result<bool, ConeError> {
        let gens = self.generators()?;
        if gens.is_empty() {
            return Ok(true);
        }
        let mut a = DMatrix::zeros(self.dim + 1, gens.len());
        for (j, g) in gens.iter().enumerate() {
            let norm = g.norm();
            if norm == 0.0 {
                continue;
            }
            for i in 0..self.dim {
                a[(i, j)] = g[i] / norm;
            }
            a[(self.dim, j)] = 1.0;
        }
        let mut b = DVector::zeros(self.dim + 1);
        b[self.dim] = 1.0;
        let lambda = nnls(&a, &b, 50 * gens.len().max(self.dim))?;
        let res = (&a * lambda - b).norm();
        Ok(res > 1e-8)
    }
}

/// Extreme rays of `{y: A y ≥ 0}` where the rows of `A` are `normals`.
///
/// Handles a nontrivial lineality space by splitting it off first, then
/// enumerating rays of the pointed quotient from candidate active sets of
/// `k − 1` constraints.
fn extreme_rays(dim: usize, normals: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let a = if normals.is_empty() {
        DMatrix::zeros(0, dim)
    } else {
        DMatrix::from_rows(&normals.iter().map(|h| h.transpose()).collect::<Vec<_>>())
    };
    let lineality = linalg::null_space_basis(&a, 1e-10);
    let mut rays: Vec<DVector<f64>> = Vec::new();
    for c in lineality.column_iter() {
        rays.push(c.into_owned());
        rays.push(-c.into_owned());
    }
    let k = dim - lineality.ncols();
    if k == 0 {
        return rays;
    }
    // orthonormal basis of the complement of the lineality space
    let q = linalg::column_space_basis(&a.transpose(), 1e-10);
    debug_assert_eq!(q.ncols(), k);
    let a_red = &a * &q;

    let feasible = |v: &DVector<f64>| -> bool {
        let scale = v.amax().max(1.0);
        normals.iter().all(|h| h.dot(v) >= -1e-9 * scale * h.amax().max(1.0))
    };
    let push_unique = |v: DVector<f64>, rays: &mut Vec<DVector<f64>>| {
        let norm = v.norm();
        if norm < 1e-12 {
            return;
        }
        let u = &v / norm;
        if rays.iter().all(|r| {
            let rn = r.norm();
            rn < 1e-12 || u.dot(&(r / rn)) < 1.0 - 1e-9
        }) {
            rays.push(u);
        }
    };

    if k == 1 {
        let v = q.column(0).into_owned();
        if feasible(&v) {
            push_unique(v.clone(), &mut rays);
        }
        if feasible(&(-&v)) {
            push_unique(-v, &mut rays);
        }
        return rays;
    }

    let m = a_red.nrows();
    for subset in combinations(m, k - 1) {
        let sub = a_red.select_rows(subset.iter());
        let ns = linalg::null_space_basis(&sub, 1e-9);
        if ns.ncols() != 1 {
            continue;
        }
        let w = ns.column(0).into_owned();
        let v = &q * &w;
        if feasible(&v) {
            push_unique(v.clone(), &mut rays);
        }
        if feasible(&(-&v)) {
            push_unique(-v, &mut rays);
        }
    }
    rays
}

/// All index subsets of `{0..m}` of size `k`, in lexicographic order.
fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > m {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + m - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
