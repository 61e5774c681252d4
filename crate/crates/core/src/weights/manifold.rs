use super::WeightsError;
use crate::linalg;
use nalgebra::{DMatrix, DVector};

/// The spherical cross-section `M = K ∩ S^{r−1}` of a simplicial cone,
/// parametrized by normalized convex combinations of the embedded
/// generators: `T(ρ) = W(ρ)/‖W(ρ)‖` with `W(ρ) = Σ_k c_k(ρ) e_k` and
/// `c(ρ) = (ρ_1, …, ρ_{d−1}, 1 − Σρ)` over the unit simplex.
///
/// Faces, edges and corners of `M` correspond to facets of the simplex
/// (vanishing barycentric coordinates) and carry their own charts of the
/// same form over the retained generators.
#[derive(Debug, Clone)]
pub struct ManifoldGeometry {
    emb: DMatrix<f64>,
    d: usize,
}

impl ManifoldGeometry {
    /// Builds the manifold from the embedded cone generators, which must be
    /// linearly independent (the cone is simplicial). Generators are
    /// normalized to unit length; this reparametrizes but does not change
    /// the manifold.
    pub fn from_embedded_generators(generators: &[DVector<f64>]) -> Result<Self, WeightsError> {
        let d = generators.len();
        if d == 0 {
            return Err(WeightsError::Dimension("no generators".into()));
        }
        let r = generators[0].len();
        if r < d {
            return Err(WeightsError::Dimension(format!(
                "{d} generators in ambient dimension {r}"
            )));
        }
        let mut emb = DMatrix::zeros(r, d);
        for (k, g) in generators.iter().enumerate() {
            if g.len() != r {
                return Err(WeightsError::Dimension("generator length mismatch".into()));
            }
            let norm = g.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(WeightsError::Dimension("zero or non-finite generator".into()));
            }
            emb.set_column(k, &(g / norm));
        }
        let rank = emb.clone().svd(false, false).rank(1e-10);
        if rank != d {
            return Err(WeightsError::Matrix(format!(
                "generators have rank {rank}, expected {d}: the cone is not simplicial"
            )));
        }
        Ok(ManifoldGeometry { emb, d })
    }

    /// Cone dimension `d` (the manifold has dimension `d − 1`).
    pub fn d(&self) -> usize {
        self.d
    }

    /// Ambient dimension `r`.
    pub fn ambient_dim(&self) -> usize {
        self.emb.nrows()
    }

    /// The Euler–Poincaré characteristic of the (contractible) manifold.
    pub fn euler_characteristic(&self) -> i64 {
        1
    }

    /// Chart over a subset of generators (the main chart uses all of them;
    /// faces drop one, edges two, corners three).
    pub fn chart(&self, retained: &[usize]) -> Chart {
        Chart {
            emb: self.emb.select_columns(retained.iter()),
        }
    }

    pub fn main_chart(&self) -> Chart {
        self.chart(&(0..self.d).collect::<Vec<_>>())
    }

    /// Boundary faces: each drops one generator. Empty for `d = 1`.
    pub fn faces(&self) -> Vec<BoundaryPiece> {
        if self.d < 2 {
            return vec![];
        }
        (0..self.d)
            .map(|k| BoundaryPiece {
                retained: (0..self.d).filter(|&j| j != k).collect(),
                dropped: vec![k],
            })
            .collect()
    }

    /// Codimension-2 edges: each drops a pair of generators.
    pub fn edges(&self) -> Vec<BoundaryPiece> {
        if self.d < 3 {
            return vec![];
        }
        let mut out = Vec::new();
        for k in 0..self.d {
            for l in k + 1..self.d {
                out.push(BoundaryPiece {
                    retained: (0..self.d).filter(|&j| j != k && j != l).collect(),
                    dropped: vec![k, l],
                });
            }
        }
        out
    }

    /// Codimension-3 corners: each drops a triple of generators.
    pub fn corners(&self) -> Vec<BoundaryPiece> {
        if self.d < 4 {
            return vec![];
        }
        let mut out = Vec::new();
        for k in 0..self.d {
            for l in k + 1..self.d {
                for m in l + 1..self.d {
                    out.push(BoundaryPiece {
                        retained: (0..self.d).filter(|&j| j != k && j != l && j != m).collect(),
                        dropped: vec![k, l, m],
                    });
                }
            }
        }
        out
    }

    /// Direction of entry toward generator `k` at the manifold point `t`:
    /// the tangential component `(I − ttᵀ) e_k` of the dropped generator.
    pub fn entry_direction(&self, t: &DVector<f64>, k: usize) -> DVector<f64> {
        let e = self.emb.column(k);
        e - t * t.dot(&e)
    }

    /// Inward unit normal of the face that drops generator `dropped`, at the
    /// point `t`, given a spanning set of that face's tangent space there.
    pub fn face_normal_inward(
        &self,
        t: &DVector<f64>,
        dropped: usize,
        face_tangent: &[DVector<f64>],
    ) -> DVector<f64> {
        let v = self.entry_direction(t, dropped);
        let mut b = v.clone();
        let basis = orthonormalize(face_tangent);
        for q in &basis {
            b -= q * q.dot(&v);
        }
        let norm = b.norm();
        debug_assert!(norm > 1e-12, "degenerate face normal");
        b / norm
    }
}

/// A boundary stratum of the manifold: the chart of the retained generators
/// plus the indices whose barycentric coordinates vanish there.
#[derive(Debug, Clone)]
pub struct BoundaryPiece {
    pub retained: Vec<usize>,
    pub dropped: Vec<usize>,
}

/// A barycentric chart over `q` generators: `ρ ∈ Δ^{q−1} ⊂ R^{q−1}`.
#[derive(Debug, Clone)]
pub struct Chart {
    emb: DMatrix<f64>,
}

impl Chart {
    /// Chart dimension `q − 1`.
    pub fn dim(&self) -> usize {
        self.emb.ncols() - 1
    }

    fn barycentric(&self, rho: &[f64]) -> DVector<f64> {
        let q = self.emb.ncols();
        debug_assert_eq!(rho.len(), q - 1);
        let mut c = DVector::zeros(q);
        let mut sum = 0.0;
        for (k, &v) in rho.iter().enumerate() {
            c[k] = v;
            sum += v;
        }
        c[q - 1] = 1.0 - sum;
        c
    }

    /// `T(ρ)` on the unit sphere.
    pub fn point(&self, rho: &[f64]) -> DVector<f64> {
        let w = &self.emb * self.barycentric(rho);
        let n = w.norm();
        w / n
    }

    /// Tangent matrix `S(ρ) = [T_1 ⋯ T_{q−1}]` of partial derivatives along
    /// the simplex directions `u_j = e_j − e_q`.
    pub fn tangent(&self, rho: &[f64]) -> DMatrix<f64> {
        let (s, _) = self.tangent_and_second(rho, false);
        s
    }

    /// Tangent matrix plus, optionally, all second partials `T_{jk}`
    /// (returned row-major as `second[j][k]`).
    pub fn tangent_and_second(
        &self,
        rho: &[f64],
        want_second: bool,
    ) -> (DMatrix<f64>, Vec<Vec<DVector<f64>>>) {
        let q = self.emb.ncols();
        let p = q - 1;
        let c = self.barycentric(rho);
        let w = &self.emb * c;
        let s2 = w.dot(&w);
        let psi = s2.powf(-0.5);

        // direction vectors W_j = E (e_j − e_q)
        let last = self.emb.column(q - 1).into_owned();
        let w_dirs: Vec<DVector<f64>> = (0..p)
            .map(|j| self.emb.column(j).into_owned() - &last)
            .collect();
        let a: Vec<f64> = w_dirs.iter().map(|wj| w.dot(wj)).collect();

        let mut s = DMatrix::zeros(self.emb.nrows(), p);
        for j in 0..p {
            let col = &w_dirs[j] * psi - &w * (psi.powi(3) * a[j]);
            s.set_column(j, &col);
        }
        if !want_second {
            return (s, vec![]);
        }
        let mut second = vec![vec![DVector::zeros(self.emb.nrows()); p]; p];
        for j in 0..p {
            for k in j..p {
                let b_jk = w_dirs[j].dot(&w_dirs[k]);
                let t_jk = -&w_dirs[j] * (psi.powi(3) * a[k]) - &w_dirs[k] * (psi.powi(3) * a[j])
                    + &w * (3.0 * psi.powi(5) * a[j] * a[k] - psi.powi(3) * b_jk);
                second[j][k] = t_jk.clone();
                second[k][j] = t_jk;
            }
        }
        (s, second)
    }
}

/// Gram–Schmidt orthonormalization, dropping near-dependent vectors.
pub fn orthonormalize(vectors: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut u = v.clone();
        for q in &basis {
            u -= q * q.dot(v);
        }
        let norm = u.norm();
        if norm > 1e-12 * v.norm().max(1.0) {
            basis.push(u / norm);
        }
    }
    basis
}

/// `det(SᵀS)^{1/2}`, the chart volume element.
pub fn volume_element(s: &DMatrix<f64>) -> f64 {
    if s.ncols() == 0 {
        return 1.0;
    }
    let gram = s.transpose() * s;
    gram.determinant().max(0.0).sqrt()
}

/// The curvature integrand `Υ(ρ) = 2 Σ_{k>l} (v_kkᵀ v_ll − v_klᵀ v_lk)`
/// with `v_lk = (I − S(SᵀS)⁻¹Sᵀ) ∂_k S (SᵀS)⁻¹ e_l`.
pub fn curvature_upsilon(s: &DMatrix<f64>, second: &[Vec<DVector<f64>>]) -> f64 {
    let p = s.ncols();
    if p < 2 {
        return 0.0;
    }
    let gram_inv = linalg::sym_pinv(&(s.transpose() * s));
    let proj = |v: &DVector<f64>| -> DVector<f64> { v - s * (&gram_inv * (s.transpose() * v)) };
    // v[l][k]
    let mut v = vec![vec![DVector::zeros(s.nrows()); p]; p];
    for l in 0..p {
        let alpha = gram_inv.column(l);
        for k in 0..p {
            let mut acc = DVector::zeros(s.nrows());
            for j in 0..p {
                acc += &second[j][k] * alpha[j];
            }
            v[l][k] = proj(&acc);
        }
    }
    let mut upsilon = 0.0;
    for k in 1..p {
        for l in 0..k {
            upsilon += 2.0 * (v[k][k].dot(&v[l][l]) - v[k][l].dot(&v[l][k]));
        }
    }
    upsilon
}
