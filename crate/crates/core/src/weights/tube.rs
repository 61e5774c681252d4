use super::manifold::{curvature_upsilon, orthonormalize, volume_element, ManifoldGeometry};
use super::quad::integrate_simplex;
use super::{sphere_volume, ChiBarWeights, WeightSource, WeightsError};
use crate::linalg;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Tensor Gauss–Legendre settings for the manifold integrals. Constants are
/// evaluated at `check_nodes` and `nodes` per axis and must agree to
/// `rel_tol` (relative to `max(1, value)`).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub nodes: usize,
    pub check_nodes: usize,
    pub rel_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            nodes: 64,
            check_nodes: 32,
            rel_tol: 1e-4,
        }
    }
}

/// Geometric constants of the volume-of-tube expansion around the manifold:
/// interior volume and curvature, boundary volume/rotation/curvature, edge
/// rotation measures, corner wedge size, and the sphere-volume table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometricConstants {
    pub d: usize,
    pub kappa0: f64,
    pub kappa2: f64,
    pub ell0: f64,
    pub ell1: f64,
    pub ell2: f64,
    pub upsilon0: f64,
    pub upsilon1: f64,
    pub tau: f64,
    /// `ω_k` for `k = 0..d−1`.
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct RawConstants {
    kappa0: f64,
    kappa2: f64,
    ell0: f64,
    ell1: f64,
    ell2: f64,
    upsilon0: f64,
    upsilon1: f64,
    tau: f64,
}

/// Evaluates the geometric constants by quadrature over the manifold's
/// charts, refusing results that change by more than the configured
/// tolerance when the node count is doubled.
pub fn geometric_constants(
    geom: &ManifoldGeometry,
    quad: &QuadratureConfig,
) -> Result<GeometricConstants, WeightsError> {
    if geom.d() > 4 {
        return Err(WeightsError::Dimension(format!(
            "the tube route covers codimension-3 strata only up to d = 4, got d = {}",
            geom.d()
        )));
    }
    let coarse = raw_constants(geom, quad.check_nodes);
    let fine = raw_constants(geom, quad.nodes);
    let pairs = [
        ("kappa0", coarse.kappa0, fine.kappa0),
        ("kappa2", coarse.kappa2, fine.kappa2),
        ("ell0", coarse.ell0, fine.ell0),
        ("ell1", coarse.ell1, fine.ell1),
        ("ell2", coarse.ell2, fine.ell2),
        ("upsilon0", coarse.upsilon0, fine.upsilon0),
        ("upsilon1", coarse.upsilon1, fine.upsilon1),
        ("tau", coarse.tau, fine.tau),
    ];
    for (name, lo, hi) in pairs {
        if (hi - lo).abs() > quad.rel_tol * hi.abs().max(1.0) {
            return Err(WeightsError::Quadrature(format!(
                "{name} moved from {lo} to {hi} between {} and {} nodes",
                quad.check_nodes, quad.nodes
            )));
        }
    }
    let d = geom.d();
    Ok(GeometricConstants {
        d,
        kappa0: fine.kappa0,
        kappa2: fine.kappa2,
        ell0: fine.ell0,
        ell1: fine.ell1,
        ell2: fine.ell2,
        upsilon0: fine.upsilon0,
        upsilon1: fine.upsilon1,
        tau: fine.tau,
        omega: (0..d).map(sphere_volume).collect(),
    })
}

fn raw_constants(geom: &ManifoldGeometry, n: usize) -> RawConstants {
    let d = geom.d();
    let mut out = RawConstants::default();

    // interior: κ0 and κ2
    let main = geom.main_chart();
    let dim = main.dim();
    out.kappa0 = integrate_simplex(dim, n, |rho| volume_element(&main.tangent(rho)));
    let intrinsic = ((d as f64) - 1.0) * ((d as f64) - 2.0);
    if dim >= 2 {
        out.kappa2 = integrate_simplex(dim, n, |rho| {
            let (s, second) = main.tangent_and_second(rho, true);
            0.5 * (curvature_upsilon(&s, &second) - intrinsic) * volume_element(&s)
        });
    }

    // boundary faces: ℓ0, ℓ1, ℓ2
    for face in geom.faces() {
        let fc = geom.chart(&face.retained);
        let fdim = fc.dim();
        if fdim == 0 {
            out.ell0 += 1.0;
            continue;
        }
        out.ell0 += integrate_simplex(fdim, n, |rho| volume_element(&fc.tangent(rho)));
        let dropped = face.dropped[0];
        out.ell1 += integrate_simplex(fdim, n, |rho| {
            let (s, second) = fc.tangent_and_second(rho, true);
            let t = fc.point(rho);
            let cols: Vec<DVector<f64>> = s.column_iter().map(|c| c.into_owned()).collect();
            let b_out = -geom.face_normal_inward(&t, dropped, &cols);
            let gram_inv = linalg::sym_pinv(&(s.transpose() * &s));
            let mut val = 0.0;
            for k in 0..fdim {
                for j in 0..fdim {
                    val -= gram_inv[(k, j)] * second[j][k].dot(&b_out);
                }
            }
            val * volume_element(&s)
        });
        let face_intrinsic = ((d as f64) - 2.0) * ((d as f64) - 3.0);
        if fdim >= 2 {
            out.ell2 += integrate_simplex(fdim, n, |rho| {
                let (s, second) = fc.tangent_and_second(rho, true);
                0.5 * (curvature_upsilon(&s, &second) - face_intrinsic) * volume_element(&s)
            });
        }
    }

    // codimension-2 edges: υ0 and υ1
    for edge in geom.edges() {
        let ec = geom.chart(&edge.retained);
        let edim = ec.dim();
        let (ka, kb) = (edge.dropped[0], edge.dropped[1]);
        out.upsilon0 += integrate_simplex(edim, n, |rho| {
            let t = ec.point(rho);
            let s = ec.tangent(rho);
            let (b_a, b_b) = edge_normals(geom, &t, &s, ka, kb);
            b_a.dot(&b_b).clamp(-1.0, 1.0).acos() * volume_element(&s)
        });
        if edim >= 1 {
            out.upsilon1 += integrate_simplex(edim, n, |rho| {
                let (s, second) = ec.tangent_and_second(rho, true);
                let t = ec.point(rho);
                let (b_a, b_b) = edge_normals(geom, &t, &s, ka, kb);
                let phi = b_a.dot(&b_b).clamp(-1.0, 1.0).acos();
                let b_sum = -(b_a + b_b); // outward normals
                let gram_inv = linalg::sym_pinv(&(s.transpose() * &s));
                let mut val = 0.0;
                for k in 0..edim {
                    for j in 0..edim {
                        val -= gram_inv[(k, j)] * second[j][k].dot(&b_sum);
                    }
                }
                val * (phi / 2.0).tan() * volume_element(&s)
            });
        }
    }

    // codimension-3 corners: τ via the spherical excess of the wedge
    for corner in geom.corners() {
        let cc = geom.chart(&corner.retained);
        let t = cc.point(&[]);
        let mut vertices = Vec::with_capacity(3);
        for &j in &corner.dropped {
            let tangent: Vec<DVector<f64>> = corner
                .dropped
                .iter()
                .filter(|&&i| i != j)
                .map(|&i| geom.entry_direction(&t, i))
                .collect();
            vertices.push(-geom.face_normal_inward(&t, j, &tangent));
        }
        out.tau += spherical_excess(&vertices[0], &vertices[1], &vertices[2]);
    }

    out
}

/// Inward unit normals of the two faces meeting along an edge, evaluated at
/// an edge point with tangent matrix `s`.
fn edge_normals(
    geom: &ManifoldGeometry,
    t: &DVector<f64>,
    s: &nalgebra::DMatrix<f64>,
    ka: usize,
    kb: usize,
) -> (DVector<f64>, DVector<f64>) {
    let edge_cols: Vec<DVector<f64>> = s.column_iter().map(|c| c.into_owned()).collect();
    let t_a = geom.entry_direction(t, ka);
    let t_b = geom.entry_direction(t, kb);
    let mut tan_face_a = edge_cols.clone();
    tan_face_a.push(t_b);
    let mut tan_face_b = edge_cols;
    tan_face_b.push(t_a);
    let b_a = geom.face_normal_inward(t, ka, &tan_face_a);
    let b_b = geom.face_normal_inward(t, kb, &tan_face_b);
    (b_a, b_b)
}

/// Area of the spherical triangle with the given unit vertices, by the
/// angle-excess formula.
fn spherical_excess(v1: &DVector<f64>, v2: &DVector<f64>, v3: &DVector<f64>) -> f64 {
    let corner = |a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>| -> f64 {
        let basis = orthonormalize(std::slice::from_ref(a));
        let tangent = |x: &DVector<f64>| -> DVector<f64> {
            let mut t = x.clone();
            for q in &basis {
                t -= q * q.dot(x);
            }
            let norm = t.norm();
            t / norm
        };
        let tb = tangent(b);
        let tc = tangent(c);
        tb.dot(&tc).clamp(-1.0, 1.0).acos()
    };
    corner(v1, v2, v3) + corner(v2, v3, v1) + corner(v3, v1, v2) - PI
}

/// Chi-bar weights from the tube expansion. Valid for `d ≤ 4`; the lowest
/// weight is the normalization complement. A materially negative
/// coefficient means the critical radius is below π/2 (the enclosing cone is
/// not convex) and is refused.
pub fn weights_tube(constants: &GeometricConstants, d: usize) -> Result<ChiBarWeights, WeightsError> {
    if d == 0 {
        return Err(WeightsError::Dimension("d must be at least 1".into()));
    }
    if d > 4 {
        return Err(WeightsError::Dimension(format!(
            "the four-term tube expansion determines weights only for d <= 4, got {d}"
        )));
    }
    if constants.d != d {
        return Err(WeightsError::Dimension(format!(
            "constants computed for d = {}, requested {d}",
            constants.d
        )));
    }
    let omega = |k: usize| sphere_volume(k);
    let mut mass = vec![0.0; d + 1];
    mass[d] = constants.kappa0 / omega(d - 1);
    if d >= 2 {
        mass[d - 1] = constants.ell0 / (2.0 * omega(d - 2));
    }
    if d >= 3 {
        mass[d - 2] =
            (constants.kappa2 + constants.ell1 + constants.upsilon0) / (2.0 * PI * omega(d - 3));
    }
    if d >= 4 {
        mass[d - 3] =
            (constants.ell2 + constants.upsilon1 + constants.tau) / (4.0 * PI * omega(d - 4));
    }
    let assigned: f64 = mass.iter().sum();
    let remainder = 1.0 - assigned;
    for (k, w) in mass.iter_mut().enumerate() {
        if *w < -1e-8 {
            return Err(WeightsError::NonConvexManifold(format!(
                "coefficient for chi-squared {k} is {w}"
            )));
        }
        *w = w.max(0.0);
    }
    if remainder < -1e-8 {
        return Err(WeightsError::NonConvexManifold(format!(
            "assigned tube mass {assigned} exceeds 1"
        )));
    }
    mass[0] += remainder.max(0.0);
    ChiBarWeights::new(d, mass, WeightSource::Tube, None)
}
