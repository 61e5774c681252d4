//! Cross-checks of the chi-bar weight machinery beyond the acceptance
//! criteria: quadrature stability, Gauss-Bonnet on curved manifolds, and
//! tail monotonicity.

use cone_infer_core::cone::{canonicalize, order_cone};
use cone_infer_core::weights::{
    chibar_tail, geometric_constants, ChiBarWeights, ManifoldGeometry, QuadratureConfig,
    WeightSource,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use std::f64::consts::PI;

fn tight_quadrature() -> QuadratureConfig {
    QuadratureConfig {
        nodes: 64,
        check_nodes: 32,
        rel_tol: 1e-5,
    }
}

fn octant_manifold() -> ManifoldGeometry {
    let gens: Vec<DVector<f64>> = (0..3)
        .map(|i| DVector::from_fn(3, |j, _| if i == j { 1.0 } else { 0.0 }))
        .collect();
    ManifoldGeometry::from_embedded_generators(&gens).unwrap()
}

fn order4_manifold(j: &DMatrix<f64>) -> ManifoldGeometry {
    let spec = order_cone(4).unwrap();
    let canon = canonicalize(&spec, j).unwrap();
    ManifoldGeometry::from_embedded_generators(&canon.generators_embedded).unwrap()
}

fn skew_spd(dim: usize) -> DMatrix<f64> {
    let mut j = DMatrix::identity(dim, dim);
    for i in 0..dim {
        j[(i, i)] = 1.0 + 0.3 * (i as f64 * 0.9).sin();
        if i + 1 < dim {
            j[(i, i + 1)] = 0.2;
            j[(i + 1, i)] = 0.2;
        }
    }
    j
}

#[test]
fn doubling_nodes_moves_constants_below_1e5() {
    // geometric_constants itself enforces agreement between 32 and 64 nodes
    // at the requested tolerance
    geometric_constants(&octant_manifold(), &tight_quadrature()).unwrap();
    geometric_constants(&order4_manifold(&DMatrix::identity(8, 8)), &tight_quadrature()).unwrap();
}

#[test]
fn gauss_bonnet_holds_on_every_d3_manifold() {
    let manifolds = vec![
        octant_manifold(),
        order4_manifold(&DMatrix::identity(8, 8)),
        order4_manifold(&skew_spd(8)),
        ManifoldGeometry::from_embedded_generators(&[
            DVector::from_column_slice(&[1.0, 0.1, 0.0, 0.2, 0.0]),
            DVector::from_column_slice(&[-0.2, 1.0, 0.3, 0.0, 0.1]),
            DVector::from_column_slice(&[0.0, 0.2, 1.0, -0.3, 0.4]),
        ])
        .unwrap(),
    ];
    for (idx, geom) in manifolds.iter().enumerate() {
        let c = geometric_constants(geom, &QuadratureConfig::default()).unwrap();
        let defect = (c.kappa2 + c.ell1 + c.upsilon0
            - (2.0 * PI * geom.euler_characteristic() as f64 - c.kappa0))
            .abs();
        assert!(defect < 1e-4, "manifold {idx}: Gauss-Bonnet defect {defect}");
    }
}

#[test]
fn curved_metric_still_matches_monte_carlo() {
    // weights for the m = 4 order cone under a skew information matrix:
    // tube quadrature against Monte Carlo face counting
    use cone_infer_core::weights::{weights_monte_carlo, weights_tube};
    let spec = order_cone(4).unwrap();
    let canon = canonicalize(&spec, &skew_spd(8)).unwrap();
    let geom = ManifoldGeometry::from_embedded_generators(&canon.generators_embedded).unwrap();
    let tube = weights_tube(
        &geometric_constants(&geom, &QuadratureConfig::default()).unwrap(),
        3,
    )
    .unwrap();
    let mc = weights_monte_carlo(&canon.cone_in_rd().unwrap(), 400_000, 7).unwrap();
    let se = mc.mc_stderr.as_ref().unwrap();
    for k in 0..4 {
        let gap = (tube.weights[k] - mc.weights[k]).abs();
        assert!(
            gap < (4.0 * se[k]).max(1.5e-3),
            "weight {k}: tube {} vs mc {}",
            tube.weights[k],
            mc.weights[k]
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tail_is_monotone_and_bounded(raw in prop::collection::vec(0.01f64..1.0, 2..6)) {
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let d = weights.len() - 1;
        let w = ChiBarWeights::new(d, weights, WeightSource::ClosedForm, None).unwrap();
        let mut prev = 1.0f64;
        for step in 0..40 {
            let c = step as f64 * 0.35;
            let tail = chibar_tail(&w, c).unwrap();
            prop_assert!((0.0..=1.0).contains(&tail));
            prop_assert!(tail <= prev + 1e-12);
            prev = tail;
        }
    }
}
