//! Property tests for the cone projector.

use cone_infer_core::cone::PolyhedralCone;
use nalgebra::DVector;
use proptest::prelude::*;

fn generator_entry() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![-1.0, -0.5, 0.0, 0.25, 0.5, 1.0])
}

fn cone_and_points(dim: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let gens = prop::collection::vec(
        prop::collection::vec(generator_entry(), dim),
        dim..=dim + 2,
    )
    .prop_filter("nonzero generators", |gens| {
        gens.iter().all(|g| g.iter().any(|&v| v != 0.0))
    });
    let points = prop::collection::vec(prop::collection::vec(-2.0f64..2.0, dim), 1..4);
    (gens, points)
}

fn check_cone(
    dim: usize,
    gens: Vec<Vec<f64>>,
    points: Vec<Vec<f64>>,
) -> Result<(), TestCaseError> {
    let generators: Vec<DVector<f64>> =
        gens.iter().map(|g| DVector::from_column_slice(g)).collect();
    let cone = PolyhedralCone::from_generators(dim, generators.clone()).unwrap();
    for p in points {
        let z = DVector::from_column_slice(&p);
        let proj = cone.project(&z, None).unwrap();
        // idempotence
        let twice = cone.project(&proj, None).unwrap();
        prop_assert!((&twice - &proj).norm() < 1e-10, "idempotence");
        // Pythagoras
        let pyth = (z.norm_squared() - proj.norm_squared() - (&z - &proj).norm_squared()).abs();
        prop_assert!(pyth < 1e-9, "pythagoras defect {pyth}");
        // KKT form of the Moreau decomposition: the residual lies in the
        // polar cone and is orthogonal to the projection
        let residual = &z - &proj;
        for g in &generators {
            prop_assert!(
                residual.dot(g) <= 1e-9 * g.norm().max(1.0),
                "residual leaves the polar cone"
            );
        }
        prop_assert!(proj.dot(&residual).abs() < 1e-9, "complementarity");
        // membership by halfspaces agrees with the projection fixpoint
        if let Ok(inside) = cone.contains(&z, 1e-8) {
            let fixed = (&proj - &z).norm() < 1e-7 * (1.0 + z.norm());
            prop_assert_eq!(inside, fixed, "containment disagreement");
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projector_properties_dim2((gens, points) in cone_and_points(2)) {
        check_cone(2, gens, points)?;
    }

    #[test]
    fn projector_properties_dim3((gens, points) in cone_and_points(3)) {
        check_cone(3, gens, points)?;
    }

    #[test]
    fn projector_properties_dim4((gens, points) in cone_and_points(4)) {
        check_cone(4, gens, points)?;
    }
}
