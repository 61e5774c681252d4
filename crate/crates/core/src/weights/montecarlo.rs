use super::{ChiBarWeights, WeightSource, WeightsError};
use crate::cone::PolyhedralCone;
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Generator coefficients below this threshold are treated as inactive when
/// classifying the face of a projection.
const ACTIVITY_TOL: f64 = 1e-9;

/// Replicates per seeded substream; fixed so that results do not depend on
/// the worker count.
const CHUNK: usize = 4096;

/// Chi-bar weights by Monte Carlo: projects standard Gaussian samples onto
/// the cone and bins by the dimension of the face containing the projection
/// (the number of active generators in the NNLS solution).
///
/// `weights[k]` estimates the probability that the projection lies in a
/// `k`-dimensional face; binomial standard errors are reported per weight.
pub fn weights_monte_carlo(
    cone: &PolyhedralCone,
    replicates: usize,
    seed: u64,
) -> Result<ChiBarWeights, WeightsError> {
    if replicates < 10_000 {
        return Err(WeightsError::Domain(format!(
            "need at least 10_000 replicates, got {replicates}"
        )));
    }
    let d = cone.dim();
    // force generator derivation once up front so chunks can share it
    cone.generators()?;

    let n_chunks = replicates.div_ceil(CHUNK);
    let counts = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64 + 1);
            let lo = chunk * CHUNK;
            let hi = ((chunk + 1) * CHUNK).min(replicates);
            let mut counts = vec![0usize; d + 1];
            let mut z = DVector::zeros(d);
            for _ in lo..hi {
                for zi in z.iter_mut() {
                    *zi = rng.sample::<f64, _>(StandardNormal);
                }
                let (_, support) = cone
                    .project_with_support(&z, ACTIVITY_TOL)
                    .expect("projection after generator derivation");
                counts[support.len().min(d)] += 1;
            }
            counts
        })
        .reduce(
            || vec![0usize; d + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    let r = replicates as f64;
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / r).collect();
    let stderr = weights
        .iter()
        .map(|&p| (p * (1.0 - p) / r).sqrt())
        .collect();
    ChiBarWeights::new(d, weights, WeightSource::MonteCarlo, Some(stderr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halfline_gives_half_half() {
        let k = PolyhedralCone::from_generators(1, vec![DVector::from_column_slice(&[1.0])])
            .unwrap();
        let w = weights_monte_carlo(&k, 50_000, 3).unwrap();
        assert!((w.weights[0] - 0.5).abs() < 0.01);
        assert!((w.weights[1] - 0.5).abs() < 0.01);
    }

    #[test]
    fn orthant_r3_matches_binomial() {
        let k = PolyhedralCone::from_generators(
            3,
            (0..3)
                .map(|i| DVector::from_fn(3, |j, _| if i == j { 1.0 } else { 0.0 }))
                .collect(),
        )
        .unwrap();
        let w = weights_monte_carlo(&k, 200_000, 5).unwrap();
        let expect = [0.125, 0.375, 0.375, 0.125];
        let se = w.mc_stderr.as_ref().unwrap();
        for k in 0..4 {
            assert!(
                (w.weights[k] - expect[k]).abs() < 3.5 * se[k],
                "k={k}: {} vs {}",
                w.weights[k],
                expect[k]
            );
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let k = PolyhedralCone::from_generators(
            2,
            vec![
                DVector::from_column_slice(&[1.0, 0.0]),
                DVector::from_column_slice(&[1.0, 1.0]),
            ],
        )
        .unwrap();
        let a = weights_monte_carlo(&k, 20_000, 9).unwrap();
        let b = weights_monte_carlo(&k, 20_000, 9).unwrap();
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn too_few_replicates_is_domain_error() {
        let k = PolyhedralCone::from_generators(1, vec![DVector::from_column_slice(&[1.0])])
            .unwrap();
        assert!(matches!(
            weights_monte_carlo(&k, 100, 1),
            Err(WeightsError::Domain(_))
        ));
    }
}
