use super::pava::level_count_nonincreasing;
use super::{ChiBarWeights, WeightSource, WeightsError};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelProbMethod {
    /// Closed forms built from bivariate and trivariate orthant
    /// probabilities; available for `m ≤ 4`.
    ExactSmallM,
    /// Simulation of the weighted isotonic projection.
    MonteCarlo,
}

/// Level probabilities `p(k, d; Q)` for the simple order with `m` groups and
/// diagonal covariance `Q`, mapped to chi-bar weights: the projection having
/// `k` distinct levels contributes to `χ²_{k−1}`.
pub fn level_probabilities(
    m: usize,
    q: &DMatrix<f64>,
    method: LevelProbMethod,
    replicates: usize,
    seed: u64,
) -> Result<ChiBarWeights, WeightsError> {
    if m < 2 {
        return Err(WeightsError::Dimension(format!("m = {m} below 2")));
    }
    if q.nrows() != m || q.ncols() != m {
        return Err(WeightsError::Matrix(format!(
            "Q is {}x{}, expected {m}x{m}",
            q.nrows(),
            q.ncols()
        )));
    }
    let mut variances = Vec::with_capacity(m);
    for i in 0..m {
        for j in 0..m {
            if i != j && q[(i, j)] != 0.0 {
                return Err(WeightsError::Matrix("Q must be diagonal".into()));
            }
        }
        if !(q[(i, i)] > 0.0) {
            return Err(WeightsError::Matrix(format!(
                "Q diagonal entry {} is not positive",
                q[(i, i)]
            )));
        }
        variances.push(q[(i, i)]);
    }
    match method {
        LevelProbMethod::ExactSmallM => {
            if m > 4 {
                return Err(WeightsError::Dimension(format!(
                    "exact level probabilities implemented for m <= 4, got {m}"
                )));
            }
            let p = exact_level_probs(&variances);
            ChiBarWeights::new(m - 1, p, WeightSource::LevelProb, None)
        }
        LevelProbMethod::MonteCarlo => {
            if replicates == 0 {
                return Err(WeightsError::Domain("replicates must be positive".into()));
            }
            let weights_inv: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
            let sds: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut counts = vec![0usize; m];
            let mut z = vec![0.0; m];
            for _ in 0..replicates {
                for (zi, sd) in z.iter_mut().zip(&sds) {
                    *zi = sd * rng.sample::<f64, _>(StandardNormal);
                }
                let levels = level_count_nonincreasing(&z, &weights_inv);
                counts[levels - 1] += 1;
            }
            let r = replicates as f64;
            let p: Vec<f64> = counts.iter().map(|&c| c as f64 / r).collect();
            let se = p.iter().map(|&pk| (pk * (1.0 - pk) / r).sqrt()).collect();
            ChiBarWeights::new(m - 1, p, WeightSource::MonteCarlo, Some(se))
        }
    }
}

/// `P(X > 0, Y > 0)` for standard bivariate normal with correlation `rho`.
fn orthant2(rho: f64) -> f64 {
    0.25 + rho.clamp(-1.0, 1.0).asin() / (2.0 * PI)
}

/// `P(X > 0, Y > 0, Z > 0)` for trivariate normal with the given pairwise
/// correlations.
fn orthant3(r12: f64, r13: f64, r23: f64) -> f64 {
    0.125
        + (r12.clamp(-1.0, 1.0).asin()
            + r13.clamp(-1.0, 1.0).asin()
            + r23.clamp(-1.0, 1.0).asin())
            / (4.0 * PI)
}

/// Probability that independent centered Gaussians with the given variances
/// are strictly increasing, for up to four values.
fn prob_increasing(variances: &[f64]) -> f64 {
    match variances.len() {
        0 | 1 => 1.0,
        2 => 0.5,
        3 => {
            let (v1, v2, v3) = (variances[0], variances[1], variances[2]);
            orthant2(-v2 / ((v1 + v2) * (v2 + v3)).sqrt())
        }
        4 => {
            let (v1, v2, v3, v4) = (variances[0], variances[1], variances[2], variances[3]);
            let r_ab = -v2 / ((v1 + v2) * (v2 + v3)).sqrt();
            let r_bc = -v3 / ((v2 + v3) * (v3 + v4)).sqrt();
            orthant3(r_ab, 0.0, r_bc)
        }
        _ => unreachable!("prob_increasing limited to four blocks"),
    }
}

/// Probability that a block with the given variances pools into a single
/// level under the weighted isotonic fit, for blocks of up to three values.
fn prob_pool(variances: &[f64]) -> f64 {
    match variances.len() {
        1 => 1.0,
        2 => 0.5,
        3 => {
            let (v1, v2, v3) = (variances[0], variances[1], variances[2]);
            // complement within the planar split: p(1) + p(3) = 1/2
            0.25 - (-v2 / ((v1 + v2) * (v2 + v3)).sqrt()).asin() / (2.0 * PI)
        }
        _ => unreachable!("prob_pool limited to three values"),
    }
}

/// Exact level probabilities `p(1..m)` for `m ≤ 4`.
///
/// The level-set partition of the isotonic fit factors into independent
/// events: each block pools internally, and the block means are ordered.
/// Summing over compositions of `m` into `l` consecutive blocks gives
/// `p(l)`; `p(1)` is the normalization complement.
fn exact_level_probs(variances: &[f64]) -> Vec<f64> {
    let m = variances.len();
    let mut p = vec![0.0; m];
    for l in 2..=m {
        let mut total = 0.0;
        for comp in compositions(m, l) {
            let mut start = 0;
            let mut factor = 1.0;
            let mut block_var = Vec::with_capacity(l);
            for &size in &comp {
                let block = &variances[start..start + size];
                factor *= prob_pool(block);
                let weight: f64 = block.iter().map(|v| 1.0 / v).sum();
                block_var.push(1.0 / weight);
                start += size;
            }
            total += factor * prob_increasing(&block_var);
        }
        p[l - 1] = total;
    }
    p[0] = 1.0 - p[1..].iter().sum::<f64>();
    p
}

/// Compositions of `m` into `l` positive parts.
fn compositions(m: usize, l: usize) -> Vec<Vec<usize>> {
    fn rec(remaining: usize, parts: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            current.push(remaining);
            out.push(current.clone());
            current.pop();
            return;
        }
        for take in 1..=remaining - (parts - 1) {
            current.push(take);
            rec(remaining - take, parts - 1, current, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    if l >= 1 && l <= m {
        rec(m, l, &mut Vec::new(), &mut out);
    }
    out
}
