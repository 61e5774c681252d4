/// Weighted pool-adjacent-violators for a nondecreasing fit.
///
/// Returns the fitted values. Adjacent blocks are pooled while the running
/// block means decrease, using weighted means.
pub fn isotonic_nondecreasing(y: &[f64], w: &[f64]) -> Vec<f64> {
    assert_eq!(y.len(), w.len());
    let n = y.len();
    // (mean, weight, count) per pooled block
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        blocks.push((y[i], w[i], 1));
        while blocks.len() >= 2 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            blocks.pop();
            let wt = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / wt, wt, c1 + c2));
        }
    }
    let mut out = Vec::with_capacity(n);
    for &(mean, _, count) in &blocks {
        out.extend(std::iter::repeat_n(mean, count));
    }
    out
}

/// Number of distinct levels of the weighted isotonic projection onto the
/// nonincreasing cone `{x_1 ≥ ⋯ ≥ x_m}`.
pub fn level_count_nonincreasing(y: &[f64], w: &[f64]) -> usize {
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    let fit = isotonic_nondecreasing(&neg, w);
    let mut levels = 1;
    for pair in fit.windows(2) {
        if pair[1] != pair[0] {
            levels += 1;
        }
    }
    levels
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn monotone_input_is_unchanged() {
        let y = [1.0, 2.0, 3.0];
        let fit = isotonic_nondecreasing(&y, &[1.0; 3]);
        assert_eq!(fit, y);
    }

    #[test]
    fn single_violation_pools_pair() {
        let fit = isotonic_nondecreasing(&[2.0, 1.0, 3.0], &[1.0; 3]);
        assert_relative_eq!(fit[0], 1.5);
        assert_relative_eq!(fit[1], 1.5);
        assert_relative_eq!(fit[2], 3.0);
    }

    #[test]
    fn weights_shift_pooled_mean() {
        let fit = isotonic_nondecreasing(&[2.0, 1.0], &[3.0, 1.0]);
        assert_relative_eq!(fit[0], 1.75);
        assert_relative_eq!(fit[1], 1.75);
    }

    #[test]
    fn level_counting() {
        assert_eq!(level_count_nonincreasing(&[3.0, 2.0, 1.0], &[1.0; 3]), 3);
        assert_eq!(level_count_nonincreasing(&[1.0, 2.0, 3.0], &[1.0; 3]), 1);
        assert_eq!(level_count_nonincreasing(&[2.0, 3.0, 1.0], &[1.0; 3]), 2);
    }

    #[test]
    fn fit_minimizes_weighted_distance_against_grid_search() {
        // brute-force check on a 3-point example over a fine grid of
        // nondecreasing candidates
        let y = [1.0, 0.2, 0.6];
        let w = [1.0, 2.0, 0.5];
        let fit = isotonic_nondecreasing(&y, &w);
        let obj = |x: &[f64]| -> f64 {
            y.iter()
                .zip(x)
                .zip(&w)
                .map(|((&yi, &xi), &wi)| wi * (yi - xi) * (yi - xi))
                .sum()
        };
        let best = obj(&fit);
        let grid: Vec<f64> = (0..=60).map(|k| -0.5 + k as f64 * 0.03).collect();
        for &a in &grid {
            for &b in grid.iter().filter(|&&b| b >= a) {
                for &c in grid.iter().filter(|&&c| c >= b) {
                    assert!(obj(&[a, b, c]) >= best - 1e-9);
                }
            }
        }
    }
}
