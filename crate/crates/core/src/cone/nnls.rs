use super::ConeError;
use nalgebra::{DMatrix, DVector};

/// Lawson–Hanson active-set nonnegative least squares:
/// `argmin_{λ ≥ 0} ‖A λ − b‖²`.
///
/// Pivoting is deterministic (largest dual, lowest index on ties) so repeated
/// calls on the same data choose the same face. `max_pivots` bounds the
/// number of passive-set insertions.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, max_pivots: usize) -> Result<DVector<f64>, ConeError> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    if n == 0 {
        return Ok(x);
    }
    let scale = a.amax().max(b.amax()).max(1.0);
    let tol = 1e-12 * scale * scale;

    let mut passive = vec![false; n];
    let mut pivots = 0usize;
    loop {
        let residual = b - a * &x;
        let dual = a.transpose() * &residual;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if !passive[j] && dual[j] > tol {
                match best {
                    Some((_, w)) if dual[j] <= w => {}
                    _ => best = Some((j, dual[j])),
                }
            }
        }
        let Some((j_star, _)) = best else {
            return Ok(x);
        };
        passive[j_star] = true;
        pivots += 1;
        if pivots > max_pivots {
            return Err(ConeError::Projection(format!(
                "nnls exceeded {max_pivots} pivots"
            )));
        }

        // inner loop: restrict to the passive set and trim negative entries
        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let sub = a.select_columns(idx.iter());
            let z_sub = crate::linalg::lstsq(&sub, b);
            if z_sub.iter().all(|&v| v > tol) {
                x.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = z_sub[k];
                }
                break;
            }
            // step toward z until the first passive coordinate hits zero
            let mut alpha = f64::INFINITY;
            for (k, &j) in idx.iter().enumerate() {
                if z_sub[k] <= tol {
                    let denom = x[j] - z_sub[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (z_sub[k] - x[j]);
            }
            for &j in &idx {
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unconstrained_solution_when_feasible() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_column_slice(&[2.0, 3.0]);
        let x = nnls(&a, &b, 100).unwrap();
        assert_relative_eq!(x[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn clamps_negative_coordinates() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_column_slice(&[-1.0, 2.0]);
        let x = nnls(&a, &b, 100).unwrap();
        assert_relative_eq!(x[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn overdetermined_system() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_column_slice(&[1.0, 0.8, 0.3]);
        let x = nnls(&a, &b, 100).unwrap();
        // KKT: gradient nonpositive where x = 0, zero where x > 0
        let grad = a.transpose() * (a * &x - &b);
        for j in 0..2 {
            if x[j] > 0.0 {
                assert_relative_eq!(grad[j], 0.0, epsilon = 1e-10);
            } else {
                assert!(grad[j] >= -1e-10);
            }
        }
    }
}
