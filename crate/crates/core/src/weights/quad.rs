use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' at x via the three-term recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integral of `f` over the unit simplex `{ρ ∈ R^dim: ρ_k ≥ 0, Σρ_k ≤ 1}`
/// with a nested Gauss–Legendre rule of `n` nodes per axis, inner ranges
/// scaled to the remaining budget. `dim = 0` evaluates `f` at the empty
/// point (the 0-dimensional simplex has measure 1).
pub fn integrate_simplex<F: Fn(&[f64]) -> f64>(dim: usize, n: usize, f: F) -> f64 {
    if dim == 0 {
        return f(&[]);
    }
    let (nodes, weights) = gauss_legendre(n);
    let mut point = vec![0.0; dim];
    integrate_rec(dim, 0, 1.0, &mut point, &nodes, &weights, &f)
}

fn integrate_rec<F: Fn(&[f64]) -> f64>(
    dim: usize,
    level: usize,
    budget: f64,
    point: &mut Vec<f64>,
    nodes: &[f64],
    weights: &[f64],
    f: &F,
) -> f64 {
    let half = budget * 0.5;
    let mut total = 0.0;
    for (&x, &w) in nodes.iter().zip(weights) {
        let rho = half * (x + 1.0);
        point[level] = rho;
        let inner = if level + 1 == dim {
            f(point)
        } else {
            integrate_rec(dim, level + 1, budget - rho, point, nodes, weights, f)
        };
        total += w * half * inner;
    }
    total
}
