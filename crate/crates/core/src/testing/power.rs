use super::TestError;
use crate::cone::{CanonicalCone, HypothesisSpec};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// 5% critical value of the chi-bar mixture (1/3, 1/2, 1/6) for the
/// balanced three-group order test.
pub const TABLE1_B2: f64 = 3.820;
/// 5% critical value of the plain chi-squared with 2 degrees of freedom.
pub const TABLE1_B1: f64 = 5.991;

/// A local-alternative power scenario: the direction `u⋆ ∈ N`, its
/// noncentrality `δ = ‖H u⋆‖`, the degrees of freedom of the unrestricted
/// test, and the two critical values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerSpec {
    pub delta: f64,
    pub df: usize,
    pub b1: f64,
    pub b2: f64,
    pub u_star: Vec<f64>,
}

impl PowerSpec {
    /// Builds the scenario, checking cone membership of `u⋆` and computing
    /// the noncentrality.
    pub fn new(
        canon: &CanonicalCone,
        spec: &HypothesisSpec,
        u_star: &DVector<f64>,
        df: usize,
        b1: f64,
        b2: f64,
    ) -> Result<Self, TestError> {
        let delta = super::noncentrality(canon, spec, u_star)?;
        Ok(PowerSpec {
            delta,
            df,
            b1,
            b2,
            u_star: u_star.as_slice().to_vec(),
        })
    }

    /// Recomputes `‖H u⋆‖` and checks it against the stored value.
    pub fn validate(&self, canon: &CanonicalCone) -> Result<(), TestError> {
        let recomputed = canon.noncentrality(&DVector::from_column_slice(&self.u_star));
        if (recomputed - self.delta).abs() > 1e-10 * (1.0 + self.delta) {
            return Err(TestError::Domain(format!(
                "stored noncentrality {} disagrees with recomputed {recomputed}",
                self.delta
            )));
        }
        Ok(())
    }

    pub fn restricted_lower(&self) -> Result<f64, TestError> {
        power_lower_bound(self.delta, self.b2)
    }

    pub fn unrestricted_exact(&self) -> Result<f64, TestError> {
        power_unrestricted_exact(self.delta, self.df, self.b1)
    }

    pub fn unrestricted_lower(&self) -> Result<f64, TestError> {
        power_lower_bound(self.delta, self.b1)
    }
}

/// Lower bound `1 − Φ(√b − δ)` on the local power at critical value `b`.
pub fn power_lower_bound(delta: f64, b: f64) -> Result<f64, TestError> {
    if !(b > 0.0) {
        return Err(TestError::Domain(format!(
            "critical value must be positive, got {b}"
        )));
    }
    if delta < 0.0 {
        return Err(TestError::Domain(format!("negative noncentrality {delta}")));
    }
    let normal = Normal::standard();
    Ok(1.0 - normal.cdf(b.sqrt() - delta))
}

/// Tail `P(χ²_df(λ) ≥ c)` of the noncentral chi-squared, by the Poisson
/// mixture of central chi-squared tails, truncated once the remaining
/// Poisson mass falls below 1e-12.
pub fn noncentral_chi_squared_tail(df: usize, lambda: f64, c: f64) -> Result<f64, TestError> {
    if df == 0 {
        return Err(TestError::Domain("df must be at least 1".into()));
    }
    if lambda < 0.0 || c < 0.0 {
        return Err(TestError::Domain(
            "noncentrality and threshold must be nonnegative".into(),
        ));
    }
    let half = lambda / 2.0;
    let mut log_weight = -half; // log of the Poisson(half) mass at j = 0
    let mut cumulative = 0.0;
    let mut tail = 0.0;
    for j in 0..100_000 {
        let weight = log_weight.exp();
        cumulative += weight;
        let dist = ChiSquared::new((df + 2 * j) as f64).expect("positive dof");
        tail += weight * dist.sf(c);
        if 1.0 - cumulative < 1e-12 {
            break;
        }
        log_weight += half.ln() - ((j + 1) as f64).ln();
    }
    Ok(tail)
}

/// Exact local power `P(χ²_df(δ²) ≥ b1)` of the unrestricted test.
pub fn power_unrestricted_exact(delta: f64, df: usize, b1: f64) -> Result<f64, TestError> {
    if !(b1 > 0.0) {
        return Err(TestError::Domain(format!(
            "critical value must be positive, got {b1}"
        )));
    }
    noncentral_chi_squared_tail(df, delta * delta, b1)
}

/// The local power comparison grid: lower bound for the restricted test,
/// exact and lower-bound power for the unrestricted test, over a grid of
/// noncentrality values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerTable {
    pub delta: Vec<f64>,
    pub restricted_lower: Vec<f64>,
    pub unrestricted_exact: Vec<f64>,
    pub unrestricted_lower: Vec<f64>,
    pub b1: f64,
    pub b2: f64,
    pub df: usize,
}

/// Builds the power table over an arbitrary grid.
pub fn power_table(delta: &[f64], b1: f64, b2: f64, df: usize) -> Result<PowerTable, TestError> {
    let mut restricted_lower = Vec::with_capacity(delta.len());
    let mut unrestricted_exact = Vec::with_capacity(delta.len());
    let mut unrestricted_lower = Vec::with_capacity(delta.len());
    for &d in delta {
        restricted_lower.push(power_lower_bound(d, b2)?);
        unrestricted_exact.push(power_unrestricted_exact(d, df, b1)?);
        unrestricted_lower.push(power_lower_bound(d, b1)?);
    }
    Ok(PowerTable {
        delta: delta.to_vec(),
        restricted_lower,
        unrestricted_exact,
        unrestricted_lower,
        b1,
        b2,
        df,
    })
}

/// The reference grid: δ = 0..5 with `b2 = 3.820`, `b1 = 5.991`, `df = 2`.
///
/// The unrestricted test is scored against the number of constraints
/// (`df = d = 2`), which is what its reference critical value 5.991
/// corresponds to.
pub fn reproduce_table1() -> Result<PowerTable, TestError> {
    let grid: Vec<f64> = (0..=5).map(|k| k as f64).collect();
    power_table(&grid, TABLE1_B1, TABLE1_B2, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE_RESTRICTED_LOWER: [f64; 6] = [0.025, 0.170, 0.518, 0.852, 0.980, 0.999];
    const REFERENCE_UNRESTRICTED_EXACT: [f64; 6] = [0.050, 0.133, 0.416, 0.771, 0.957, 0.996];
    const REFERENCE_UNRESTRICTED_LOWER: [f64; 6] = [0.007, 0.074, 0.327, 0.710, 0.940, 0.995];

    #[test]
    fn table1_reproduces_reference_values() {
        let table = reproduce_table1().unwrap();
        for k in 0..6 {
            assert!(
                (table.restricted_lower[k] - REFERENCE_RESTRICTED_LOWER[k]).abs() <= 1e-3,
                "restricted lower at delta {k}: {}",
                table.restricted_lower[k]
            );
            assert!(
                (table.unrestricted_exact[k] - REFERENCE_UNRESTRICTED_EXACT[k]).abs() <= 1e-3,
                "unrestricted exact at delta {k}: {}",
                table.unrestricted_exact[k]
            );
            assert!(
                (table.unrestricted_lower[k] - REFERENCE_UNRESTRICTED_LOWER[k]).abs() <= 1e-3,
                "unrestricted lower at delta {k}: {}",
                table.unrestricted_lower[k]
            );
        }
    }

    #[test]
    fn spot_values() {
        assert!((power_lower_bound(2.0, TABLE1_B2).unwrap() - 0.518).abs() < 1e-3);
        assert!((power_lower_bound(0.0, TABLE1_B2).unwrap() - 0.025).abs() < 1e-3);
        assert!((power_lower_bound(5.0, TABLE1_B1).unwrap() - 0.995).abs() < 1e-3);
        assert!((power_unrestricted_exact(0.0, 2, TABLE1_B1).unwrap() - 0.050).abs() < 1e-3);
        assert!((power_unrestricted_exact(2.0, 2, TABLE1_B1).unwrap() - 0.416).abs() < 1e-3);
        assert!((power_unrestricted_exact(3.0, 2, TABLE1_B1).unwrap() - 0.771).abs() < 1e-3);
    }

    #[test]
    fn smaller_critical_value_dominates() {
        for k in 1..=10 {
            let delta = k as f64 * 0.5;
            let restricted = power_lower_bound(delta, TABLE1_B2).unwrap();
            let unrestricted = power_lower_bound(delta, TABLE1_B1).unwrap();
            assert!(restricted > unrestricted);
        }
    }

    #[test]
    fn noncentral_tail_reduces_to_central_at_zero() {
        let dist = ChiSquared::new(3.0).unwrap();
        for c in [0.5, 2.0, 7.0] {
            let got = noncentral_chi_squared_tail(3, 0.0, c).unwrap();
            assert!((got - dist.sf(c)).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_critical_value_is_domain_error() {
        assert!(matches!(
            power_lower_bound(1.0, 0.0),
            Err(TestError::Domain(_))
        ));
    }

    #[test]
    fn power_spec_roundtrip_and_validation() {
        use crate::cone::{canonicalize, order_cone};
        use nalgebra::DMatrix;
        let spec = order_cone(3).unwrap();
        let canon = canonicalize(&spec, &DMatrix::identity(6, 6)).unwrap();
        let u = DVector::from_column_slice(&[0.0, 2.0 / 6.0f64.sqrt()]);
        let ps = PowerSpec::new(&canon, &spec, &u, 2, TABLE1_B1, TABLE1_B2).unwrap();
        assert!((ps.delta - 2.0).abs() < 1e-10);
        ps.validate(&canon).unwrap();
        assert!((ps.restricted_lower().unwrap() - 0.518).abs() < 1e-3);
        assert!((ps.unrestricted_exact().unwrap() - 0.416).abs() < 1e-3);
        let mut corrupted = ps.clone();
        corrupted.delta += 1e-6;
        assert!(corrupted.validate(&canon).is_err());
    }
}
