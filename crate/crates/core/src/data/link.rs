use serde::{Deserialize, Serialize};

/// Inverse link `h` relating the linear predictor to the marginal mean,
/// together with the variance function used for the diagonal of `A_i`.
///
/// The derivatives are the exact analytic ones; `mean_second_deriv` and
/// `variance_deriv` are needed by the exact score jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    /// `h(η) = η`, `v(μ) = 1` (Gaussian working variance).
    Identity,
    /// `h(η) = exp(η)`, `v(μ) = μ` (Poisson working variance).
    Log,
    /// `h(η) = 1/(1 + e^{−η})`, `v(μ) = μ(1 − μ)` (Bernoulli working variance).
    Logit,
}

impl LinkFunction {
    /// Marginal mean `h(η)`.
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Identity => eta,
            LinkFunction::Log => eta.exp(),
            LinkFunction::Logit => 1.0 / (1.0 + (-eta).exp()),
        }
    }

    /// `h′(η)`.
    pub fn mean_deriv(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Identity => 1.0,
            LinkFunction::Log => eta.exp(),
            LinkFunction::Logit => {
                let mu = self.mean(eta);
                mu * (1.0 - mu)
            }
        }
    }

    /// `h″(η)`.
    pub fn mean_second_deriv(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Identity => 0.0,
            LinkFunction::Log => eta.exp(),
            LinkFunction::Logit => {
                let mu = self.mean(eta);
                mu * (1.0 - mu) * (1.0 - 2.0 * mu)
            }
        }
    }

    /// Working variance `v(μ)` with dispersion fixed to 1.
    pub fn variance(self, mu: f64) -> f64 {
        match self {
            LinkFunction::Identity => 1.0,
            LinkFunction::Log => mu,
            LinkFunction::Logit => mu * (1.0 - mu),
        }
    }

    /// `v′(μ)`.
    pub fn variance_deriv(self, _mu: f64) -> f64 {
        match self {
            LinkFunction::Identity => 0.0,
            LinkFunction::Log => 1.0,
            LinkFunction::Logit => 1.0 - 2.0 * _mu,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINKS: [LinkFunction; 3] = [
        LinkFunction::Identity,
        LinkFunction::Log,
        LinkFunction::Logit,
    ];

    #[test]
    fn derivative_matches_finite_differences() {
        let h = 1e-6;
        for link in LINKS {
            for &eta in &[-1.5, -0.3, 0.0, 0.7, 2.0] {
                let fd = (link.mean(eta + h) - link.mean(eta - h)) / (2.0 * h);
                let an = link.mean_deriv(eta);
                let scale = an.abs().max(1e-8);
                assert!(
                    ((fd - an) / scale).abs() < 1e-6,
                    "{link:?} at {eta}: fd={fd}, analytic={an}"
                );
            }
        }
    }

    #[test]
    fn second_derivative_matches_finite_differences() {
        let h = 1e-5;
        for link in LINKS {
            for &eta in &[-1.0, 0.2, 1.3] {
                let fd = (link.mean_deriv(eta + h) - link.mean_deriv(eta - h)) / (2.0 * h);
                let an = link.mean_second_deriv(eta);
                assert!((fd - an).abs() < 1e-5 * an.abs().max(1.0));
            }
        }
    }

    #[test]
    fn variance_positive_on_valid_range() {
        assert!(LinkFunction::Identity.variance(-3.0) > 0.0);
        assert!(LinkFunction::Log.variance(0.5) > 0.0);
        assert!(LinkFunction::Logit.variance(0.25) > 0.0);
    }
}
