//! Standard normal CDF helpers.

/// `Phi(x)`.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Phi(x)`, computed without cancellation.
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Upper `alpha` quantile of the standard normal (`z_alpha`), by bisection.
pub fn upper_quantile(alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0);
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_symmetry_and_known_points() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((sf(1.6448536269514722) - 0.05).abs() < 1e-10);
        assert!((cdf(-1.0) + cdf(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_sf() {
        for alpha in [0.5, 0.1, 0.05, 0.01] {
            let z = upper_quantile(alpha);
            assert!((sf(z) - alpha).abs() < 1e-9);
        }
    }
}
