//! Standard normal helpers.

use statrs::distribution::{ContinuousCDF, Normal};

/// P(Z > t) for standard normal Z, accurate in the far tail.
pub fn normal_upper_tail(t: f64) -> f64 {
    0.5 * libm::erfc(t / std::f64::consts::SQRT_2)
}

pub fn normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(prob: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(prob)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(normal_upper_tail(0.0), 0.5);
        assert!((normal_upper_tail(2.0) - 0.022750131948179195).abs() < 1e-16);
        assert!((normal_cdf(-2.0) - 0.022750131948179195).abs() < 1e-16);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
    }
}
