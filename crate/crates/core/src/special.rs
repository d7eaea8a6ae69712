//! Scalar special functions.

use std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `(m)!!` for odd or even `m`, with `(-1)!! = 0!! = 1`.
pub fn double_factorial(m: i64) -> f64 {
    let mut acc = 1.0;
    let mut j = m;
    while j > 1 {
        acc *= j as f64;
        j -= 2;
    }
    acc
}

/// `E|Z|^k` for a standard normal `Z`.
pub fn gaussian_abs_moment(k: f64) -> f64 {
    2f64.powf(k / 2.0) * libm::tgamma((k + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_relative_eq!(normal_cdf(-1.0), 0.158_655_253_931_457_05, epsilon = 1e-15);
        assert_relative_eq!(normal_cdf(1.96), 0.975_002_104_851_780, epsilon = 1e-12);
        assert!(normal_cdf(-40.0) >= 0.0 && normal_cdf(-40.0) < 1e-300);
    }

    #[test]
    fn moments() {
        assert_eq!(double_factorial(-1), 1.0);
        assert_eq!(double_factorial(5), 15.0);
        assert_relative_eq!(gaussian_abs_moment(2.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(gaussian_abs_moment(4.0), 3.0, epsilon = 1e-13);
        assert_relative_eq!(
            gaussian_abs_moment(1.0),
            (2.0 / std::f64::consts::PI).sqrt(),
            epsilon = 1e-14
        );
    }
}
