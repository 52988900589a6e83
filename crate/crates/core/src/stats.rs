//! Small numeric helpers shared by the pricers and the harness.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Two-pass mean and sample standard deviation, accumulated in slice order.
pub fn mean_estimate(values: &[f64]) -> MeanEstimate {
    let n = values.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            std_dev: f64::NAN,
            std_error: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std_dev = if n > 1 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    MeanEstimate {
        mean,
        std_dev,
        std_error: std_dev / (n as f64).sqrt(),
        n,
    }
}

/// Empirical quantile with linear interpolation between order statistics
/// (position `(n − 1)·q`). `sorted` must be ascending and nonempty.
pub fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        // Φ(0.5) to 15 digits.
        assert!((normal_cdf(0.5) - 0.691_462_461_274_013_1).abs() < 1e-15);
        let v = normal_cdf(-1.96);
        assert!((v / 0.024_997_895_148_220_435 - 1.0).abs() < 1e-13, "{v:e}");
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-9);
    }

    #[test]
    fn interpolated_quantile() {
        let xs: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert!((quantile_linear(&xs, 0.1) - 0.19).abs() < 1e-12);
        assert_eq!(quantile_linear(&xs, 0.0), 0.1);
        assert_eq!(quantile_linear(&xs, 1.0), 1.0);
        assert_eq!(quantile_linear(&[0.25; 7], 0.01), 0.25);
    }

    #[test]
    fn mean_and_error() {
        let e = mean_estimate(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.std_dev - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((e.std_error - e.std_dev / 2.0).abs() < 1e-15);
        assert_eq!(mean_estimate(&[3.0]).std_error, 0.0);
    }
}
