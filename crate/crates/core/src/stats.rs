//! Small statistics helpers shared by the estimators.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Wilson score interval for `k` successes in `n` trials; `(0, 1)` when
/// `n = 0`.
pub fn wilson(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = (center - half).max(0.0);
    let hi = (center + half).min(1.0);
    // keep the point estimate inside even after rounding
    (lo.min(p), hi.max(p))
}

/// Pairwise sum: fixed rounding order for a given slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanEstimate {
                mean: f64::NAN,
                std_error: f64::NAN,
                count: 0,
            };
        }
        if xs.iter().all(|x| *x == xs[0]) {
            return MeanEstimate {
                mean: xs[0],
                std_error: 0.0,
                count: n,
            };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 {
            pairwise_sum(&sq) / (n - 1) as f64
        } else {
            0.0
        };
        MeanEstimate {
            mean,
            std_error: (var / n as f64).sqrt(),
            count: n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference() {
        // 5 of 10 at 95%: center 0.5, half-width 0.26588...
        let (lo, hi) = wilson(5, 10, Z95);
        assert!((lo - 0.236593090512564).abs() < 1e-12, "{lo}");
        assert!((hi - 0.763406909487436).abs() < 1e-12, "{hi}");
        let (lo, hi) = wilson(0, 1, Z95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 1.0);
        let (lo, hi) = wilson(1, 1, Z95);
        assert!(lo > 0.0 && hi == 1.0);
    }

    #[test]
    fn mean_estimate() {
        let m = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
