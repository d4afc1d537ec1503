//! Small statistical helpers shared across modules and tests.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n-1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Median of a copy; averages the two middle values for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "median of empty slice");
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Inverse standard-normal CDF, Acklam's rational approximation
/// (relative error below 1.2e-9 across (0, 1)).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile level must lie in (0,1)");

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -inverse_normal_cdf(1.0 - p)
    }
}

/// Two-sided normal quantile for a confidence level, e.g. 0.95 -> ~1.96.
pub fn z_for_ci(ci_level: f64) -> f64 {
    assert!(ci_level > 0.0 && ci_level < 1.0);
    inverse_normal_cdf(1.0 - (1.0 - ci_level) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn quantile_symmetry() {
        assert_eq!(inverse_normal_cdf(0.5), 0.0);
        let z = inverse_normal_cdf(0.975);
        assert!((z + inverse_normal_cdf(0.025)).abs() < 1e-12);
        assert!((z - 1.959964).abs() < 1e-5);
    }

    // Independent check: invert Phi by bisection, with Phi computed from
    // a Taylor series for erf.
    #[test]
    fn quantile_matches_bisection_oracle() {
        fn erf_series(x: f64) -> f64 {
            // erf(x) = 2/sqrt(pi) * sum (-1)^k x^(2k+1) / (k! (2k+1))
            let mut term = x;
            let mut sum = x;
            for k in 1..120 {
                term *= -x * x / k as f64;
                sum += term / (2.0 * k as f64 + 1.0);
            }
            sum * 2.0 / std::f64::consts::PI.sqrt()
        }
        fn phi(x: f64) -> f64 {
            0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
        }
        for &p in &[0.6, 0.75, 0.9, 0.95, 0.975, 0.99, 0.995] {
            let (mut lo, mut hi) = (0.0, 6.0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if phi(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let z = 0.5 * (lo + hi);
            assert!(
                (inverse_normal_cdf(p) - z).abs() < 1e-8,
                "p={p}: {} vs {z}",
                inverse_normal_cdf(p)
            );
        }
    }
}
