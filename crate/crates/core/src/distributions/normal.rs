use libm::erfc;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn std_normal_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        return 0.0;
    }
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Φ(z), accurate in both tails.
pub fn std_normal_cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        return 1.0;
    }
    if z == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// P(za < Z < zb) for Z standard normal. Uses the upper tail when both ends
/// are positive to avoid cancellation.
pub(crate) fn interval_prob(za: f64, zb: f64) -> f64 {
    if !(zb > za) {
        return 0.0;
    }
    if za > 0.0 {
        (std_normal_cdf(-za) - std_normal_cdf(-zb)).max(0.0)
    } else {
        (std_normal_cdf(zb) - std_normal_cdf(za)).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((std_normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((std_normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!(std_normal_cdf(-40.0) >= 0.0);
    }

    #[test]
    fn tail_interval_keeps_precision() {
        let p = interval_prob(8.0, 9.0);
        assert!(p > 6.0e-16 && p < 6.3e-16, "{p}");
    }
}
