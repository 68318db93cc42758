//! Scalar numerics shared by the likelihood-based detectors.
//!
//! Everything here is branch-careful f64 code: the detectors evaluate these
//! functions deep in the tails (arguments like `√(2ρ)·gᵀx` reach ±100 at high
//! SNR), where the naive formulas underflow or lose all precision.

/// Slope of the logistic approximation to the standard normal CDF:
/// `Φ(t) ≈ σ(1.702·t)`, with `|Φ(t) − σ(1.702·t)| ≤ 0.0095` for all `t`.
pub const SIGMOID_SLOPE: f64 = 1.702;

/// Worst-case absolute error of the `σ(1.702·t)` approximation to `Φ(t)`.
pub const SIGMOID_CDF_GAP: f64 = 0.0095;

/// Logistic sigmoid `σ(t) = 1/(1+e^{−t})`, computed with a single `exp` of a
/// non-positive argument so it never overflows.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Softplus `ln(1+e^t)`, stable at both ends: `max(t,0) + ln1p(e^{−|t|})`.
#[inline]
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Standard normal CDF `Φ(t) = erfc(−t/√2)/2`.
#[inline]
pub fn normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t * std::f64::consts::FRAC_1_SQRT_2)
}

/// `ln Φ(t)`, accurate to better than 1e−10 relative error over `|t| ≤ 30`.
///
/// Three regimes:
/// * `t ≥ 0`: `ln(1 − erfc(t/√2)/2)` via `ln_1p`, so the result stays accurate
///   as Φ approaches 1 and `ln Φ` approaches 0.
/// * `−16 ≤ t < 0`: direct `ln(erfc(|t|/√2)/2)`; erfc is still comfortably
///   inside the normal f64 range here.
/// * `t < −16`: the tail expansion
///   `ln Φ(t) = −t²/2 − ln|t| − ln√(2π) + ln(1 − t⁻² + 3t⁻⁴ − 15t⁻⁶ + 105t⁻⁸ − 945t⁻¹⁰)`,
///   which never underflows (direct erfc would hit zero near t ≈ −37.5).
pub fn log_phi(t: f64) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_74;
    if t >= 0.0 {
        (-normal_cdf(-t)).ln_1p()
    } else if t > -16.0 {
        normal_cdf(t).ln()
    } else {
        let r = 1.0 / (t * t);
        let series = 1.0 - r * (1.0 - r * (3.0 - r * (15.0 - r * (105.0 - r * 945.0))));
        -0.5 * t * t - (-t).ln() - HALF_LN_2PI + series.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(5.0) + sigmoid(-5.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(800.0) == 1.0 && sigmoid(-800.0) == 0.0);
        assert!(sigmoid(-745.0) > 0.0, "must underflow gracefully, not to NaN");
    }

    #[test]
    fn softplus_matches_naive_in_safe_range_and_survives_extremes() {
        for i in -300..=300 {
            let t = i as f64 * 0.1;
            let naive = (1.0 + t.exp()).ln();
            assert!((softplus(t) - naive).abs() <= 1e-12 * naive.max(1.0));
        }
        assert_eq!(softplus(-800.0), 0.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
    }

    /// Reference values computed with mpmath at 40 significant digits
    /// (260 digits for the deep-tail points, where the CDF itself underflows
    /// any double-precision intermediate).
    const LOG_PHI_TABLE: [(f64, f64); 19] = [
        (-30.0, -454.3212439563432),
        (-25.0, -316.63940800802026),
        (-20.0, -203.91715537109726),
        (-16.0, -131.69539607375968),
        (-15.5, -123.78889843941038),
        (-12.0, -75.4106730015688),
        (-10.0, -53.23128515051247),
        (-8.0, -35.01343715991455),
        (-5.0, -15.064998393988726),
        (-2.0, -3.783184333682032),
        (-1.0, -1.8410216450092635),
        (-0.5, -1.1759117615936186),
        (0.0, -0.6931471805599453),
        (0.5, -0.36894641528865639),
        (1.0, -0.17275377902344989),
        (3.0, -0.0013508099647481938),
        (5.0, -2.8665161296376359e-7),
        (10.0, -7.6198530241605261e-24),
        (30.0, -4.9067139271481871e-198),
    ];

    #[test]
    fn log_phi_matches_high_precision_reference() {
        for &(t, expect) in &LOG_PHI_TABLE {
            let got = log_phi(t);
            let rel = (got - expect).abs() / expect.abs().max(f64::MIN_POSITIVE);
            assert!(rel < 1e-10, "log_phi({t}) = {got}, want {expect} (rel {rel:.3e})");
        }
    }

    #[test]
    fn log_phi_special_points() {
        assert!((log_phi(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!((log_phi(-10.0) - -53.2312851505).abs() < 1e-9);
        assert!((log_phi(3.0) - -0.00135080996).abs() < 1e-11);
    }

    #[test]
    fn log_phi_is_monotone_and_finite_deep_in_the_tail() {
        let mut prev = f64::NEG_INFINITY;
        let mut t = -37.0;
        while t <= 12.0 {
            let v = log_phi(t);
            assert!(v.is_finite(), "log_phi({t}) not finite");
            assert!(v > prev, "log_phi must increase (t = {t})");
            prev = v;
            t += 0.05;
        }
    }

    #[test]
    fn sigmoid_approximates_normal_cdf_within_published_gap() {
        // Coarse scan; the acceptance suite repeats this on the fine grid.
        let mut worst: f64 = 0.0;
        let mut t = -8.0;
        while t <= 8.0 {
            worst = worst.max((normal_cdf(t) - sigmoid(SIGMOID_SLOPE * t)).abs());
            t += 1e-3;
        }
        assert!(worst <= SIGMOID_CDF_GAP, "gap {worst} exceeds {SIGMOID_CDF_GAP}");
        assert!(worst > 0.009, "gap suspiciously small ({worst}); check the CDF");
    }
}
