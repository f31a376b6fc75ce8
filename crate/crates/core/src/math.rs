//! Scalar primitives shared by the geometry: overflow-safe softplus,
//! log-sum-exp, and the logistic function.

/// The Euler-Mascheroni constant, to f64 precision. Fixed; never configurable.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Saturation threshold for softplus/log-sum-exp, in units of the scaled
/// argument. Beyond it the dropped term is < exp(-30) ~ 9.4e-14 relative.
pub const SATURATION: f64 = 30.0;

#[cfg(feature = "std")]
#[inline(always)]
pub(crate) fn exp(x: f64) -> f64 {
    x.exp()
}

#[cfg(not(feature = "std"))]
#[inline(always)]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[cfg(feature = "std")]
#[inline(always)]
pub(crate) fn ln(x: f64) -> f64 {
    x.ln()
}

#[cfg(not(feature = "std"))]
#[inline(always)]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[cfg(feature = "std")]
#[inline(always)]
pub(crate) fn ln_1p(x: f64) -> f64 {
    x.ln_1p()
}

#[cfg(not(feature = "std"))]
#[inline(always)]
pub(crate) fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

/// Unit-scale softplus `ln(1 + exp(u))`, saturating to `u` for large `u` and
/// to `exp(u)` for very negative `u`.
#[inline]
pub fn softplus(u: f64) -> f64 {
    if u > SATURATION {
        u
    } else if u < -SATURATION {
        exp(u)
    } else {
        ln_1p(exp(u))
    }
}

/// `ln(softplus(u))`, computed without underflowing the inner softplus.
/// For `u < -30` the softplus is `exp(u)` to 1 ulp, so the log is just `u`.
#[inline]
pub fn ln_softplus(u: f64) -> f64 {
    if u > SATURATION {
        ln(u)
    } else if u < -SATURATION {
        u
    } else {
        ln(ln_1p(exp(u)))
    }
}

/// Temperature-scaled softplus `beta * ln(1 + exp(z / beta))`: a smooth
/// approximation of `max(0, z)` that hardens as `beta -> 0`.
#[inline]
pub fn softplus_scaled(z: f64, beta: f64) -> f64 {
    beta * softplus(z / beta)
}

/// Inverse of the unit softplus: the `r` with `ln(1 + exp(r)) = w`.
/// Requires `w > 0`.
#[inline]
pub fn softplus_inv(w: f64) -> f64 {
    debug_assert!(w > 0.0);
    if w > SATURATION {
        w
    } else {
        ln(exp(w) - 1.0)
    }
}

/// The logistic function `1 / (1 + exp(-x))`. Stable over the whole line:
/// the exponential may overflow to infinity but the result stays in [0, 1].
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `sigmoid(u) / softplus(u)`, the recurring factor in volume gradients.
/// Tends to 1 as `u -> -inf` and to `1/u` as `u -> +inf`.
#[inline]
pub fn sigmoid_over_softplus(u: f64) -> f64 {
    if u > SATURATION {
        1.0 / u
    } else if u < -SATURATION {
        1.0
    } else {
        sigmoid(u) / ln_1p(exp(u))
    }
}

/// Two-term log-sum-exp with the shift-by-max trick. Symmetric in its
/// arguments bit-for-bit: both orders reduce to the same max/min pair.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi - lo > SATURATION {
        hi
    } else {
        hi + ln_1p(exp(lo - hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_saturates_high() {
        assert_eq!(softplus(31.0), 31.0);
        assert_eq!(softplus_scaled(62.0, 2.0), 62.0);
    }

    #[test]
    fn softplus_exp_form_low() {
        let u = -40.0;
        assert_eq!(softplus(u), exp(u));
        assert!(softplus(u) > 0.0);
    }

    #[test]
    fn softplus_mid_range_matches_naive() {
        for &u in &[-5.0f64, -0.3, 0.0, 1.7, 12.0] {
            let naive = (1.0f64 + u.exp()).ln();
            assert!((softplus(u) - naive).abs() < 1e-14, "u = {u}");
        }
    }

    #[test]
    fn ln_softplus_tracks_argument_when_tiny() {
        assert_eq!(ln_softplus(-500.0), -500.0);
    }

    #[test]
    fn softplus_inv_round_trip() {
        for &w in &[0.01, 0.2, 1.0, 3.0, 40.0] {
            assert!((softplus(softplus_inv(w)) - w).abs() < 1e-12 * w.max(1.0));
        }
    }

    #[test]
    fn log_add_exp_matches_naive_and_never_overflows() {
        let naive = (0.5f64.exp() + 2.0f64.exp()).ln();
        assert!((log_add_exp(0.5, 2.0) - naive).abs() < 1e-14);
        assert_eq!(log_add_exp(1234.0, 1232.0), 1232.0 + (1.0f64 + 2.0f64.exp()).ln());
        assert_eq!(log_add_exp(1e9, -1e9), 1e9);
    }

    #[test]
    fn log_add_exp_is_bitwise_symmetric() {
        let pairs = [(0.1, 0.2), (-3.0, 7.5), (4.0, 4.0), (1e-12, -1e-12)];
        for (a, b) in pairs {
            assert_eq!(log_add_exp(a, b).to_bits(), log_add_exp(b, a).to_bits());
        }
    }

    #[test]
    fn sigmoid_extremes() {
        assert_eq!(sigmoid(1e4), 1.0);
        assert_eq!(sigmoid(-1e4), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_over_softplus_limits() {
        assert_eq!(sigmoid_over_softplus(-100.0), 1.0);
        assert!((sigmoid_over_softplus(100.0) - 0.01).abs() < 1e-12);
        let u = 0.7;
        let direct = sigmoid(u) / (1.0f64 + u.exp()).ln();
        assert!((sigmoid_over_softplus(u) - direct).abs() < 1e-14);
    }
}
