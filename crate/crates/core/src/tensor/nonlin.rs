//! Exact and rational nonlinearities.
//!
//! The rational mode uses the [7/6] Padé approximant of `tanh` obtained from
//! Lambert's continued fraction,
//!
//! ```text
//!            x (135135 + 17325 x² + 378 x⁴ + x⁶)
//! tanh x ≈ ---------------------------------------
//!           135135 + 62370 x² + 3150 x⁴ + 28 x⁶
//! ```
//!
//! clamped to `[-1, 1]`. The approximant is odd and increasing on the real
//! line and crosses 1 at |x| ≈ 4.9718 ([`TANH_CLAMP`]); beyond that the result
//! is exactly ±1. Maximum absolute error on `[-8, 8]` is about 9.6e-5.
//! `sigmoid` is defined through the same approximant as `(1 + tanh(x/2)) / 2`.

use serde::{Deserialize, Serialize};

/// |x| above which the rational `tanh` returns exactly ±1.
pub const TANH_CLAMP: f64 = 4.971_786_858_527_735;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonlinMode {
    #[default]
    Exact,
    Rational,
}

impl std::str::FromStr for NonlinMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(NonlinMode::Exact),
            "rational" => Ok(NonlinMode::Rational),
            _ => Err(format!("unknown nonlinearity mode `{s}` (expected exact|rational)")),
        }
    }
}

fn tanh_rational(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    let x2 = x * x;
    let num = x * (135135.0 + x2 * (17325.0 + x2 * (378.0 + x2)));
    let den = 135135.0 + x2 * (62370.0 + x2 * (3150.0 + x2 * 28.0));
    if !num.is_finite() || !den.is_finite() {
        return x.signum();
    }
    (num / den).clamp(-1.0, 1.0)
}

pub fn tanh_approx(x: f64, mode: NonlinMode) -> f64 {
    match mode {
        NonlinMode::Exact => x.tanh(),
        NonlinMode::Rational => tanh_rational(x),
    }
}

pub fn sigmoid_approx(x: f64, mode: NonlinMode) -> f64 {
    match mode {
        NonlinMode::Exact => 1.0 / (1.0 + (-x).exp()),
        NonlinMode::Rational => 0.5 * (1.0 + tanh_rational(0.5 * x)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference tanh written through `exp` on |x| (no cancellation).
    fn tanh_oracle(x: f64) -> f64 {
        let e = (-2.0 * x.abs()).exp();
        let t = (1.0 - e) / (1.0 + e);
        t.copysign(x)
    }

    fn sigmoid_oracle(x: f64) -> f64 {
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    }

    #[test]
    fn fixed_points() {
        assert_eq!(tanh_approx(0.0, NonlinMode::Exact), 0.0);
        assert_eq!(tanh_approx(0.0, NonlinMode::Rational), 0.0);
        assert_eq!(tanh_approx(100.0, NonlinMode::Rational), 1.0);
        assert_eq!(tanh_approx(-100.0, NonlinMode::Rational), -1.0);
        assert_eq!(sigmoid_approx(0.0, NonlinMode::Rational), 0.5);
        assert_eq!(sigmoid_approx(0.0, NonlinMode::Exact), 0.5);
        assert_eq!(sigmoid_approx(-100.0, NonlinMode::Rational), 0.0);
    }

    #[test]
    fn derived_values() {
        // 0.462117157 / 0.731058579 from the oracle above.
        assert!((tanh_approx(0.5, NonlinMode::Rational) - 0.462).abs() <= 1e-3);
        assert!((sigmoid_approx(1.0, NonlinMode::Rational) - 0.731).abs() <= 1e-3);
        assert!((tanh_approx(0.5, NonlinMode::Rational) - tanh_oracle(0.5)).abs() < 1e-6);
    }

    #[test]
    fn nan_propagates() {
        assert!(tanh_approx(f64::NAN, NonlinMode::Rational).is_nan());
        assert!(sigmoid_approx(f64::NAN, NonlinMode::Rational).is_nan());
        assert!(tanh_approx(f64::NAN, NonlinMode::Exact).is_nan());
    }

    #[test]
    fn grid_tolerance_and_monotonicity() {
        let mut prev_t = f64::NEG_INFINITY;
        let mut prev_s = f64::NEG_INFINITY;
        for k in -8000..=8000 {
            let x = k as f64 * 1e-3;
            let t = tanh_approx(x, NonlinMode::Rational);
            let s = sigmoid_approx(x, NonlinMode::Rational);
            assert!((t - tanh_oracle(x)).abs() <= 1e-3, "tanh at {x}");
            assert!((s - sigmoid_oracle(x)).abs() <= 1e-3, "sigmoid at {x}");
            assert!(t >= prev_t && s >= prev_s, "monotonicity at {x}");
            prev_t = t;
            prev_s = s;
        }
    }

    #[test]
    fn clamp_threshold() {
        assert!(tanh_approx(TANH_CLAMP - 1e-3, NonlinMode::Rational) < 1.0);
        assert_eq!(tanh_approx(TANH_CLAMP + 1e-3, NonlinMode::Rational), 1.0);
    }

    #[test]
    fn sigmoid_is_built_from_tanh() {
        for k in -400..=400 {
            let x = k as f64 * 0.02;
            let s = sigmoid_approx(x, NonlinMode::Rational);
            assert_eq!(s, (1.0 + tanh_approx(x / 2.0, NonlinMode::Rational)) / 2.0);
        }
    }
}
