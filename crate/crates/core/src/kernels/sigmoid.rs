use crate::error::{Error, Result};

/// Exponent clamp keeping `exp` finite.
const MAX_EXPONENT: f64 = 700.0;

/// Logistic switch `1 / (1 + exp(-a (x - x0)))`.
pub fn sigmoid(x: f64, a: f64, x0: f64) -> Result<f64> {
    if !(x.is_finite() && a.is_finite() && x0.is_finite()) {
        return Err(Error::invalid(format!("sigmoid arguments must be finite (x={x}, a={a}, x0={x0})")));
    }
    Ok(logistic(a * (x - x0)))
}

#[inline]
pub(crate) fn logistic(t: f64) -> f64 {
    let t = t.clamp(-MAX_EXPONENT, MAX_EXPONENT);
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Value and partial derivatives (d/da, d/dx0) of the switch.
#[inline]
pub(crate) fn sigmoid_with_partials(x: f64, a: f64, x0: f64) -> (f64, f64, f64) {
    let s = logistic(a * (x - x0));
    let ds = s * (1.0 - s);
    (s, ds * (x - x0), -ds * a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(sigmoid(4.0, 2.0, 4.0).unwrap(), 0.5);
        assert!((sigmoid(5.0, 2.0, 4.0).unwrap() - 0.880_797_08).abs() < 1e-8);
        assert!((sigmoid(3.0, 2.0, 4.0).unwrap() - 0.119_202_92).abs() < 1e-8);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(sigmoid(f64::NAN, 1.0, 0.0).is_err());
        assert!(sigmoid(0.0, f64::INFINITY, 0.0).is_err());
        assert!(sigmoid(0.0, 1.0, f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn saturates_without_overflow() {
        assert_eq!(sigmoid(1e6, 1e3, 0.0).unwrap(), 1.0);
        let lo = sigmoid(-1e6, 1e3, 0.0).unwrap();
        assert!(lo >= 0.0 && lo < 1e-300);
    }

    #[test]
    fn partials_match_central_differences() {
        let (x, a, x0) = (3.3, 1.7, 2.9);
        let (_, da, dx0) = sigmoid_with_partials(x, a, x0);
        let h = 1e-6;
        let fa = (logistic((a + h) * (x - x0)) - logistic((a - h) * (x - x0))) / (2.0 * h);
        let fx = (logistic(a * (x - x0 - h)) - logistic(a * (x - x0 + h))) / (2.0 * h);
        assert!((da - fa).abs() < 1e-8);
        assert!((dx0 - fx).abs() < 1e-8);
        assert!(dx0 < 0.0);
    }
}
