//! Softplus positivity map and its inverse.

use crate::error::{Error, Result};

/// ln(1 + eˣ), switching to the identity above 35 where e⁻ˣ < 1e-15.
pub fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// ln(eʸ − 1) for y > 0.
pub fn inv_softplus(y: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::InverseOfNonPositive(y));
    }
    if y > 35.0 {
        Ok(y + (-(-y).exp()).ln_1p())
    } else {
        Ok(y.exp_m1().ln())
    }
}

/// Derivative of softplus.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
