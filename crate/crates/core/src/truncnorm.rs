//! Lower-truncated univariate normal draws.

use std::f64::consts::SQRT_2;

use rand::Rng;
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

/// Beyond this many standard deviations the upper tail may underflow.
const TAIL_CHECK: f64 = 37.0;

/// Upper tail probability `P(Z > a)`, computed without cancellation.
#[cfg(test)]
pub(crate) fn upper_tail(a: f64) -> f64 {
    0.5 * erfc(a / SQRT_2)
}

/// Draws `X ~ N(mean, sd²)` conditioned on `X ≥ 0` by inverting the
/// truncated CDF through `erfc`, so far tails keep full relative precision.
pub(crate) fn sample_nonnegative<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> Result<f64> {
    let a = -mean / sd;
    let q = erfc(a / SQRT_2);
    if a > TAIL_CHECK && !(q > 0.0) {
        return Err(Error::OrthantUnreachable(format!(
            "truncation point {a:.3} standard deviations above the mean"
        )));
    }
    // u in (0, 1]: the draw never lands on the singular end of erfc_inv.
    let u = 1.0 - rng.gen::<f64>();
    let z = SQRT_2 * erfc_inv((u * q).max(f64::MIN_POSITIVE));
    Ok((mean + sd * z.max(a)).max(0.0))
}

/// `E[X | X ≥ 0]` for `X ~ N(mean, sd²)`.
#[cfg(test)]
pub(crate) fn truncated_mean(mean: f64, sd: f64) -> f64 {
    let a = -mean / sd;
    let pdf = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
    mean + sd * pdf / upper_tail(a)
}
