//! Univariate slice sampling on a bounded interval (shrinkage procedure).
//!
//! Used for the variance full conditionals under the truncated improper
//! priors, where the inverse CDF has no closed form. The support is a
//! finite box, so the box itself is the initial bracket and no stepping
//! out is needed.

use crate::error::{Error, Result};
use rand::Rng;

pub(crate) fn slice_sample_bounded<R: Rng>(
    logf: impl Fn(f64) -> f64,
    x0: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    debug_assert!(lo < hi && x0 >= lo && x0 <= hi);
    let fx0 = logf(x0);
    if !fx0.is_finite() {
        return Err(Error::Sampler(format!(
            "slice sampler started outside the support (log density {fx0} at {x0})"
        )));
    }
    // Log slice height: fx0 - Exp(1).
    let u: f64 = rng.random();
    let y = fx0 + u.max(1e-300).ln();
    let mut left = lo;
    let mut right = hi;
    for _ in 0..1000 {
        let x1 = rng.random_range(left..right);
        if logf(x1) >= y {
            return Ok(x1);
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
        if right - left < f64::EPSILON * (x0.abs() + 1.0) {
            break;
        }
    }
    // The bracket collapsed onto x0; the density is effectively a spike.
    Ok(x0)
}
