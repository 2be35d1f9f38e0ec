//! Principal-branch Lambert W and the Lambert-W Gaussianizing transform.

use super::PipelineError;

const MAX_ITER: usize = 50;
const REL_TOL: f64 = 1e-14;

/// Principal branch `W(x)` for `x >= 0`: the `w >= 0` with `w * exp(w) = x`.
///
/// Halley iteration started from `ln(1 + x)`.
pub fn lambert_w(x: f64) -> Result<f64, PipelineError> {
    if x.is_nan() || x < 0.0 {
        return Err(PipelineError::NegativeArgument(x));
    }
    if x == 0.0 || x.is_infinite() {
        return Ok(x);
    }
    let mut w = x.ln_1p();
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= REL_TOL * w.abs() {
            break;
        }
    }
    Ok(w)
}

/// `sgn(v) * sqrt(W(delta v^2) / delta)`; the identity when `delta == 0`.
///
/// Computed on `|v|` and re-signed, so the map is exactly odd.
pub fn lambert_gaussianize(v: f64, delta: f64) -> Result<f64, PipelineError> {
    if delta.is_nan() || delta < 0.0 {
        return Err(PipelineError::InvalidConfig(format!("delta must be >= 0, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(v);
    }
    let magnitude = (lambert_w(delta * v * v)? / delta).sqrt();
    Ok(magnitude.copysign(v))
}

/// Inverse of [`lambert_gaussianize`]: `w * exp(delta / 2 * w^2)`.
pub fn lambert_degaussianize(w: f64, delta: f64) -> f64 {
    w * (0.5 * delta * w * w).exp()
}
