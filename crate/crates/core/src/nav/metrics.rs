//! Navigation metrics.

use crate::error::{Error, Result};
use crate::nav::pointnav::EpisodeResult;

/// Success weighted by path length: S * l / max(p, l).
pub fn spl(success: bool, shortest: f64, path: f64) -> Result<f64> {
    if shortest < 0.0 || (shortest == 0.0 && path > 0.0) {
        return Err(Error::InvalidLength(shortest));
    }
    if !success {
        return Ok(0.0);
    }
    if shortest == 0.0 {
        return Ok(1.0); // goal at start, no motion required
    }
    Ok(shortest / path.max(shortest))
}

/// Fraction of steps that ended in contact.
pub fn collision_ratio(result: &EpisodeResult) -> Result<f64> {
    if result.steps == 0 {
        return Err(Error::ZeroSteps);
    }
    Ok(result.collisions as f64 / result.steps as f64)
}
