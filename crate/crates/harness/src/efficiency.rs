//! Training efficiency: the inverse of the normalised area under the training
//! loss curve.

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub value: f64,
    /// Set when the normalised area is zero.
    pub infinite: bool,
}

/// Steps are rescaled to `[0, 1]` and losses divided by the first loss; the
/// trapezoidal area under the rescaled curve is inverted.
pub fn training_efficiency(curve: &[(f64, f64)]) -> Result<Efficiency> {
    if curve.len() < 2 {
        return Err(HarnessError::Precondition("efficiency needs at least two points".into()));
    }
    if curve.iter().any(|(s, l)| !s.is_finite() || !(*l >= 0.0)) {
        return Err(HarnessError::Precondition("losses must be finite and non-negative".into()));
    }
    let l0 = curve[0].1;
    if !(l0 > 0.0) {
        return Err(HarnessError::Precondition("initial loss must be positive".into()));
    }
    let (s0, s1) = (curve[0].0, curve[curve.len() - 1].0);
    if !(s1 > s0) {
        return Err(HarnessError::Precondition("steps must increase".into()));
    }
    let span = s1 - s0;
    let area: f64 = curve
        .windows(2)
        .map(|w| {
            let dx = (w[1].0 - w[0].0) / span;
            0.5 * dx * (w[0].1 + w[1].1) / l0
        })
        .sum();
    if area == 0.0 {
        return Ok(Efficiency { value: f64::INFINITY, infinite: true });
    }
    Ok(Efficiency { value: 1.0 / area, infinite: false })
}
