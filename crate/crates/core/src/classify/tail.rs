use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regress::{linear_fit_points, LinearFit};
use crate::series::NormalizedSeries;

/// Settings of the linear-tail search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TailConfig {
    /// A suffix is linear when `|1 − R| ≤ epsilon`.
    pub epsilon: f64,
    /// Minimum head length for the two-phase refit.
    pub min_head: usize,
    /// Shortest suffix that may be tested.
    pub min_tail: usize,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            min_head: 5,
            min_tail: 5,
        }
    }
}

/// Linear suffix of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearTail {
    /// 0-based index of the first observation of the linear suffix.
    pub start: usize,
    pub fit: LinearFit,
}

/// Finds the longest linear suffix by dropping leading observations one at a
/// time until the regression on the remaining points has `|1 − R| ≤ ε`.
///
/// Returns the first (smallest) admissible start.  Suffixes with no variance
/// (a flat line) do not count as linear growth.
pub fn trim_linear_tail(series: &NormalizedSeries, config: &TailConfig) -> Result<LinearTail> {
    let n = series.len();
    let min = config.min_head + config.min_tail;
    if n < min {
        return Err(Error::TooShort { len: n, min });
    }
    let (u, v) = (series.u(), series.v());
    let mut start = 0;
    while n - start >= config.min_tail.max(2) {
        match linear_fit_points(&u[start..], &v[start..]) {
            Ok(fit) if (1.0 - fit.r).abs() <= config.epsilon => {
                return Ok(LinearTail { start, fit });
            }
            Ok(_) | Err(Error::ZeroVariance) => {}
            Err(e) => return Err(e),
        }
        start += 1;
    }
    Err(Error::NoLinearTail)
}
