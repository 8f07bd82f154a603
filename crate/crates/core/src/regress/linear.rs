use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::NormalizedSeries;

/// Ordinary least-squares line with its coefficient of determination
/// `R = 1 − Σ(y − ŷ)² / Σ(y − ȳ)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r: f64,
    /// Residual sum of squares.
    pub ssr: f64,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Least-squares line through a normalized series.
pub fn linear_fit(series: &NormalizedSeries) -> Result<LinearFit> {
    linear_fit_points(series.u(), series.v())
}

/// Least-squares line through `(x_i, y_i)`.
///
/// Fails with `TOO_SHORT` below two points and `ZERO_VARIANCE` when all `y`
/// are equal (R undefined) or all `x` are equal (slope undefined).
pub fn linear_fit_points(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::TooShort { len: n, min: 2 });
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let e = yi - (intercept + slope * xi);
            e * e
        })
        .sum();
    Ok(LinearFit {
        slope,
        intercept,
        r: 1.0 - ssr / syy,
        ssr,
    })
}
