use crate::error::{Error, Result};

fn check_shape(observed: &[f64], model: &[f64]) -> Result<()> {
    if observed.len() != model.len() || observed.is_empty() {
        return Err(Error::Shape {
            left: observed.len(),
            right: model.len(),
        });
    }
    Ok(())
}

/// Mean squares criterion: the plain sum `Σ (S(t_i) − y_i)²`.
pub fn msc(observed: &[f64], model: &[f64]) -> Result<f64> {
    check_shape(observed, model)?;
    Ok(observed
        .iter()
        .zip(model)
        .map(|(y, s)| (s - y) * (s - y))
        .sum())
}

/// Per-point relative error `|S − y| / (y + 1)` used by the mean error rate
/// and the prediction windows.
pub fn point_error(observed: f64, model: f64) -> f64 {
    (model - observed).abs() / (observed + 1.0)
}

/// Mean error rate `(1/n) Σ |S(t_i) − y_i| / (y_i + 1)` on normalized values.
pub fn mer(observed: &[f64], model: &[f64]) -> Result<f64> {
    check_shape(observed, model)?;
    let total: f64 = observed
        .iter()
        .zip(model)
        .map(|(&y, &s)| point_error(y, s))
        .sum();
    Ok(total / observed.len() as f64)
}

/// Goodness of fit `msc / (n − p)`.
pub fn gof(msc: f64, n: usize, p: usize) -> Result<f64> {
    if n <= p {
        return Err(Error::InsufficientDf { n, p });
    }
    Ok(msc / (n - p) as f64)
}
