use super::linear::linear_fit_points;
use crate::models::{ModelKind, ParamSet};
use crate::rng::Rng;
use crate::series::NormalizedSeries;

const FALLBACK_RATE: f64 = 5.0;
const INITIAL_CEILING: f64 = 1.05;
const S0_FLOOR: f64 = 1e-3;

/// Heuristic starting point for a fit on a normalized series.
///
/// `S0 = max(v_1, 1e-3)`, `M = 1.05`, the rate places the curve's half level
/// at the observed time of `v = 0.5` (5 when that is not possible), and the
/// immigration slope is the non-negative slope of the last 20% of points.
pub fn default_init(kind: ModelKind, series: &NormalizedSeries) -> ParamSet {
    let u = series.u();
    let v = series.v();
    let s0 = v[0].max(S0_FLOOR);

    if kind == ModelKind::Linear {
        let slope = linear_fit_points(u, v).map(|f| f.slope).unwrap_or(1.0);
        return ParamSet::linear(s0, slope.max(S0_FLOOR));
    }

    let m = INITIAL_CEILING;
    let rate = half_time(u, v)
        .and_then(|t_half| half_rate(kind, s0, m, t_half))
        .filter(|r| r.is_finite() && *r > 0.0)
        .map(|r| r.clamp(1e-3, 1e3))
        .unwrap_or(FALLBACK_RATE);
    let k = if kind.is_modified() {
        terminal_slope(u, v).max(0.0)
    } else {
        0.0
    };
    ParamSet::new(s0, m, rate, k)
}

/// Interpolated time at which `v` first reaches one half.
fn half_time(u: &[f64], v: &[f64]) -> Option<f64> {
    let i = v.iter().position(|&x| x >= 0.5)?;
    if i == 0 {
        return Some(u[0]).filter(|&t| t > 0.0);
    }
    let (u0, u1, v0, v1) = (u[i - 1], u[i], v[i - 1], v[i]);
    let t = if v1 > v0 {
        u0 + (0.5 - v0) / (v1 - v0) * (u1 - u0)
    } else {
        u1
    };
    Some(t).filter(|&t| t > 0.0)
}

/// Rate at which the base curve from `s0` towards `m` passes 0.5 at `t_half`.
fn half_rate(kind: ModelKind, s0: f64, m: f64, t_half: f64) -> Option<f64> {
    if s0 >= 0.5 {
        return None;
    }
    let rate = match kind.base() {
        ModelKind::NegExp => ((m - s0) / (m - 0.5)).ln() / t_half,
        ModelKind::Logistic => {
            let a = (m - s0) / s0;
            (a / (2.0 * m - 1.0)).ln() / (m * t_half)
        }
        ModelKind::Gompertz => ((m / s0).ln() / (2.0 * m).ln()).ln() / t_half,
        _ => return None,
    };
    Some(rate)
}

fn terminal_slope(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len();
    let take = ((n as f64 * 0.2).ceil() as usize).clamp(2, n);
    linear_fit_points(&u[n - take..], &v[n - take..])
        .map(|f| f.slope)
        .unwrap_or(0.0)
}

/// Multistart perturbation: the rate moves log-uniformly within one decade;
/// the immigration slope moves log-uniformly within one decade when positive
/// and is drawn from `[0, 0.1)` otherwise.
pub fn perturb_init(kind: ModelKind, init: &ParamSet, rng: &mut Rng) -> ParamSet {
    let mut p = *init;
    p.lambda *= 10f64.powf(rng.uniform_in(-1.0, 1.0));
    if kind.is_modified() {
        p.k = if init.k > 0.0 {
            init.k * 10f64.powf(rng.uniform_in(-1.0, 1.0))
        } else {
            rng.uniform_in(0.0, 0.1)
        };
    }
    p
}
