//! Closed-form growth models in normalized coordinates.
//!
//! Seven kinds are supported.  The fixed-population kinds follow their growth
//! equations exactly:
//!
//! | kind       | `dS/dt`             | closed form                                   |
//! |------------|---------------------|-----------------------------------------------|
//! | `negexp`   | `λ(M − S)`          | `S0 + (M − S0)(1 − e^{−λt})`                  |
//! | `logistic` | `λS(M − S)`         | `M / (1 + ((M − S0)/S0) e^{−λMt})`            |
//! | `gompertz` | `λS ln(M/S)`        | `M exp(−ln(M/S0) e^{−λt})`                    |
//! | `linear`   | `λ`                 | `S0 + λt`                                     |
//!
//! The `mod*` kinds add an immigration term `kt` to their base closed form, so
//! `S − kt` (not `S`) satisfies the base equation.  The modified logistic is
//! built the same way as the modified Gompertz curve, by analogy.
//!
//! Parameter vectors always use the order `(S0, M, λ, k)` restricted to the
//! kind's free parameters; `linear` uses `(S0, λ)` with `λ` as its slope.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bound on `|λMt|` inside the logistic exponential.
pub const LOGISTIC_EXPONENT_CLAMP: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    NegExp,
    ModNegExp,
    Logistic,
    ModLogistic,
    Gompertz,
    ModGompertz,
}

impl ModelKind {
    /// Every kind, in the stable order used for reports and tie-breaking.
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Linear,
        ModelKind::NegExp,
        ModelKind::ModNegExp,
        ModelKind::Logistic,
        ModelKind::ModLogistic,
        ModelKind::Gompertz,
        ModelKind::ModGompertz,
    ];

    pub const NONLINEAR: [ModelKind; 6] = [
        ModelKind::NegExp,
        ModelKind::ModNegExp,
        ModelKind::Logistic,
        ModelKind::ModLogistic,
        ModelKind::Gompertz,
        ModelKind::ModGompertz,
    ];

    pub fn param_count(self) -> usize {
        match self {
            ModelKind::Linear => 2,
            ModelKind::NegExp | ModelKind::Logistic | ModelKind::Gompertz => 3,
            ModelKind::ModNegExp | ModelKind::ModLogistic | ModelKind::ModGompertz => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::NegExp => "negexp",
            ModelKind::ModNegExp => "modnegexp",
            ModelKind::Logistic => "logistic",
            ModelKind::ModLogistic => "modlogistic",
            ModelKind::Gompertz => "gompertz",
            ModelKind::ModGompertz => "modgompertz",
        }
    }

    /// Position in [`ModelKind::ALL`].
    pub fn index(self) -> usize {
        ModelKind::ALL.iter().position(|&k| k == self).unwrap()
    }

    pub fn is_modified(self) -> bool {
        matches!(
            self,
            ModelKind::ModNegExp | ModelKind::ModLogistic | ModelKind::ModGompertz
        )
    }

    /// The fixed-population kind underneath an immigration variant.
    pub fn base(self) -> ModelKind {
        match self {
            ModelKind::ModNegExp => ModelKind::NegExp,
            ModelKind::ModLogistic => ModelKind::Logistic,
            ModelKind::ModGompertz => ModelKind::Gompertz,
            k => k,
        }
    }

    /// The immigration variant of a base kind (identity for `linear` and the
    /// modified kinds).
    pub fn modified(self) -> ModelKind {
        match self {
            ModelKind::NegExp => ModelKind::ModNegExp,
            ModelKind::Logistic => ModelKind::ModLogistic,
            ModelKind::Gompertz => ModelKind::ModGompertz,
            k => k,
        }
    }

    /// Logistic and Gompertz families divide by or take the log of `S0`.
    pub fn needs_positive_start(self) -> bool {
        matches!(
            self.base(),
            ModelKind::Logistic | ModelKind::Gompertz
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        ModelKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parse {
                locus: "model kind".into(),
                message: format!("unknown model {s:?}"),
            })
    }
}

/// Arity of a model kind.
pub fn param_count(kind: ModelKind) -> usize {
    kind.param_count()
}

/// Parameters of any model kind.  Fields a kind does not use are ignored
/// (and kept at zero by [`ParamSet::from_vec`]).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSet {
    pub s0: f64,
    pub m: f64,
    pub lambda: f64,
    pub k: f64,
}

impl ParamSet {
    pub fn new(s0: f64, m: f64, lambda: f64, k: f64) -> Self {
        Self { s0, m, lambda, k }
    }

    pub fn linear(s0: f64, slope: f64) -> Self {
        Self {
            s0,
            m: 0.0,
            lambda: slope,
            k: 0.0,
        }
    }

    /// Free parameters of `kind` in canonical order.
    pub fn to_vec(&self, kind: ModelKind) -> Vec<f64> {
        match kind.param_count() {
            2 => vec![self.s0, self.lambda],
            3 => vec![self.s0, self.m, self.lambda],
            _ => vec![self.s0, self.m, self.lambda, self.k],
        }
    }

    pub fn from_vec(kind: ModelKind, p: &[f64]) -> Self {
        debug_assert_eq!(p.len(), kind.param_count());
        match kind.param_count() {
            2 => Self::linear(p[0], p[1]),
            3 => Self::new(p[0], p[1], p[2], 0.0),
            _ => Self::new(p[0], p[1], p[2], p[3]),
        }
    }

    /// Whether the set satisfies the kind's parameter invariants.
    pub fn is_valid_for(&self, kind: ModelKind) -> bool {
        let finite = self.to_vec(kind).iter().all(|x| x.is_finite());
        if !finite {
            return false;
        }
        if kind == ModelKind::Linear {
            return self.s0 >= 0.0 && self.lambda > 0.0;
        }
        let start_ok = if kind.needs_positive_start() {
            self.s0 > 0.0
        } else {
            self.s0 >= 0.0
        };
        start_ok && self.m >= self.s0 && self.lambda > 0.0 && self.k >= 0.0
    }

    /// Maps normalized-coordinate parameters to a curve in other units:
    /// the returned set describes `R(τ) = value_scale · S(τ / time_scale)`.
    ///
    /// With the series scales (`y_n` views, `t_n` days) this converts a fit
    /// into views and days; with a single scalar it converts between two
    /// normalizations of the same data.
    pub fn rescaled(&self, kind: ModelKind, value_scale: f64, time_scale: f64) -> ParamSet {
        let a = value_scale;
        let b = time_scale;
        let lambda = match kind.base() {
            ModelKind::Linear => self.lambda * a / b,
            ModelKind::Logistic => self.lambda / (a * b),
            _ => self.lambda / b,
        };
        ParamSet {
            s0: self.s0 * a,
            m: self.m * a,
            lambda,
            k: self.k * a / b,
        }
    }
}

fn check_singular(kind: ModelKind, p: &ParamSet) -> Result<()> {
    if kind.needs_positive_start() && !(p.s0 > 0.0) {
        return Err(Error::SingularParams {
            kind: kind.as_str(),
        });
    }
    Ok(())
}

fn logistic_exp(p: &ParamSet, t: f64) -> f64 {
    (-p.lambda * p.m * t)
        .clamp(-LOGISTIC_EXPONENT_CLAMP, LOGISTIC_EXPONENT_CLAMP)
        .exp()
}

fn base_value(kind: ModelKind, p: &ParamSet, t: f64) -> f64 {
    match kind.base() {
        ModelKind::Linear => p.s0 + p.lambda * t,
        ModelKind::NegExp => p.s0 + (p.m - p.s0) * (1.0 - (-p.lambda * t).exp()),
        ModelKind::Logistic => {
            let a = (p.m - p.s0) / p.s0;
            p.m / (1.0 + a * logistic_exp(p, t))
        }
        ModelKind::Gompertz => {
            let l = (p.m / p.s0).ln();
            p.m * (-l * (-p.lambda * t).exp()).exp()
        }
        _ => unreachable!("base() only returns base kinds"),
    }
}

/// Model value `S(t)`.
pub fn evaluate(kind: ModelKind, params: &ParamSet, t: f64) -> Result<f64> {
    check_singular(kind, params)?;
    Ok(evaluate_unchecked(kind, params, t))
}

/// [`evaluate`] without the singularity check, for hot loops whose
/// parameters are already known to be valid.
pub(crate) fn evaluate_unchecked(kind: ModelKind, params: &ParamSet, t: f64) -> f64 {
    let base = base_value(kind, params, t);
    if kind.is_modified() {
        base + params.k * t
    } else {
        base
    }
}

/// Model values on every time in `ts`.
pub fn evaluate_many(kind: ModelKind, params: &ParamSet, ts: &[f64]) -> Result<Vec<f64>> {
    check_singular(kind, params)?;
    Ok(ts
        .iter()
        .map(|&t| evaluate_unchecked(kind, params, t))
        .collect())
}

/// Analytic partial derivatives of `S(t)` in canonical parameter order.
pub fn gradient(kind: ModelKind, params: &ParamSet, t: f64) -> Result<Vec<f64>> {
    check_singular(kind, params)?;
    let mut g = vec![0.0; kind.param_count()];
    gradient_into(kind, params, t, &mut g);
    Ok(g)
}

/// Writes the gradient into `out` (length `param_count`).  No checks.
pub(crate) fn gradient_into(kind: ModelKind, p: &ParamSet, t: f64, out: &mut [f64]) {
    match kind.base() {
        ModelKind::Linear => {
            out[0] = 1.0;
            out[1] = t;
        }
        ModelKind::NegExp => {
            let e = (-p.lambda * t).exp();
            out[0] = e;
            out[1] = 1.0 - e;
            out[2] = (p.m - p.s0) * t * e;
        }
        ModelKind::Logistic => {
            let a = (p.m - p.s0) / p.s0;
            let e = logistic_exp(p, t);
            let d = 1.0 + a * e;
            let d2 = d * d;
            out[0] = p.m * p.m * e / (p.s0 * p.s0 * d2);
            out[1] = 1.0 / d - p.m * e / (p.s0 * d2) + p.m * a * p.lambda * t * e / d2;
            out[2] = p.m * p.m * a * t * e / d2;
        }
        ModelKind::Gompertz => {
            let l = (p.m / p.s0).ln();
            let e = (-p.lambda * t).exp();
            let g = (-l * e).exp();
            out[0] = p.m * g * e / p.s0;
            out[1] = g * (1.0 - e);
            out[2] = p.m * g * l * t * e;
        }
        _ => unreachable!(),
    }
    if kind.is_modified() {
        out[3] = t;
    }
}

/// Right-hand side of the growth equation at state `s` and time `t`.
///
/// For the `mod*` kinds this is the base right-hand side evaluated at the
/// shifted state `s − kt`, plus `k`.
pub fn ode_rhs(kind: ModelKind, params: &ParamSet, s: f64, t: f64) -> Result<f64> {
    let p = params;
    let shifted = if kind.is_modified() { s - p.k * t } else { s };
    let base = match kind.base() {
        ModelKind::Linear => p.lambda,
        ModelKind::NegExp => p.lambda * (p.m - shifted),
        ModelKind::Logistic => {
            if !(shifted > 0.0 && shifted <= p.m) {
                return Err(Error::DomainError {
                    kind: kind.as_str(),
                    value: s,
                });
            }
            p.lambda * shifted * (p.m - shifted)
        }
        ModelKind::Gompertz => {
            if !(shifted > 0.0 && shifted <= p.m) {
                return Err(Error::DomainError {
                    kind: kind.as_str(),
                    value: s,
                });
            }
            p.lambda * shifted * (p.m / shifted).ln()
        }
        _ => unreachable!(),
    };
    Ok(if kind.is_modified() { base + p.k } else { base })
}
