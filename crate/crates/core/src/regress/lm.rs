use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::init::perturb_init;
use crate::error::{Error, Result};
use crate::models::{self, ModelKind, ParamSet};
use crate::rng::Rng;
use crate::series::NormalizedSeries;

pub const BOX_S0_MIN: f64 = 1e-9;
pub const BOX_S0_MAX: f64 = 1.5;
pub const BOX_M_MAX: f64 = 10.0;
pub const BOX_LAMBDA_MIN: f64 = 1e-9;
pub const BOX_LAMBDA_MAX: f64 = 1e3;
pub const BOX_K_MAX: f64 = 10.0;

/// Damping above which no descent step is considered to exist.
const DAMPING_CEILING: f64 = 1e16;

/// Levenberg-Marquardt settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Stop when both the actual and the predicted relative MSC reduction of
    /// an accepted step fall below this.
    pub msc_rel_tol: f64,
    /// Stop when `max |Jᵀr|` falls below this.
    pub gradient_tol: f64,
    /// Total number of starts, including the unperturbed one.
    pub multistart: usize,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 0.1,
            msc_rel_tol: 1e-10,
            gradient_tol: 1e-12,
            multistart: 5,
            seed: 0,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.max_iterations > 0
            && self.initial_damping > 0.0
            && self.msc_rel_tol > 0.0
            && self.gradient_tol > 0.0
            && self.multistart > 0;
        if !positive {
            return Err(Error::InvalidConfig(
                "LM settings must be strictly positive".into(),
            ));
        }
        if !(self.damping_up > 1.0 && self.damping_down > 0.0 && self.damping_down < 1.0) {
            return Err(Error::InvalidConfig(
                "need damping_up > 1 > damping_down > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Gradient norm below tolerance (includes an exact zero residual).
    Gradient,
    /// Relative MSC change below tolerance.
    MscChange,
    /// No step decreases the MSC any more at machine precision.
    Stalled,
    /// Iteration budget exhausted.
    MaxIterations,
}

/// Outcome of a (multistart) fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmResult {
    pub params: ParamSet,
    /// Sum of squared residuals at `params`.
    pub msc: f64,
    /// MSC at the start that produced `params`.
    pub initial_msc: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    /// Starts run beyond the first.
    pub restarts_used: usize,
    /// Index of the winning start (0 is the unperturbed initial guess).
    pub best_start: usize,
    /// MSC after each accepted step of the winning start, starting with
    /// `initial_msc`.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Projects a parameter set into the optimizer's box:
/// `S0 ∈ [1e-9, 1.5]`, `M ∈ [S0, 10]`, `λ ∈ [1e-9, 1e3]`, `k ∈ [0, 10]`.
pub fn project(kind: ModelKind, p: &ParamSet) -> ParamSet {
    let clamp = |x: f64, lo: f64, hi: f64| if x.is_nan() { lo } else { x.clamp(lo, hi) };
    let s0 = clamp(p.s0, BOX_S0_MIN, BOX_S0_MAX);
    ParamSet {
        s0,
        m: clamp(p.m, s0, BOX_M_MAX),
        lambda: clamp(p.lambda, BOX_LAMBDA_MIN, BOX_LAMBDA_MAX),
        k: if kind.is_modified() {
            clamp(p.k, 0.0, BOX_K_MAX)
        } else {
            0.0
        },
    }
}

struct Problem<'a> {
    kind: ModelKind,
    u: &'a [f64],
    v: &'a [f64],
}

impl Problem<'_> {
    fn msc(&self, p: &ParamSet) -> f64 {
        self.u
            .iter()
            .zip(self.v)
            .map(|(&u, &v)| {
                let r = models::evaluate_unchecked(self.kind, p, u) - v;
                r * r
            })
            .sum()
    }

    /// Residuals and Jacobian; `None` if anything is non-finite.
    fn linearize(&self, p: &ParamSet) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = self.u.len();
        let np = self.kind.param_count();
        let mut r = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, np);
        let mut row = [0.0; 4];
        for i in 0..n {
            r[i] = models::evaluate_unchecked(self.kind, p, self.u[i]) - self.v[i];
            models::gradient_into(self.kind, p, self.u[i], &mut row[..np]);
            for j in 0..np {
                jac[(i, j)] = row[j];
            }
        }
        let finite = r.iter().all(|x| x.is_finite()) && jac.iter().all(|x| x.is_finite());
        finite.then_some((r, jac))
    }
}

/// One Levenberg-Marquardt run from `init` (no restarts).
pub fn lm_fit_single(
    kind: ModelKind,
    series: &NormalizedSeries,
    init: &ParamSet,
    config: &LmConfig,
) -> Result<LmResult> {
    if kind == ModelKind::Linear {
        return Err(Error::InvalidConfig(
            "the linear model is fitted by linear regression".into(),
        ));
    }
    config.validate()?;
    let problem = Problem {
        kind,
        u: series.u(),
        v: series.v(),
    };
    let np = kind.param_count();
    let mut params = project(kind, init);
    let (mut r, mut jac) = problem.linearize(&params).ok_or(Error::BadInitialPoint)?;
    let mut msc = r.norm_squared();
    let initial_msc = msc;
    let mut trace = vec![msc];
    let mut damping = config.initial_damping;
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;

    while iterations < config.max_iterations {
        let grad = jac.tr_mul(&r);
        if grad.amax() <= config.gradient_tol {
            stop = StopReason::Gradient;
            break;
        }
        iterations += 1;
        let jtj = jac.tr_mul(&jac);
        let mut accepted = None;
        while damping <= DAMPING_CEILING {
            let mut lhs = jtj.clone();
            for j in 0..np {
                lhs[(j, j)] += damping * jtj[(j, j)].max(1e-12);
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    damping *= config.damping_up;
                    continue;
                }
            };
            let mut trial_vec = params.to_vec(kind);
            for (x, dx) in trial_vec.iter_mut().zip(step.iter()) {
                *x += dx;
            }
            let trial = project(kind, &ParamSet::from_vec(kind, &trial_vec));
            let trial_msc = problem.msc(&trial);
            if trial_msc.is_finite() && trial_msc < msc {
                let predicted = -(2.0 * step.dot(&grad) + (&jtj * &step).dot(&step));
                accepted = Some((trial, trial_msc, predicted));
                damping = (damping * config.damping_down).max(1e-300);
                break;
            }
            damping *= config.damping_up;
        }
        let Some((trial, trial_msc, predicted)) = accepted else {
            stop = StopReason::Stalled;
            break;
        };
        let Some((r_new, jac_new)) = problem.linearize(&trial) else {
            stop = StopReason::Stalled;
            break;
        };
        let actual = msc - trial_msc;
        let scale = msc;
        params = trial;
        msc = trial_msc;
        r = r_new;
        jac = jac_new;
        trace.push(msc);
        if msc == 0.0 {
            stop = StopReason::Gradient;
            break;
        }
        if actual <= config.msc_rel_tol * scale && predicted.abs() <= config.msc_rel_tol * scale {
            stop = StopReason::MscChange;
            break;
        }
    }

    Ok(LmResult {
        params,
        msc,
        initial_msc,
        iterations,
        converged: stop != StopReason::MaxIterations,
        stop,
        restarts_used: 0,
        best_start: 0,
        trace,
    })
}

/// Multistart Levenberg-Marquardt fit of a nonlinear kind.
///
/// Start 0 is `init`; the remaining `multistart − 1` starts perturb its rate
/// and immigration slope with a generator seeded from `(config.seed, kind)`.
/// The lowest MSC wins, ties going to fewer iterations and then the earlier
/// start.  Only a non-finite initial point fails the fit; perturbed starts
/// that are non-finite are skipped.
pub fn lm_fit(
    kind: ModelKind,
    series: &NormalizedSeries,
    init: &ParamSet,
    config: &LmConfig,
) -> Result<LmResult> {
    let mut best = lm_fit_single(kind, series, init, config)?;
    let mut rng = Rng::stream(config.seed, kind.index() as u64);
    for start in 1..config.multistart {
        let perturbed = perturb_init(kind, init, &mut rng);
        let Ok(mut candidate) = lm_fit_single(kind, series, &perturbed, config) else {
            continue;
        };
        candidate.best_start = start;
        let better = candidate.msc < best.msc
            || (candidate.msc == best.msc && candidate.iterations < best.iterations);
        if better {
            best = candidate;
        }
    }
    best.restarts_used = config.multistart - 1;
    Ok(best)
}

/// Largest relative disagreement between the analytic Jacobian and central
/// finite differences (step `h`) over every observation of `series`.
/// Relative errors use `max(|analytic|, 1e-3)` as denominator.
pub fn jacobian_check(kind: ModelKind, series: &NormalizedSeries, params: &ParamSet, h: f64) -> f64 {
    let base = params.to_vec(kind);
    let mut worst: f64 = 0.0;
    for &u in series.u() {
        let g = models::gradient(kind, params, u).expect("valid params");
        for j in 0..base.len() {
            let mut hi = base.clone();
            let mut lo = base.clone();
            hi[j] += h;
            lo[j] -= h;
            let f = |p: &[f64]| models::evaluate_unchecked(kind, &ParamSet::from_vec(kind, p), u);
            let fd = (f(&hi) - f(&lo)) / (2.0 * h);
            worst = worst.max((fd - g[j]).abs() / g[j].abs().max(1e-3));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::default_init;

    fn synthetic(kind: ModelKind, p: &ParamSet, n: usize) -> NormalizedSeries {
        let u: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
        let v = models::evaluate_many(kind, p, &u).unwrap();
        NormalizedSeries::from_raw(&u, &v).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn exact_start_stays_put() {
        // Curve already ends at one, so normalization does not rescale.
        let mut p = ParamSet::new(0.05, 1.0, 6.0, 0.0);
        let end = models::evaluate(ModelKind::Gompertz, &p, 1.0).unwrap();
        p = p.rescaled(ModelKind::Gompertz, 1.0 / end, 1.0);
        let s = synthetic(ModelKind::Gompertz, &p, 200);
        let fit = lm_fit_single(ModelKind::Gompertz, &s, &p, &LmConfig::default()).unwrap();
        assert!(fit.msc < 1e-20);
        assert!(fit.iterations <= 2);
        for (a, b) in fit.params.to_vec(ModelKind::Gompertz).iter().zip(p.to_vec(ModelKind::Gompertz)) {
            assert!(rel(*a, b) < 1e-10);
        }
    }

    fn recover(kind: ModelKind, truth: ParamSet) {
        let s = synthetic(kind, &truth, 200);
        // the normalized series is the truth scaled by 1 / S(1)
        let end = models::evaluate(kind, &truth, 1.0).unwrap();
        let expect = truth.rescaled(kind, 1.0 / end, 1.0);
        let init = default_init(kind, &s);
        assert!(jacobian_check(kind, &s, &project(kind, &init), 1e-6) < 1e-5);
        let fit = lm_fit(kind, &s, &init, &LmConfig::default()).unwrap();
        assert!(fit.msc < 1e-12, "{kind} msc {}", fit.msc);
        for (a, b) in fit.params.to_vec(kind).iter().zip(expect.to_vec(kind)) {
            assert!(rel(*a, b) < 1e-4, "{kind}: got {:?} expected {:?}", fit.params, expect);
        }
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn recovers_modgompertz() {
        recover(ModelKind::ModGompertz, ParamSet::new(0.05, 0.9, 6.0, 0.1));
    }

    #[test]
    fn recovers_logistic() {
        recover(ModelKind::Logistic, ParamSet::new(0.02, 1.0, 8.0, 0.0));
    }

    #[test]
    fn recovers_negexp_family() {
        recover(ModelKind::NegExp, ParamSet::new(0.1, 0.8, 4.0, 0.0));
        recover(ModelKind::ModNegExp, ParamSet::new(0.1, 0.8, 4.0, 0.2));
        recover(ModelKind::ModLogistic, ParamSet::new(0.05, 0.8, 10.0, 0.15));
    }

    #[test]
    fn stays_in_box_and_is_deterministic() {
        let u: Vec<f64> = (1..=50).map(|i| i as f64 / 50.0).collect();
        let v: Vec<f64> = u.iter().map(|x| x * x * x).collect();
        let s = NormalizedSeries::from_raw(&u, &v).unwrap();
        let cfg = LmConfig {
            seed: 11,
            ..LmConfig::default()
        };
        for kind in ModelKind::NONLINEAR {
            let init = default_init(kind, &s);
            let a = lm_fit(kind, &s, &init, &cfg).unwrap();
            let b = lm_fit(kind, &s, &init, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(project(kind, &a.params), a.params);
            assert!(a.msc <= a.initial_msc);
            assert!(a.trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn non_finite_initial_point() {
        let u: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let mut v = u.clone();
        v[3] = f64::NAN;
        // bypass NormalizedSeries validation of monotonicity: NaN passes from_raw
        let s = NormalizedSeries::from_raw(&u, &v).unwrap();
        let err = lm_fit(ModelKind::NegExp, &s, &ParamSet::new(0.1, 1.0, 2.0, 0.0), &LmConfig::default())
            .unwrap_err();
        assert_eq!(err.code(), "BAD_INITIAL_POINT");
    }

    #[test]
    fn budget_exhaustion_still_returns() {
        let u: Vec<f64> = (1..=30).map(|i| i as f64 / 30.0).collect();
        let v: Vec<f64> = u.iter().map(|x| x.sqrt()).collect();
        let s = NormalizedSeries::from_raw(&u, &v).unwrap();
        let cfg = LmConfig {
            max_iterations: 1,
            multistart: 1,
            ..LmConfig::default()
        };
        let fit = lm_fit(ModelKind::Gompertz, &s, &default_init(ModelKind::Gompertz, &s), &cfg).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.stop, StopReason::MaxIterations);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn config_validation() {
        assert!(LmConfig::default().validate().is_ok());
        let bad = LmConfig {
            damping_down: 1.5,
            ..LmConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().code(), "INVALID_CONFIG");
    }
}
