//! Scoring, model selection and automatic classification of series.
//!
//! Every kind is fitted to the normalized series; candidates whose mean error
//! rate (MER) is within the threshold compete on goodness of fit
//! (`GoF = MSC / (n − p)`), the smallest winning.  A supplementary two-phase
//! fit (linear tail, nonlinear head) is attached when a linear suffix exists.

mod report;
mod score;
mod tail;

pub use report::{
    proportion_ci, CorpusReport, GroupBy, GroupReport, ProportionCi, MER_BIN_LABELS,
};
pub use score::{gof, mer, msc, point_error};
pub use tail::{trim_linear_tail, LinearTail, TailConfig};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{self, ModelKind, ParamSet};
use crate::regress::{self, LmConfig, LinearFit};
use crate::series::{self, Category, NormalizedSeries, PopularityClass, Rejection, SeriesRecord};

/// Fewest observations for which every kind keeps at least two degrees of
/// freedom.
pub const MIN_CLASSIFY_LEN: usize = 6;

/// Scores of one model fitted to one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: ModelKind,
    pub params: ParamSet,
    pub msc: f64,
    pub mer: f64,
    pub gof: f64,
    pub df: usize,
    pub converged: bool,
    pub iterations: usize,
    pub restarts_used: usize,
    /// Coefficient of determination; only for the linear model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

impl FitResult {
    /// Builds the scores of `params` on `series`.
    pub fn score(kind: ModelKind, params: ParamSet, series: &NormalizedSeries) -> Result<Self> {
        let values = models::evaluate_many(kind, &params, series.u())?;
        let msc = msc(series.v(), &values)?;
        let n = series.len();
        let p = kind.param_count();
        Ok(Self {
            kind,
            params,
            msc,
            mer: mer(series.v(), &values)?,
            gof: gof(msc, n, p)?,
            df: n - p,
            converged: true,
            iterations: 0,
            restarts_used: 0,
            r: None,
        })
    }

    /// Model curve on the given normalized times.
    pub fn curve(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .map(|&x| models::evaluate_unchecked(self.kind, &self.params, x))
            .collect()
    }
}

/// Linear regression as a candidate.  A flat series has no defined `R` and
/// gets the constant line with `r = None`.
fn fit_linear(series: &NormalizedSeries) -> Result<FitResult> {
    let (params, r) = match regress::linear_fit(series) {
        Ok(LinearFit {
            slope, intercept, r, ..
        }) => (ParamSet::linear(intercept, slope), Some(r)),
        Err(Error::ZeroVariance) => (ParamSet::linear(series.v()[0], 0.0), None),
        Err(e) => return Err(e),
    };
    let mut fit = FitResult::score(ModelKind::Linear, params, series)?;
    fit.r = r;
    Ok(fit)
}

fn fit_nonlinear(kind: ModelKind, series: &NormalizedSeries, config: &LmConfig) -> Result<FitResult> {
    let init = regress::default_init(kind, series);
    let lm = regress::lm_fit(kind, series, &init, config)?;
    let mut fit = FitResult::score(kind, lm.params, series)?;
    fit.converged = lm.converged;
    fit.iterations = lm.iterations;
    fit.restarts_used = lm.restarts_used;
    Ok(fit)
}

/// Fits the listed kinds, in the given order.
pub fn fit_kinds(
    series: &NormalizedSeries,
    kinds: &[ModelKind],
    config: &LmConfig,
) -> Result<Vec<FitResult>> {
    if series.len() < MIN_CLASSIFY_LEN {
        return Err(Error::TooShortForClassification {
            len: series.len(),
            min: MIN_CLASSIFY_LEN,
        });
    }
    kinds
        .iter()
        .map(|&kind| match kind {
            ModelKind::Linear => fit_linear(series),
            _ => fit_nonlinear(kind, series, config),
        })
        .collect()
}

/// One fit per kind, in [`ModelKind::ALL`] order.
pub fn fit_all(series: &NormalizedSeries, config: &LmConfig) -> Result<Vec<FitResult>> {
    fit_kinds(series, &ModelKind::ALL, config)
}

/// Outcome of model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Selected {
    Model(ModelKind),
    Unclassified,
}

impl Selected {
    pub fn kind(self) -> Option<ModelKind> {
        match self {
            Selected::Model(k) => Some(k),
            Selected::Unclassified => None,
        }
    }

    /// Report order: kinds first, unclassified last.
    pub fn all() -> Vec<Selected> {
        ModelKind::ALL
            .iter()
            .map(|&k| Selected::Model(k))
            .chain(std::iter::once(Selected::Unclassified))
            .collect()
    }
}

impl fmt::Display for Selected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selected::Model(k) => write!(f, "{k}"),
            Selected::Unclassified => f.write_str("unclassified"),
        }
    }
}

impl FromStr for Selected {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("unclassified") {
            Ok(Selected::Unclassified)
        } else {
            s.parse().map(Selected::Model)
        }
    }
}

impl From<Selected> for String {
    fn from(s: Selected) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Selected {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Thresholds applied during selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionCriteria {
    pub mer_threshold: f64,
    /// The linear model additionally needs `R ≥ r_threshold`.
    pub r_threshold: f64,
    /// GoF values within this absolute distance of the minimum are tied.
    pub gof_tie_tolerance: f64,
}

impl Default for SelectionCriteria {
    fn default() -> Self {
        Self {
            mer_threshold: 0.05,
            r_threshold: 0.985,
            gof_tie_tolerance: 1e-20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionReason {
    /// Smallest GoF among candidates within the MER threshold.
    MinGof,
    /// Nothing passed; the fit with the smallest MER is reported.
    NoCandidateWithinThreshold,
}

/// Chosen model with the fit that justified the choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub selected: Selected,
    pub fit: FitResult,
    pub reason: SelectionReason,
}

fn passes(fit: &FitResult, criteria: &SelectionCriteria) -> bool {
    let linear_ok = fit.kind != ModelKind::Linear || fit.r.is_some_and(|r| r >= criteria.r_threshold);
    fit.mer <= criteria.mer_threshold && linear_ok
}

/// Picks the candidate with the smallest GoF among those within the MER
/// threshold.  Candidates within `gof_tie_tolerance` of the minimum are tied;
/// ties go to fewer parameters, then to the earlier kind in
/// [`ModelKind::ALL`], so the result does not depend on candidate order.
pub fn select_model(candidates: &[FitResult], criteria: &SelectionCriteria) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let survivors: Vec<&FitResult> = candidates.iter().filter(|f| passes(f, criteria)).collect();
    let min_gof = survivors.iter().map(|f| f.gof).min_by(f64::total_cmp);
    let best = min_gof.and_then(|g| {
        survivors
            .iter()
            .filter(|f| f.gof <= g + criteria.gof_tie_tolerance)
            .min_by(|a, b| {
                a.kind
                    .param_count()
                    .cmp(&b.kind.param_count())
                    .then(a.kind.index().cmp(&b.kind.index()))
            })
    });
    if let Some(&best) = best {
        return Ok(Selection {
            selected: Selected::Model(best.kind),
            fit: best.clone(),
            reason: SelectionReason::MinGof,
        });
    }
    let best_effort = candidates
        .iter()
        .min_by(|a, b| {
            a.mer
                .total_cmp(&b.mer)
                .then(a.kind.index().cmp(&b.kind.index()))
        })
        .expect("non-empty");
    Ok(Selection {
        selected: Selected::Unclassified,
        fit: best_effort.clone(),
        reason: SelectionReason::NoCandidateWithinThreshold,
    })
}

/// All classification settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub lm: LmConfig,
    pub criteria: SelectionCriteria,
    pub tail: TailConfig,
    /// Run the supplementary two-phase fit.
    pub two_phase: bool,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            lm: LmConfig::default(),
            criteria: SelectionCriteria::default(),
            tail: TailConfig::default(),
            two_phase: true,
        }
    }
}

impl ClassifyConfig {
    pub fn with_two_phase(mut self, on: bool) -> Self {
        self.two_phase = on;
        self
    }
}

/// Linear tail plus nonlinear fits of the head in front of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPhaseFit {
    /// 0-based index where the linear suffix starts.
    pub tail_start: usize,
    /// Day of that observation.
    pub tail_start_t: f64,
    /// Line through the normalized suffix.
    pub tail: LinearFit,
    /// Fits on the head, renormalized to end at `(1, 1)`; empty when the
    /// head is not longer than `min_head`.
    pub head_fits: Vec<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_selected: Option<Selected>,
}

/// Classification of one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    pub popularity: PopularityClass,
    pub n: usize,
    pub selected: Selected,
    pub selected_fit: FitResult,
    pub reason: SelectionReason,
    pub mer_threshold: f64,
    pub candidates: Vec<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_tail: Option<TwoPhaseFit>,
    /// Days and views of the normalization.
    pub time_scale: f64,
    pub value_scale: f64,
}

fn two_phase(
    record: &SeriesRecord,
    series: &NormalizedSeries,
    config: &ClassifyConfig,
) -> Result<Option<TwoPhaseFit>> {
    let tail = match trim_linear_tail(series, &config.tail) {
        Ok(t) => t,
        Err(Error::NoLinearTail | Error::TooShort { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    // head is observations 1..=k in 1-based terms, i.e. 0..=start
    let head_len = tail.start + 1;
    let (head_fits, head_selected) = if head_len > config.tail.min_head && head_len >= MIN_CLASSIFY_LEN {
        let head = series.segment(0, head_len)?;
        let fits = fit_kinds(&head, &ModelKind::NONLINEAR, &config.lm)?;
        let selected = select_model(&fits, &config.criteria)?.selected;
        (fits, Some(selected))
    } else {
        (Vec::new(), None)
    };
    Ok(Some(TwoPhaseFit {
        tail_start: tail.start,
        tail_start_t: record.observations()[tail.start].t,
        tail: tail.fit,
        head_fits,
        head_selected,
    }))
}

/// Normalizes, fits every kind, selects one and attaches the two-phase fit.
pub fn classify_series(record: &SeriesRecord, config: &ClassifyConfig) -> Result<ClassificationRecord> {
    let series = series::normalize(record)?;
    let candidates = fit_all(&series, &config.lm)?;
    let selection = select_model(&candidates, &config.criteria)?;
    let linear_tail = if config.two_phase {
        two_phase(record, &series, config)?
    } else {
        None
    };
    Ok(ClassificationRecord {
        id: record.id().to_string(),
        category: record.category(),
        popularity: record.popularity_class(),
        n: series.len(),
        selected: selection.selected,
        selected_fit: selection.fit,
        reason: selection.reason,
        mer_threshold: config.criteria.mer_threshold,
        candidates,
        linear_tail,
        time_scale: series.time_scale(),
        value_scale: series.value_scale(),
    })
}

/// Model distribution of classified records, optionally grouped.
pub fn corpus_report(records: &[ClassificationRecord], group_by: GroupBy) -> CorpusReport {
    CorpusReport::build(records, group_by)
}

/// Classifies records in parallel.  Output is sorted by id; failures become
/// rejections, also sorted by id.
pub fn classify_corpus(
    records: &[SeriesRecord],
    config: &ClassifyConfig,
) -> (Vec<ClassificationRecord>, Vec<Rejection>) {
    let results: Vec<_> = records
        .par_iter()
        .map(|r| (r.id(), classify_series(r, config)))
        .collect();
    let mut ok = Vec::new();
    let mut rejected = Vec::new();
    for (id, res) in results {
        match res {
            Ok(c) => ok.push(c),
            Err(e) => rejected.push(Rejection {
                id: id.to_string(),
                code: e.code().to_string(),
                message: e.to_string(),
            }),
        }
    }
    ok.sort_by(|a, b| a.id.cmp(&b.id));
    rejected.sort_by(|a, b| a.id.cmp(&b.id));
    (ok, rejected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, Scale, SynthSpec};

    fn candidate(kind: ModelKind, mer: f64, gof: f64) -> FitResult {
        FitResult {
            kind,
            params: ParamSet::default(),
            msc: gof * 100.0,
            mer,
            gof,
            df: 100,
            converged: true,
            iterations: 1,
            restarts_used: 0,
            r: None,
        }
    }

    fn criteria(mer_threshold: f64) -> SelectionCriteria {
        SelectionCriteria {
            mer_threshold,
            ..SelectionCriteria::default()
        }
    }

    #[test]
    fn published_viral_example() {
        let c = vec![
            candidate(ModelKind::Logistic, 0.021, 1e-3),
            candidate(ModelKind::Gompertz, 0.018, 1.846e-4),
            candidate(ModelKind::ModGompertz, 0.008, 8.831e-5),
        ];
        let s = select_model(&c, &criteria(0.02)).unwrap();
        assert_eq!(s.selected, Selected::Model(ModelKind::ModGompertz));
        assert_eq!(s.reason, SelectionReason::MinGof);
    }

    #[test]
    fn sole_survivor_and_empty_survivor_set() {
        let c = vec![candidate(ModelKind::NegExp, 0.04, 1.0)];
        assert_eq!(
            select_model(&c, &criteria(0.05)).unwrap().selected,
            Selected::Model(ModelKind::NegExp)
        );
        let c = vec![
            candidate(ModelKind::NegExp, 0.2, 1.0),
            candidate(ModelKind::Gompertz, 0.1, 2.0),
        ];
        let s = select_model(&c, &criteria(0.05)).unwrap();
        assert_eq!(s.selected, Selected::Unclassified);
        assert_eq!(s.fit.kind, ModelKind::Gompertz);
        assert_eq!(select_model(&[], &criteria(0.05)).unwrap_err().code(), "NO_CANDIDATES");
    }

    #[test]
    fn gof_ties_prefer_fewer_parameters() {
        let c = vec![
            candidate(ModelKind::ModGompertz, 0.01, 1e-4),
            candidate(ModelKind::Gompertz, 0.01, 1e-4),
        ];
        assert_eq!(
            select_model(&c, &criteria(0.05)).unwrap().selected,
            Selected::Model(ModelKind::Gompertz)
        );
    }

    #[test]
    fn linear_needs_high_r() {
        let mut lin = candidate(ModelKind::Linear, 0.01, 1e-6);
        lin.r = Some(0.9);
        let c = vec![lin.clone(), candidate(ModelKind::NegExp, 0.01, 1e-3)];
        assert_eq!(
            select_model(&c, &criteria(0.05)).unwrap().selected,
            Selected::Model(ModelKind::NegExp)
        );
        lin.r = Some(0.99);
        let c = vec![lin, candidate(ModelKind::NegExp, 0.01, 1e-3)];
        assert_eq!(
            select_model(&c, &criteria(0.05)).unwrap().selected,
            Selected::Model(ModelKind::Linear)
        );
    }

    #[test]
    fn selection_is_order_invariant() {
        let base = vec![
            candidate(ModelKind::NegExp, 0.01, 3e-4),
            candidate(ModelKind::ModNegExp, 0.01, 2e-4),
            candidate(ModelKind::Logistic, 0.06, 1e-5),
            candidate(ModelKind::Gompertz, 0.02, 2e-4),
            candidate(ModelKind::ModGompertz, 0.02, 2e-4),
        ];
        let expect = select_model(&base, &criteria(0.05)).unwrap();
        assert_eq!(expect.selected, Selected::Model(ModelKind::Gompertz));
        let mut rev = base.clone();
        rev.reverse();
        assert_eq!(select_model(&rev, &criteria(0.05)).unwrap(), expect);
        rev.rotate_left(2);
        assert_eq!(select_model(&rev, &criteria(0.05)).unwrap(), expect);
    }

    #[test]
    fn selected_serializes_as_identifier() {
        let json = serde_json::to_string(&Selected::Model(ModelKind::ModGompertz)).unwrap();
        assert_eq!(json, "\"modgompertz\"");
        let back: Selected = serde_json::from_str("\"unclassified\"").unwrap();
        assert_eq!(back, Selected::Unclassified);
    }

    fn noiseless(kind: ModelKind, params: ParamSet, n: usize) -> SeriesRecord {
        generate(&SynthSpec {
            id: kind.to_string(),
            kind,
            params,
            n,
            noise_sigma: 0.0,
            seed: 0,
            scale: None,
        })
        .unwrap()
        .0
    }

    #[test]
    fn fit_all_enumerates_every_kind() {
        let rec = noiseless(ModelKind::Gompertz, ParamSet::new(0.05, 0.9, 5.0, 0.0), 80);
        let s = series::normalize(&rec).unwrap();
        let fits = fit_all(&s, &LmConfig::default()).unwrap();
        let kinds: Vec<_> = fits.iter().map(|f| f.kind).collect();
        assert_eq!(kinds, ModelKind::ALL);
        let g = &fits[ModelKind::Gompertz.index()];
        assert!(g.mer < 1e-8, "mer {}", g.mer);
        for f in &fits {
            assert_eq!(f.gof, f.msc / f.df as f64);
            assert_eq!(f.df, 80 - f.kind.param_count());
        }
    }

    #[test]
    fn noiseless_line_fits_exactly() {
        let rec = noiseless(ModelKind::Linear, ParamSet::linear(0.1, 3.0), 40);
        let s = series::normalize(&rec).unwrap();
        let fits = fit_all(&s, &LmConfig::default()).unwrap();
        let lin = &fits[0];
        assert!((lin.r.unwrap() - 1.0).abs() < 1e-12);
        assert!(lin.mer < 1e-10);
    }

    #[test]
    fn whole_line_tail_has_no_head_fit() {
        let rec = noiseless(ModelKind::Linear, ParamSet::linear(0.1, 3.0), 40);
        let c = classify_series(&rec, &ClassifyConfig::default()).unwrap();
        assert_eq!(c.selected, Selected::Model(ModelKind::Linear));
        let tp = c.linear_tail.expect("whole series is linear");
        assert_eq!(tp.tail_start, 0);
        assert!(tp.head_fits.is_empty() && tp.head_selected.is_none());
    }

    #[test]
    fn short_series_rejected() {
        let rec = SeriesRecord::from_points("x", &[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 2.0, 3.0, 4.0, 5.0])
            .unwrap();
        assert_eq!(
            classify_series(&rec, &ClassifyConfig::default()).unwrap_err().code(),
            "TOO_SHORT_FOR_CLASSIFICATION"
        );
    }

    fn noisy(kind: ModelKind, params: ParamSet, seed: u64) -> SeriesRecord {
        generate(&SynthSpec {
            id: format!("{kind}-{seed}"),
            kind,
            params,
            n: 120,
            noise_sigma: 0.01,
            seed,
            scale: Some(Scale {
                days: 120.0,
                views: 1e5,
            }),
        })
        .unwrap()
        .0
    }

    #[test]
    fn noisy_labels_recovered() {
        let cfg = ClassifyConfig::default();
        let rec = noisy(ModelKind::ModGompertz, ParamSet::new(0.05, 0.8, 8.0, 0.2), 1);
        assert_eq!(
            classify_series(&rec, &cfg).unwrap().selected,
            Selected::Model(ModelKind::ModGompertz)
        );
        let rec = noisy(ModelKind::NegExp, ParamSet::new(0.05, 0.9, 6.0, 0.0), 2);
        let got = classify_series(&rec, &cfg).unwrap().selected;
        assert!(
            got == Selected::Model(ModelKind::NegExp) || got == Selected::Model(ModelKind::ModNegExp),
            "{got}"
        );
    }

    #[test]
    fn staircase_completes() {
        let mut t = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            t.push(i as f64 + 1.0);
            y.push(((i / 10) as f64 + 1.0) * 100.0);
        }
        let rec = SeriesRecord::from_points("stairs", &t, &y).unwrap();
        let c = classify_series(&rec, &ClassifyConfig::default().with_two_phase(true)).unwrap();
        assert_eq!(c.candidates.len(), 7);
        assert!(c.selected_fit.mer.is_finite());
    }

    #[test]
    fn two_phase_attached_for_linear_tail() {
        let n = 120;
        let t: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|&d| {
                let x = d / n as f64;
                1000.0 * (0.7 * (1.0 - (-15.0 * x.min(0.4)).exp()) + 0.3 * (x - 0.4).max(0.0))
            })
            .collect();
        let rec = SeriesRecord::from_points("mix", &t, &y).unwrap();
        let cfg = ClassifyConfig::default().with_two_phase(true);
        let c = classify_series(&rec, &cfg).unwrap();
        let tp = c.linear_tail.expect("tail found");
        assert!(tp.tail_start > cfg.tail.min_head);
        assert_eq!(tp.head_fits.len(), 6);
        assert!(tp.head_selected.is_some());
        assert_eq!(tp.tail_start_t, t[tp.tail_start]);
    }

    #[test]
    fn corpus_output_sorted_by_id() {
        let recs = vec![
            noisy(ModelKind::NegExp, ParamSet::new(0.05, 0.9, 6.0, 0.0), 9),
            noisy(ModelKind::Gompertz, ParamSet::new(0.05, 0.9, 6.0, 0.0), 3),
            SeriesRecord::from_points("a-short", &[1.0, 2.0], &[1.0, 2.0]).unwrap(),
        ];
        let (ok, rej) = classify_corpus(&recs, &ClassifyConfig::default());
        assert_eq!(ok.len(), 2);
        assert!(ok[0].id < ok[1].id);
        assert_eq!(rej[0].code, "TOO_SHORT_FOR_CLASSIFICATION");
    }
}
