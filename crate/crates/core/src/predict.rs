//! Prediction windows: how long a model fitted on a prefix keeps forecasting
//! the rest of a series within a mean error bound.
//!
//! A record is cut at a split time `t_f`, the prefix is classified, and the
//! per-point errors `|S(u_i) − v_i| / (v_i + 1)` of the selected model are
//! evaluated on the observations after the split, in the prefix's own
//! normalization.  Two windows are derived from the running mean of those
//! errors:
//!
//! - the soft window is the largest `t_p − t_f` whose running mean is within
//!   the bound;
//! - the hard window ends just before the running mean first exceeds it.
//!
//! When every running mean up to the horizon is within the bound, both
//! windows equal the horizon length and are flagged as bounded.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{classify_series, point_error, ClassificationRecord, ClassifyConfig, Selected};
use crate::error::{Error, Result};
use crate::models;
use crate::series::SeriesRecord;

/// Where the prefix ends and how far ahead the windows are measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "split", rename_all = "snake_case")]
pub enum Scenario {
    /// Split at half the observed age; horizon is the series end.
    HalfLife,
    /// Split after a fixed number of days; horizon is the series end.
    FixedDays { days: f64 },
    /// Observe `days`, predict `horizon_multiplier · days` further.
    FixedWindow { days: f64 },
}

impl Scenario {
    /// The scenarios with published tables.
    pub const STANDARD: [Scenario; 5] = [
        Scenario::HalfLife,
        Scenario::FixedDays { days: 50.0 },
        Scenario::FixedWindow { days: 7.0 },
        Scenario::FixedWindow { days: 15.0 },
        Scenario::FixedWindow { days: 30.0 },
    ];
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::HalfLife => f.write_str("halflife"),
            Scenario::FixedDays { days } => write!(f, "fixed{days}"),
            Scenario::FixedWindow { days } => write!(f, "window{days}"),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    /// Accepts `halflife`, `fixed<days>` and `window<days>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        let days = |rest: &str| -> Result<f64> {
            match rest.parse::<f64>() {
                Ok(d) if d > 0.0 && d.is_finite() => Ok(d),
                _ => Err(Error::InvalidConfig(format!("bad scenario duration in '{s}'"))),
            }
        };
        if s == "halflife" || s == "half_life" {
            Ok(Scenario::HalfLife)
        } else if let Some(rest) = s.strip_prefix("fixed") {
            Ok(Scenario::FixedDays { days: days(rest)? })
        } else if let Some(rest) = s.strip_prefix("window") {
            Ok(Scenario::FixedWindow { days: days(rest)? })
        } else {
            Err(Error::InvalidConfig(format!("unknown scenario '{s}'")))
        }
    }
}

/// Which windows the scenario tables report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    Soft,
    Hard,
    #[default]
    Both,
}

impl FromStr for WindowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "soft" => Ok(WindowMode::Soft),
            "hard" => Ok(WindowMode::Hard),
            "both" => Ok(WindowMode::Both),
            other => Err(Error::InvalidConfig(format!("unknown window mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionSetup {
    pub scenario: Scenario,
    pub error_bound: f64,
    /// Fixed-window horizon in multiples of the observed window.
    pub horizon_multiplier: f64,
    pub window_mode: WindowMode,
    /// Minimum prefix observations; classification needs at least 6.
    pub min_prefix: usize,
    /// Minimum observations between the split and the horizon.
    pub min_future: usize,
}

impl Default for PredictionSetup {
    fn default() -> Self {
        Self {
            scenario: Scenario::HalfLife,
            error_bound: 0.05,
            horizon_multiplier: 3.0,
            window_mode: WindowMode::Both,
            min_prefix: 6,
            min_future: 10,
        }
    }
}

impl PredictionSetup {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.error_bound >= 0.0 && self.error_bound.is_finite()) {
            return Err(Error::InvalidConfig("error_bound must be finite and >= 0".into()));
        }
        if !(self.horizon_multiplier > 0.0 && self.horizon_multiplier.is_finite()) {
            return Err(Error::InvalidConfig("horizon_multiplier must be > 0".into()));
        }
        if self.min_prefix < 6 || self.min_future < 1 {
            return Err(Error::InvalidConfig("min_prefix >= 6 and min_future >= 1 required".into()));
        }
        Ok(())
    }
}

/// One prediction window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    /// Length in days after the split.
    pub length: f64,
    /// Future observations covered.
    pub points: usize,
    /// The window reached the horizon.
    pub bounded: bool,
}

/// Incremental running mean; exact for constant inputs.
fn running_means(errors: &[f64]) -> impl Iterator<Item = f64> + '_ {
    errors.iter().enumerate().scan(0.0, |mean, (i, &e)| {
        *mean += (e - *mean) / (i + 1) as f64;
        Some(*mean)
    })
}

/// Soft and hard windows from per-point errors at future times.
///
/// `times` are the observation times after the split in increasing order;
/// only those at or before `horizon` are used.  O(n).
pub fn windows_from_errors(
    times: &[f64],
    errors: &[f64],
    t_f: f64,
    horizon: f64,
    bound: f64,
) -> Result<(Window, Window)> {
    if times.len() != errors.len() {
        return Err(Error::Shape {
            left: times.len(),
            right: errors.len(),
        });
    }
    let m = times.iter().take_while(|&&t| t <= horizon).count();
    if m == 0 {
        return Err(Error::EmptyFuture);
    }
    let full = Window {
        length: horizon - t_f,
        points: m,
        bounded: true,
    };
    let mut soft_last = None;
    let mut first_crossing = None;
    for (p, mean) in running_means(&errors[..m]).enumerate() {
        if mean <= bound {
            soft_last = Some(p);
        } else if first_crossing.is_none() {
            first_crossing = Some(p);
        }
    }
    let window_to = |p: Option<usize>| match p {
        None => Window {
            length: 0.0,
            points: 0,
            bounded: false,
        },
        Some(p) => Window {
            length: times[p] - t_f,
            points: p + 1,
            bounded: false,
        },
    };
    let soft = match soft_last {
        Some(p) if p + 1 == m => full,
        other => window_to(other),
    };
    let hard = match first_crossing {
        None => full,
        Some(0) => window_to(None),
        Some(p) => window_to(Some(p - 1)),
    };
    Ok((soft, hard))
}

/// Soft window alone; see [`windows_from_errors`].
pub fn soft_window(times: &[f64], errors: &[f64], t_f: f64, horizon: f64, bound: f64) -> Result<Window> {
    windows_from_errors(times, errors, t_f, horizon, bound).map(|w| w.0)
}

/// Hard window alone; see [`windows_from_errors`].
pub fn hard_window(times: &[f64], errors: &[f64], t_f: f64, horizon: f64, bound: f64) -> Result<Window> {
    windows_from_errors(times, errors, t_f, horizon, bound).map(|w| w.1)
}

/// Window result of one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub id: String,
    /// Model selected on the prefix.
    pub selected: Selected,
    pub prefix_mer: f64,
    pub t_f: f64,
    pub horizon: f64,
    pub prefix_points: usize,
    pub future_points: usize,
    pub soft: Window,
    pub hard: Window,
    /// Soft window over the scenario's normalizer.
    pub soft_normalized: f64,
    pub hard_normalized: f64,
}

/// Why a record was left out of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub id: String,
    pub code: String,
    pub message: String,
}

impl Skipped {
    fn new(id: &str, code: &str, message: String) -> Self {
        Self {
            id: id.to_string(),
            code: code.to_string(),
            message,
        }
    }
}

/// Split, horizon and normalizer of a record under a scenario.
struct Plan {
    split: usize,
    future: usize,
    horizon: f64,
    normalizer: f64,
}

fn plan(record: &SeriesRecord, setup: &PredictionSetup) -> std::result::Result<Plan, Skipped> {
    let obs = record.observations();
    let t_n = record.last().t;
    let (target, horizon) = match setup.scenario {
        Scenario::HalfLife => (t_n / 2.0, t_n),
        Scenario::FixedDays { days } => {
            if (record.age_days() as f64) < days {
                return Err(Skipped::new(
                    record.id(),
                    "TOO_YOUNG",
                    format!("age {} days < {days}", record.age_days()),
                ));
            }
            (days, t_n)
        }
        Scenario::FixedWindow { days } => (days, (days + setup.horizon_multiplier * days).min(t_n)),
    };
    // nearest sample at or before the target time
    let split = match obs.iter().rposition(|o| o.t <= target) {
        Some(i) if i + 1 < obs.len() => i,
        _ => {
            return Err(Skipped::new(
                record.id(),
                "NO_SPLIT",
                format!("no split point strictly inside the series at t = {target}"),
            ))
        }
    };
    let t_f = obs[split].t;
    let prefix = split + 1;
    if prefix < setup.min_prefix {
        return Err(Skipped::new(
            record.id(),
            "TOO_SHORT",
            format!("{prefix} prefix points < {}", setup.min_prefix),
        ));
    }
    let future = obs[prefix..].iter().take_while(|o| o.t <= horizon).count();
    if future < setup.min_future {
        return Err(Skipped::new(
            record.id(),
            "TOO_SHORT",
            format!("{future} points after the split < {}", setup.min_future),
        ));
    }
    let normalizer = match setup.scenario {
        Scenario::HalfLife | Scenario::FixedDays { .. } => horizon - t_f,
        Scenario::FixedWindow { days } => days,
    };
    Ok(Plan {
        split,
        future,
        horizon,
        normalizer,
    })
}

/// Per-point errors of the prefix model on the observations after the split,
/// in the prefix normalization.
fn future_errors(record: &SeriesRecord, split: usize, class: &ClassificationRecord) -> (Vec<f64>, Vec<f64>) {
    let fit = &class.selected_fit;
    record.observations()[split + 1..]
        .iter()
        .map(|o| {
            let u = o.t / class.time_scale;
            let v = o.y / class.value_scale;
            let s = models::evaluate_unchecked(fit.kind, &fit.params, u);
            (o.t, point_error(v, s))
        })
        .unzip()
}

/// Evaluates one record, or explains why it is skipped.
pub fn predict_record(
    record: &SeriesRecord,
    setup: &PredictionSetup,
    config: &ClassifyConfig,
) -> std::result::Result<WindowResult, Skipped> {
    let plan = plan(record, setup)?;
    let fail = |e: Error| Skipped::new(record.id(), e.code(), e.to_string());
    let prefix = record.prefix(plan.split).map_err(fail)?;
    let class = classify_series(&prefix, config).map_err(fail)?;
    let (times, errors) = future_errors(record, plan.split, &class);
    let t_f = prefix.last().t;
    let (soft, hard) =
        windows_from_errors(&times, &errors, t_f, plan.horizon, setup.error_bound).map_err(fail)?;
    let cap = match setup.scenario {
        Scenario::FixedWindow { .. } => setup.horizon_multiplier,
        _ => 1.0,
    };
    let normalize = |w: &Window| (w.length / plan.normalizer).min(cap);
    Ok(WindowResult {
        id: record.id().to_string(),
        selected: class.selected,
        prefix_mer: class.selected_fit.mer,
        t_f,
        horizon: plan.horizon,
        prefix_points: plan.split + 1,
        future_points: plan.future,
        soft_normalized: normalize(&soft),
        hard_normalized: normalize(&hard),
        soft,
        hard,
    })
}

/// Mean, variance and bounded share of one window type over a group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub bounded_pct: f64,
}

impl WindowStats {
    fn of(values: &[(f64, bool)]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().map(|v| v.0).sum::<f64>() / n;
        let variance = values.iter().map(|v| (v.0 - mean).powi(2)).sum::<f64>() / n;
        let bounded = values.iter().filter(|v| v.1).count() as f64;
        Self {
            mean,
            variance,
            bounded_pct: 100.0 * bounded / n,
        }
    }
}

/// Aggregate row for one selected model, or for every record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    /// Model identifier, `unclassified`, or `all`.
    pub group: String,
    pub count: usize,
    pub distribution_pct: f64,
    pub soft: WindowStats,
    pub hard: WindowStats,
}

/// Outcome of one scenario over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub setup: PredictionSetup,
    pub results: Vec<WindowResult>,
    pub skipped: Vec<Skipped>,
    pub aggregate: Vec<AggregateRow>,
}

fn aggregate(results: &[WindowResult]) -> Vec<AggregateRow> {
    let total = results.len();
    let row = |group: String, rs: &[&WindowResult]| {
        let soft: Vec<_> = rs.iter().map(|r| (r.soft_normalized, r.soft.bounded)).collect();
        let hard: Vec<_> = rs.iter().map(|r| (r.hard_normalized, r.hard.bounded)).collect();
        AggregateRow {
            group,
            count: rs.len(),
            distribution_pct: 100.0 * rs.len() as f64 / total as f64,
            soft: WindowStats::of(&soft),
            hard: WindowStats::of(&hard),
        }
    };
    let mut rows = Vec::new();
    for s in Selected::all() {
        let rs: Vec<_> = results.iter().filter(|r| r.selected == s).collect();
        if !rs.is_empty() {
            rows.push(row(s.to_string(), &rs));
        }
    }
    let all: Vec<_> = results.iter().collect();
    rows.push(row("all".to_string(), &all));
    rows
}

/// Evaluates every record in parallel.  Results and skips are sorted by id.
pub fn evaluate_records(
    records: &[SeriesRecord],
    setup: &PredictionSetup,
    config: &ClassifyConfig,
) -> Result<(Vec<WindowResult>, Vec<Skipped>)> {
    setup.validate()?;
    let outcomes: Vec<_> = records
        .par_iter()
        .map(|r| predict_record(r, setup, config))
        .collect();
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(s) => skipped.push(s),
        }
    }
    results.sort_by(|a, b| a.id.cmp(&b.id));
    skipped.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((results, skipped))
}

/// Runs a scenario over a corpus.
pub fn run_scenario(
    records: &[SeriesRecord],
    setup: &PredictionSetup,
    config: &ClassifyConfig,
) -> Result<ScenarioReport> {
    let (results, skipped) = evaluate_records(records, setup, config)?;
    ScenarioReport::new(setup, results, skipped)
}

impl ScenarioReport {
    /// Aggregates evaluated records; fails when none was eligible.
    pub fn new(setup: &PredictionSetup, results: Vec<WindowResult>, skipped: Vec<Skipped>) -> Result<Self> {
        if results.is_empty() {
            return Err(Error::NoEligibleRecords);
        }
        Ok(Self {
            scenario: setup.scenario,
            setup: *setup,
            aggregate: aggregate(&results),
            results,
            skipped,
        })
    }

    /// Aggregate table: one row per selected model plus `all`, with the
    /// columns of the requested window mode.
    pub fn write_aggregate_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mode = self.setup.window_mode;
        let (soft, hard) = (mode != WindowMode::Hard, mode != WindowMode::Soft);
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["model", "count", "distribution_pct"];
        if hard {
            header.extend(["hard_mean", "hard_variance", "hard_bounded_pct"]);
        }
        if soft {
            header.extend(["soft_mean", "soft_variance", "soft_bounded_pct"]);
        }
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.aggregate {
            let mut row = vec![r.group.clone(), r.count.to_string(), format!("{:.2}", r.distribution_pct)];
            let mut stats = |s: &WindowStats| {
                row.push(format!("{:.6}", s.mean));
                row.push(format!("{:.6}", s.variance));
                row.push(format!("{:.2}", s.bounded_pct));
            };
            if hard {
                stats(&r.hard);
            }
            if soft {
                stats(&r.soft);
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-record table.
    pub fn write_results_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "id",
            "selected",
            "prefix_mer",
            "t_f",
            "horizon",
            "soft_days",
            "soft_normalized",
            "soft_bounded",
            "hard_days",
            "hard_normalized",
            "hard_bounded",
        ])
        .map_err(csv_err)?;
        for r in &self.results {
            w.write_record([
                r.id.clone(),
                r.selected.to_string(),
                format!("{:.6}", r.prefix_mer),
                r.t_f.to_string(),
                r.horizon.to_string(),
                r.soft.length.to_string(),
                format!("{:.6}", r.soft_normalized),
                r.soft.bounded.to_string(),
                r.hard.length.to_string(),
                format!("{:.6}", r.hard_normalized),
                r.hard.bounded.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}
