use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use super::{ClassificationRecord, Selected};
use crate::error::{Error, Result};

/// Labels of the MER histogram bins `[0, 0.05]`, `(0.05, 0.1]`, `(0.1, ∞)`.
pub const MER_BIN_LABELS: [&str; 3] = ["[0,0.05]", "(0.05,0.1]", "(0.1,inf)"];

fn mer_bin(mer: f64) -> usize {
    if mer <= 0.05 {
        0
    } else if mer <= 0.1 {
        1
    } else {
        2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    #[default]
    None,
    Category,
    Popularity,
}

impl fmt::Display for GroupBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupBy::None => "none",
            GroupBy::Category => "category",
            GroupBy::Popularity => "popularity",
        })
    }
}

impl FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "all" => Ok(GroupBy::None),
            "category" => Ok(GroupBy::Category),
            "popularity" | "popularity_class" => Ok(GroupBy::Popularity),
            other => Err(Error::InvalidConfig(format!("unknown grouping '{other}'"))),
        }
    }
}

/// Selection counts of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: String,
    pub total: usize,
    /// One entry per kind plus unclassified, in [`Selected::all`] order.
    pub counts: Vec<(Selected, usize)>,
    /// Counts of the selected fit's MER per bin of [`MER_BIN_LABELS`].
    pub mer_histogram: [usize; 3],
}

impl GroupReport {
    pub fn count(&self, s: Selected) -> usize {
        self.counts
            .iter()
            .find(|(k, _)| *k == s)
            .map_or(0, |(_, c)| *c)
    }

    /// Share of `s` in percent.
    pub fn percent(&self, s: Selected) -> f64 {
        100.0 * self.count(s) as f64 / self.total as f64
    }
}

/// Model distribution over a corpus, optionally split into groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub group_by: GroupBy,
    /// Only groups with at least one record, in category or class order.
    pub groups: Vec<GroupReport>,
}

impl CorpusReport {
    /// Builds the report.  An empty input yields no groups.
    pub fn build(records: &[ClassificationRecord], group_by: GroupBy) -> Self {
        let mut buckets: BTreeMap<(u8, String), Vec<&ClassificationRecord>> = BTreeMap::new();
        for r in records {
            let key = match group_by {
                GroupBy::None => (0, "all".to_string()),
                GroupBy::Category => match r.category {
                    Some(c) => (0, c.to_string()),
                    None => (1, "uncategorized".to_string()),
                },
                GroupBy::Popularity => (r.popularity as u8, r.popularity.to_string()),
            };
            buckets.entry(key).or_default().push(r);
        }
        if group_by == GroupBy::Category {
            // category order is the enum order, not alphabetical
            let mut v: Vec<_> = buckets.into_iter().collect();
            v.sort_by_key(|((missing, _), rs)| (*missing, rs[0].category));
            return Self {
                group_by,
                groups: v.into_iter().map(|((_, g), rs)| group(g, &rs)).collect(),
            };
        }
        Self {
            group_by,
            groups: buckets
                .into_iter()
                .map(|((_, g), rs)| group(g, &rs))
                .collect(),
        }
    }

    /// Distribution table in percent: one row per model, one column per group.
    pub fn write_distribution_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["model".to_string()];
        header.extend(self.groups.iter().map(|g| g.group.clone()));
        w.write_record(&header).map_err(csv_err)?;
        for s in Selected::all() {
            let mut row = vec![s.to_string()];
            row.extend(self.groups.iter().map(|g| format!("{:.2}", g.percent(s))));
            w.write_record(&row).map_err(csv_err)?;
        }
        let mut row = vec!["n".to_string()];
        row.extend(self.groups.iter().map(|g| g.total.to_string()));
        w.write_record(&row).map_err(csv_err)?;
        w.flush()?;
        Ok(())
    }

    /// Counts table: one row per group with model counts and MER bins.
    pub fn write_counts_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["group".to_string(), "n".to_string()];
        header.extend(Selected::all().iter().map(|s| s.to_string()));
        header.extend(MER_BIN_LABELS.iter().map(|b| format!("mer{b}")));
        w.write_record(&header).map_err(csv_err)?;
        for g in &self.groups {
            let mut row = vec![g.group.clone(), g.total.to_string()];
            row.extend(g.counts.iter().map(|(_, c)| c.to_string()));
            row.extend(g.mer_histogram.iter().map(|c| c.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Confidence interval of every model's share in every group.
    pub fn intervals(&self, level: f64) -> Result<Vec<(String, Selected, ProportionCi)>> {
        let mut out = Vec::new();
        for g in &self.groups {
            for &(s, c) in &g.counts {
                out.push((g.group.clone(), s, proportion_ci(c, g.total, level)?));
            }
        }
        Ok(out)
    }

    pub fn write_intervals_csv<W: Write>(&self, level: f64, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["group", "model", "successes", "trials", "low", "point", "high"])
            .map_err(csv_err)?;
        for (g, s, ci) in self.intervals(level)? {
            w.write_record([
                g,
                s.to_string(),
                ci.successes.to_string(),
                ci.trials.to_string(),
                format!("{:.8}", ci.low),
                format!("{:.8}", ci.point),
                format!("{:.8}", ci.high),
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

fn group(name: String, records: &[&ClassificationRecord]) -> GroupReport {
    let mut counts: Vec<(Selected, usize)> = Selected::all().into_iter().map(|s| (s, 0)).collect();
    let mut mer_histogram = [0; 3];
    for r in records {
        if let Some(entry) = counts.iter_mut().find(|(s, _)| *s == r.selected) {
            entry.1 += 1;
        }
        mer_histogram[mer_bin(r.selected_fit.mer)] += 1;
    }
    GroupReport {
        group: name,
        total: records.len(),
        counts,
        mer_histogram,
    }
}

/// Two-sided interval for a binomial proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionCi {
    pub successes: usize,
    pub trials: usize,
    pub level: f64,
    pub low: f64,
    pub point: f64,
    pub high: f64,
}

/// Clopper-Pearson exact interval of `successes / trials` at confidence
/// `level`.
pub fn proportion_ci(successes: usize, trials: usize, level: f64) -> Result<ProportionCi> {
    if trials == 0 || successes > trials {
        return Err(Error::InvalidConfig(format!(
            "need 0 <= successes <= trials and trials >= 1, got {successes}/{trials}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("level {level} not in (0, 1)")));
    }
    let alpha = 1.0 - level;
    let (x, n) = (successes as f64, trials as f64);
    let beta = |a: f64, b: f64| Beta::new(a, b).map_err(|e| Error::InvalidConfig(e.to_string()));
    let low = if successes == 0 {
        0.0
    } else {
        beta(x, n - x + 1.0)?.inverse_cdf(alpha / 2.0)
    };
    let high = if successes == trials {
        1.0
    } else {
        beta(x + 1.0, n - x)?.inverse_cdf(1.0 - alpha / 2.0)
    };
    Ok(ProportionCi {
        successes,
        trials,
        level,
        low,
        point: x / n,
        high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{FitResult, SelectionReason};
    use crate::models::{ModelKind, ParamSet};
    use crate::series::{Category, PopularityClass};

    /// `P(X ≥ k)` for `X ~ Bin(n, p)` by direct summation of the pmf.
    fn upper_tail(k: usize, n: usize, p: f64) -> f64 {
        let ln_choose = |n: usize, i: usize| -> f64 {
            (1..=i).map(|j| ((n - i + j) as f64 / j as f64).ln()).sum()
        };
        (k..=n)
            .map(|i| (ln_choose(n, i) + i as f64 * p.ln() + (n - i) as f64 * (1.0 - p).ln()).exp())
            .sum()
    }

    #[test]
    fn interval_bounds_solve_binomial_tails() {
        for &(x, n) in &[(72usize, 1000usize), (3, 20), (50, 100), (1, 7)] {
            let ci = proportion_ci(x, n, 0.95).unwrap();
            assert!((upper_tail(x, n, ci.low) - 0.025).abs() < 1e-7, "{x}/{n} low");
            let below = 1.0 - upper_tail(x + 1, n, ci.high);
            assert!((below - 0.025).abs() < 1e-7, "{x}/{n} high");
            assert!(ci.low < ci.point && ci.point < ci.high);
        }
    }

    #[test]
    fn published_interval_reproduced() {
        let ci = proportion_ci(72, 1000, 0.95).unwrap();
        assert_eq!(ci.point, 0.072);
        assert!((ci.low - 0.0573).abs() <= 0.005, "low {}", ci.low);
        assert!((ci.high - 0.0905).abs() <= 0.005, "high {}", ci.high);
    }

    #[test]
    fn boundary_intervals() {
        let zero = proportion_ci(0, 10, 0.95).unwrap();
        assert_eq!((zero.low, zero.point), (0.0, 0.0));
        assert!((zero.high - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-9);
        let all = proportion_ci(10, 10, 0.95).unwrap();
        assert_eq!((all.point, all.high), (1.0, 1.0));
        assert!(proportion_ci(11, 10, 0.95).is_err());
        assert!(proportion_ci(0, 0, 0.95).is_err());
    }

    fn record(id: &str, kind: ModelKind, mer: f64, views: u64) -> ClassificationRecord {
        let fit = FitResult {
            kind,
            params: ParamSet::default(),
            msc: 0.0,
            mer,
            gof: 0.0,
            df: 10,
            converged: true,
            iterations: 0,
            restarts_used: 0,
            r: None,
        };
        ClassificationRecord {
            id: id.into(),
            category: Some(if views.is_multiple_of(2) { Category::Music } else { Category::Comedy }),
            popularity: PopularityClass::from_views(views),
            n: 12,
            selected: Selected::Model(kind),
            selected_fit: fit.clone(),
            reason: SelectionReason::MinGof,
            mer_threshold: 0.05,
            candidates: vec![fit],
            linear_tail: None,
            time_scale: 1.0,
            value_scale: 1.0,
        }
    }

    #[test]
    fn half_and_half() {
        let recs: Vec<_> = (0..100)
            .map(|i| {
                let k = if i < 50 { ModelKind::NegExp } else { ModelKind::Gompertz };
                record(&format!("{i}"), k, 0.01, 5000)
            })
            .collect();
        let rep = CorpusReport::build(&recs, GroupBy::None);
        assert_eq!(rep.groups.len(), 1);
        let g = &rep.groups[0];
        assert_eq!(g.percent(Selected::Model(ModelKind::NegExp)), 50.0);
        assert_eq!(g.percent(Selected::Model(ModelKind::Gompertz)), 50.0);
        assert_eq!(g.percent(Selected::Unclassified), 0.0);
        assert_eq!(g.mer_histogram, [100, 0, 0]);
    }

    #[test]
    fn singleton_and_degenerate_grouping() {
        let rep = CorpusReport::build(&[record("a", ModelKind::Logistic, 0.2, 4000)], GroupBy::None);
        assert_eq!(rep.groups[0].percent(Selected::Model(ModelKind::Logistic)), 100.0);
        assert_eq!(rep.groups[0].mer_histogram, [0, 0, 1]);

        let recs: Vec<_> = (0..5)
            .map(|i| record(&i.to_string(), ModelKind::Linear, 0.07, 20_000 + i))
            .collect();
        let rep = CorpusReport::build(&recs, GroupBy::Popularity);
        assert_eq!(rep.groups.len(), 1);
        assert_eq!(rep.groups[0].group, "P");
        assert_eq!(rep.groups[0].mer_histogram, [0, 5, 0]);
    }

    #[test]
    fn popularity_columns_follow_class_order() {
        let recs = vec![
            record("a", ModelKind::Linear, 0.01, 2_000_000),
            record("b", ModelKind::Linear, 0.01, 5),
            record("c", ModelKind::NegExp, 0.01, 500),
        ];
        let rep = CorpusReport::build(&recs, GroupBy::Popularity);
        let names: Vec<_> = rep.groups.iter().map(|g| g.group.as_str()).collect();
        assert_eq!(names, ["EUP", "UP", "EP"]);
        let mut buf = Vec::new();
        rep.write_distribution_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("model,EUP,UP,EP\n"));
        assert!(text.contains("\nlinear,100.00,0.00,100.00\n"));
        let by_cat = CorpusReport::build(&recs, GroupBy::Category);
        assert_eq!(by_cat.groups.len(), 2);
    }

    #[test]
    fn mer_bins_are_right_closed() {
        assert_eq!(mer_bin(0.0), 0);
        assert_eq!(mer_bin(0.05), 0);
        assert_eq!(mer_bin(0.050001), 1);
        assert_eq!(mer_bin(0.1), 1);
        assert_eq!(mer_bin(0.1000001), 2);
    }
}
