//! Cumulative view-count series: data model, validation and normalization.

mod io;

pub use io::{
    ingest_csv, ingest_csv_path, ingest_json, ingest_json_path, ingest_path, write_csv,
    write_json, write_metadata_csv, Ingested, Rejection,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sample of a cumulative trajectory: `y` views counted by day `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub y: f64,
}

impl Observation {
    pub fn new(t: f64, y: f64) -> Self {
        Self { t, y }
    }
}

/// Platform category of a video.  Anything outside the known list maps to
/// [`Category::Other`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Animals,
    Autos,
    Comedy,
    Education,
    Entertainment,
    Film,
    Games,
    Howto,
    Music,
    News,
    Nonprofit,
    People,
    Shows,
    Sports,
    Tech,
    Travel,
    Other,
}

impl Category {
    pub const ALL: [Category; 17] = [
        Category::Animals,
        Category::Autos,
        Category::Comedy,
        Category::Education,
        Category::Entertainment,
        Category::Film,
        Category::Games,
        Category::Howto,
        Category::Music,
        Category::News,
        Category::Nonprofit,
        Category::People,
        Category::Shows,
        Category::Sports,
        Category::Tech,
        Category::Travel,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Animals => "Animals",
            Category::Autos => "Autos",
            Category::Comedy => "Comedy",
            Category::Education => "Education",
            Category::Entertainment => "Entertainment",
            Category::Film => "Film",
            Category::Games => "Games",
            Category::Howto => "Howto",
            Category::Music => "Music",
            Category::News => "News",
            Category::Nonprofit => "Nonprofit",
            Category::People => "People",
            Category::Shows => "Shows",
            Category::Sports => "Sports",
            Category::Tech => "Tech",
            Category::Travel => "Travel",
            Category::Other => "Other",
        }
    }

    /// Case-insensitive lookup; never fails.
    pub fn parse_lenient(s: &str) -> Category {
        let s = s.trim();
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .unwrap_or(Category::Other)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Seven log-scale buckets of total views, lower bound inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PopularityClass {
    /// `0 <= V < 10`
    Eup,
    /// `10 <= V < 100`
    Vup,
    /// `100 <= V < 1000`
    Up,
    /// `1000 <= V < 10^4`
    Nsp,
    /// `10^4 <= V < 10^5`
    P,
    /// `10^5 <= V < 10^6`
    Vp,
    /// `10^6 <= V`
    Ep,
}

impl PopularityClass {
    pub const ALL: [PopularityClass; 7] = [
        PopularityClass::Eup,
        PopularityClass::Vup,
        PopularityClass::Up,
        PopularityClass::Nsp,
        PopularityClass::P,
        PopularityClass::Vp,
        PopularityClass::Ep,
    ];

    pub fn from_views(total_views: u64) -> Self {
        match total_views {
            0..=9 => PopularityClass::Eup,
            10..=99 => PopularityClass::Vup,
            100..=999 => PopularityClass::Up,
            1_000..=9_999 => PopularityClass::Nsp,
            10_000..=99_999 => PopularityClass::P,
            100_000..=999_999 => PopularityClass::Vp,
            _ => PopularityClass::Ep,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PopularityClass::Eup => "EUP",
            PopularityClass::Vup => "VUP",
            PopularityClass::Up => "UP",
            PopularityClass::Nsp => "NSP",
            PopularityClass::P => "P",
            PopularityClass::Vp => "VP",
            PopularityClass::Ep => "EP",
        }
    }
}

impl fmt::Display for PopularityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PopularityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PopularityClass::ALL
            .iter()
            .copied()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse {
                locus: "popularity class".into(),
                message: format!("unknown class {s:?}"),
            })
    }
}

/// Popularity class of a total view count.
pub fn popularity_class(total_views: u64) -> PopularityClass {
    PopularityClass::from_views(total_views)
}

/// A video's metadata plus its validated cumulative trajectory.
///
/// Invariants, checked by [`SeriesRecord::new`]: at least two observations,
/// `t` strictly increasing from `t_1 >= 0`, `y` finite, non-negative and
/// non-decreasing, and `total_views` (when set) equal to the last `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRecord {
    id: String,
    title: Option<String>,
    category: Option<Category>,
    age_days: u32,
    total_views: Option<u64>,
    observations: Vec<Observation>,
}

impl SeriesRecord {
    /// Validates `observations`; age defaults to the last time stamp rounded up.
    pub fn new(id: impl Into<String>, observations: Vec<Observation>) -> Result<Self> {
        validate_observations(&observations)?;
        let t_n = observations.last().map(|o| o.t).unwrap_or(0.0);
        Ok(Self {
            id: id.into(),
            title: None,
            category: None,
            age_days: (t_n.ceil() as u32).max(1),
            total_views: None,
            observations,
        })
    }

    /// Shorthand for `new` from parallel `t`/`y` slices.
    pub fn from_points(id: impl Into<String>, t: &[f64], y: &[f64]) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::Shape {
                left: t.len(),
                right: y.len(),
            });
        }
        let obs = t.iter().zip(y).map(|(&t, &y)| Observation::new(t, y)).collect();
        Self::new(id, obs)
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.title = Some(title.into());
        self
    }

    pub fn with_category(mut self, category: Category) -> Self {
        self.category = Some(category);
        self
    }

    pub fn with_age_days(mut self, age_days: u32) -> Self {
        self.age_days = age_days.max(1);
        self
    }

    /// Sets the total view count, checking it against the last observation
    /// (within half a view, since observations are stored as reals).
    pub fn with_total_views(mut self, total_views: u64) -> Result<Self> {
        let last = self.last().y;
        if (total_views as f64 - last).abs() > 0.5 {
            return Err(Error::TotalMismatch {
                total: total_views,
                last,
            });
        }
        self.total_views = Some(total_views);
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn title(&self) -> Option<&str> {
        self.title.as_deref()
    }

    pub fn category(&self) -> Option<Category> {
        self.category
    }

    pub fn age_days(&self) -> u32 {
        self.age_days
    }

    pub fn total_views(&self) -> Option<u64> {
        self.total_views
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn last(&self) -> Observation {
        *self.observations.last().expect("validated record is non-empty")
    }

    pub fn times(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.t).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.y).collect()
    }

    /// Total views used for popularity grouping: the explicit total when
    /// present, otherwise the rounded last observation.
    pub fn popularity_views(&self) -> u64 {
        self.total_views
            .unwrap_or_else(|| self.last().y.round().max(0.0) as u64)
    }

    pub fn popularity_class(&self) -> PopularityClass {
        PopularityClass::from_views(self.popularity_views())
    }

    /// Prefix with every observation up to and including index `end`.
    /// Metadata other than the id is carried over; total views is dropped.
    pub fn prefix(&self, end: usize) -> Result<SeriesRecord> {
        let obs = self.observations[..=end.min(self.len() - 1)].to_vec();
        let mut rec = SeriesRecord::new(self.id.clone(), obs)?;
        rec.title = self.title.clone();
        rec.category = self.category;
        Ok(rec)
    }
}

fn validate_observations(obs: &[Observation]) -> Result<()> {
    if obs.len() < 2 {
        return Err(Error::TooShort {
            len: obs.len(),
            min: 2,
        });
    }
    for (i, o) in obs.iter().enumerate() {
        if !o.t.is_finite() || !o.y.is_finite() {
            return Err(Error::NonFinite { index: i });
        }
        if o.y < 0.0 {
            return Err(Error::NonMonotone { index: i });
        }
    }
    if obs[0].t < 0.0 {
        return Err(Error::BadTimeAxis { index: 0 });
    }
    for (i, w) in obs.windows(2).enumerate() {
        if w[1].t <= w[0].t {
            return Err(Error::BadTimeAxis { index: i + 1 });
        }
        if w[1].y < w[0].y {
            return Err(Error::NonMonotone { index: i + 1 });
        }
    }
    Ok(())
}

/// Observations scaled into the unit square by the last sample.
///
/// `u_i = t_i / t_n`, `v_i = y_i / y_n`; the last point is exactly `(1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeries {
    u: Vec<f64>,
    v: Vec<f64>,
    time_scale: f64,
    value_scale: f64,
}

impl NormalizedSeries {
    /// Normalizes raw `(t, y)` pairs.  `t` must be strictly increasing and
    /// `y` non-decreasing; only the degenerate-scale checks are repeated here.
    pub fn from_raw(t: &[f64], y: &[f64]) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::Shape {
                left: t.len(),
                right: y.len(),
            });
        }
        if t.len() < 2 {
            return Err(Error::TooShort {
                len: t.len(),
                min: 2,
            });
        }
        let t_n = t[t.len() - 1];
        let y_n = y[y.len() - 1];
        if y_n <= 0.0 {
            return Err(Error::DegenerateZeroViews);
        }
        if t_n <= 0.0 {
            return Err(Error::DegenerateZeroAge);
        }
        Ok(Self {
            u: t.iter().map(|&t| t / t_n).collect(),
            v: y.iter().map(|&y| y / y_n).collect(),
            time_scale: t_n,
            value_scale: y_n,
        })
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Days corresponding to `u = 1`.
    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    /// Views corresponding to `v = 1`.
    pub fn value_scale(&self) -> f64 {
        self.value_scale
    }

    /// Observations mapped back to days and views.
    pub fn denormalize(&self) -> Vec<Observation> {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(&u, &v)| Observation::new(u * self.time_scale, v * self.value_scale))
            .collect()
    }

    /// Points `start..end` renormalized so that the new last point is `(1, 1)`.
    /// The scales compose with the parent's, so denormalization still lands in
    /// raw units.
    pub fn segment(&self, start: usize, end: usize) -> Result<NormalizedSeries> {
        let end = end.min(self.len());
        let mut seg = NormalizedSeries::from_raw(&self.u[start..end], &self.v[start..end])?;
        seg.time_scale *= self.time_scale;
        seg.value_scale *= self.value_scale;
        Ok(seg)
    }
}

/// Maps a validated record into the unit square.
pub fn normalize(record: &SeriesRecord) -> Result<NormalizedSeries> {
    NormalizedSeries::from_raw(&record.times(), &record.values())
}

/// Running sum of daily increments.
pub fn cumulate(daily: &[f64]) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    daily
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if !(d >= 0.0) {
                return Err(Error::NegativeIncrement { index: i, value: d });
            }
            acc += d;
            Ok(acc)
        })
        .collect()
}
