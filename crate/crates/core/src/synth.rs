//! Seeded synthetic corpora with known generating model.
//!
//! A series is the closed form of its kind sampled at `u_i = i/n`,
//! `i = 1..=n`, multiplied point-wise by `(1 + σ ε_i)` with `ε_i ~ N(0, 1)`,
//! clipped at zero and repaired into a cumulative curve by a running maximum.
//! Randomness comes from [`crate::rng`], one sub-stream per record, so a
//! corpus does not depend on generation order.

use std::io::{Read, Write};
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{self, ModelKind, ParamSet};
use crate::rng::Rng;
use crate::series::{Observation, SeriesRecord};

pub const S0_RANGE: RangeInclusive<f64> = 0.01..=0.2;
pub const M_RANGE: RangeInclusive<f64> = 0.7..=1.0;
pub const LAMBDA_RANGE: RangeInclusive<f64> = 2.0..=20.0;
pub const K_RANGE: RangeInclusive<f64> = 0.05..=0.3;

/// Conversion of a normalized synthetic curve into days and views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub days: f64,
    pub views: f64,
}

/// Everything needed to generate one series.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub id: String,
    pub kind: ModelKind,
    pub params: ParamSet,
    pub n: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub scale: Option<Scale>,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.n < 6 {
            return Err(Error::InvalidConfig(format!("n = {} < 6", self.n)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig("noise_sigma must be >= 0".into()));
        }
        if !self.params.is_valid_for(self.kind) {
            return Err(Error::InvalidConfig(format!(
                "parameters {:?} invalid for {}",
                self.params, self.kind
            )));
        }
        Ok(())
    }
}

/// Ground truth attached to a generated record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub id: String,
    pub kind: ModelKind,
    pub params: ParamSet,
    pub noise_sigma: f64,
}

/// Immigration rate below which a modified kind counts as its base.
pub const SMALL_K: f64 = 0.02;

impl Label {
    /// Whether `selected` recovers the generating kind.  A base kind and its
    /// modified variant match each other when the generator is the base kind
    /// or its `k` is below [`SMALL_K`].
    pub fn matches(&self, selected: Option<ModelKind>) -> bool {
        let Some(kind) = selected else {
            return false;
        };
        if kind == self.kind {
            return true;
        }
        let paired = kind.base() == self.kind.base();
        paired && (!self.kind.is_modified() || self.params.k < SMALL_K)
    }
}

/// Generates one record and its label.
pub fn generate(spec: &SynthSpec) -> Result<(SeriesRecord, Label)> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let n = spec.n;
    let mut running: f64 = 0.0;
    let mut obs = Vec::with_capacity(n);
    for i in 1..=n {
        let u = i as f64 / n as f64;
        let clean = models::evaluate(spec.kind, &spec.params, u)?;
        let value = if spec.noise_sigma > 0.0 {
            (clean * (1.0 + spec.noise_sigma * rng.standard_normal())).max(0.0)
        } else {
            clean
        };
        running = running.max(value);
        obs.push(match spec.scale {
            Some(s) => Observation::new(u * s.days, running * s.views),
            None => Observation::new(u, running),
        });
    }
    let mut record = SeriesRecord::new(spec.id.clone(), obs)?;
    if let Some(s) = spec.scale {
        let total = record.last().y.round() as u64;
        record = record
            .with_age_days(s.days.ceil() as u32)
            .with_total_views(total)?;
    }
    let label = Label {
        id: spec.id.clone(),
        kind: spec.kind,
        params: spec.params,
        noise_sigma: spec.noise_sigma,
    };
    Ok((record, label))
}

/// One entry of a corpus mix: `count` series of `kind`.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub kind: ModelKind,
    pub count: usize,
    pub n: usize,
    pub noise_sigma: f64,
    pub scale: Option<Scale>,
}

/// Generated corpus: records and labels in the same order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub records: Vec<SeriesRecord>,
    pub labels: Vec<Label>,
}

/// Draws parameters for `kind` uniformly from the documented ranges.
pub fn draw_params(kind: ModelKind, rng: &mut Rng) -> ParamSet {
    let mut draw = |r: &RangeInclusive<f64>| rng.uniform_in(*r.start(), *r.end());
    let s0 = draw(&S0_RANGE);
    let m = draw(&M_RANGE);
    let lambda = draw(&LAMBDA_RANGE);
    let k = draw(&K_RANGE);
    match kind {
        ModelKind::Linear => ParamSet::linear(s0, lambda),
        k_ if k_.is_modified() => ParamSet::new(s0, m, lambda, k),
        _ => ParamSet::new(s0, m, lambda, 0.0),
    }
}

/// Generates every template's records.  Record `j` (counting across the
/// whole mix) is named `syn-<j>` and uses sub-stream `j` of `seed` for both
/// its parameter draw and its noise.
pub fn generate_corpus(mix: &[Template], seed: u64) -> Result<Corpus> {
    let mut jobs = Vec::new();
    for t in mix {
        if t.count == 0 {
            return Err(Error::InvalidConfig(format!("zero count for {}", t.kind)));
        }
        for _ in 0..t.count {
            jobs.push(t);
        }
    }
    let generated: Vec<(SeriesRecord, Label)> = jobs
        .par_iter()
        .enumerate()
        .map(|(j, t)| {
            let mut rng = Rng::stream(seed, j as u64);
            let params = draw_params(t.kind, &mut rng);
            generate(&SynthSpec {
                id: format!("syn-{j:05}"),
                kind: t.kind,
                params,
                n: t.n,
                noise_sigma: t.noise_sigma,
                seed: rng.next_u64(),
                scale: t.scale,
            })
        })
        .collect::<Result<_>>()?;
    let (records, labels) = generated.into_iter().unzip();
    Ok(Corpus { records, labels })
}

/// Writes labels as `id,kind,S0,M,lambda,k,noise_sigma`.
pub fn write_labels<W: Write>(labels: &[Label], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["id", "kind", "S0", "M", "lambda", "k", "noise_sigma"])
        .map_err(err)?;
    for l in labels {
        w.write_record([
            l.id.clone(),
            l.kind.to_string(),
            l.params.s0.to_string(),
            l.params.m.to_string(),
            l.params.lambda.to_string(),
            l.params.k.to_string(),
            l.noise_sigma.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct LabelRow {
    id: String,
    kind: String,
    #[serde(rename = "S0")]
    s0: f64,
    #[serde(rename = "M")]
    m: f64,
    lambda: f64,
    k: f64,
    noise_sigma: f64,
}

/// Reads a labels file written by [`write_labels`].
pub fn read_labels<R: Read>(reader: R) -> Result<Vec<Label>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize::<LabelRow>()
        .map(|row| {
            let row = row.map_err(|e| Error::Parse {
                locus: e
                    .position()
                    .map(|p| format!("line {}", p.line()))
                    .unwrap_or_default(),
                message: e.to_string(),
            })?;
            Ok(Label {
                id: row.id,
                kind: row.kind.parse()?,
                params: ParamSet::new(row.s0, row.m, row.lambda, row.k),
                noise_sigma: row.noise_sigma,
            })
        })
        .collect()
}
