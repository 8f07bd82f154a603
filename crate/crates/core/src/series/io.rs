//! CSV and JSON ingestion and emission of series records.
//!
//! CSV: a main file with header `id,t,y` (one row per observation, rows of a
//! record contiguous) and an optional metadata sidecar with header
//! `id,title,category,age_days,total_views` where every column but `id` may be
//! empty.  JSON: an array of
//! `{id, title?, category?, age_days, total_views?, observations: [[t, y], ...]}`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Category, Observation, SeriesRecord};
use crate::error::{Error, Result};

/// A record that failed validation, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub code: String,
    pub message: String,
}

impl Rejection {
    fn new(id: &str, err: &Error) -> Self {
        Self {
            id: id.to_string(),
            code: err.code().to_string(),
            message: err.to_string(),
        }
    }
}

/// Result of reading one input: valid records in file order plus per-record
/// rejections.
#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub records: Vec<SeriesRecord>,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    id: String,
    t: f64,
    y: f64,
}

#[derive(Debug, Deserialize)]
struct MetaRow {
    id: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    age_days: Option<u32>,
    #[serde(default)]
    total_views: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    age_days: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    total_views: Option<u64>,
    observations: Vec<(f64, f64)>,
}

struct Meta {
    title: Option<String>,
    category: Option<Category>,
    age_days: Option<u32>,
    total_views: Option<u64>,
}

fn csv_locus(pos: Option<&csv::Position>) -> String {
    pos.map(|p| format!("line {}", p.line()))
        .unwrap_or_else(|| "unknown line".into())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse {
        locus: csv_locus(e.position()),
        message: e.to_string(),
    }
}

fn read_meta<R: Read>(reader: R) -> Result<HashMap<String, Meta>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = HashMap::new();
    for row in rdr.deserialize::<MetaRow>() {
        let row = row.map_err(csv_error)?;
        out.insert(
            row.id,
            Meta {
                title: row.title.filter(|s| !s.is_empty()),
                category: row
                    .category
                    .filter(|s| !s.is_empty())
                    .map(|s| Category::parse_lenient(&s)),
                age_days: row.age_days,
                total_views: row.total_views,
            },
        );
    }
    Ok(out)
}

fn build_record(id: String, obs: Vec<Observation>, meta: Option<&Meta>) -> Result<SeriesRecord> {
    let mut rec = SeriesRecord::new(id, obs)?;
    if let Some(m) = meta {
        if let Some(t) = &m.title {
            rec = rec.with_title(t.clone());
        }
        if let Some(c) = m.category {
            rec = rec.with_category(c);
        }
        if let Some(a) = m.age_days {
            rec = rec.with_age_days(a);
        }
        if let Some(v) = m.total_views {
            rec = rec.with_total_views(v)?;
        }
    }
    Ok(rec)
}

/// Reads the `id,t,y` CSV format, optionally joined with a metadata sidecar.
///
/// A malformed row or a record whose rows are not contiguous aborts the read
/// with a [`Error::Parse`] naming the line; invariant violations only reject
/// the offending record.
pub fn ingest_csv<R: Read, M: Read>(reader: R, meta: Option<M>) -> Result<Ingested> {
    let meta = match meta {
        Some(m) => read_meta(m)?,
        None => HashMap::new(),
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut groups: Vec<(String, Vec<Observation>)> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut raw = csv::StringRecord::new();
    let headers = rdr.headers().map_err(csv_error)?.clone();
    while rdr.read_record(&mut raw).map_err(csv_error)? {
        let row: CsvRow = raw.deserialize(Some(&headers)).map_err(csv_error)?;
        let current = groups.last().map(|(id, _)| id.as_str());
        if current != Some(row.id.as_str()) {
            if seen.contains_key(&row.id) {
                return Err(Error::Parse {
                    locus: csv_locus(raw.position()),
                    message: format!("rows of record {:?} are not contiguous", row.id),
                });
            }
            seen.insert(row.id.clone(), groups.len());
            groups.push((row.id.clone(), Vec::new()));
        }
        groups
            .last_mut()
            .expect("group pushed above")
            .1
            .push(Observation::new(row.t, row.y));
    }
    let mut out = Ingested::default();
    for (id, obs) in groups {
        match build_record(id.clone(), obs, meta.get(&id)) {
            Ok(rec) => out.records.push(rec),
            Err(e) => out.rejected.push(Rejection::new(&id, &e)),
        }
    }
    Ok(out)
}

/// Reads the JSON array format.
pub fn ingest_json<R: Read>(reader: R) -> Result<Ingested> {
    let values: Vec<serde_json::Value> = serde_json::from_reader(reader).map_err(|e| Error::Parse {
        locus: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut out = Ingested::default();
    for (i, value) in values.into_iter().enumerate() {
        let rec: JsonRecord = serde_json::from_value(value).map_err(|e| Error::Parse {
            locus: format!("record {i}"),
            message: e.to_string(),
        })?;
        let meta = Meta {
            title: rec.title,
            category: rec.category.map(|c| Category::parse_lenient(&c)),
            age_days: Some(rec.age_days),
            total_views: rec.total_views,
        };
        let obs = rec
            .observations
            .into_iter()
            .map(|(t, y)| Observation::new(t, y))
            .collect();
        match build_record(rec.id.clone(), obs, Some(&meta)) {
            Ok(r) => out.records.push(r),
            Err(e) => out.rejected.push(Rejection::new(&rec.id, &e)),
        }
    }
    Ok(out)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn ingest_csv_path(path: &Path, meta: Option<&Path>) -> Result<Ingested> {
    let main = open(path)?;
    match meta {
        Some(m) => ingest_csv(main, Some(open(m)?)),
        None => ingest_csv::<_, File>(main, None),
    }
}

pub fn ingest_json_path(path: &Path) -> Result<Ingested> {
    ingest_json(open(path)?)
}

/// Dispatches on the file extension (`.json` or anything else as CSV).  For
/// CSV without an explicit sidecar, `<stem>.meta.csv` next to the input is
/// used when it exists.
pub fn ingest_path(path: &Path, meta: Option<&Path>) -> Result<Ingested> {
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        return ingest_json_path(path);
    }
    let sibling = path
        .file_stem()
        .map(|s| path.with_file_name(format!("{}.meta.csv", s.to_string_lossy())));
    match meta {
        Some(m) => ingest_csv_path(path, Some(m)),
        None => match sibling.filter(|p| p.exists()) {
            Some(p) => ingest_csv_path(path, Some(&p)),
            None => ingest_csv_path(path, None),
        },
    }
}

/// Writes the `id,t,y` CSV.  Reals use the shortest round-trip form.
pub fn write_csv<W: Write>(records: &[SeriesRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "t", "y"]).map_err(csv_error)?;
    for rec in records {
        for o in rec.observations() {
            w.write_record([rec.id(), &o.t.to_string(), &o.y.to_string()])
                .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the metadata sidecar matching [`write_csv`].
pub fn write_metadata_csv<W: Write>(records: &[SeriesRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "title", "category", "age_days", "total_views"])
        .map_err(csv_error)?;
    for rec in records {
        w.write_record([
            rec.id(),
            rec.title().unwrap_or(""),
            rec.category().map(|c| c.as_str()).unwrap_or(""),
            &rec.age_days().to_string(),
            &rec.total_views().map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the JSON array format.
pub fn write_json<W: Write>(records: &[SeriesRecord], writer: W) -> Result<()> {
    let out: Vec<JsonRecord> = records
        .iter()
        .map(|r| JsonRecord {
            id: r.id().to_string(),
            title: r.title().map(str::to_string),
            category: r.category().map(|c| c.as_str().to_string()),
            age_days: r.age_days(),
            total_views: r.total_views(),
            observations: r.observations().iter().map(|o| (o.t, o.y)).collect(),
        })
        .collect();
    serde_json::to_writer(writer, &out).map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const NO_META: Option<&[u8]> = None;

    #[test]
    fn reads_valid_record() {
        let data = "id,t,y\na,1,2\na,2,4\na,3,8\n";
        let ing = ingest_csv(data.as_bytes(), NO_META).unwrap();
        assert_eq!(ing.records.len(), 1);
        assert!(ing.rejected.is_empty());
        assert_eq!(ing.records[0].values(), vec![2.0, 4.0, 8.0]);
    }

    #[test]
    fn rejects_per_record() {
        let data = "id,t,y\na,1,5\na,2,3\nb,1,1\nc,1,1\nc,2,2\n";
        let ing = ingest_csv(data.as_bytes(), NO_META).unwrap();
        assert_eq!(ing.records.len(), 1);
        assert_eq!(ing.records[0].id(), "c");
        let codes: Vec<_> = ing.rejected.iter().map(|r| r.code.as_str()).collect();
        assert_eq!(codes, ["NON_MONOTONE", "TOO_SHORT"]);
    }

    #[test]
    fn malformed_row_is_fatal_with_line() {
        let data = "id,t,y\na,1,2\na,two,4\n";
        let err = ingest_csv(data.as_bytes(), NO_META).unwrap_err();
        match err {
            Error::Parse { locus, .. } => assert_eq!(locus, "line 3"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_contiguous_ids_are_fatal() {
        let data = "id,t,y\na,1,2\nb,1,1\na,2,4\n";
        assert_eq!(
            ingest_csv(data.as_bytes(), NO_META).unwrap_err().code(),
            "PARSE_ERROR"
        );
    }

    #[test]
    fn metadata_sidecar_is_joined() {
        let data = "id,t,y\na,1,2\na,2,40\n";
        let meta = "id,title,category,age_days,total_views\na,Hello,Podcasts,9,40\n";
        let ing = ingest_csv(data.as_bytes(), Some(meta.as_bytes())).unwrap();
        let rec = &ing.records[0];
        assert_eq!(rec.title(), Some("Hello"));
        assert_eq!(rec.category(), Some(Category::Other));
        assert_eq!(rec.age_days(), 9);
        assert_eq!(rec.total_views(), Some(40));
    }

    #[test]
    fn json_roundtrip_and_errors() {
        let data = r#"[{"id":"x","category":"Music","age_days":3,"observations":[[0,1],[1,2],[3,5]]},
                       {"id":"y","age_days":2,"observations":[[0,5],[1,3]]}]"#;
        let ing = ingest_json(data.as_bytes()).unwrap();
        assert_eq!(ing.records.len(), 1);
        assert_eq!(ing.rejected[0].code, "NON_MONOTONE");
        let mut buf = Vec::new();
        write_json(&ing.records, &mut buf).unwrap();
        let again = ingest_json(buf.as_slice()).unwrap();
        assert_eq!(again.records, ing.records);

        let err = ingest_json("[{\"id\":1}]".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { ref locus, .. } if locus == "record 0"));
        assert_eq!(ingest_json("[".as_bytes()).unwrap_err().code(), "PARSE_ERROR");
    }
}
