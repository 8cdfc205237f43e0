//! CSV and NDJSON dataset files.
//!
//! CSV: header `stream_id,t_ms,label,logit_0..logit_{K-1}`, one record per
//! row. NDJSON: one object per line with the same keys. Floats are written
//! in shortest round-trip form, so save → load is bit-exact. On load,
//! records are regrouped by stream (first-appearance order) with time order
//! validated within each stream.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::datamodel::{Dataset, LogitRecord, SplitTag};
use crate::error::{Error, Result};
use crate::num::Scalar;

/// On-disk dataset encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Ndjson,
}

impl FileFormat {
    /// Infers the format from a file extension, defaulting to NDJSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => FileFormat::Csv,
            _ => FileFormat::Ndjson,
        }
    }
}

impl std::str::FromStr for FileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(FileFormat::Csv),
            "ndjson" => Ok(FileFormat::Ndjson),
            other => Err(Error::invalid(format!(
                "unknown format {other:?}, expected csv or ndjson"
            ))),
        }
    }
}

/// Loads and validates a dataset, regrouping records per stream.
pub fn load_dataset<S: Scalar>(path: &Path, format: FileFormat) -> Result<Dataset<S>> {
    let (k, records) = match format {
        FileFormat::Csv => read_csv(path)?,
        FileFormat::Ndjson => read_ndjson(path)?,
    };
    let regrouped = group_by_stream(records);
    Dataset::new(k, regrouped, SplitTag::Unsplit)
}

/// Writes a dataset atomically (temp file + rename).
///
/// The split tag is not persisted; `load_dataset` of the result reproduces
/// the class count and records exactly.
pub fn save_dataset<S: Scalar>(ds: &Dataset<S>, path: &Path, format: FileFormat) -> Result<()> {
    atomic_write(path, |out| match format {
        FileFormat::Csv => write_csv(ds, out),
        FileFormat::Ndjson => write_ndjson(ds, out),
    })
}

/// Writes a file via a temp file in the same directory plus an atomic rename.
pub fn atomic_write<F>(path: &Path, write_fn: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    write_fn(&mut tmp)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Stable regrouping: all records of the first-seen stream, then the next.
fn group_by_stream<S>(records: Vec<LogitRecord<S>>) -> Vec<LogitRecord<S>> {
    let mut order: Vec<String> = Vec::new();
    let mut buckets: std::collections::HashMap<String, Vec<LogitRecord<S>>> =
        std::collections::HashMap::new();
    for r in records {
        if !buckets.contains_key(&r.stream_id) {
            order.push(r.stream_id.clone());
        }
        buckets.entry(r.stream_id.clone()).or_default().push(r);
    }
    let mut out = Vec::new();
    for id in order {
        out.extend(buckets.remove(&id).unwrap_or_default());
    }
    out
}

fn schema_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Schema {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_csv<S: Scalar>(path: &Path) -> Result<(usize, Vec<LogitRecord<S>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
            }
            _ => schema_err(path, e.to_string()),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| schema_err(path, format!("cannot read header: {e}")))?
        .clone();
    let k = validate_csv_header(path, &headers)?;

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 + k {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", 3 + k, row.len()),
            ));
        }
        let stream_id = row[0].to_string();
        let t_ms: i64 = row[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid t_ms {:?}", &row[1])))?;
        let label: usize = row[2]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid label {:?}", &row[2])))?;
        let mut logits = Vec::with_capacity(k);
        for i in 0..k {
            let field = &row[3 + i];
            let value: S = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("invalid logit_{i} {field:?}")))?;
            if !value.is_finite() {
                return Err(parse_err(
                    path,
                    line,
                    format!("logit_{i} = {field:?} is not finite"),
                ));
            }
            logits.push(value);
        }
        if label >= k {
            return Err(parse_err(
                path,
                line,
                format!("label {label} out of range [0, {k})"),
            ));
        }
        records.push(LogitRecord {
            stream_id,
            t_ms,
            logits,
            label,
        });
    }
    Ok((k, records))
}

fn validate_csv_header(path: &Path, headers: &csv::StringRecord) -> Result<usize> {
    let fields: Vec<&str> = headers.iter().collect();
    if fields.len() < 4 {
        return Err(schema_err(
            path,
            format!("header has {} columns, need at least 4", fields.len()),
        ));
    }
    if fields[0] != "stream_id" || fields[1] != "t_ms" || fields[2] != "label" {
        return Err(schema_err(
            path,
            "header must start with stream_id,t_ms,label",
        ));
    }
    let k = fields.len() - 3;
    for (i, name) in fields[3..].iter().enumerate() {
        let expected = format!("logit_{i}");
        if *name != expected {
            return Err(schema_err(
                path,
                format!("column {} is {name:?}, expected {expected:?}", i + 3),
            ));
        }
    }
    if k < 2 {
        return Err(schema_err(path, format!("class count {k} must be >= 2")));
    }
    Ok(k)
}

fn write_csv<S: Scalar>(ds: &Dataset<S>, out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "stream_id".to_string(),
        "t_ms".to_string(),
        "label".to_string(),
    ];
    for i in 0..ds.k() {
        header.push(format!("logit_{i}"));
    }
    w.write_record(&header).map_err(csv_io)?;
    for r in ds.records() {
        let mut row = vec![r.stream_id.clone(), r.t_ms.to_string(), r.label.to_string()];
        for l in &r.logits {
            row.push(format!("{l}"));
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn read_ndjson<S: Scalar>(path: &Path) -> Result<(usize, Vec<LogitRecord<S>>)> {
    let file = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let reader = BufReader::new(file);

    let mut k: Option<usize> = None;
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| parse_err(path, line_no, format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| parse_err(path, line_no, "line is not a JSON object"))?;

        let stream_id = obj
            .get("stream_id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| parse_err(path, line_no, "missing string stream_id"))?
            .to_string();
        let t_ms = obj
            .get("t_ms")
            .and_then(|v| v.as_i64())
            .ok_or_else(|| parse_err(path, line_no, "missing integer t_ms"))?;
        let label = obj
            .get("label")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| parse_err(path, line_no, "missing integer label"))?
            as usize;

        let logit_keys = obj.keys().filter(|key| key.starts_with("logit_")).count();
        let this_k = match k {
            Some(k) => {
                if logit_keys != k {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("record has {logit_keys} logit keys, expected {k}"),
                    ));
                }
                k
            }
            None => {
                if logit_keys < 2 {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("class count {logit_keys} must be >= 2"),
                    ));
                }
                k = Some(logit_keys);
                logit_keys
            }
        };

        let mut logits = Vec::with_capacity(this_k);
        for i in 0..this_k {
            let key = format!("logit_{i}");
            let raw = obj
                .get(&key)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| parse_err(path, line_no, format!("missing number {key}")))?;
            let value = S::from_f64(raw).ok_or_else(|| {
                parse_err(path, line_no, format!("{key} = {raw} not representable"))
            })?;
            if !value.is_finite() {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("{key} = {raw} is not finite"),
                ));
            }
            logits.push(value);
        }
        if label >= this_k {
            return Err(parse_err(
                path,
                line_no,
                format!("label {label} out of range [0, {this_k})"),
            ));
        }
        records.push(LogitRecord {
            stream_id,
            t_ms,
            logits,
            label,
        });
    }

    match k {
        Some(k) => Ok((k, records)),
        None => Err(schema_err(
            path,
            "empty NDJSON file: class count cannot be inferred (use CSV for empty datasets)",
        )),
    }
}

fn write_ndjson<S: Scalar>(ds: &Dataset<S>, out: &mut dyn Write) -> Result<()> {
    for r in ds.records() {
        let mut line = String::with_capacity(64 + 24 * r.logits.len());
        line.push_str("{\"stream_id\":");
        line.push_str(&serde_json::to_string(&r.stream_id).expect("string serializes"));
        line.push_str(",\"t_ms\":");
        line.push_str(&r.t_ms.to_string());
        line.push_str(",\"label\":");
        line.push_str(&r.label.to_string());
        for (i, l) in r.logits.iter().enumerate() {
            line.push_str(",\"logit_");
            line.push_str(&i.to_string());
            line.push_str("\":");
            line.push_str(&serde_json::to_string(l).expect("finite float serializes"));
        }
        line.push('}');
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}
