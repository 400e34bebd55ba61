//! Prediction files: `N` rows of `K` scores plus an integer label.
//!
//! CSV files start with a `format=logits|probs,K=<int>` line. JSON-lines
//! files start with `{"format": ..., "K": ...}` followed by one
//! `{"values": [...], "label": ...}` object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use cmcal_core::{softmax, EvalBatch, LogitVector, ProbVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Logits,
    Probs,
}

impl FromStr for ValueKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logits" => Ok(ValueKind::Logits),
            "probs" => Ok(ValueKind::Probs),
            other => Err(CliError::Header(format!("unknown value format {other:?}"))),
        }
    }
}

impl ValueKind {
    fn as_str(self) -> &'static str {
        match self {
            ValueKind::Logits => "logits",
            ValueKind::Probs => "probs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Csv,
    Jsonl,
}

impl FromStr for FileFormat {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(FileFormat::Csv),
            "jsonl" | "json" => Ok(FileFormat::Jsonl),
            other => Err(CliError::Config(format!("unknown file format {other:?}"))),
        }
    }
}

impl FileFormat {
    /// `.jsonl`/`.json` files are JSON lines, everything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("json") => {
                FileFormat::Jsonl
            }
            _ => FileFormat::Csv,
        }
    }
}

/// Parsed predictions, already mapped onto the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitDataset {
    pub k: usize,
    pub source: ValueKind,
    pub probs: Vec<ProbVector<f64>>,
    pub labels: Vec<usize>,
}

impl LogitDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_batch(&self) -> CliResult<EvalBatch<f64>> {
        Ok(EvalBatch::new(self.probs.clone(), self.labels.clone())?)
    }

    pub fn subset(&self, indices: &[usize]) -> CliResult<EvalBatch<f64>> {
        Ok(EvalBatch::new(
            indices.iter().map(|&i| self.probs[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )?)
    }
}

pub fn load_dataset(path: &Path, format: Option<FileFormat>) -> CliResult<LogitDataset> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    match format.unwrap_or_else(|| FileFormat::from_path(path)) {
        FileFormat::Csv => read_csv(file),
        FileFormat::Jsonl => read_jsonl(BufReader::new(file)),
    }
}

fn parse_header(fields: &[&str]) -> CliResult<(ValueKind, usize)> {
    let mut kind = None;
    let mut k = None;
    for f in fields {
        let (key, value) = f
            .split_once('=')
            .ok_or_else(|| CliError::Header(format!("expected key=value, got {f:?}")))?;
        match key.trim() {
            "format" => kind = Some(value.parse()?),
            "K" | "k" => {
                k = Some(
                    value
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| CliError::Header(format!("K must be an integer, got {value:?}")))?,
                )
            }
            other => return Err(CliError::Header(format!("unknown key {other:?}"))),
        }
    }
    match (kind, k) {
        (Some(kind), Some(k)) if k >= 2 => Ok((kind, k)),
        (Some(_), Some(k)) => Err(CliError::Header(format!("K must be >= 2, got {k}"))),
        _ => Err(CliError::Header("header needs both format and K".into())),
    }
}

/// Validates one row and maps it onto the simplex.
fn to_probs(kind: ValueKind, k: usize, values: Vec<f64>, label: i64, row: usize) -> CliResult<(ProbVector<f64>, usize)> {
    let err = |message: String| CliError::Parse { row, message };
    if values.len() != k {
        return Err(err(format!("expected {k} values, found {}", values.len())));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(err(format!("non-finite value {v}")));
    }
    if label < 0 || label as usize >= k {
        return Err(err(format!("label {label} outside 0..{k}")));
    }
    let p = match kind {
        ValueKind::Logits => softmax(&LogitVector::new(values).map_err(|e| err(e.to_string()))?),
        ValueKind::Probs => ProbVector::new(values).map_err(|e| err(e.to_string()))?,
    };
    Ok((p, label as usize))
}

fn finish(kind: ValueKind, k: usize, probs: Vec<ProbVector<f64>>, labels: Vec<usize>) -> CliResult<LogitDataset> {
    if labels.is_empty() {
        return Err(CliError::Parse {
            row: 1,
            message: "no data rows".into(),
        });
    }
    Ok(LogitDataset {
        k,
        source: kind,
        probs,
        labels,
    })
}

pub fn read_csv<R: Read>(reader: R) -> CliResult<LogitDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| CliError::Header("empty file".into()))??;
    let fields: Vec<&str> = header.iter().collect();
    let (kind, k) = parse_header(&fields)?;

    let (mut probs, mut labels) = (Vec::new(), Vec::new());
    for (i, record) in records.enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() < 2 {
            return Err(CliError::Parse {
                row,
                message: format!("expected {} fields, found {}", k + 1, record.len()),
            });
        }
        let values = record
            .iter()
            .take(record.len() - 1)
            .map(|s| {
                s.parse::<f64>().map_err(|_| CliError::Parse {
                    row,
                    message: format!("not a number: {s:?}"),
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let last = &record[record.len() - 1];
        let label = last.parse::<i64>().map_err(|_| CliError::Parse {
            row,
            message: format!("label must be an integer, got {last:?}"),
        })?;
        let (p, y) = to_probs(kind, k, values, label, row)?;
        probs.push(p);
        labels.push(y);
    }
    finish(kind, k, probs, labels)
}

#[derive(Deserialize)]
struct JsonHeader {
    format: String,
    #[serde(rename = "K", alias = "k")]
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    values: Vec<f64>,
    label: i64,
}

pub fn read_jsonl<R: BufRead>(reader: R) -> CliResult<LogitDataset> {
    let mut lines = reader
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let (_, first) = lines.next().ok_or_else(|| CliError::Header("empty file".into()))?;
    let first = first.map_err(|e| CliError::Header(e.to_string()))?;
    let header: JsonHeader =
        serde_json::from_str(&first).map_err(|e| CliError::Header(e.to_string()))?;
    let kind: ValueKind = header.format.parse()?;
    let (_, k) = parse_header(&[&format!("format={}", kind.as_str()), &format!("K={}", header.k)])?;

    let (mut probs, mut labels) = (Vec::new(), Vec::new());
    for (row, line) in lines {
        let err = |message: String| CliError::Parse { row, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        let parsed: JsonRow = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let (p, y) = to_probs(kind, k, parsed.values, parsed.label, row)?;
        probs.push(p);
        labels.push(y);
    }
    finish(kind, k, probs, labels)
}

/// Writes `rows` with labels in the given file format.
pub fn write_dataset(
    path: &Path,
    format: FileFormat,
    kind: ValueKind,
    rows: &[Vec<f64>],
    labels: &[usize],
) -> CliResult<()> {
    let k = rows.first().map_or(0, Vec::len);
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| CliError::io(path, e);
    match format {
        FileFormat::Csv => {
            writeln!(out, "format={},K={k}", kind.as_str()).map_err(io)?;
            for (r, y) in rows.iter().zip(labels) {
                for v in r {
                    write!(out, "{v:?},").map_err(io)?;
                }
                writeln!(out, "{y}").map_err(io)?;
            }
        }
        FileFormat::Jsonl => {
            writeln!(out, "{{\"format\":\"{}\",\"K\":{k}}}", kind.as_str()).map_err(io)?;
            for (r, &y) in rows.iter().zip(labels) {
                let line = serde_json::to_string(&JsonRow {
                    values: r.clone(),
                    label: y as i64,
                })?;
                writeln!(out, "{line}").map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(s: &str) -> CliResult<LogitDataset> {
        read_csv(s.as_bytes())
    }

    #[test]
    fn logits_header_and_softmax() {
        let d = csv("format=logits,K=2\n0.0,0.0,0\n").unwrap();
        assert_eq!(d.k, 2);
        assert_eq!(d.probs[0].as_slice(), &[0.5, 0.5]);
        assert_eq!(d.labels, vec![0]);
    }

    #[test]
    fn near_unit_sum_is_renormalized() {
        let d = csv("format=probs,K=2\n0.5,0.499999,1\n").unwrap();
        let s: f64 = d.probs[0].as_slice().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_sum_names_the_row() {
        let e = csv("format=probs,K=2\n0.5,0.5,0\n0.5,0.4,1\n").unwrap_err();
        match e {
            CliError::Parse { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn ragged_and_label_errors() {
        assert!(matches!(
            csv("format=probs,K=3\n0.5,0.5,0\n").unwrap_err(),
            CliError::Parse { row: 1, .. }
        ));
        assert!(matches!(
            csv("format=logits,K=2\n1,2,2\n").unwrap_err(),
            CliError::Parse { row: 1, .. }
        ));
        assert!(matches!(
            csv("format=logits,K=2\n1,inf,0\n").unwrap_err(),
            CliError::Parse { row: 1, .. }
        ));
        assert!(matches!(csv("format=odds,K=2\n").unwrap_err(), CliError::Header(_)));
        assert!(matches!(csv("format=probs,K=2\n").unwrap_err(), CliError::Parse { .. }));
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let rows = vec![vec![0.25, 0.75], vec![0.5, 0.5]];
        write_dataset(&path, FileFormat::Jsonl, ValueKind::Probs, &rows, &[1, 0]).unwrap();
        let d = load_dataset(&path, None).unwrap();
        assert_eq!(d.labels, vec![1, 0]);
        assert_eq!(d.probs[0].as_slice(), &[0.25, 0.75]);
        let bad = "{\"format\":\"probs\",\"K\":2}\n{\"values\":[0.5],\"label\":0}\n";
        assert!(matches!(
            read_jsonl(bad.as_bytes()).unwrap_err(),
            CliError::Parse { row: 1, .. }
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let rows = vec![vec![0.1, 0.2, 0.7], vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]];
        write_dataset(&path, FileFormat::Csv, ValueKind::Probs, &rows, &[2, 0]).unwrap();
        let d = load_dataset(&path, None).unwrap();
        assert_eq!(d.probs[0].as_slice(), rows[0].as_slice());
        assert_eq!(d.probs[1].as_slice(), rows[1].as_slice());
    }
}
