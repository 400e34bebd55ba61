//! Report files: `report.json`, `summary.csv` and one curve CSV per
//! calibrator under `curves/`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cmcal_core::{CurvePoint, MetricReport};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::experiment::ResultRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single split.
    pub std: f64,
    pub n: usize,
}

pub type Summary = BTreeMap<String, BTreeMap<String, Aggregate>>;

#[derive(Serialize)]
struct ReportJson<'a, C: Serialize> {
    config_echo: &'a C,
    rows: &'a [ResultRow],
    summary: &'a Summary,
}

/// Scalar metrics of a report by name, coverage columns as `coverage[a,b]`.
pub fn metric_values(r: &MetricReport<f64>) -> Vec<(String, f64)> {
    let mut out = vec![
        ("accuracy".to_string(), r.accuracy),
        ("ece".into(), r.ece),
        ("mce".into(), r.mce),
        ("cwece".into(), r.cwece),
        ("nll".into(), r.nll),
        ("brier".into(), r.brier),
        ("cmce".into(), r.cmce),
    ];
    for c in &r.coverage_intervals {
        if let Some(v) = c.coverage {
            out.push((format!("coverage[{},{}]", c.a, c.b), v));
        }
    }
    out
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Aggregate { mean, std, n }
}

/// Mean and standard deviation per calibrator and metric over the
/// successful rows.
pub fn summarize(rows: &[ResultRow]) -> Summary {
    let mut values: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for row in rows {
        let Some(report) = &row.report else { continue };
        let per = values.entry(row.calibrator.clone()).or_default();
        for (metric, v) in metric_values(report) {
            per.entry(metric).or_default().push(v);
        }
    }
    values
        .into_iter()
        .map(|(name, metrics)| {
            (
                name,
                metrics.into_iter().map(|(m, v)| (m, aggregate(&v))).collect(),
            )
        })
        .collect()
}

/// Curve points of one calibrator pooled over splits, nonempty bins only.
pub fn pooled_curve(rows: &[&ResultRow]) -> Vec<CurvePoint<f64>> {
    let mut bins: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    for row in rows {
        let Some(report) = &row.report else { continue };
        for p in &report.cmce_curve {
            let e = bins.entry(p.bin_index).or_default();
            let n = p.count as f64;
            e.0 += p.mean_mass * n;
            e.1 += p.coverage * n;
            e.2 += p.count;
        }
    }
    bins.into_iter()
        .filter(|(_, (_, _, c))| *c > 0)
        .map(|(bin_index, (mass, cov, count))| CurvePoint {
            bin_index,
            mean_mass: mass / count as f64,
            coverage: cov / count as f64,
            count,
        })
        .collect()
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_curve_csv<W: Write>(mut w: W, points: &[CurvePoint<f64>]) -> std::io::Result<()> {
    writeln!(w, "bin_index,mean_mass,coverage,count")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{}",
            p.bin_index,
            fmt_f64(p.mean_mass),
            fmt_f64(p.coverage),
            p.count
        )?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(mut w: W, summary: &Summary) -> std::io::Result<()> {
    writeln!(w, "calibrator,metric,mean,std,n")?;
    for (name, metrics) in summary {
        for (metric, a) in metrics {
            writeln!(
                w,
                "{},{},{},{},{}",
                csv_field(name),
                csv_field(metric),
                fmt_f64(a.mean),
                fmt_f64(a.std),
                a.n
            )?;
        }
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// File-system safe version of a calibrator name.
pub fn sanitize(name: &str) -> String {
    let mut out: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    while out.ends_with('_') {
        out.pop();
    }
    out
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub summary: PathBuf,
    pub curves: Vec<PathBuf>,
}

pub fn emit_report<C: Serialize>(config_echo: &C, rows: &[ResultRow], dir: &Path) -> CliResult<ReportFiles> {
    if rows.is_empty() {
        return Err(CliError::Config("no result rows to report".into()));
    }
    let curves_dir = dir.join("curves");
    fs::create_dir_all(&curves_dir).map_err(|e| CliError::io(&curves_dir, e))?;

    let summary = summarize(rows);
    let json = dir.join("report.json");
    let text = serde_json::to_string_pretty(&ReportJson {
        config_echo,
        rows,
        summary: &summary,
    })?;
    fs::write(&json, text + "\n").map_err(|e| CliError::io(&json, e))?;

    let summary_path = dir.join("summary.csv");
    write_file(&summary_path, |w| write_summary_csv(w, &summary))?;

    // first-appearance order keeps the file list stable
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.calibrator.as_str()) {
            names.push(&r.calibrator);
        }
    }
    let mut curves = Vec::new();
    for name in names {
        let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.calibrator == name).collect();
        let path = curves_dir.join(format!("{}.csv", sanitize(name)));
        write_file(&path, |w| write_curve_csv(w, &pooled_curve(&mine)))?;
        curves.push(path);
    }
    Ok(ReportFiles {
        json,
        summary: summary_path,
        curves,
    })
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}
