//! File ingestion: segment CSVs, reference default-frequency CSVs, portfolio
//! weights, and the JSON run manifest.
//!
//! CSV schemas are fixed by this tool:
//!   segment:   `month,E,NPL`   (empty field = missing observation)
//!   reference: `month,DF`      (values in [0,1])
//!   weights:   `segment_id,weight`
//! Months are ISO `YYYY-MM`; decimal point, no thousands separators.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrate::CalibrationSpec;
use crate::error::{Error, Result};
use crate::filter::{FilterParams, SolverSettings};
use crate::numfmt::fmt_sig;
use crate::timeseries::{MonthIndex, MonthlySeries, SegmentSeries};

#[derive(Debug, Clone)]
pub struct ReferenceDfSeries {
    pub segment_id: String,
    pub df: MonthlySeries,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

/// Parse a CSV body into (line number, fields) rows after checking the header.
fn csv_rows<'a>(
    content: &'a str,
    path: &Path,
    expected_header: &str,
) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == expected_header => {}
        Some((_, header)) => {
            return Err(parse_err(
                path,
                1,
                format!("expected header {expected_header:?}, found {:?}", header.trim()),
            ))
        }
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let n_fields = expected_header.split(',').count();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() != n_fields {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {n_fields} fields, found {}", fields.len()),
            ));
        }
        rows.push((line_no, fields));
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    Ok(rows)
}

fn parse_optional_value(field: &str, path: &Path, line: usize, name: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| parse_err(path, line, format!("bad {name} value {field:?}")))
}

/// Rows keyed by month, with duplicate detection; returns a contiguous span
/// with gaps as missing.
fn monthly_table<T: Clone>(
    rows: Vec<(usize, MonthIndex, T)>,
    path: &Path,
) -> Result<(MonthIndex, Vec<Option<T>>)> {
    let mut by_month: BTreeMap<MonthIndex, T> = BTreeMap::new();
    for (line, month, value) in rows {
        if by_month.insert(month, value).is_some() {
            return Err(Error::DuplicateMonth {
                path: path.display().to_string(),
                line,
                month,
            });
        }
    }
    let start = *by_month.keys().next().expect("non-empty");
    let end = *by_month.keys().next_back().expect("non-empty");
    let n = (end.months_since(start) + 1) as usize;
    let mut values = vec![None; n];
    for (month, value) in by_month {
        values[month.months_since(start) as usize] = Some(value);
    }
    Ok((start, values))
}

pub fn load_segment_csv(path: &Path, segment_id: &str) -> Result<SegmentSeries> {
    let content = read_to_string(path)?;
    let rows = csv_rows(&content, path, "month,E,NPL")?;
    let mut parsed = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        let month = MonthIndex::parse(fields[0])
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        let e = parse_optional_value(fields[1], path, line, "E")?;
        let npl = parse_optional_value(fields[2], path, line, "NPL")?;
        parsed.push((line, month, (e, npl)));
    }
    let (start, table) = monthly_table(parsed, path)?;
    let e_values: Vec<Option<f64>> = table.iter().map(|r| r.as_ref().and_then(|(e, _)| *e)).collect();
    let npl_values: Vec<Option<f64>> = table.iter().map(|r| r.as_ref().and_then(|(_, n)| *n)).collect();
    SegmentSeries::new(
        segment_id,
        MonthlySeries::new(start, e_values)?,
        MonthlySeries::new(start, npl_values)?,
    )
}

pub fn load_reference_df_csv(path: &Path, segment_id: &str) -> Result<ReferenceDfSeries> {
    let content = read_to_string(path)?;
    let rows = csv_rows(&content, path, "month,DF")?;
    let mut parsed = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        let month = MonthIndex::parse(fields[0])
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        let df = parse_optional_value(fields[1], path, line, "DF")?;
        if let Some(v) = df {
            if !(0.0..=1.0).contains(&v) {
                return Err(parse_err(path, line, format!("DF value {v} outside [0, 1]")));
            }
        }
        parsed.push((line, month, df));
    }
    let (start, table) = monthly_table(parsed, path)?;
    let values = table.into_iter().map(|r| r.flatten()).collect();
    Ok(ReferenceDfSeries {
        segment_id: segment_id.to_string(),
        df: MonthlySeries::new(start, values)?,
    })
}

pub fn load_weights_csv(path: &Path) -> Result<Vec<(String, f64)>> {
    let content = read_to_string(path)?;
    let rows = csv_rows(&content, path, "segment_id,weight")?;
    let mut weights = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        let id = fields[0];
        if id.is_empty() {
            return Err(parse_err(path, line, "empty segment_id"));
        }
        let w: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad weight {:?}", fields[1])))?;
        if w < 0.0 || !w.is_finite() {
            return Err(parse_err(path, line, format!("weight {w} must be finite and >= 0")));
        }
        weights.push((id.to_string(), w));
    }
    if weights.iter().all(|(_, w)| *w == 0.0) {
        return Err(Error::InvalidInput(format!(
            "all weights in {} are zero",
            path.display()
        )));
    }
    Ok(weights)
}

// ---------------------------------------------------------------------------
// writers (same schemas, 10 significant digits)
// ---------------------------------------------------------------------------

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn write_segment_csv(path: &Path, segment: &SegmentSeries) -> Result<()> {
    let mut out = String::from("month,E,NPL\n");
    for (i, month) in segment.total.months().enumerate() {
        let e = segment.total.values()[i].map(fmt_sig).unwrap_or_default();
        let npl = segment.overdue.values()[i].map(fmt_sig).unwrap_or_default();
        out.push_str(&format!("{month},{e},{npl}\n"));
    }
    write_file(path, &out)
}

/// Single-column monthly CSV with a caller-chosen value header.
pub fn write_series_csv(path: &Path, series: &MonthlySeries, value_header: &str) -> Result<()> {
    let mut out = format!("month,{value_header}\n");
    for (i, month) in series.months().enumerate() {
        let v = series.values()[i].map(fmt_sig).unwrap_or_default();
        out.push_str(&format!("{month},{v}\n"));
    }
    write_file(path, &out)
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Smoothing weight for HP gap filling; Ravn-Uhlig monthly default.
    #[serde(default)]
    pub hp_lambda: Option<f64>,
    /// Filter parameters used by `fit` and `industry-batch` when not given on
    /// the command line.
    #[serde(default)]
    pub filter: Option<FilterParams>,
    #[serde(default)]
    pub solver: Option<SolverSettings>,
    #[serde(default)]
    pub calibration: Option<CalibrationSpec>,
    /// 1-based month number where batch statistics windows start.
    #[serde(default)]
    pub stats_window_start_n: Option<usize>,
    #[serde(default)]
    pub regression: Option<RegressionConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionConfig {
    /// Macro-factor CSV: header `month,<factor1>,<factor2>,...`
    pub factors: PathBuf,
    /// Lag in months applied to each named factor at design-matrix build time.
    #[serde(default)]
    pub lags: BTreeMap<String, usize>,
    /// Regress the PD level (default) or its logit.
    #[serde(default)]
    pub dependent: DependentTransform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DependentTransform {
    #[default]
    Level,
    Logit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub segments: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub reference_df: Option<PathBuf>,
    #[serde(default)]
    pub weights: Option<PathBuf>,
    #[serde(default)]
    pub config: RunConfig,
}

impl DatasetManifest {
    /// Load from JSON; relative paths inside the manifest are resolved
    /// against the manifest's own directory.
    pub fn load(path: &Path) -> Result<Self> {
        let content = read_to_string(path)?;
        let mut manifest: DatasetManifest = serde_json::from_str(&content).map_err(|e| {
            parse_err(path, e.line(), format!("bad manifest JSON: {e}"))
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };
        for p in manifest.segments.values_mut() {
            *p = resolve(p);
        }
        if let Some(p) = &manifest.reference_df {
            manifest.reference_df = Some(resolve(p));
        }
        if let Some(p) = &manifest.weights {
            manifest.weights = Some(resolve(p));
        }
        if let Some(r) = &mut manifest.config.regression {
            r.factors = resolve(&r.factors);
        }
        Ok(manifest)
    }

    pub fn load_segment(&self, segment_id: &str) -> Result<SegmentSeries> {
        let path = self.segments.get(segment_id).ok_or_else(|| {
            Error::InvalidInput(format!(
                "segment {segment_id:?} not in manifest; available: {}",
                self.segments.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })?;
        load_segment_csv(path, segment_id)
    }
}

/// Macro-factor CSV: header `month,<name1>,<name2>,...`; returns one series
/// per named factor.
pub fn load_factors_csv(path: &Path) -> Result<Vec<(String, MonthlySeries)>> {
    let content = read_to_string(path)?;
    let mut lines = content.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h.trim(),
        None => return Err(parse_err(path, 1, "empty file")),
    };
    let cols: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
    if cols.len() < 2 || cols[0] != "month" {
        return Err(parse_err(path, 1, "expected header month,<factor>,..."));
    }
    let names: Vec<String> = cols[1..].iter().map(|c| c.to_string()).collect();
    for (i, name) in names.iter().enumerate() {
        if name.is_empty() || names[..i].contains(name) {
            return Err(parse_err(path, 1, format!("bad or duplicate factor name {name:?}")));
        }
    }
    let mut parsed: Vec<(usize, MonthIndex, Vec<Option<f64>>)> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() != cols.len() {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let month = MonthIndex::parse(fields[0])
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let values = fields[1..]
            .iter()
            .enumerate()
            .map(|(j, f)| parse_optional_value(f, path, line_no, &names[j]))
            .collect::<Result<Vec<_>>>()?;
        parsed.push((line_no, month, values));
    }
    if parsed.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    let (start, table) = monthly_table(parsed, path)?;
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<Option<f64>> = table
                .iter()
                .map(|row| row.as_ref().and_then(|vals| vals[j]))
                .collect();
            Ok((name.clone(), MonthlySeries::new(start, col)?))
        })
        .collect()
}
