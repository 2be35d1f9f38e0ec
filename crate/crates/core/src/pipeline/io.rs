//! CSV ingestion of prices and (de)serialization of window batches.
//!
//! Tabular files may start with `#` provenance lines; readers skip them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{NormStats, PipelineConfig, PipelineError, PriceSeries, WindowBatch};

/// Reads a `date,close` CSV with ISO-8601 dates. Rows are numbered from 1,
/// excluding the header.
pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PriceSeries, PipelineError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(PipelineError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| PipelineError::ParseError { row: 0, msg: e.to_string() })?;
    let headers = reader
        .headers()
        .map_err(|e| PipelineError::ParseError { row: 0, msg: e.to_string() })?
        .clone();
    if headers.len() != 2 || &headers[0] != "date" || &headers[1] != "close" {
        return Err(PipelineError::ParseError {
            row: 0,
            msg: format!("expected header `date,close`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut timestamps = Vec::new();
    let mut prices = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| PipelineError::ParseError { row, msg: e.to_string() })?;
        if record.len() != 2 {
            return Err(PipelineError::ParseError { row, msg: format!("expected 2 fields, got {}", record.len()) });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| PipelineError::ParseError { row, msg: format!("date `{}`: {e}", &record[0]) })?;
        let close: f64 = record[1]
            .parse()
            .map_err(|e| PipelineError::ParseError { row, msg: format!("close `{}`: {e}", &record[1]) })?;
        if !(close > 0.0 && close.is_finite()) {
            return Err(PipelineError::NonPositivePrice(row));
        }
        if let Some(prev) = timestamps.last() {
            if date <= *prev {
                return Err(PipelineError::NonMonotoneDate(row));
            }
        }
        timestamps.push(date);
        prices.push(close);
    }
    PriceSeries::new(timestamps, prices)
}

fn write_provenance(out: &mut impl Write, provenance: &[String]) -> std::io::Result<()> {
    for line in provenance {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

/// One window per row with header `x0,...,x{m-1}`. Values are written in
/// shortest round-trip form.
pub fn write_windows_csv(
    out: &mut impl Write,
    rows: &[Vec<f64>],
    window: usize,
    provenance: &[String],
) -> Result<(), PipelineError> {
    write_provenance(out, provenance)?;
    let header: Vec<String> = (0..window).map(|j| format!("x{j}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for (k, row) in rows.iter().enumerate() {
        if row.len() != window {
            return Err(PipelineError::InvalidConfig(format!(
                "row {k} has {} values, expected {window}",
                row.len()
            )));
        }
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Reads a windows CSV written by [`write_windows_csv`].
pub fn read_windows_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>, PipelineError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(PipelineError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| PipelineError::ParseError { row: 0, msg: e.to_string() })?;
    let width = reader
        .headers()
        .map_err(|e| PipelineError::ParseError { row: 0, msg: e.to_string() })?
        .len();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| PipelineError::ParseError { row, msg: e.to_string() })?;
        if record.len() != width {
            return Err(PipelineError::ParseError { row, msg: format!("expected {width} fields") });
        }
        let values = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| PipelineError::ParseError { row, msg: format!("bad value `{f}`") })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(values);
    }
    Ok(rows)
}

/// Writes the batch CSV and its key-value metadata sidecar.
pub fn write_batch(
    batch: &WindowBatch,
    csv_path: impl AsRef<Path>,
    meta_path: impl AsRef<Path>,
    provenance: &[String],
) -> Result<(), PipelineError> {
    let mut out = std::io::BufWriter::new(File::create(csv_path)?);
    write_windows_csv(&mut out, &batch.samples, batch.config.window, provenance)?;
    out.flush()?;

    let mut meta = std::io::BufWriter::new(File::create(meta_path)?);
    write_provenance(&mut meta, provenance)?;
    let c = &batch.config;
    writeln!(meta, "mean={}", batch.norm_stats.mean)?;
    writeln!(meta, "std={}", batch.norm_stats.std)?;
    writeln!(meta, "delta={}", c.delta)?;
    writeln!(meta, "clip_bound={}", c.clip_bound)?;
    writeln!(meta, "window={}", c.window)?;
    writeln!(meta, "stride={}", c.stride)?;
    writeln!(meta, "num_windows={}", batch.samples.len())?;
    meta.flush()?;
    Ok(())
}

fn read_meta(path: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::MissingFile(path.to_path_buf()));
    }
    let mut map = BTreeMap::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| PipelineError::ParseError { row: i + 1, msg: format!("expected key=value, got `{line}`") })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Reads a batch written by [`write_batch`].
pub fn read_batch(
    csv_path: impl AsRef<Path>,
    meta_path: impl AsRef<Path>,
) -> Result<WindowBatch, PipelineError> {
    let meta = read_meta(meta_path.as_ref())?;
    fn field<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T, PipelineError> {
        meta.get(key)
            .ok_or_else(|| PipelineError::ParseError { row: 0, msg: format!("metadata missing `{key}`") })?
            .parse()
            .map_err(|_| PipelineError::ParseError { row: 0, msg: format!("metadata `{key}` unparsable") })
    }
    let config = PipelineConfig {
        delta: field(&meta, "delta")?,
        clip_bound: field(&meta, "clip_bound")?,
        window: field(&meta, "window")?,
        stride: field(&meta, "stride")?,
    };
    config.validate()?;
    let norm_stats = NormStats { mean: field(&meta, "mean")?, std: field(&meta, "std")? };
    let samples = read_windows_csv(csv_path)?;
    for (row, w) in samples.iter().enumerate() {
        if w.len() != config.window {
            return Err(PipelineError::InvalidConfig(format!(
                "batch row {row} has width {}, metadata says {}",
                w.len(),
                config.window
            )));
        }
        if let Some(col) = w.iter().position(|u| !(-1.0..=1.0).contains(u)) {
            return Err(PipelineError::OutOfRange { row, col, value: w[col] });
        }
    }
    Ok(WindowBatch { samples, norm_stats, config })
}
