//! Manifest files: which series to load, from where, and how to bring each
//! to the common baseline.

use std::path::{Path, PathBuf};

use ebmss::data::{AnomalySeries, ManifestEntry, SyncSpec};
use ebmss::ssm::SeriesKind;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    #[serde(default)]
    series: Vec<RawSeries>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeries {
    label: String,
    kind: SeriesKind,
    file: PathBuf,
    #[serde(default = "default_column")]
    column: String,
    pair_id: Option<String>,
    depth: Option<[f64; 2]>,
    sync: Option<RawSync>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSync {
    mode: String,
    mean_1986_2005: Option<f64>,
    delta_preind: Option<f64>,
    offset: Option<f64>,
}

fn default_column() -> String {
    "value".into()
}

fn sync_spec(label: &str, raw: Option<RawSync>) -> CliResult<SyncSpec> {
    let Some(raw) = raw else {
        return Ok(SyncSpec::Synchronized);
    };
    let need = |v: Option<f64>, field: &str| {
        v.ok_or_else(|| CliError::input(format!("series '{label}': sync mode '{}' needs {field}", raw.mode)))
    };
    match raw.mode.as_str() {
        "preindustrial" => Ok(SyncSpec::Preindustrial {
            mean_1986_2005: need(raw.mean_1986_2005, "mean_1986_2005")?,
            delta_preind: need(raw.delta_preind, "delta_preind")?,
        }),
        "offset" => Ok(SyncSpec::Offset {
            offset: need(raw.offset, "offset")?,
        }),
        "synchronized" => Ok(SyncSpec::Synchronized),
        other => Err(CliError::input(format!(
            "series '{label}': unknown sync mode '{other}' (preindustrial, offset, synchronized)"
        ))),
    }
}

/// Reads `year` and `column` from a delimited file; empty, `NA` and `NaN`
/// cells are missing.
pub fn read_series_file(path: &Path, column: &str) -> CliResult<(Vec<i32>, Vec<Option<f64>>)> {
    let ctx = |e: &dyn std::fmt::Display| CliError::input(format!("{}: {e}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| ctx(&e))?;
    let headers = reader.headers().map_err(|e| ctx(&e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ctx(&format!("no column '{name}'")))
    };
    let (yi, vi) = (find("year")?, find(column)?);
    let mut years = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| ctx(&e))?;
        let year = rec
            .get(yi)
            .and_then(|y| y.parse::<i32>().ok())
            .ok_or_else(|| ctx(&format!("bad year on data line {}", line + 1)))?;
        let cell = rec.get(vi).unwrap_or("");
        let value = match cell {
            "" | "NA" | "NaN" | "nan" => None,
            s => Some(
                s.parse::<f64>()
                    .map_err(|_| ctx(&format!("bad value '{s}' on data line {}", line + 1)))?,
            ),
        };
        years.push(year);
        values.push(value);
    }
    Ok((years, values))
}

/// Parses a manifest and loads every series it lists. Relative file paths
/// resolve against the manifest's directory.
pub fn load_manifest(path: &Path) -> CliResult<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let raw: RawManifest = toml::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if raw.series.is_empty() {
        return Err(CliError::input(format!("{}: no [[series]] entries", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    raw.series
        .into_iter()
        .map(|s| {
            let sync = sync_spec(&s.label, s.sync)?;
            let (years, values) = read_series_file(&base.join(&s.file), &s.column)?;
            let mut series = AnomalySeries::new(s.label.clone(), s.kind, years, values)
                .map_err(|e| CliError::input(format!("series '{}': {e}", s.label)))?;
            series.pair_id = s.pair_id;
            if let Some([top, bottom]) = s.depth {
                series = series.with_depth(top, bottom);
            }
            Ok(ManifestEntry { series, sync })
        })
        .collect()
}

/// Parses `A:B` into an inclusive year range.
pub fn parse_years(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once(':').ok_or("expected A:B")?;
    let a: i32 = a.trim().parse().map_err(|_| format!("bad start year '{a}'"))?;
    let b: i32 = b.trim().parse().map_err(|_| format!("bad end year '{b}'"))?;
    if b < a {
        return Err(format!("end year {b} precedes start year {a}"));
    }
    Ok((a, b))
}

/// Parses a comma-separated list of probabilities.
pub fn parse_quantiles(s: &str) -> Result<Vec<f64>, String> {
    let q: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad quantile '{p}'")))
        .collect::<Result<_, _>>()?;
    if q.is_empty() || q.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err("quantiles must lie in [0, 1]".into());
    }
    Ok(q)
}
