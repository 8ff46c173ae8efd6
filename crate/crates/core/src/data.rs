//! Anomaly series, baseline synchronization and panel assembly.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EbmData;
use crate::ssm::{ObservationPanel, SeriesKind, SeriesMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Baseline {
    Unspecified,
    /// Anomalies relative to the mean over `start..=end`.
    Period { start: i32, end: i32 },
    /// Shifted to the common pre-industrial reference.
    PreIndustrial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalySeries {
    pub label: String,
    pub kind: SeriesKind,
    pub years: Vec<i32>,
    pub values: Vec<Option<f64>>,
    pub baseline: Baseline,
    /// Ocean series only: `(top, bottom)` in meters.
    pub depth: Option<(f64, f64)>,
    pub pair_id: Option<String>,
}

impl AnomalySeries {
    pub fn new(
        label: impl Into<String>,
        kind: SeriesKind,
        years: Vec<i32>,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        let label = label.into();
        if years.len() != values.len() {
            return Err(Error::Data(format!(
                "series '{label}' has {} years and {} values",
                years.len(),
                values.len()
            )));
        }
        if years.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!(
                "series '{label}' years must be strictly increasing"
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("series '{label}' has non-finite values")));
        }
        Ok(Self {
            label,
            kind,
            years,
            values,
            baseline: Baseline::Unspecified,
            depth: None,
            pair_id: None,
        })
    }

    pub fn with_pair(mut self, pair_id: impl Into<String>) -> Self {
        self.pair_id = Some(pair_id.into());
        self
    }

    pub fn with_baseline(mut self, baseline: Baseline) -> Self {
        self.baseline = baseline;
        self
    }

    pub fn with_depth(mut self, top: f64, bottom: f64) -> Self {
        self.depth = Some((top, bottom));
        self
    }

    pub fn value_at(&self, year: i32) -> Option<f64> {
        let i = self.years.binary_search(&year).ok()?;
        self.values[i]
    }

    /// Years with an observed value.
    pub fn covered_years(&self) -> impl Iterator<Item = i32> + '_ {
        self.years
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| v.is_some())
            .map(|(y, _)| *y)
    }
}

/// How a series is brought to the common baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SyncSpec {
    /// Subtract `mean_1986_2005 - delta_preind`.
    Preindustrial { mean_1986_2005: f64, delta_preind: f64 },
    /// Subtract a precomputed offset.
    Offset { offset: f64 },
    /// Leave untouched.
    Synchronized,
}

impl SyncSpec {
    pub fn offset(&self) -> Option<f64> {
        match *self {
            SyncSpec::Preindustrial {
                mean_1986_2005,
                delta_preind,
            } => Some(compute_offset(mean_1986_2005, delta_preind)),
            SyncSpec::Offset { offset } => Some(offset),
            SyncSpec::Synchronized => None,
        }
    }
}

/// Pre-industrial mean of a series under its own baseline: its 1986-2005
/// mean minus the warming of 1986-2005 over pre-industrial.
pub fn compute_offset(mean_1986_2005: f64, delta_preind: f64) -> f64 {
    mean_1986_2005 - delta_preind
}

/// Shifts every value by `-offset`.
pub fn synchronize(series: &AnomalySeries, offset: f64) -> Result<AnomalySeries> {
    if !offset.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "offset for '{}' is not finite",
            series.label
        )));
    }
    let mut out = series.clone();
    out.values = series.values.iter().map(|v| v.map(|x| x - offset)).collect();
    out.baseline = Baseline::PreIndustrial;
    Ok(out)
}

/// Anthropogenic forcing `total - natural` on the overlapping years.
pub fn split_forcing(total: &AnomalySeries, natural: &AnomalySeries) -> Result<AnomalySeries> {
    let years: Vec<i32> = total
        .years
        .iter()
        .copied()
        .filter(|y| natural.years.binary_search(y).is_ok())
        .collect();
    if years.is_empty() {
        return Err(Error::Coverage(format!(
            "'{}' and '{}' share no years",
            total.label, natural.label
        )));
    }
    let values = years
        .iter()
        .map(|&y| Some(total.value_at(y)? - natural.value_at(y)?))
        .collect();
    let mut out = AnomalySeries::new(
        format!("{}_anthropogenic", total.label),
        SeriesKind::ForcingAnthropogenic,
        years,
        values,
    )?;
    out.baseline = total.baseline.clone();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub series: AnomalySeries,
    pub sync: SyncSpec,
}

/// Offset applied to one series during assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetRecord {
    pub label: String,
    pub kind: SeriesKind,
    /// `None` for series that were already synchronized.
    pub offset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledPanel {
    pub data: EbmData,
    pub natural_label: String,
    pub offsets: Vec<OffsetRecord>,
}

impl AssembledPanel {
    /// The panel rows and the natural forcing as already-synchronized
    /// manifest entries.
    pub fn to_entries(&self) -> Result<Vec<ManifestEntry>> {
        let p = &self.data.panel;
        let mut out: Vec<ManifestEntry> = p
            .meta()
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mut s = AnomalySeries::new(m.label.clone(), m.kind, p.years().to_vec(), p.row(i))?
                    .with_baseline(Baseline::PreIndustrial);
                s.pair_id = m.pair_id.clone();
                Ok(ManifestEntry {
                    series: s,
                    sync: SyncSpec::Synchronized,
                })
            })
            .collect::<Result<_>>()?;
        out.push(ManifestEntry {
            series: AnomalySeries::new(
                self.natural_label.clone(),
                SeriesKind::ForcingNatural,
                p.years().to_vec(),
                self.data.natural.iter().map(|v| Some(*v)).collect(),
            )?,
            sync: SyncSpec::Synchronized,
        });
        Ok(out)
    }
}

/// Synchronizes every series and lays them out on `years` in canonical
/// order: GMSTs (by label), ocean temperatures and then OHCs (both by pair
/// id), total forcing. Natural forcing is returned as the exogenous input and
/// must cover every sample year.
pub fn assemble_panel(entries: &[ManifestEntry], years: RangeInclusive<i32>) -> Result<AssembledPanel> {
    let (y0, y1) = (*years.start(), *years.end());
    if y1 < y0 {
        return Err(Error::Data(format!("empty sample range {y0}:{y1}")));
    }
    let sample: Vec<i32> = (y0..=y1).collect();

    let mut gmst = Vec::new();
    let mut temps: BTreeMap<String, &ManifestEntry> = BTreeMap::new();
    let mut ohcs: BTreeMap<String, &ManifestEntry> = BTreeMap::new();
    let mut total = Vec::new();
    let mut natural = Vec::new();
    for e in entries {
        let s = &e.series;
        let pair = || {
            s.pair_id
                .clone()
                .ok_or_else(|| Error::Data(format!("ocean series '{}' has no pair id", s.label)))
        };
        match s.kind {
            SeriesKind::Gmst => gmst.push(e),
            SeriesKind::OceanTemp => {
                if temps.insert(pair()?, e).is_some() {
                    return Err(Error::Data(format!(
                        "pair '{}' has more than one ocean temperature series",
                        pair()?
                    )));
                }
            }
            SeriesKind::Ohc => {
                if ohcs.insert(pair()?, e).is_some() {
                    return Err(Error::Data(format!(
                        "pair '{}' has more than one OHC series",
                        pair()?
                    )));
                }
            }
            SeriesKind::ForcingTotal => total.push(e),
            SeriesKind::ForcingNatural => natural.push(e),
            other => {
                return Err(Error::Data(format!(
                    "series '{}' of kind {} cannot enter the panel",
                    s.label,
                    other.as_str()
                )))
            }
        }
    }
    if gmst.is_empty() {
        return Err(Error::Data("at least one GMST series is required".into()));
    }
    if total.len() != 1 || natural.len() != 1 {
        return Err(Error::Data(format!(
            "exactly one total and one natural forcing series are required, got {} and {}",
            total.len(),
            natural.len()
        )));
    }
    for id in temps.keys().chain(ohcs.keys()) {
        if !(temps.contains_key(id) && ohcs.contains_key(id)) {
            return Err(Error::Data(format!(
                "ocean pair '{id}' needs one temperature and one OHC series"
            )));
        }
    }
    let mut labels = std::collections::HashSet::new();
    for e in entries {
        if !labels.insert(e.series.label.as_str()) {
            return Err(Error::Data(format!("duplicate series label '{}'", e.series.label)));
        }
    }
    gmst.sort_by(|a, b| a.series.label.cmp(&b.series.label));

    let ordered: Vec<&ManifestEntry> = gmst
        .into_iter()
        .chain(temps.values().copied())
        .chain(ohcs.values().copied())
        .chain(total.iter().copied())
        .collect();

    let mut offsets = Vec::new();
    let mut rows = Vec::new();
    let mut meta = Vec::new();
    for e in &ordered {
        let s = align(e, &sample)?;
        offsets.push(OffsetRecord {
            label: s.label.clone(),
            kind: s.kind,
            offset: e.sync.offset(),
        });
        meta.push(SeriesMeta {
            label: s.label.clone(),
            kind: s.kind,
            pair_id: s.pair_id.clone(),
        });
        rows.push(s.values);
    }
    let nat_entry = natural[0];
    let nat = align(nat_entry, &sample)?;
    let nat_values = nat
        .values
        .iter()
        .zip(&sample)
        .map(|(v, y)| {
            v.ok_or_else(|| {
                Error::Coverage(format!(
                    "natural forcing '{}' has no value for {y}",
                    nat.label
                ))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    offsets.push(OffsetRecord {
        label: nat.label.clone(),
        kind: nat.kind,
        offset: nat_entry.sync.offset(),
    });

    let values = DMatrix::from_fn(rows.len(), sample.len(), |i, t| rows[i][t]);
    let panel = ObservationPanel::new(sample, values, meta)?;
    Ok(AssembledPanel {
        data: EbmData::new(panel, nat_values)?,
        natural_label: nat.label,
        offsets,
    })
}

/// Synchronized values of one entry on the sample years, `None` outside
/// its coverage.
fn align(entry: &ManifestEntry, sample: &[i32]) -> Result<AnomalySeries> {
    let s = match entry.sync.offset() {
        Some(o) => synchronize(&entry.series, o)?,
        None => entry.series.clone(),
    };
    let values: Vec<Option<f64>> = sample.iter().map(|&y| s.value_at(y)).collect();
    if values.iter().all(|v| v.is_none()) {
        return Err(Error::Coverage(format!(
            "series '{}' has no observations in {}:{}",
            s.label,
            sample[0],
            sample[sample.len() - 1]
        )));
    }
    Ok(AnomalySeries {
        years: sample.to_vec(),
        values,
        ..s
    })
}
