use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Gmst,
    OceanTemp,
    Ohc,
    ForcingTotal,
    ForcingNatural,
    ForcingAnthropogenic,
    ScenarioForcing,
}

impl SeriesKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeriesKind::Gmst => "gmst",
            SeriesKind::OceanTemp => "ocean_temp",
            SeriesKind::Ohc => "ohc",
            SeriesKind::ForcingTotal => "forcing_total",
            SeriesKind::ForcingNatural => "forcing_natural",
            SeriesKind::ForcingAnthropogenic => "forcing_anthropogenic",
            SeriesKind::ScenarioForcing => "scenario_forcing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub label: String,
    pub kind: SeriesKind,
    pub pair_id: Option<String>,
}

impl SeriesMeta {
    pub fn new(label: impl Into<String>, kind: SeriesKind) -> Self {
        Self {
            label: label.into(),
            kind,
            pair_id: None,
        }
    }

    pub fn paired(label: impl Into<String>, kind: SeriesKind, pair_id: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            kind,
            pair_id: Some(pair_id.into()),
        }
    }
}

/// Year-indexed multivariate panel, one row per series, `None` marking a
/// missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPanel {
    years: Vec<i32>,
    values: DMatrix<Option<f64>>,
    meta: Vec<SeriesMeta>,
}

impl ObservationPanel {
    pub fn new(years: Vec<i32>, values: DMatrix<Option<f64>>, meta: Vec<SeriesMeta>) -> Result<Self> {
        if values.ncols() != years.len() {
            return Err(Error::Dimension(format!(
                "panel has {} columns for {} years",
                values.ncols(),
                years.len()
            )));
        }
        if values.nrows() != meta.len() {
            return Err(Error::Dimension(format!(
                "panel has {} rows for {} series descriptors",
                values.nrows(),
                meta.len()
            )));
        }
        if years.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::Data("panel years must be contiguous and increasing".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data("panel contains non-finite values".into()));
        }
        check_pairs(&meta)?;
        Ok(Self { years, values, meta })
    }

    /// Panel from plain rows with generic labels (`y0`, `y1`, ...), years
    /// starting at 1. Rows are tagged as GMST-kind series.
    pub fn from_rows(rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let p = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("rows have different lengths".into()));
        }
        let values = DMatrix::from_fn(p, n, |i, t| rows[i][t]);
        let meta = (0..p)
            .map(|i| SeriesMeta::new(format!("y{i}"), SeriesKind::Gmst))
            .collect();
        Self::new((1..=n as i32).collect(), values, meta)
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn meta(&self) -> &[SeriesMeta] {
        &self.meta
    }

    pub fn values(&self) -> &DMatrix<Option<f64>> {
        &self.values
    }

    pub fn n_series(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, series: usize, step: usize) -> Option<f64> {
        self.values[(series, step)]
    }

    pub fn row(&self, series: usize) -> Vec<Option<f64>> {
        (0..self.n_steps()).map(|t| self.get(series, t)).collect()
    }

    /// Observed (non-missing) values of one series, in time order.
    pub fn observed_row(&self, series: usize) -> Vec<f64> {
        self.row(series).into_iter().flatten().collect()
    }

    pub fn observed_rows_at(&self, step: usize) -> Vec<usize> {
        (0..self.n_series()).filter(|&i| self.get(i, step).is_some()).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn has_observations(&self) -> bool {
        self.values.iter().any(|v| v.is_some())
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.meta.iter().position(|m| m.label == label)
    }

    pub fn rows_of_kind(&self, kind: SeriesKind) -> Vec<usize> {
        (0..self.n_series()).filter(|&i| self.meta[i].kind == kind).collect()
    }

    /// Sub-panel keeping the given rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.iter().any(|&r| r >= self.n_series()) {
            return Err(Error::Dimension("row index out of range".into()));
        }
        let values = DMatrix::from_fn(rows.len(), self.n_steps(), |i, t| self.values[(rows[i], t)]);
        let meta = rows.iter().map(|&r| self.meta[r].clone()).collect();
        Self::new(self.years.clone(), values, meta)
    }
}

fn check_pairs(meta: &[SeriesMeta]) -> Result<()> {
    let mut temps: HashMap<&str, usize> = HashMap::new();
    let mut ohcs: HashMap<&str, usize> = HashMap::new();
    for m in meta {
        let target = match m.kind {
            SeriesKind::OceanTemp => &mut temps,
            SeriesKind::Ohc => &mut ohcs,
            _ => continue,
        };
        let id = m.pair_id.as_deref().ok_or_else(|| {
            Error::Data(format!("ocean series '{}' has no pair id", m.label))
        })?;
        *target.entry(id).or_insert(0) += 1;
    }
    for (id, n) in &ohcs {
        if *n != 1 || temps.get(id) != Some(&1) {
            return Err(Error::Data(format!(
                "pair '{id}' must link exactly one ocean temperature and one OHC series"
            )));
        }
    }
    for (id, n) in &temps {
        if *n != 1 || ohcs.get(id) != Some(&1) {
            return Err(Error::Data(format!(
                "pair '{id}' must link exactly one ocean temperature and one OHC series"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_gapped_years() {
        let values = DMatrix::from_element(1, 3, Some(0.0));
        let meta = vec![SeriesMeta::new("a", SeriesKind::Gmst)];
        assert!(ObservationPanel::new(vec![1, 2, 4], values, meta).is_err());
    }

    #[test]
    fn rejects_unpaired_ocean_series() {
        let values = DMatrix::from_element(2, 2, Some(0.0));
        let meta = vec![
            SeriesMeta::paired("t", SeriesKind::OceanTemp, "a"),
            SeriesMeta::paired("o", SeriesKind::Ohc, "b"),
        ];
        assert!(ObservationPanel::new(vec![1, 2], values, meta).is_err());
    }

    #[test]
    fn select_rows_keeps_values() {
        let p = ObservationPanel::from_rows(vec![
            vec![Some(1.0), None],
            vec![Some(2.0), Some(3.0)],
        ])
        .unwrap();
        let s = p.select_rows(&[1]).unwrap();
        assert_eq!(s.row(0), vec![Some(2.0), Some(3.0)]);
        assert_eq!(p.missing_count(), 1);
    }
}
