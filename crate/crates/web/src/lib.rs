//! Browser bindings: step response of the two-box model, a simulated panel,
//! and projection fans from a bundled fit of the synthetic panel.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use ebmss::data::{assemble_panel, AnomalySeries, AssembledPanel, ManifestEntry, SyncSpec};
use ebmss::estimation::FitResult;
use ebmss::model::{EbmParamVector, MeasurementConfig, PhysicalParams};
use ebmss::projection::{deterministic_forward, draw_parameters, fan, ForwardState, ScenarioPath};
use ebmss::simulation::{simulate_dgp, SimulationInputs};
use ebmss::ssm::SeriesKind;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const PANEL_CSV: &str = include_str!("../assets/panel.csv");
const FIT_JSON: &str = include_str!("../assets/fit.json");
pub const SAMPLE: (i32, i32) = (1955, 2020);
pub const HORIZON_END: i32 = 2100;
pub const MAX_DRAWS: usize = 5_000;

fn bad(msg: impl Into<String>) -> ebmss::Error {
    ebmss::Error::Data(msg.into())
}

type LongSeries = (SeriesKind, Option<String>, Vec<i32>, Vec<Option<f64>>);

/// Rebuilds the synchronized panel from its long table
/// (`label,kind,pair_id,year,value`).
fn parse_panel(text: &str) -> ebmss::Result<AssembledPanel> {
    let mut series: BTreeMap<String, LongSeries> = BTreeMap::new();
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        let [label, kind, pair, year, value] = cells[..] else {
            return Err(bad(format!("panel row '{line}'")));
        };
        let kind: SeriesKind =
            serde_json::from_value(serde_json::Value::String(kind.into())).map_err(|e| bad(e.to_string()))?;
        let year: i32 = year.parse().map_err(|_| bad(format!("year '{year}'")))?;
        let value = if value.is_empty() {
            None
        } else {
            Some(value.parse::<f64>().map_err(|_| bad(format!("value '{value}'")))?)
        };
        let pair = (!pair.is_empty()).then(|| pair.to_owned());
        let e = series.entry(label.to_owned()).or_insert((kind, pair, Vec::new(), Vec::new()));
        e.2.push(year);
        e.3.push(value);
    }
    let entries = series
        .into_iter()
        .map(|(label, (kind, pair, years, values))| {
            let mut s = AnomalySeries::new(label, kind, years, values)?;
            s.pair_id = pair;
            Ok(ManifestEntry {
                series: s,
                sync: SyncSpec::Synchronized,
            })
        })
        .collect::<ebmss::Result<Vec<_>>>()?;
    assemble_panel(&entries, SAMPLE.0..=SAMPLE.1)
}

struct Bundle {
    panel: AssembledPanel,
    fit: FitResult,
}

fn bundle() -> ebmss::Result<&'static Bundle> {
    static CELL: OnceLock<Result<Bundle, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let panel = parse_panel(PANEL_CSV).map_err(|e| e.to_string())?;
        let fit: FitResult = serde_json::from_str(FIT_JSON).map_err(|e| e.to_string())?;
        Ok(Bundle { panel, fit })
    })
    .as_ref()
    .map_err(|e| bad(e.clone()))
}

#[derive(Debug, Serialize)]
pub struct StepResponse {
    pub t_m: Vec<f64>,
    pub equilibrium: f64,
    /// Per-step decay factors of the slow and fast modes.
    pub eigenvalues: [f64; 2],
    /// e-folding times in years of the slow and fast modes.
    pub timescales: [f64; 2],
}

/// Mixed-layer warming after a permanent forcing step from rest.
pub fn step_response(physical: &PhysicalParams, forcing: f64, years: usize) -> ebmss::Result<StepResponse> {
    if !forcing.is_finite() || years == 0 {
        return Err(ebmss::Error::InvalidParameter("need a finite forcing and at least one year".into()));
    }
    let init = ForwardState {
        t_m: 0.0,
        t_d: 0.0,
        forcing,
    };
    let t_m = deterministic_forward(physical, init, &vec![forcing; years])?;
    let [mm, md, _, dm, dd] = physical.temperature_coefficients();
    let (tr, det) = (mm + dd, mm * dd - md * dm);
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let eigenvalues = [tr / 2.0 + disc, tr / 2.0 - disc];
    let timescales = eigenvalues.map(|e| if e > 0.0 && e < 1.0 { -1.0 / e.ln() } else { f64::NAN });
    Ok(StepResponse {
        t_m,
        equilibrium: forcing / physical.lambda,
        eigenvalues,
        timescales,
    })
}

#[derive(Debug, Serialize)]
pub struct SimulatedPanel {
    pub years: Vec<i32>,
    pub t_m: Vec<f64>,
    pub t_d: Vec<f64>,
    pub gmst: Vec<Option<f64>>,
    pub ocean_temp: Vec<Option<f64>>,
    pub forcing: Vec<Option<f64>>,
    pub attempts: usize,
}

/// One GMST series and one ocean pair simulated under the bundled forcing
/// with the given physical parameters and reference noise.
pub fn simulate(physical: PhysicalParams, seed: u64) -> ebmss::Result<SimulatedPanel> {
    let b = bundle()?;
    let data = &b.panel.data;
    let years = data.panel.years().to_vec();
    let total = data.panel.row(data.panel.n_series() - 1);
    let anthro = total
        .iter()
        .zip(&data.natural)
        .map(|(t, n)| t.map(|t| t - n).ok_or_else(|| bad("bundled forcing has gaps")))
        .collect::<ebmss::Result<Vec<_>>>()?;
    let inputs = SimulationInputs::new(years.clone(), data.natural.clone(), anthro)?;
    let mut params = EbmParamVector::reference_dgp().restrict(1, 1)?;
    params.physical = physical;
    let config = MeasurementConfig::new(1, 1);
    let sim = simulate_dgp(&params, &config, &inputs, seed)?;
    let p = &sim.data.panel;
    Ok(SimulatedPanel {
        years,
        t_m: sim.states.row(ebmss::model::IDX_TM).iter().copied().collect(),
        t_d: sim.states.row(ebmss::model::IDX_TD).iter().copied().collect(),
        gmst: p.row(config.row_gmst(0)),
        ocean_temp: p.row(config.row_ocean_temp(0)),
        forcing: p.row(config.row_forcing()),
        attempts: sim.attempts,
    })
}

#[derive(Debug, Serialize)]
pub struct Fan {
    pub years: Vec<i32>,
    pub forcing: Vec<f64>,
    pub q05: Vec<f64>,
    pub q50: Vec<f64>,
    pub q95: Vec<f64>,
    pub draws: usize,
    pub rejected: usize,
}

/// Scenario forcing rising or falling linearly from the last sample year to
/// `target` in the final year.
pub fn linear_scenario(start: f64, target: f64) -> ebmss::Result<ScenarioPath> {
    let n = (HORIZON_END - SAMPLE.1) as usize;
    let years: Vec<i32> = (SAMPLE.1 + 1..=HORIZON_END).collect();
    let forcing = (1..=n).map(|h| start + (target - start) * h as f64 / n as f64).collect();
    ScenarioPath::new("linear", years, forcing)
}

/// Quantile fan of mixed-layer temperature under parameter uncertainty of
/// the bundled fit.
pub fn projection(target: f64, draws: usize, seed: u64) -> ebmss::Result<Fan> {
    if draws == 0 || draws > MAX_DRAWS {
        return Err(ebmss::Error::InvalidParameter(format!("draws must lie in 1..={MAX_DRAWS}")));
    }
    let b = bundle()?;
    let data = &b.panel.data;
    let last = data.panel.row(data.panel.n_series() - 1).last().copied().flatten();
    let start = last.ok_or_else(|| bad("bundled forcing ends with a gap"))?;
    let scenario = linear_scenario(start, target)?;
    let set = draw_parameters(&b.fit, data, draws, seed)?;
    let f = fan(&set, data, &scenario, &[0.05, 0.5, 0.95])?;
    Ok(Fan {
        years: f.years.clone(),
        forcing: scenario.forcing.clone(),
        q05: f.column(0),
        q50: f.column(1),
        q95: f.column(2),
        draws: set.len(),
        rejected: set.rejected,
    })
}

fn to_js<T: Serialize>(r: ebmss::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = stepResponse)]
pub fn step_response_js(lambda: f64, gamma: f64, c_m: f64, c_d: f64, forcing: f64, years: usize) -> Result<String, JsError> {
    to_js(step_response(&PhysicalParams::new(lambda, gamma, c_m, c_d), forcing, years))
}

#[wasm_bindgen(js_name = simulatePanel)]
pub fn simulate_js(lambda: f64, gamma: f64, c_m: f64, c_d: f64, seed: u32) -> Result<String, JsError> {
    to_js(simulate(PhysicalParams::new(lambda, gamma, c_m, c_d), seed.into()))
}

#[wasm_bindgen(js_name = projectionFan)]
pub fn projection_js(target: f64, draws: usize, seed: u32) -> Result<String, JsError> {
    to_js(projection(target, draws, seed.into()))
}
