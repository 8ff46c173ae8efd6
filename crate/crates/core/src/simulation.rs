//! Synthetic panels from a known parameter vector and the Monte Carlo
//! parameter-recovery study.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{default_init, fit_mle, FitOptions, FitResult};
use crate::model::{
    build_system_with_init, EbmData, EbmParamVector, MeasurementConfig, StateInit, IDX_A,
};
use crate::ssm::{simulate_ssm_with, ObservationPanel, SeriesKind, SeriesMeta, SimulatedPath};

/// Cap on candidate trajectories per retained panel.
pub const MAX_ATTEMPTS: usize = 10_000;
pub const DEFAULT_ACCEPT_FRACTION: f64 = 0.75;

/// Zero-based index of the mid-sample year, `floor(T/2)` counted from one.
pub fn mid_index(n_years: usize) -> usize {
    (n_years / 2).saturating_sub(1)
}

/// A candidate is kept when its simulated anthropogenic forcing reaches
/// `fraction` of the reference both mid-sample and at the end.
pub fn accept(sim_mid: f64, sim_end: f64, ref_mid: f64, ref_end: f64, fraction: f64) -> bool {
    sim_mid >= fraction * ref_mid && sim_end >= fraction * ref_end
}

/// Known starting state of simulated trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpInit {
    pub t_m: f64,
    pub t_d: f64,
    pub anthro: f64,
    pub trend: f64,
}

impl DgpInit {
    /// Temperatures `(0.3, 0.1)`; forcing level and slope taken from the first
    /// value and the average annual change of the reference series.
    pub fn from_reference(reference_anthro: &[f64]) -> Result<Self> {
        let n = reference_anthro.len();
        if n < 2 {
            return Err(Error::Coverage("reference anthropogenic forcing needs two years".into()));
        }
        Ok(Self {
            t_m: 0.3,
            t_d: 0.1,
            anthro: reference_anthro[0],
            trend: (reference_anthro[n - 1] - reference_anthro[0]) / (n - 1) as f64,
        })
    }

    fn state_init(&self) -> StateInit {
        StateInit::Known {
            t_m: self.t_m,
            t_d: self.t_d,
            anthro: self.anthro,
            trend: self.trend,
        }
    }
}

/// Exogenous inputs of a simulation: sample years, natural forcing and the
/// reference anthropogenic path used by the rejection rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationInputs {
    pub years: Vec<i32>,
    pub natural: Vec<f64>,
    pub reference_anthro: Vec<f64>,
}

impl SimulationInputs {
    pub fn new(years: Vec<i32>, natural: Vec<f64>, reference_anthro: Vec<f64>) -> Result<Self> {
        let n = years.len();
        if n < 2 || natural.len() != n || reference_anthro.len() != n {
            return Err(Error::Coverage(format!(
                "{} years, {} natural and {} anthropogenic forcing values",
                n,
                natural.len(),
                reference_anthro.len()
            )));
        }
        if years.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::Data("simulation years must be contiguous".into()));
        }
        if natural.iter().chain(&reference_anthro).any(|v| !v.is_finite()) {
            return Err(Error::Coverage("forcing inputs contain missing values".into()));
        }
        Ok(Self {
            years,
            natural,
            reference_anthro,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub data: EbmData,
    /// Latent states of the retained trajectory, `6 x T`.
    pub states: nalgebra::DMatrix<f64>,
    pub attempts: usize,
}

/// Canonical series metadata for `k` GMSTs and `j` ocean pairs.
pub fn canonical_meta(k: usize, j: usize) -> Vec<SeriesMeta> {
    let mut meta: Vec<SeriesMeta> = (1..=k)
        .map(|i| SeriesMeta::new(format!("gmst_{i}"), SeriesKind::Gmst))
        .collect();
    meta.extend((1..=j).map(|i| SeriesMeta::paired(format!("ocean_temp_{i}"), SeriesKind::OceanTemp, format!("pair_{i}"))));
    meta.extend((1..=j).map(|i| SeriesMeta::paired(format!("ohc_{i}"), SeriesKind::Ohc, format!("pair_{i}"))));
    meta.push(SeriesMeta::new("forcing_total", SeriesKind::ForcingTotal));
    meta
}

/// One unrestricted trajectory from a known initial state.
pub fn simulate_path<R: rand::Rng + ?Sized>(
    params: &EbmParamVector,
    config: &MeasurementConfig,
    natural: &[f64],
    init: &DgpInit,
    rng: &mut R,
) -> Result<SimulatedPath> {
    let sys = build_system_with_init(params, config, natural, init.state_init())?;
    simulate_ssm_with(&sys, natural.len(), rng)
}

/// Simulates panels until one passes the acceptance rule (`fraction = None`
/// disables it), using the given RNG stream.
pub fn simulate_dgp_with<R: rand::Rng + ?Sized>(
    params: &EbmParamVector,
    config: &MeasurementConfig,
    inputs: &SimulationInputs,
    fraction: Option<f64>,
    rng: &mut R,
) -> Result<SimulatedData> {
    let n = inputs.years.len();
    let init = DgpInit::from_reference(&inputs.reference_anthro)?;
    let sys = build_system_with_init(params, config, &inputs.natural, init.state_init())?;
    let (im, ie) = (mid_index(n), n - 1);
    let rf = config.row_forcing();
    for attempt in 1..=MAX_ATTEMPTS {
        let path = simulate_ssm_with(&sys, n, rng)?;
        let sim_a = |t: usize| path.panel.get(rf, t).unwrap_or(f64::NAN) - inputs.natural[t];
        let ok = match fraction {
            None => true,
            Some(f) => accept(
                sim_a(im),
                sim_a(ie),
                inputs.reference_anthro[im],
                inputs.reference_anthro[ie],
                f,
            ),
        };
        if ok {
            let panel = ObservationPanel::new(
                inputs.years.clone(),
                path.panel.values().clone(),
                canonical_meta(config.n_gmst, config.n_ocean_pairs),
            )?;
            return Ok(SimulatedData {
                data: EbmData::new(panel, inputs.natural.clone())?,
                states: path.states,
                attempts: attempt,
            });
        }
    }
    Err(Error::RejectionCap {
        attempts: MAX_ATTEMPTS,
    })
}

/// Seeded variant of [`simulate_dgp_with`] with the default acceptance rule.
pub fn simulate_dgp(
    params: &EbmParamVector,
    config: &MeasurementConfig,
    inputs: &SimulationInputs,
    seed: u64,
) -> Result<SimulatedData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_dgp_with(params, config, inputs, Some(DEFAULT_ACCEPT_FRACTION), &mut rng)
}

/// Sub-panel of the first GMST, the first ocean pair and total forcing.
pub fn extract_base_panel(data: &EbmData) -> Result<EbmData> {
    let p = &data.panel;
    let first = |kind| {
        p.rows_of_kind(kind)
            .first()
            .copied()
            .ok_or_else(|| Error::Data(format!("panel has no {} series", kind.as_str())))
    };
    let rows = [
        first(SeriesKind::Gmst)?,
        first(SeriesKind::OceanTemp)?,
        first(SeriesKind::Ohc)?,
        first(SeriesKind::ForcingTotal)?,
    ];
    EbmData::new(p.select_rows(&rows)?, data.natural.clone())
}

/// Summary of the estimates of one parameter across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub parameter: String,
    pub dgp_value: f64,
    pub estimation_bias: f64,
    pub standard_deviation: f64,
    pub rmse: f64,
    pub mae: f64,
}

/// Bias, standard deviation (divisor `n`), RMSE and MAE of `estimates`
/// around `truth`. With the common divisor, `rmse^2 = bias^2 + sd^2`.
pub fn metric_row(parameter: &str, truth: f64, estimates: &[f64]) -> MetricRow {
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let sd = (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
    let rmse = (estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / n).sqrt();
    let mae = estimates.iter().map(|e| (e - truth).abs()).sum::<f64>() / n;
    MetricRow {
        parameter: parameter.to_string(),
        dgp_value: truth,
        estimation_bias: mean - truth,
        standard_deviation: sd,
        rmse,
        mae,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub label: String,
    pub rows: Vec<MetricRow>,
    /// Parameter names followed by `ecs`.
    pub names: Vec<String>,
    /// One row of estimates per successful replication, in `names` order.
    pub estimates: Vec<Vec<f64>>,
    /// Estimated coefficient of variation of lambda per successful
    /// replication, when standard errors were computed.
    pub lambda_cv: Vec<Option<f64>>,
    /// Replication index of each row of `estimates`.
    pub replication: Vec<usize>,
    pub failures: usize,
}

impl ConfigReport {
    pub fn row(&self, parameter: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.parameter == parameter)
    }

    pub fn column(&self, parameter: &str) -> Option<Vec<f64>> {
        let i = self.names.iter().position(|n| n == parameter)?;
        Some(self.estimates.iter().map(|e| e[i]).collect())
    }

    /// Table in `model,parameter,dgp_value,estimation_bias,standard_deviation,rmse,mae` layout, without header.
    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{},{}",
                    self.label,
                    r.parameter,
                    r.dgp_value,
                    r.estimation_bias,
                    r.standard_deviation,
                    r.rmse,
                    r.mae
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub replications: usize,
    pub seed: u64,
    pub trajectories_attempted: usize,
    pub trajectories_retained: usize,
    pub simulation_failures: usize,
    pub base: ConfigReport,
    pub full: ConfigReport,
}

pub const REPORT_HEADER: &str = "model,parameter,dgp_value,estimation_bias,standard_deviation,rmse,mae";

impl SimulationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for line in self.base.csv_rows().into_iter().chain(self.full.csv_rows()) {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Per-replication estimates as `model,replication,<names...>` rows.
    pub fn estimates_csv(&self) -> String {
        let mut out = String::new();
        for rep in [&self.base, &self.full] {
            out.push_str(&format!("model,replication,{}\n", rep.names.join(",")));
            for (r, est) in rep.replication.iter().zip(&rep.estimates) {
                let vals: Vec<String> = est.iter().map(|v| v.to_string()).collect();
                out.push_str(&format!("{},{},{}\n", rep.label, r, vals.join(",")));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    pub replications: usize,
    pub seed: u64,
    pub fit: FitOptions,
    /// Acceptance fraction of the rejection rule; `None` disables it.
    pub accept_fraction: Option<f64>,
}

impl MonteCarloOptions {
    pub fn new(replications: usize, seed: u64) -> Self {
        Self {
            replications,
            seed,
            fit: FitOptions {
                compute_standard_errors: false,
                ..FitOptions::default()
            },
            accept_fraction: Some(DEFAULT_ACCEPT_FRACTION),
        }
    }
}

struct Replication {
    attempts: usize,
    full: Option<FitResult>,
    base: Option<FitResult>,
}

/// RNG stream of replication `rep`: the seed selects the key, the
/// replication index selects the ChaCha stream.
pub fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

fn run_replication(
    dgp: &EbmParamVector,
    config: &MeasurementConfig,
    inputs: &SimulationInputs,
    opts: &MonteCarloOptions,
    rep: usize,
) -> Option<Replication> {
    let mut rng = replication_rng(opts.seed, rep);
    let sim = simulate_dgp_with(dgp, config, inputs, opts.accept_fraction, &mut rng).ok()?;
    let fit_opts = FitOptions {
        seed: opts.seed ^ (rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        ..opts.fit
    };
    let fit = |data: &EbmData, cfg: &MeasurementConfig| {
        default_init(data, cfg)
            .and_then(|init| fit_mle(data, cfg, &init, &fit_opts))
            .ok()
    };
    let full = fit(&sim.data, config);
    let base_cfg = MeasurementConfig {
        n_gmst: 1,
        n_ocean_pairs: 1,
        ..*config
    };
    let base = extract_base_panel(&sim.data).ok().and_then(|d| fit(&d, &base_cfg));
    Some(Replication {
        attempts: sim.attempts,
        full,
        base,
    })
}

fn summarize(
    label: &str,
    truth: &EbmParamVector,
    config: &MeasurementConfig,
    fits: Vec<(usize, Option<&FitResult>)>,
) -> ConfigReport {
    let mut names = truth.names();
    names.push("ecs".into());
    let mut truth_values = truth.values();
    truth_values.push(config.f2x / truth.physical.lambda);
    let mut estimates = Vec::new();
    let mut replication = Vec::new();
    let mut lambda_cv = Vec::new();
    let mut failures = 0;
    for (rep, fit) in fits {
        match fit {
            Some(f) => {
                let mut v = f.theta_hat.values();
                v.push(config.f2x / f.theta_hat.physical.lambda);
                estimates.push(v);
                replication.push(rep);
                lambda_cv.push(f.uncertainty.as_ref().and_then(|u| u.cv[0]));
            }
            None => failures += 1,
        }
    }
    let rows = if estimates.is_empty() {
        Vec::new()
    } else {
        names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let col: Vec<f64> = estimates.iter().map(|e| e[i]).collect();
                metric_row(name, truth_values[i], &col)
            })
            .collect()
    };
    ConfigReport {
        label: label.to_string(),
        rows,
        names,
        estimates,
        lambda_cv,
        replication,
        failures,
    }
}

/// Runs the recovery study: every replication simulates one full panel and
/// fits both the full configuration and its base sub-panel, each from the
/// default initialization. Deterministic in `opts.seed` regardless of how
/// replications are scheduled.
pub fn monte_carlo(
    dgp: &EbmParamVector,
    config: &MeasurementConfig,
    inputs: &SimulationInputs,
    opts: &MonteCarloOptions,
) -> Result<SimulationReport> {
    if opts.replications == 0 {
        return Err(Error::InvalidParameter("at least one replication is required".into()));
    }
    dgp.validate(config)?;
    if config.n_ocean_pairs == 0 {
        return Err(Error::InvalidParameter("the base configuration needs one ocean pair".into()));
    }
    let run = |rep: usize| run_replication(dgp, config, inputs, opts, rep);
    #[cfg(feature = "parallel")]
    let reps: Vec<Option<Replication>> = {
        use rayon::prelude::*;
        (0..opts.replications).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let reps: Vec<Option<Replication>> = (0..opts.replications).map(run).collect();

    let simulation_failures = reps.iter().filter(|r| r.is_none()).count();
    let attempted: usize = reps.iter().flatten().map(|r| r.attempts).sum::<usize>()
        + simulation_failures * MAX_ATTEMPTS;
    let retained = reps.len() - simulation_failures;
    let base_truth = dgp.restrict(1, 1)?;
    let base = summarize(
        "base",
        &base_truth,
        config,
        reps.iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().map(|r| (i, r.base.as_ref())))
            .collect(),
    );
    let full = summarize(
        "full",
        dgp,
        config,
        reps.iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().map(|r| (i, r.full.as_ref())))
            .collect(),
    );
    Ok(SimulationReport {
        replications: opts.replications,
        seed: opts.seed,
        trajectories_attempted: attempted,
        trajectories_retained: retained,
        simulation_failures,
        base,
        full,
    })
}

/// Convenience accessor for the anthropogenic state row of a path.
pub fn anthro_states(states: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    states.row(IDX_A).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn toy_inputs(n: usize) -> SimulationInputs {
        let years: Vec<i32> = (0..n as i32).map(|i| 1955 + i).collect();
        let natural = (0..n).map(|i| 0.1 * (i as f64 * 0.57).sin()).collect();
        let anthro = (0..n).map(|i| 0.5 + 0.015 * i as f64 + 0.00022 * (i * i) as f64).collect();
        SimulationInputs::new(years, natural, anthro).unwrap()
    }

    #[test]
    fn acceptance_rule_examples() {
        assert!(accept(0.8, 0.9, 1.0, 1.0, 0.75));
        assert!(!accept(0.5, 10.0, 1.0, 1.0, 0.75));
        assert!(!accept(0.8, 0.7, 1.0, 1.0, 0.75));
        assert!(accept(0.75, 0.75, 1.0, 1.0, 0.75));
    }

    #[test]
    fn mid_index_is_floor_half_one_based() {
        assert_eq!(mid_index(66), 32);
        assert_eq!(mid_index(67), 32);
        assert_eq!(mid_index(2), 0);
    }

    #[test]
    fn dgp_init_from_reference() {
        let i = DgpInit::from_reference(&[0.5, 0.7, 1.1]).unwrap();
        assert_eq!(i.anthro, 0.5);
        assert_relative_eq!(i.trend, 0.3);
        assert!(DgpInit::from_reference(&[1.0]).is_err());
    }

    #[test]
    fn simulated_panel_passes_rule_and_is_deterministic() {
        let inputs = toy_inputs(66);
        let p = EbmParamVector::reference_dgp();
        let cfg = MeasurementConfig::new(8, 2);
        let a = simulate_dgp(&p, &cfg, &inputs, 3).unwrap();
        let b = simulate_dgp(&p, &cfg, &inputs, 3).unwrap();
        assert_eq!(a.data, b.data);
        let rf = cfg.row_forcing();
        let sim_a = |t: usize| a.data.panel.get(rf, t).unwrap() - inputs.natural[t];
        assert!(sim_a(32) >= 0.75 * inputs.reference_anthro[32]);
        assert!(sim_a(65) >= 0.75 * inputs.reference_anthro[65]);
        assert_eq!(a.data.panel.missing_count(), 0);
    }

    #[test]
    fn unreachable_region_hits_the_cap() {
        let mut inputs = toy_inputs(20);
        inputs.reference_anthro[mid_index(20)] = 1e6;
        let p = EbmParamVector::reference_dgp().restrict(1, 1).unwrap();
        let r = simulate_dgp(&p, &MeasurementConfig::new(1, 1), &inputs, 1);
        assert!(matches!(r, Err(Error::RejectionCap { attempts: MAX_ATTEMPTS })));
    }

    #[test]
    fn base_panel_shares_draws() {
        let inputs = toy_inputs(30);
        let p = EbmParamVector::reference_dgp();
        let cfg = MeasurementConfig::new(8, 2);
        let full = simulate_dgp(&p, &cfg, &inputs, 4).unwrap().data;
        let base = extract_base_panel(&full).unwrap();
        assert_eq!(base.panel.n_series(), 4);
        let src = [0, cfg.row_ocean_temp(0), cfg.row_ohc(0), cfg.row_forcing()];
        for (r, &s) in src.iter().enumerate() {
            assert_eq!(base.panel.row(r), full.panel.row(s));
        }
        let again = extract_base_panel(&base).unwrap();
        assert_eq!(again, base);
    }

    #[test]
    fn acceptance_monotone_in_threshold() {
        let inputs = toy_inputs(66);
        let p = EbmParamVector::reference_dgp().restrict(1, 1).unwrap();
        let cfg = MeasurementConfig::new(1, 1);
        let init = DgpInit::from_reference(&inputs.reference_anthro).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cands: Vec<(f64, f64)> = (0..1000)
            .map(|_| {
                let path = simulate_path(&p, &cfg, &inputs.natural, &init, &mut rng).unwrap();
                let a = anthro_states(&path.states);
                (a[32], a[65])
            })
            .collect();
        let rate = |f: f64| {
            cands
                .iter()
                .filter(|(m, e)| accept(*m, *e, inputs.reference_anthro[32], inputs.reference_anthro[65], f))
                .count()
        };
        let mut prev = rate(1.0);
        for f in [0.9, 0.75, 0.5, 0.25, 0.0] {
            let r = rate(f);
            assert!(r >= prev);
            prev = r;
        }
    }

    #[test]
    fn metric_identities() {
        let row = metric_row("x", 1.0, &[0.5, 1.5, 2.0, 0.9]);
        assert_relative_eq!(
            row.rmse.powi(2),
            row.estimation_bias.powi(2) + row.standard_deviation.powi(2),
            epsilon = 1e-12
        );
        assert!(row.mae <= row.rmse);
    }

    proptest! {
        #[test]
        fn metric_identities_random(v in proptest::collection::vec(-5.0f64..5.0, 1..40), truth in -3.0f64..3.0) {
            let row = metric_row("x", truth, &v);
            prop_assert!((row.rmse.powi(2) - row.estimation_bias.powi(2) - row.standard_deviation.powi(2)).abs() < 1e-10);
            prop_assert!(row.mae <= row.rmse + 1e-12);
        }
    }

    #[test]
    fn small_monte_carlo_is_deterministic_and_consistent() {
        let inputs = toy_inputs(30);
        let p = EbmParamVector::reference_dgp().restrict(2, 1).unwrap();
        let cfg = MeasurementConfig::new(2, 1);
        let mut opts = MonteCarloOptions::new(2, 7);
        opts.fit.restarts = 0;
        opts.fit.max_evals_per_start = 800;
        let a = monte_carlo(&p, &cfg, &inputs, &opts).unwrap();
        let b = monte_carlo(&p, &cfg, &inputs, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trajectories_retained, 2);
        for rep in [&a.base, &a.full] {
            let lam = rep.column("lambda").unwrap();
            let ecs = rep.column("ecs").unwrap();
            for (l, e) in lam.iter().zip(&ecs) {
                assert_eq!(*e, cfg.f2x / l);
            }
        }
        assert!(a.to_csv().starts_with(REPORT_HEADER));
    }
}
