use std::path::{Path, PathBuf};

use ebmss::data::{assemble_panel, split_forcing, synchronize, AnomalySeries, AssembledPanel, SyncSpec};
use ebmss::diagnostics::{adf_rows, adf_table, prediction_error_summaries, residual_table, AdfRow};
use ebmss::estimation::{coefficient_of_variation, default_init, fit_mle, FitOptions, FitResult};
use ebmss::model::{EbmData, EbmParamVector, MeasurementConfig};
use ebmss::projection::{draw_parameters, fan, ScenarioPath};
use ebmss::simulation::{monte_carlo, MonteCarloOptions, SimulationInputs};
use ebmss::ssm::SeriesKind;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::{load_manifest, read_series_file};
use crate::output::{num, opt_num, Staging};

#[derive(Debug, Clone)]
pub struct FitFlags {
    pub seed: u64,
    pub restarts: usize,
    pub max_evals: usize,
}

impl FitFlags {
    fn options(&self, standard_errors: bool) -> FitOptions {
        FitOptions {
            restarts: self.restarts,
            max_evals_per_start: self.max_evals,
            seed: self.seed,
            compute_standard_errors: standard_errors,
            ..FitOptions::default()
        }
    }
}

#[derive(Serialize)]
struct OffsetLine {
    label: String,
    kind: SeriesKind,
    mode: &'static str,
    offset: Option<f64>,
    already_synchronized: bool,
}

fn mode_name(s: &SyncSpec) -> &'static str {
    match s {
        SyncSpec::Preindustrial { .. } => "preindustrial",
        SyncSpec::Offset { .. } => "offset",
        SyncSpec::Synchronized => "synchronized",
    }
}

fn long_rows(series: &AnomalySeries, out: &mut String) {
    let pair = series.pair_id.as_deref().unwrap_or("");
    for (y, v) in series.years.iter().zip(&series.values) {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            series.label,
            series.kind.as_str(),
            pair,
            y,
            opt_num(*v)
        ));
    }
}

/// Synchronizes every manifest series and writes them individually and as
/// one long table, with an offset report.
pub fn sync(manifest: &Path, out: &Path) -> CliResult<()> {
    let entries = load_manifest(manifest)?;
    let mut stage = Staging::new(out);
    let mut offsets = Vec::new();
    let mut panel = String::from("label,kind,pair_id,year,value\n");
    let mut table = String::from("label,kind,mode,offset,already_synchronized\n");
    for e in &entries {
        let offset = e.sync.offset();
        let s = match offset {
            Some(o) => synchronize(&e.series, o)?,
            None => e.series.clone(),
        };
        let mut file = String::from("year,value\n");
        for (y, v) in s.years.iter().zip(&s.values) {
            file.push_str(&format!("{y},{}\n", opt_num(*v)));
        }
        stage.text(format!("synchronized/{}.csv", s.label), file);
        long_rows(&s, &mut panel);
        let line = OffsetLine {
            label: s.label.clone(),
            kind: s.kind,
            mode: mode_name(&e.sync),
            offset,
            already_synchronized: offset.is_none(),
        };
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            line.label,
            line.kind.as_str(),
            line.mode,
            offset.map(|o| format!("{o:.3}")).unwrap_or_default(),
            line.already_synchronized
        ));
        offsets.push(line);
    }
    stage.text("panel.csv", panel);
    stage.text("offsets.csv", table);
    stage.json(
        "report.json",
        &serde_json::json!({
            "command": "sync",
            "manifest": manifest.display().to_string(),
            "series": offsets,
        }),
    )?;
    stage.commit()
}

fn assemble(manifest: &Path, years: (i32, i32)) -> CliResult<AssembledPanel> {
    let entries = load_manifest(manifest)?;
    Ok(assemble_panel(&entries, years.0..=years.1)?)
}

#[derive(Serialize)]
struct EstimateLine {
    parameter: String,
    estimate: f64,
    std_error: Option<f64>,
    cv: Option<f64>,
}

fn estimate_lines(fit: &FitResult) -> Vec<EstimateLine> {
    let cvs = coefficient_of_variation(fit);
    let mut lines: Vec<EstimateLine> = fit
        .names
        .iter()
        .zip(fit.theta_hat.values())
        .map(|(name, v)| EstimateLine {
            parameter: name.clone(),
            estimate: v,
            std_error: fit.se_of(name),
            cv: cvs.iter().find(|c| &c.name == name).and_then(|c| c.cv),
        })
        .collect();
    lines.push(EstimateLine {
        parameter: "ecs".into(),
        estimate: fit.ecs_hat,
        std_error: fit.uncertainty.as_ref().and_then(|u| u.ecs_se),
        cv: cvs.iter().find(|c| c.name == "ecs").and_then(|c| c.cv),
    });
    lines
}

fn estimates_csv(lines: &[EstimateLine]) -> String {
    let mut out = String::from("parameter,estimate,std_error,cv\n");
    for l in lines {
        out.push_str(&format!(
            "{},{},{},{}\n",
            l.parameter,
            num(l.estimate),
            opt_num(l.std_error),
            opt_num(l.cv)
        ));
    }
    out
}

fn run_fit(data: &EbmData, flags: &FitFlags, standard_errors: bool) -> CliResult<FitResult> {
    let config = data.config();
    let init = default_init(data, &config)?;
    Ok(fit_mle(data, &config, &init, &flags.options(standard_errors))?)
}

/// Fits the model, writing estimates, the full fit document and residual
/// diagnostics.
pub fn fit(manifest: &Path, years: (i32, i32), flags: &FitFlags, standard_errors: bool, out: &Path) -> CliResult<()> {
    let assembled = assemble(manifest, years)?;
    let data = &assembled.data;
    let fit = run_fit(data, flags, standard_errors)?;
    let lines = estimate_lines(&fit);
    let residuals = prediction_error_summaries(data, &fit.theta_hat, &fit.config)?;

    let mut stage = Staging::new(out);
    stage.text("estimates.csv", estimates_csv(&lines));
    stage.text("residuals.csv", residual_table(&residuals));
    stage.json("fit.json", &fit)?;
    stage.json(
        "report.json",
        &serde_json::json!({
            "command": "fit",
            "manifest": manifest.display().to_string(),
            "years": [years.0, years.1],
            "n_gmst": fit.config.n_gmst,
            "n_ocean_pairs": fit.config.n_ocean_pairs,
            "series": data.panel.meta().iter().map(|m| &m.label).collect::<Vec<_>>(),
            "missing_cells": data.panel.missing_count(),
            "loglik": fit.loglik,
            "init_loglik": fit.init_loglik,
            "convergence": fit.convergence,
            "at_floor": fit.at_floor,
            "uncertainty_flags": fit.uncertainty.as_ref().map(|u| serde_json::json!({
                "pseudo_inverse": u.pseudo_inverse,
                "vcov_clipped": u.vcov_clipped,
                "non_identified": u.non_identified,
            })),
            "estimates": lines,
            "residuals": residuals.iter().map(|(l, s)| serde_json::json!({"series": l, "summary": s})).collect::<Vec<_>>(),
        }),
    )?;
    stage.commit()
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub forcing: PathBuf,
    pub years: Option<(i32, i32)>,
    pub seed: u64,
    pub reps: usize,
    pub n_gmst: usize,
    pub n_pairs: usize,
    pub accept_fraction: Option<f64>,
    pub fit: FitFlags,
}

/// Reads `year,natural,anthropogenic` forcing inputs.
fn read_forcing(path: &Path, years: Option<(i32, i32)>) -> CliResult<SimulationInputs> {
    let (y, nat) = read_series_file(path, "natural")?;
    let (y2, anthro) = read_series_file(path, "anthropogenic")?;
    if y != y2 {
        return Err(CliError::input(format!("{}: inconsistent years", path.display())));
    }
    let keep: Vec<usize> = (0..y.len())
        .filter(|&i| years.is_none_or(|(a, b)| (a..=b).contains(&y[i])))
        .collect();
    let missing = |what: &str| CliError::input(format!("{}: missing {what} forcing", path.display()));
    let natural = keep.iter().map(|&i| nat[i].ok_or_else(|| missing("natural"))).collect::<CliResult<_>>()?;
    let anthro = keep.iter().map(|&i| anthro[i].ok_or_else(|| missing("anthropogenic"))).collect::<CliResult<_>>()?;
    let years: Vec<i32> = keep.iter().map(|&i| y[i]).collect();
    Ok(SimulationInputs::new(years, natural, anthro)?)
}

/// Monte Carlo recovery study at the reference parameters.
pub fn simulate(args: &SimulateArgs, out: &Path) -> CliResult<()> {
    let inputs = read_forcing(&args.forcing, args.years)?;
    let config = MeasurementConfig::new(args.n_gmst, args.n_pairs);
    let dgp = EbmParamVector::reference_dgp()
        .restrict(args.n_gmst, args.n_pairs)
        .map_err(|e| CliError::input(format!("configuration: {e}")))?;
    let opts = MonteCarloOptions {
        fit: args.fit.options(false),
        accept_fraction: args.accept_fraction,
        ..MonteCarloOptions::new(args.reps, args.seed)
    };
    let report = monte_carlo(&dgp, &config, &inputs, &opts)?;
    let mut stage = Staging::new(out);
    stage.text("report.csv", report.to_csv());
    stage.text("estimates.csv", report.estimates_csv());
    stage.json(
        "report.json",
        &serde_json::json!({
            "command": "simulate",
            "seed": args.seed,
            "replications": report.replications,
            "years": [inputs.years[0], inputs.years[inputs.years.len() - 1]],
            "n_gmst": args.n_gmst,
            "n_ocean_pairs": args.n_pairs,
            "trajectories_attempted": report.trajectories_attempted,
            "trajectories_retained": report.trajectories_retained,
            "simulation_failures": report.simulation_failures,
            "fit_failures": { "base": report.base.failures, "full": report.full.failures },
            "base": report.base.rows,
            "full": report.full.rows,
        }),
    )?;
    stage.commit()
}

fn read_scenario(path: &Path) -> CliResult<ScenarioPath> {
    let (years, values) = read_series_file(path, "forcing")?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    let forcing = values
        .into_iter()
        .map(|v| v.ok_or_else(|| CliError::input(format!("{}: missing forcing value", path.display()))))
        .collect::<CliResult<_>>()?;
    ScenarioPath::new(name, years, forcing).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone)]
pub struct ProjectArgs {
    pub manifest: PathBuf,
    pub years: (i32, i32),
    pub seed: u64,
    pub draws: usize,
    pub scenarios: Vec<PathBuf>,
    pub quantiles: Vec<f64>,
    pub fit_file: Option<PathBuf>,
    pub fit: FitFlags,
}

/// Quantile fans per scenario under parameter uncertainty.
pub fn project(args: &ProjectArgs, out: &Path) -> CliResult<()> {
    if args.scenarios.is_empty() {
        return Err(CliError::input("at least one --scenario file is required"));
    }
    let scenarios = args.scenarios.iter().map(|p| read_scenario(p)).collect::<CliResult<Vec<_>>>()?;
    let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::input("scenario file names must be distinct"));
    }
    let assembled = assemble(&args.manifest, args.years)?;
    let data = &assembled.data;
    let fit: FitResult = match &args.fit_file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            let fit: FitResult = serde_json::from_str(&text)?;
            if fit.config != data.config() {
                return Err(CliError::input(format!(
                    "{}: fit configuration does not match the manifest panel",
                    p.display()
                )));
            }
            fit
        }
        None => run_fit(data, &args.fit, true)?,
    };
    let draws = draw_parameters(&fit, data, args.draws, args.seed)?;
    let mut stage = Staging::new(out);
    let mut summaries = Vec::new();
    for s in &scenarios {
        let f = fan(&draws, data, s, &args.quantiles)?;
        stage.text(format!("fans/{}.csv", s.name), f.to_csv());
        summaries.push(serde_json::json!({
            "scenario": s.name,
            "first_year": f.years[0],
            "last_year": f.years[f.years.len() - 1],
            "quantile_levels": f.quantile_levels,
            "last_year_quantiles": f.values.last(),
        }));
    }
    let rate = draws.rejection_rate();
    stage.json(
        "report.json",
        &serde_json::json!({
            "command": "project",
            "seed": args.seed,
            "draws": draws.len(),
            "rejected_draws": draws.rejected,
            "warning": (rate > ebmss::projection::REJECTION_WARNING)
                .then(|| format!("{:.0}% of parameter draws were rejected and redrawn", 100.0 * rate)),
            "physical_estimate": fit.theta_hat.physical,
            "vcov_physical": fit.uncertainty.as_ref().map(|u| u.vcov_physical),
            "scenarios": summaries,
        }),
    )?;
    stage.commit()
}

/// Observed stretch without interior gaps, or `None`.
fn contiguous(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let first = values.iter().position(Option::is_some)?;
    let last = values.iter().rposition(Option::is_some)?;
    values[first..=last].iter().copied().collect()
}

/// ADF tables for every panel series plus natural and anthropogenic forcing.
pub fn diagnose(manifest: &Path, years: (i32, i32), max_lag: usize, out: &Path) -> CliResult<()> {
    let assembled = assemble(manifest, years)?;
    let panel = &assembled.data.panel;
    let mut series: Vec<(String, Vec<Option<f64>>)> = panel
        .meta()
        .iter()
        .enumerate()
        .map(|(i, m)| (m.label.clone(), panel.row(i)))
        .collect();
    let natural = AnomalySeries::new(
        assembled.natural_label.clone(),
        SeriesKind::ForcingNatural,
        panel.years().to_vec(),
        assembled.data.natural.iter().map(|v| Some(*v)).collect(),
    )?;
    let total_row = panel.n_series() - 1;
    let total = AnomalySeries::new(
        panel.meta()[total_row].label.clone(),
        SeriesKind::ForcingTotal,
        panel.years().to_vec(),
        panel.row(total_row),
    )?;
    series.push((natural.label.clone(), natural.values.clone()));
    let anthro = split_forcing(&total, &natural)?;
    series.push(("forcing_anthropogenic".into(), anthro.values));

    let mut rows: Vec<AdfRow> = Vec::new();
    let mut skipped = Vec::new();
    for (label, values) in &series {
        let Some(y) = contiguous(values) else {
            skipped.push(serde_json::json!({"series": label, "reason": "interior gaps"}));
            continue;
        };
        match adf_rows(label, &y, max_lag) {
            Ok(r) => rows.extend(r),
            Err(e) => skipped.push(serde_json::json!({"series": label, "reason": e.to_string()})),
        }
    }
    let mut stage = Staging::new(out);
    stage.text("adf.csv", adf_table(&rows));
    stage.json(
        "report.json",
        &serde_json::json!({
            "command": "diagnose",
            "years": [years.0, years.1],
            "max_lag": max_lag,
            "rows": rows,
            "skipped": skipped,
        }),
    )?;
    stage.commit()
}

