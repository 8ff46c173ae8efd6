//! Maximum-likelihood estimation of the model parameters.
//!
//! The log-likelihood is maximized over the unconstrained image of the
//! parameters (see [`EbmParamVector::transform`]) with Nelder-Mead and
//! restarts. Standard errors come from a central-difference Hessian mapped
//! back to the original scale with the delta method.

mod hessian;
mod nelder_mead;

pub use hessian::{clip_to_psd, numerical_hessian, standard_errors, StandardErrors, HESSIAN_STEP};
pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadResult};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ecs, ecs_std_error, EbmData, EbmParamVector, MeasurementConfig, NoiseParams, PhysicalParams,
    VARIANCE_FLOOR,
};
use crate::ssm::{ObservationPanel, SeriesKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Additional Nelder-Mead runs started near the best point so far.
    pub restarts: usize,
    pub max_evals_per_start: usize,
    pub ftol: f64,
    pub spread_tol: f64,
    /// Initial simplex offset in unconstrained units.
    pub initial_step: f64,
    /// Standard deviation of the perturbation applied to restart points.
    pub jitter: f64,
    pub seed: u64,
    pub compute_standard_errors: bool,
    pub hessian_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_evals_per_start: 20_000,
            ftol: 1e-8,
            spread_tol: 1e-6,
            initial_step: 0.3,
            jitter: 0.1,
            seed: 0,
            compute_standard_errors: true,
            hessian_step: HESSIAN_STEP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    Converged,
    MaxEvaluations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub status: ConvergenceStatus,
    pub evaluations: usize,
    pub iterations: usize,
    pub restarts_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Uncertainty {
    /// Original-scale standard errors in [`EbmParamVector::names`] order.
    pub se: Vec<Option<f64>>,
    /// Covariance of `(lambda, gamma, c_m, c_d)`.
    pub vcov_physical: [[f64; 4]; 4],
    /// `se / |estimate|` for the physical parameters.
    pub cv: [Option<f64>; 4],
    pub ecs_se: Option<f64>,
    pub pseudo_inverse: bool,
    /// Eigenvalues of `vcov_physical` were clipped at zero.
    pub vcov_clipped: bool,
    pub non_identified: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub config: MeasurementConfig,
    pub names: Vec<String>,
    pub theta_hat: EbmParamVector,
    /// Estimate in unconstrained coordinates.
    pub x_hat: Vec<f64>,
    pub loglik: f64,
    pub init_loglik: f64,
    pub ecs_hat: f64,
    pub uncertainty: Option<Uncertainty>,
    pub convergence: Convergence,
    pub at_floor: Vec<String>,
}

impl FitResult {
    pub fn se_of(&self, name: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == name)?;
        self.uncertainty.as_ref()?.se[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
    /// `None` when the estimate is zero or the SE is undefined.
    pub cv: Option<f64>,
}

pub fn cv(se: Option<f64>, estimate: f64) -> Option<f64> {
    let se = se?;
    (estimate != 0.0 && estimate.is_finite()).then(|| se / estimate.abs())
}

/// CV rows for the four physical parameters followed by ECS.
pub fn coefficient_of_variation(fit: &FitResult) -> Vec<CvEntry> {
    let est = fit.theta_hat.physical.as_array();
    let unc = fit.uncertainty.as_ref();
    let mut rows: Vec<CvEntry> = ["lambda", "gamma", "c_m", "c_d"]
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let se = unc.and_then(|u| u.se[i]);
            CvEntry {
                name: name.to_string(),
                estimate: est[i],
                se,
                cv: cv(se, est[i]),
            }
        })
        .collect();
    let ecs_se = unc.and_then(|u| u.ecs_se);
    rows.push(CvEntry {
        name: "ecs".into(),
        estimate: fit.ecs_hat,
        se: ecs_se,
        cv: cv(ecs_se, fit.ecs_hat),
    });
    rows
}

/// Sample variance of first differences over consecutive observed pairs.
fn diff_variance(row: &[Option<f64>], order: usize) -> Option<f64> {
    let mut d: Vec<Option<f64>> = row.to_vec();
    for _ in 0..order {
        d = d
            .windows(2)
            .map(|w| match (w[0], w[1]) {
                (Some(a), Some(b)) => Some(b - a),
                _ => None,
            })
            .collect();
    }
    let v: Vec<f64> = d.into_iter().flatten().collect();
    if v.len() < 2 {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    Some(v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

fn mean_observed(row: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = row.iter().flatten().copied().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Starting values: physical parameters `(1, 1, 10, 100)`; state variances
/// at half, measurement variances at a quarter of the variance of the
/// differenced first series of each kind; `rho = 0.5`; ocean offsets at the
/// mean gap between each ocean temperature and the first GMST.
pub fn default_init(data: &EbmData, config: &MeasurementConfig) -> Result<EbmParamVector> {
    let panel: &ObservationPanel = &data.panel;
    let floor = |v: Option<f64>| v.unwrap_or(1e-2).max(10.0 * VARIANCE_FLOOR);
    let gmst_rows = panel.rows_of_kind(SeriesKind::Gmst);
    let td_rows = panel.rows_of_kind(SeriesKind::OceanTemp);
    let ohc_rows = panel.rows_of_kind(SeriesKind::Ohc);
    let f_rows = panel.rows_of_kind(SeriesKind::ForcingTotal);
    if gmst_rows.len() != config.n_gmst || td_rows.len() != config.n_ocean_pairs || f_rows.len() != 1 {
        return Err(Error::Dimension("panel does not match the measurement configuration".into()));
    }
    let gmst1 = panel.row(gmst_rows[0]);
    let v_gmst = diff_variance(&gmst1, 1);
    let v_td = td_rows.first().and_then(|&r| diff_variance(&panel.row(r), 1));
    let v_ohc = ohc_rows.first().and_then(|&r| diff_variance(&panel.row(r), 1));
    let anthro: Vec<Option<f64>> = panel
        .row(f_rows[0])
        .iter()
        .zip(&data.natural)
        .map(|(f, n)| f.map(|f| f - n))
        .collect();
    let v_a = diff_variance(&anthro, 1);
    let v_beta = diff_variance(&anthro, 2);
    let g_mean = mean_observed(&gmst1);
    let mu_td = td_rows
        .iter()
        .map(|&r| {
            let row = panel.row(r);
            let paired: (Vec<f64>, Vec<f64>) = row
                .iter()
                .zip(&gmst1)
                .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                .unzip();
            if paired.0.is_empty() {
                mean_observed(&row).zip(g_mean).map(|(a, b)| a - b).unwrap_or(0.0)
            } else {
                let n = paired.0.len() as f64;
                (paired.0.iter().sum::<f64>() - paired.1.iter().sum::<f64>()) / n
            }
        })
        .collect();
    let j = config.n_ocean_pairs;
    let params = EbmParamVector {
        physical: PhysicalParams::new(1.0, 1.0, 10.0, 100.0),
        noise: NoiseParams {
            var_eta_tm: floor(v_gmst.map(|v| 0.5 * v)),
            var_eta_td: floor(v_td.map(|v| 0.5 * v)),
            var_eta_a: floor(v_a.map(|v| 0.5 * v)),
            var_eta_beta: floor(v_beta.map(|v| 0.5 * v)),
            var_eps_gmst: vec![floor(v_gmst.map(|v| 0.25 * v)); config.n_gmst],
            var_eps_td: vec![floor(v_td.map(|v| 0.25 * v)); j],
            var_eps_ohc: vec![floor(v_ohc.map(|v| 0.25 * v)); j],
            var_eps_f: floor(v_a.map(|v| 0.25 * v)),
            rho: vec![0.5; j],
            mu_td,
        },
    };
    params.validate(config)?;
    Ok(params)
}

fn objective(data: &EbmData, config: &MeasurementConfig, x: &[f64]) -> f64 {
    EbmParamVector::untransform(x, config.n_gmst, config.n_ocean_pairs)
        .and_then(|p| data.loglik(&p, config))
        .unwrap_or(f64::NEG_INFINITY)
}

/// Maximum-likelihood fit. Deterministic in `options`.
pub fn fit_mle(
    data: &EbmData,
    config: &MeasurementConfig,
    init: &EbmParamVector,
    options: &FitOptions,
) -> Result<FitResult> {
    if data.n_gmst() != config.n_gmst || data.n_ocean_pairs() != config.n_ocean_pairs {
        return Err(Error::Dimension("data does not match the measurement configuration".into()));
    }
    init.validate(config)?;
    let init_loglik = data.loglik(init, config)?;
    let x0 = init.transform()?;
    let n = x0.len();
    let nm_opts = NelderMeadOptions {
        max_evals: options.max_evals_per_start,
        ftol: options.ftol,
        spread_tol: options.spread_tol,
    };
    let neg = |x: &[f64]| -objective(data, config, x);
    let steps = vec![options.initial_step; n];

    let first = nelder_mead(neg, &x0, &steps, &nm_opts);
    let (mut best_x, mut best_f) = if first.f <= -init_loglik {
        (first.x, first.f)
    } else {
        (x0.clone(), -init_loglik)
    };
    let mut evaluations = first.evals;
    let mut iterations = first.iterations;
    let mut converged = first.converged;
    let mut restarts_used = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for _ in 0..options.restarts {
        restarts_used += 1;
        let start: Vec<f64> = best_x
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + options.jitter * z
            })
            .collect();
        let r = nelder_mead(neg, &start, &steps, &nm_opts);
        evaluations += r.evals;
        iterations += r.iterations;
        let improvement = best_f - r.f;
        if r.f < best_f {
            best_x = r.x;
            best_f = r.f;
            converged = r.converged;
        }
        if improvement < options.ftol {
            break;
        }
    }

    let theta_hat = EbmParamVector::untransform(&best_x, config.n_gmst, config.n_ocean_pairs)?;
    let loglik = -best_f;
    let ecs_hat = ecs(theta_hat.physical.lambda, config.f2x)?;
    let uncertainty = if options.compute_standard_errors {
        Some(uncertainty_at(data, config, &best_x, &theta_hat, options.hessian_step)?)
    } else {
        None
    };
    Ok(FitResult {
        config: *config,
        names: theta_hat.names(),
        at_floor: theta_hat.at_floor(),
        theta_hat,
        x_hat: best_x,
        loglik,
        init_loglik,
        ecs_hat,
        uncertainty,
        convergence: Convergence {
            status: if converged {
                ConvergenceStatus::Converged
            } else {
                ConvergenceStatus::MaxEvaluations
            },
            evaluations,
            iterations,
            restarts_used,
        },
    })
}

/// Hessian-based uncertainty at an unconstrained point `x`.
pub fn uncertainty_at(
    data: &EbmData,
    config: &MeasurementConfig,
    x: &[f64],
    theta: &EbmParamVector,
    step: f64,
) -> Result<Uncertainty> {
    let hess = numerical_hessian(|x| objective(data, config, x), x, step)?;
    let jac = EbmParamVector::untransform_jacobian(x, config.n_gmst, config.n_ocean_pairs);
    let se = standard_errors(&hess, &jac)?;
    let block = se.vcov.view((0, 0), (4, 4)).into_owned();
    let (block, clipped) = clip_to_psd(&block);
    let mut vcov_physical = [[0.0; 4]; 4];
    for (i, row) in vcov_physical.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = block[(i, j)];
        }
    }
    let est = theta.physical.as_array();
    let phys_se = |i: usize| se.se[i].map(|_| block[(i, i)].sqrt());
    let cv_arr = [0, 1, 2, 3].map(|i| cv(phys_se(i), est[i]));
    let ecs_se = phys_se(0)
        .map(|s| ecs_std_error(theta.physical.lambda, s, config.f2x, config.f2x_se))
        .transpose()?;
    let names = theta.names();
    let mut se_all = se.se.clone();
    for (i, s) in se_all.iter_mut().take(4).enumerate() {
        *s = phys_se(i);
    }
    Ok(Uncertainty {
        se: se_all,
        vcov_physical,
        cv: cv_arr,
        ecs_se,
        pseudo_inverse: se.pseudo_inverse,
        vcov_clipped: clipped,
        non_identified: se.non_identified.iter().map(|&i| names[i].clone()).collect(),
    })
}
