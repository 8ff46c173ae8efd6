use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{symmetrize, ObservationPanel, SystemMatrices};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Update-step quantities restricted to the rows observed at that step.
#[derive(Debug, Clone)]
pub struct FilterStep {
    pub observed: Vec<usize>,
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
    pub loglik: f64,
}

#[derive(Debug, Clone)]
pub struct FilterResult {
    pub pred_mean: Vec<DVector<f64>>,
    pub pred_cov: Vec<DMatrix<f64>>,
    pub filt_mean: Vec<DVector<f64>>,
    pub filt_cov: Vec<DMatrix<f64>>,
    pub steps: Vec<FilterStep>,
    pub loglik: f64,
    pub n_series: usize,
}

impl FilterResult {
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }
}

/// Kalman filter with row deletion for missing cells.
///
/// The covariance update uses the Joseph form and every stored covariance is
/// symmetrized. A step without observations is a pure prediction step.
pub fn kalman_filter(model: &SystemMatrices, panel: &ObservationPanel) -> Result<FilterResult> {
    model.check_dimensions()?;
    if panel.n_series() != model.obs_dim() {
        return Err(Error::Dimension(format!(
            "panel has {} series, model expects {}",
            panel.n_series(),
            model.obs_dim()
        )));
    }
    if !panel.has_observations() {
        return Err(Error::NoObservations);
    }
    let n = panel.n_steps();
    model.check_horizon(n)?;
    let m = model.state_dim();

    let mut out = FilterResult {
        pred_mean: Vec::with_capacity(n),
        pred_cov: Vec::with_capacity(n),
        filt_mean: Vec::with_capacity(n),
        filt_cov: Vec::with_capacity(n),
        steps: Vec::with_capacity(n),
        loglik: 0.0,
        n_series: panel.n_series(),
    };

    let mut a = model.init_mean.clone();
    let mut p = model.init_cov.clone();
    symmetrize(&mut p);
    let identity = DMatrix::<f64>::identity(m, m);

    for t in 0..n {
        let observed = panel.observed_rows_at(t);
        let (af, pf, step) = if observed.is_empty() {
            let step = FilterStep {
                observed,
                innovation: DVector::zeros(0),
                innovation_cov: DMatrix::zeros(0, 0),
                loglik: 0.0,
            };
            (a.clone(), p.clone(), step)
        } else {
            let z = model.measurement.select_rows(observed.iter());
            let h = model
                .obs_cov
                .select_rows(observed.iter())
                .select_columns(observed.iter());
            let y = DVector::from_iterator(
                observed.len(),
                observed.iter().map(|&i| panel.get(i, t).unwrap_or_default()),
            );
            let v = &y - &z * &a;
            let zp = &z * &p;
            let mut f = &zp * z.transpose() + &h;
            symmetrize(&mut f);
            let chol = f
                .clone()
                .cholesky()
                .ok_or(Error::SingularInnovation { step: t })?;
            let finv_v = chol.solve(&v);
            let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let ll = -0.5 * (observed.len() as f64 * LN_2PI + log_det + v.dot(&finv_v));
            // K = P Z' F^{-1}
            let gain = chol.solve(&zp).transpose();
            let af = &a + &gain * &v;
            let ikz = &identity - &gain * &z;
            let mut pf = &ikz * &p * ikz.transpose() + &gain * &h * gain.transpose();
            symmetrize(&mut pf);
            let step = FilterStep {
                observed,
                innovation: v,
                innovation_cov: f,
                loglik: ll,
            };
            (af, pf, step)
        };
        out.loglik += step.loglik;
        out.pred_mean.push(a.clone());
        out.pred_cov.push(p.clone());

        if t + 1 < n {
            let tt = model.transition_at(t);
            a = &tt * &af;
            p = &tt * &pf * tt.transpose() + &model.state_cov;
            symmetrize(&mut p);
        }
        out.filt_mean.push(af);
        out.filt_cov.push(pf);
        out.steps.push(step);
    }
    Ok(out)
}

/// One-step prediction errors scaled by the symmetric inverse square root of
/// their covariance. Rows are series, columns are steps; missing cells stay
/// `None`.
pub fn standardized_innovations(filt: &FilterResult) -> Result<Vec<Vec<Option<f64>>>> {
    let n = filt.n_steps();
    let mut out = vec![vec![None; n]; filt.n_series];
    for (t, step) in filt.steps.iter().enumerate() {
        if step.observed.is_empty() {
            continue;
        }
        let eig = SymmetricEigen::new(step.innovation_cov.clone());
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::NotPsd {
                what: format!("innovation covariance at step {t}"),
                min_eigenvalue: eig.eigenvalues.min(),
            });
        }
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let scale = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
        let e = scale * &step.innovation;
        for (k, &i) in step.observed.iter().enumerate() {
            out[i][t] = Some(e[k]);
        }
    }
    Ok(out)
}
