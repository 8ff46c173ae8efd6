use nalgebra::{DMatrix, DVector};

use super::{symmetrize, FilterResult, SystemMatrices};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SmootherResult {
    pub smooth_mean: Vec<DVector<f64>>,
    pub smooth_cov: Vec<DMatrix<f64>>,
}

/// Fixed-interval smoother in the backward-information form, which needs no
/// inverse of the predicted covariance (singular whenever a state is known
/// exactly).
///
/// With `u_t`, `U_t` the information carried from steps `t..T`:
/// `x_hat_t = a_{t|t} + P_{t|t} T_t' u_{t+1}`,
/// `V_t = P_{t|t} - P_{t|t} T_t' U_{t+1} T_t P_{t|t}`.
pub fn kalman_smoother(model: &SystemMatrices, filt: &FilterResult) -> Result<SmootherResult> {
    let n = filt.n_steps();
    if filt.filt_mean.len() != n
        || filt.filt_cov.len() != n
        || filt.pred_mean.len() != n
        || filt.pred_cov.len() != n
    {
        return Err(Error::Dimension("filter result has inconsistent lengths".into()));
    }
    if n == 0 {
        return Ok(SmootherResult {
            smooth_mean: vec![],
            smooth_cov: vec![],
        });
    }
    let m = model.state_dim();
    if filt.filt_mean[0].len() != m {
        return Err(Error::Dimension("filter result does not match model".into()));
    }
    model.check_horizon(n)?;

    let mut smooth_mean = vec![DVector::zeros(m); n];
    let mut smooth_cov = vec![DMatrix::zeros(m, m); n];
    smooth_mean[n - 1] = filt.filt_mean[n - 1].clone();
    smooth_cov[n - 1] = filt.filt_cov[n - 1].clone();

    let identity = DMatrix::<f64>::identity(m, m);
    let mut u = DVector::<f64>::zeros(m);
    let mut big_u = DMatrix::<f64>::zeros(m, m);

    for t in (0..n).rev() {
        if t < n - 1 {
            let tt = model.transition_at(t);
            let pf = &filt.filt_cov[t];
            let pt_tt = pf * tt.transpose();
            smooth_mean[t] = &filt.filt_mean[t] + &pt_tt * &u;
            let mut v = pf - &pt_tt * &big_u * pt_tt.transpose();
            symmetrize(&mut v);
            smooth_cov[t] = v;
            u = tt.transpose() * &u;
            big_u = tt.transpose() * &big_u * &tt;
        }
        // Fold in the observation at step t.
        let step = &filt.steps[t];
        if step.observed.is_empty() {
            continue;
        }
        let z = model.measurement.select_rows(step.observed.iter());
        let chol = step
            .innovation_cov
            .clone()
            .cholesky()
            .ok_or(Error::SingularInnovation { step: t })?;
        let finv_z = chol.solve(&z);
        let finv_v = chol.solve(&step.innovation);
        let p = &filt.pred_cov[t];
        let mm = &identity - p * z.transpose() * &finv_z;
        u = z.transpose() * finv_v + mm.transpose() * &u;
        big_u = z.transpose() * &finv_z + mm.transpose() * &big_u * &mm;
        symmetrize(&mut big_u);
    }
    Ok(SmootherResult {
        smooth_mean,
        smooth_cov,
    })
}
