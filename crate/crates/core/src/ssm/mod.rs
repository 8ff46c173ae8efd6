//! Linear Gaussian state-space engine.
//!
//! State equation `x_{t+1} = T_t x_t + eta_t`, `eta_t ~ N(0, Q)`;
//! measurement equation `y_t = Z x_t + eps_t`, `eps_t ~ N(0, H)`;
//! `x_1 ~ N(a_1, P_1)`.
//!
//! The transition is a fixed base matrix plus at most one entry whose value
//! changes per step. Missing cells are handled by deleting the matching rows
//! of `Z` and `H` before the update.

mod filter;
mod panel;
mod sequential;
mod simulate;
mod smoother;

pub use filter::{kalman_filter, standardized_innovations, FilterResult, FilterStep};
pub use panel::{ObservationPanel, SeriesKind, SeriesMeta};
pub use sequential::{sequential_filter, SequentialSummary};
pub use simulate::{psd_sqrt, simulate_ssm, simulate_ssm_with, SimulatedPath};
pub use smoother::{kalman_smoother, SmootherResult};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Per-step override of one transition entry.
///
/// `values[t]` is used for the transition from step `t` to step `t + 1`
/// (zero-based).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVaryingEntry {
    pub row: usize,
    pub col: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub transition: DMatrix<f64>,
    pub transition_entry: Option<TimeVaryingEntry>,
    pub measurement: DMatrix<f64>,
    pub state_cov: DMatrix<f64>,
    pub obs_cov: DMatrix<f64>,
    pub init_mean: DVector<f64>,
    pub init_cov: DMatrix<f64>,
}

/// Tolerance used when checking symmetry and semi-definiteness of inputs.
pub const PSD_TOL: f64 = 1e-8;

impl SystemMatrices {
    /// Builds and validates a model: dimensions, finiteness, symmetry and
    /// positive semi-definiteness of `Q`, `H` and `P_1`.
    pub fn new(
        transition: DMatrix<f64>,
        transition_entry: Option<TimeVaryingEntry>,
        measurement: DMatrix<f64>,
        state_cov: DMatrix<f64>,
        obs_cov: DMatrix<f64>,
        init_mean: DVector<f64>,
        init_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let model = Self::new_unchecked(
            transition,
            transition_entry,
            measurement,
            state_cov,
            obs_cov,
            init_mean,
            init_cov,
        );
        model.check_dimensions()?;
        check_psd(&model.state_cov, "state covariance Q")?;
        check_psd(&model.obs_cov, "observation covariance H")?;
        check_psd(&model.init_cov, "initial covariance P1")?;
        Ok(model)
    }

    /// Assembles a model without the eigenvalue checks. Callers guarantee the
    /// covariance invariants by construction.
    pub fn new_unchecked(
        transition: DMatrix<f64>,
        transition_entry: Option<TimeVaryingEntry>,
        measurement: DMatrix<f64>,
        state_cov: DMatrix<f64>,
        obs_cov: DMatrix<f64>,
        init_mean: DVector<f64>,
        init_cov: DMatrix<f64>,
    ) -> Self {
        Self {
            transition,
            transition_entry,
            measurement,
            state_cov,
            obs_cov,
            init_mean,
            init_cov,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.measurement.nrows()
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let m = self.state_dim();
        let p = self.obs_dim();
        let square = |mat: &DMatrix<f64>, n: usize, name: &str| -> Result<()> {
            if mat.nrows() != n || mat.ncols() != n {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            Ok(())
        };
        if m == 0 {
            return Err(Error::Dimension("state dimension is zero".into()));
        }
        square(&self.transition, m, "transition")?;
        square(&self.state_cov, m, "state covariance")?;
        square(&self.init_cov, m, "initial covariance")?;
        square(&self.obs_cov, p, "observation covariance")?;
        if self.measurement.ncols() != m {
            return Err(Error::Dimension(format!(
                "measurement matrix has {} columns, state dimension is {m}",
                self.measurement.ncols()
            )));
        }
        if self.init_mean.len() != m {
            return Err(Error::Dimension(format!(
                "initial mean has length {}, expected {m}",
                self.init_mean.len()
            )));
        }
        if let Some(entry) = &self.transition_entry {
            if entry.row >= m || entry.col >= m {
                return Err(Error::Dimension("time-varying entry outside transition".into()));
            }
        }
        let finite = |mat: &DMatrix<f64>| mat.iter().all(|v| v.is_finite());
        if !(finite(&self.transition)
            && finite(&self.measurement)
            && finite(&self.state_cov)
            && finite(&self.obs_cov)
            && finite(&self.init_cov)
            && self.init_mean.iter().all(|v| v.is_finite()))
        {
            return Err(Error::InvalidParameter("non-finite system matrix entry".into()));
        }
        Ok(())
    }

    /// Checks that the time-varying entry covers `n_steps` observations.
    pub(crate) fn check_horizon(&self, n_steps: usize) -> Result<()> {
        if let Some(entry) = &self.transition_entry {
            let needed = n_steps.saturating_sub(1);
            if entry.values.len() < needed {
                return Err(Error::Coverage(format!(
                    "time-varying transition entry has {} values, {} steps need {needed}",
                    entry.values.len(),
                    n_steps
                )));
            }
            if entry.values[..needed].iter().any(|v| !v.is_finite()) {
                return Err(Error::Coverage("non-finite time-varying transition value".into()));
            }
        }
        Ok(())
    }

    /// Transition matrix mapping step `t` to step `t + 1`.
    pub fn transition_at(&self, t: usize) -> DMatrix<f64> {
        let mut tt = self.transition.clone();
        if let Some(entry) = &self.transition_entry {
            if let Some(v) = entry.values.get(t) {
                tt[(entry.row, entry.col)] = *v;
            }
        }
        tt
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > PSD_TOL * scale {
                return Err(Error::InvalidParameter(format!("{what} is not symmetric")));
            }
        }
    }
    let min = min_eigenvalue(m);
    if min < -PSD_TOL * scale {
        return Err(Error::NotPsd {
            what: what.to_string(),
            min_eigenvalue: min,
        });
    }
    Ok(())
}
