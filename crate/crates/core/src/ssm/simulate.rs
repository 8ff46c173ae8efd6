use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ObservationPanel, SystemMatrices, PSD_TOL};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SimulatedPath {
    /// State path, `m x n`.
    pub states: DMatrix<f64>,
    /// Fully observed measurement panel, `p x n`.
    pub panel: ObservationPanel,
}

/// Symmetric square root `S` with `S S' = A` of a PSD matrix, via the
/// eigendecomposition. Eigenvalues within tolerance of zero are clipped.
pub fn psd_sqrt(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if a.iter().all(|v| *v == 0.0) {
        return Ok(DMatrix::zeros(n, n));
    }
    let scale = a.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let eig = SymmetricEigen::new(a.clone());
    let min = eig.eigenvalues.min();
    if min < -PSD_TOL * scale {
        return Err(Error::NotPsd {
            what: what.to_string(),
            min_eigenvalue: min,
        });
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * d)
}

/// Unconditional simulation of `horizon` steps, deterministic in `seed`.
pub fn simulate_ssm(model: &SystemMatrices, horizon: usize, seed: u64) -> Result<SimulatedPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_ssm_with(model, horizon, &mut rng)
}

pub fn simulate_ssm_with<R: Rng + ?Sized>(
    model: &SystemMatrices,
    horizon: usize,
    rng: &mut R,
) -> Result<SimulatedPath> {
    model.check_dimensions()?;
    model.check_horizon(horizon)?;
    let m = model.state_dim();
    let p = model.obs_dim();
    let q_sqrt = psd_sqrt(&model.state_cov, "state covariance Q")?;
    let h_sqrt = psd_sqrt(&model.obs_cov, "observation covariance H")?;
    let p1_sqrt = psd_sqrt(&model.init_cov, "initial covariance P1")?;

    let draw = |dim: usize, rng: &mut R| -> DVector<f64> {
        DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
    };

    let mut states = DMatrix::zeros(m, horizon);
    let mut obs = DMatrix::from_element(p, horizon, None);
    let mut x = &model.init_mean + &p1_sqrt * draw(m, rng);
    for t in 0..horizon {
        let eps = &h_sqrt * draw(p, rng);
        let y = &model.measurement * &x + eps;
        states.set_column(t, &x);
        for i in 0..p {
            obs[(i, t)] = Some(y[i]);
        }
        if t + 1 < horizon {
            let eta = &q_sqrt * draw(m, rng);
            x = model.transition_at(t) * &x + eta;
        }
    }
    let meta = (0..p)
        .map(|i| super::SeriesMeta::new(format!("y{i}"), super::SeriesKind::Gmst))
        .collect();
    let panel = ObservationPanel::new((1..=horizon as i32).collect(), obs, meta)?;
    Ok(SimulatedPath { states, panel })
}
