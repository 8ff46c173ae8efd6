//! Shared oracles and fixture readers for integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use ebmss::projection::ScenarioPath;
use ebmss::ssm::{ObservationPanel, SystemMatrices, TimeVaryingEntry};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

fn read_table(path: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

/// Years, natural forcing and reference anthropogenic forcing.
pub fn read_forcing() -> (Vec<i32>, Vec<f64>, Vec<f64>) {
    let (_, rows) = read_table(&fixture_dir().join("forcing.csv"));
    let mut out = (vec![], vec![], vec![]);
    for r in rows {
        out.0.push(r[0].parse().unwrap());
        out.1.push(r[1].parse().unwrap());
        out.2.push(r[2].parse().unwrap());
    }
    out
}

pub fn read_scenario(name: &str) -> ScenarioPath {
    let (_, rows) = read_table(&fixture_dir().join("scenarios").join(format!("{name}.csv")));
    let years = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    let forcing = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    ScenarioPath::new(name, years, forcing).unwrap()
}

pub const SCENARIOS: [&str; 4] = ["pathway_2p6", "pathway_4p5", "pathway_6p0", "pathway_8p5"];

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn random_matrix<R: Rng>(rng: &mut R, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * normal(rng))
}

fn random_spd<R: Rng>(rng: &mut R, n: usize, scale: f64, ridge: f64) -> DMatrix<f64> {
    let b = random_matrix(rng, n, n, scale);
    &b * b.transpose() + DMatrix::identity(n, n) * ridge
}

/// Random model with state dimension <= 4, up to 3 series and at most 8
/// steps; about a fifth of the cells are missing.
pub fn random_model<R: Rng>(rng: &mut R) -> (SystemMatrices, ObservationPanel) {
    let m = rng.random_range(1..=4);
    let p = rng.random_range(1..=3);
    let n = rng.random_range(1..=8);
    let transition = random_matrix(rng, m, m, 0.5);
    let entry = rng.random_bool(0.5).then(|| TimeVaryingEntry {
        row: rng.random_range(0..m),
        col: rng.random_range(0..m),
        values: (0..n).map(|_| normal(rng)).collect(),
    });
    let model = SystemMatrices::new(
        transition,
        entry,
        random_matrix(rng, p, m, 1.0),
        random_spd(rng, m, 0.5, 0.05),
        random_spd(rng, p, 0.5, 0.1),
        DVector::from_fn(m, |_, _| normal(rng)),
        random_spd(rng, m, 1.0, 0.1),
    )
    .unwrap();
    loop {
        let rows: Vec<Vec<Option<f64>>> = (0..p)
            .map(|_| {
                (0..n)
                    .map(|_| (!rng.random_bool(0.2)).then(|| 2.0 * normal(rng)))
                    .collect()
            })
            .collect();
        if rows.iter().flatten().any(Option::is_some) {
            return (model, ObservationPanel::from_rows(rows).unwrap());
        }
    }
}

/// Joint moments of all states, `x = (x_1, ..., x_T)` stacked.
pub fn state_moments(model: &SystemMatrices, n: usize) -> (DVector<f64>, DMatrix<f64>) {
    let m = model.state_dim();
    let mut mean = DVector::zeros(m * n);
    let mut cov = DMatrix::zeros(m * n, m * n);
    let mut a = model.init_mean.clone();
    let mut p = model.init_cov.clone();
    for t in 0..n {
        mean.rows_mut(t * m, m).copy_from(&a);
        cov.view_mut((t * m, t * m), (m, m)).copy_from(&p);
        // Cov(x_s, x_t) = Phi(s, t) P_t for s > t.
        let mut phi_p = p.clone();
        for s in t + 1..n {
            phi_p = model.transition_at(s - 1) * phi_p;
            cov.view_mut((s * m, t * m), (m, m)).copy_from(&phi_p);
            cov.view_mut((t * m, s * m), (m, m)).copy_from(&phi_p.transpose());
        }
        let tt = model.transition_at(t);
        a = &tt * a;
        p = &tt * p * tt.transpose() + &model.state_cov;
    }
    (mean, cov)
}

/// Observed cells as `(series, step)` in step-major order.
pub fn observed_cells(panel: &ObservationPanel) -> Vec<(usize, usize)> {
    (0..panel.n_steps())
        .flat_map(|t| (0..panel.n_series()).map(move |i| (i, t)))
        .filter(|&(i, t)| panel.get(i, t).is_some())
        .collect()
}

/// Mean and covariance of the observed cells, and their cross-covariance
/// with the stacked states.
pub fn observation_moments(
    model: &SystemMatrices,
    panel: &ObservationPanel,
) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let n = panel.n_steps();
    let m = model.state_dim();
    let (xm, xc) = state_moments(model, n);
    let cells = observed_cells(panel);
    let k = cells.len();
    // Selection-and-loading matrix: y = L x + e.
    let mut l = DMatrix::zeros(k, m * n);
    for (r, &(i, t)) in cells.iter().enumerate() {
        for j in 0..m {
            l[(r, t * m + j)] = model.measurement[(i, j)];
        }
    }
    let mut h = DMatrix::zeros(k, k);
    for (r, &(i, t)) in cells.iter().enumerate() {
        for (c, &(i2, t2)) in cells.iter().enumerate() {
            if t == t2 {
                h[(r, c)] = model.obs_cov[(i, i2)];
            }
        }
    }
    let mean = &l * &xm;
    let cov = &l * &xc * l.transpose() + h;
    let cross = &xc * l.transpose();
    let y = DVector::from_iterator(k, cells.iter().map(|&(i, t)| panel.get(i, t).unwrap()));
    (mean, cov, cross, y)
}

/// Log-density of all observed cells under their joint Gaussian law.
pub fn brute_force_loglik(model: &SystemMatrices, panel: &ObservationPanel) -> f64 {
    let (mean, cov, _, y) = observation_moments(model, panel);
    let chol = cov.cholesky().expect("joint covariance is positive definite");
    let r = y - mean;
    let z = chol.l().solve_lower_triangular(&r).unwrap();
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    -0.5 * (r.len() as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + z.norm_squared())
}

/// `E[x_t | y]` and `Var[x_t | y]` by Gaussian conditioning on the stacked
/// vector.
pub fn brute_force_smoother(
    model: &SystemMatrices,
    panel: &ObservationPanel,
) -> (Vec<DVector<f64>>, Vec<DMatrix<f64>>) {
    let n = panel.n_steps();
    let m = model.state_dim();
    let (xm, xc) = state_moments(model, n);
    let (ym, yc, cross, y) = observation_moments(model, panel);
    let yc_inv = yc.try_inverse().unwrap();
    let gain = &cross * yc_inv;
    let mean = xm + &gain * (y - ym);
    let cov = &xc - &gain * cross.transpose();
    (
        (0..n).map(|t| mean.rows(t * m, m).into_owned()).collect(),
        (0..n).map(|t| cov.view((t * m, t * m), (m, m)).into_owned()).collect(),
    )
}

/// Moment-by-moment Jarque-Bera with two-pass sums.
pub fn brute_jarque_bera(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m = |k: i32| x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let s = m(3) / m(2).powf(1.5);
    let k = m(4) / m(2).powi(2);
    n / 6.0 * (s.powi(2) + (k - 3.0).powi(2) / 4.0)
}

/// Ljung-Box from autocovariances with divisor `n`.
pub fn brute_ljung_box(x: &[f64], k: usize) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let acov = |j: usize| {
        (0..n - j).map(|t| (x[t] - mean) * (x[t + j] - mean)).sum::<f64>() / n as f64
    };
    let g0 = acov(0);
    let nf = n as f64;
    nf * (nf + 2.0) * (1..=k).map(|j| (acov(j) / g0).powi(2) / (nf - j as f64)).sum::<f64>()
}
