//! Likelihood-only filter used inside the optimizer.
//!
//! Observations of each step are decorrelated with the Cholesky factor of the
//! observed block of `H`; decorrelated rows that load on the same linear
//! combination of states are collapsed into one, and the rest are absorbed
//! one at a time as rank-one corrections on flat buffers. The result is the same exact
//! Gaussian log-likelihood as [`super::kalman_filter`].

use nalgebra::DMatrix;

use super::{ObservationPanel, SystemMatrices};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone)]
pub struct SequentialSummary {
    pub loglik: f64,
    /// Filtered state mean at the final step.
    pub final_mean: Vec<f64>,
}

/// Decorrelated rows proportional to a common vector `u`: row `r` equals
/// `c_r u`. Such rows carry the same information as one observation of
/// `u' x` with variance `1 / sum(c_r^2)`; the remainder of their likelihood
/// does not depend on the state.
struct Group {
    members: Vec<(usize, f64)>,
    u: Vec<(usize, f64)>,
    info: f64,
}

struct Pattern {
    observed: Vec<usize>,
    groups: Vec<Group>,
    /// Decorrelated rows with no state loading.
    null_rows: Vec<usize>,
    /// Lower-triangular `L^{-1}` applied to the observed values.
    l_inv: DMatrix<f64>,
    log_det_l: f64,
}

const PROPORTIONAL_RTOL: f64 = 1e-12;

fn build_pattern(model: &SystemMatrices, observed: Vec<usize>, step: usize) -> Result<Pattern> {
    let h = model
        .obs_cov
        .select_rows(observed.iter())
        .select_columns(observed.iter());
    let chol = h.cholesky().ok_or(Error::SingularInnovation { step })?;
    let l = chol.l();
    let log_det_l = l.diagonal().iter().map(|d| d.ln()).sum();
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(observed.len(), observed.len()))
        .ok_or(Error::SingularInnovation { step })?;
    let z = model.measurement.select_rows(observed.iter());
    let zs = &l_inv * z;
    let mut groups: Vec<Group> = Vec::new();
    let mut null_rows = Vec::new();
    for r in 0..zs.nrows() {
        let row: Vec<(usize, f64)> = (0..zs.ncols())
            .filter_map(|j| {
                let v = zs[(r, j)];
                (v != 0.0).then_some((j, v))
            })
            .collect();
        let Some(&(_, c)) = row.first() else {
            null_rows.push(r);
            continue;
        };
        let u: Vec<(usize, f64)> = row.iter().map(|&(j, v)| (j, v / c)).collect();
        let same = |g: &Group| {
            g.u.len() == u.len()
                && g.u.iter().zip(&u).all(|(a, b)| {
                    a.0 == b.0 && (a.1 - b.1).abs() <= PROPORTIONAL_RTOL * a.1.abs().max(b.1.abs())
                })
        };
        match groups.iter_mut().find(|g| same(g)) {
            Some(g) => {
                g.members.push((r, c));
                g.info += c * c;
            }
            None => groups.push(Group {
                members: vec![(r, c)],
                u,
                info: c * c,
            }),
        }
    }
    Ok(Pattern {
        observed,
        groups,
        null_rows,
        l_inv,
        log_det_l,
    })
}

pub fn sequential_filter(model: &SystemMatrices, panel: &ObservationPanel) -> Result<SequentialSummary> {
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

    // Sparse rows of the base transition; the time-varying slot is always kept.
    let entry = model.transition_entry.as_ref();
    let mut t_rows: Vec<Vec<(usize, f64)>> = (0..m)
        .map(|i| {
            (0..m)
                .filter_map(|j| {
                    let v = model.transition[(i, j)];
                    let varying = entry.is_some_and(|e| e.row == i && e.col == j);
                    (v != 0.0 || varying).then_some((j, v))
                })
                .collect()
        })
        .collect();
    let varying_slot = entry.map(|e| {
        let pos = t_rows[e.row].iter().position(|&(j, _)| j == e.col).unwrap_or(0);
        (e.row, pos, model.transition[(e.row, e.col)])
    });
    let q: Vec<f64> = (0..m * m).map(|k| model.state_cov[(k / m, k % m)]).collect();

    let mut a: Vec<f64> = model.init_mean.iter().copied().collect();
    let mut p = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            p[i * m + j] = 0.5 * (model.init_cov[(i, j)] + model.init_cov[(j, i)]);
        }
    }
    let mut patterns: Vec<Pattern> = Vec::new();
    let mut pz = vec![0.0; m];
    let mut tmp = vec![0.0; m * m];
    let mut a_next = vec![0.0; m];
    let mut y_obs = Vec::with_capacity(panel.n_series());
    let mut ys = Vec::with_capacity(panel.n_series());
    let mut observed = Vec::with_capacity(panel.n_series());
    let mut loglik = 0.0;

    for t in 0..n {
        observed.clear();
        observed.extend((0..panel.n_series()).filter(|&i| panel.get(i, t).is_some()));
        if !observed.is_empty() {
            let idx = match patterns.iter().position(|pt| pt.observed == observed) {
                Some(i) => i,
                None => {
                    patterns.push(build_pattern(model, observed.clone(), t)?);
                    patterns.len() - 1
                }
            };
            let pat = &patterns[idx];
            let k = pat.observed.len();
            y_obs.clear();
            y_obs.extend(pat.observed.iter().map(|&i| panel.get(i, t).unwrap_or_default()));
            // Decorrelated observations L^{-1} y.
            ys.clear();
            for r in 0..k {
                let mut s = 0.0;
                for (c, y) in y_obs.iter().enumerate().take(r + 1) {
                    s += pat.l_inv[(r, c)] * y;
                }
                ys.push(s);
            }
            loglik -= pat.log_det_l;
            for &r in &pat.null_rows {
                loglik -= 0.5 * (LN_2PI + ys[r] * ys[r]);
            }
            for g in &pat.groups {
                // Collapse the group to w = sum(c y) / C with variance 1 / C.
                let info = g.info;
                let cy: f64 = g.members.iter().map(|&(r, c)| c * ys[r]).sum();
                let w = cy / info;
                let resid: f64 = g.members.iter().map(|&(r, c)| (ys[r] - c * w).powi(2)).sum();
                let extra = (g.members.len() - 1) as f64;
                loglik -= 0.5 * (extra * LN_2PI + info.ln() + resid);

                // Scalar update for w = u'x + e, Var(e) = 1 / C.
                pz.iter_mut().for_each(|v| *v = 0.0);
                let mut v = w;
                for &(c, uc) in &g.u {
                    let row = &p[c * m..(c + 1) * m];
                    for (acc, pc) in pz.iter_mut().zip(row) {
                        *acc += uc * pc;
                    }
                    v -= uc * a[c];
                }
                let mut f = 1.0 / info;
                for &(c, uc) in &g.u {
                    f += uc * pz[c];
                }
                if !(f > 0.0) || !f.is_finite() {
                    return Err(Error::SingularInnovation { step: t });
                }
                loglik -= 0.5 * (LN_2PI + f.ln() + v * v / f);
                let vf = v / f;
                for (ai, pi) in a.iter_mut().zip(&pz) {
                    *ai += pi * vf;
                }
                for (row, &pi) in p.chunks_exact_mut(m).zip(&pz) {
                    let g = pi / f;
                    for (pij, pj) in row.iter_mut().zip(&pz) {
                        *pij -= g * pj;
                    }
                }
            }
        }
        if t + 1 == n {
            break;
        }
        // Predict with the sparse transition.
        if let (Some((r, pos, base)), Some(e)) = (varying_slot, entry) {
            t_rows[r][pos].1 = e.values.get(t).copied().unwrap_or(base);
        }
        for (i, (ti, out)) in t_rows.iter().zip(tmp.chunks_exact_mut(m)).enumerate() {
            out.iter_mut().for_each(|v| *v = 0.0);
            let mut s = 0.0;
            for &(k, v) in ti {
                s += v * a[k];
                for (o, pk) in out.iter_mut().zip(&p[k * m..(k + 1) * m]) {
                    *o += v * pk;
                }
            }
            a_next[i] = s;
        }
        std::mem::swap(&mut a, &mut a_next);
        for i in 0..m {
            let row = &tmp[i * m..(i + 1) * m];
            for j in i..m {
                let mut s = q[i * m + j];
                for &(k, v) in &t_rows[j] {
                    s += row[k] * v;
                }
                p[i * m + j] = s;
                p[j * m + i] = s;
            }
        }
    }
    if !loglik.is_finite() {
        return Err(Error::Numerical("non-finite log-likelihood".into()));
    }
    Ok(SequentialSummary {
        loglik,
        final_mean: a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::{kalman_filter, TimeVaryingEntry};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn collapsed_rows_match_multivariate_filter() {
        // Three measurements of state 0 with different noise, one of the sum,
        // and a row that loads on nothing.
        let tr = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.0, 0.7]);
        let z = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.4, 0.3, 0.2, 0.5]));
        let model = SystemMatrices::new(
            tr,
            None,
            z,
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.05, 0.1])),
            h,
            DVector::from_vec(vec![0.0, 0.0]),
            DMatrix::identity(2, 2) * 5.0,
        )
        .unwrap();
        let panel = ObservationPanel::from_rows(vec![
            vec![Some(0.2), Some(0.4), None, Some(0.1)],
            vec![Some(0.3), None, Some(0.5), Some(0.0)],
            vec![Some(0.5), Some(0.7), Some(0.9), None],
            vec![Some(0.1), Some(0.2), Some(-0.3), Some(0.4)],
            vec![Some(1.0), None, Some(-1.0), Some(0.3)],
        ])
        .unwrap();
        let full = kalman_filter(&model, &panel).unwrap();
        let fast = sequential_filter(&model, &panel).unwrap();
        assert_relative_eq!(full.loglik, fast.loglik, epsilon = 1e-10);
        for j in 0..2 {
            assert_relative_eq!(full.filt_mean[3][j], fast.final_mean[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn agrees_with_multivariate_filter_with_correlated_errors_and_gaps() {
        let tr = DMatrix::from_row_slice(3, 3, &[0.8, 0.1, 0.2, 0.05, 0.95, 0.0, 0.0, 0.0, 1.0]);
        let h = DMatrix::from_row_slice(3, 3, &[0.3, 0.0, 0.0, 0.0, 0.2, 0.15, 0.0, 0.15, 0.4]);
        let model = SystemMatrices::new(
            tr,
            Some(TimeVaryingEntry {
                row: 0,
                col: 2,
                values: vec![0.1, -0.3, 0.5, 0.2, 0.0],
            }),
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.3, 0.0, 2.0, 0.6]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.05, 0.0])),
            h,
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 10.0, 0.0])),
        )
        .unwrap();
        let panel = ObservationPanel::from_rows(vec![
            vec![Some(0.2), None, Some(0.5), Some(0.4), Some(0.9), Some(1.0)],
            vec![Some(0.1), Some(0.3), None, Some(0.2), None, Some(0.6)],
            vec![Some(0.5), Some(0.7), Some(0.8), Some(0.9), None, Some(1.6)],
        ])
        .unwrap();
        let full = kalman_filter(&model, &panel).unwrap();
        let fast = sequential_filter(&model, &panel).unwrap();
        assert_relative_eq!(full.loglik, fast.loglik, epsilon = 1e-10);
        for j in 0..3 {
            assert_relative_eq!(full.filt_mean[5][j], fast.final_mean[j], epsilon = 1e-10);
        }
    }
}
