use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative step used by [`numerical_hessian`]: `h_i = scale * (1 + |x_i|)`.
pub const HESSIAN_STEP: f64 = 1e-4;

/// Central-difference Hessian of `objective` at `x`, symmetrized.
///
/// If the objective is non-finite at any stencil point the whole stencil is
/// retried once with half the step.
pub fn numerical_hessian<F>(mut objective: F, x: &[f64], step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    match hessian_once(&mut objective, x, step) {
        Some(h) => Ok(h),
        None => hessian_once(&mut objective, x, 0.5 * step).ok_or_else(|| {
            Error::Numerical("objective not finite around the Hessian point".into())
        }),
    }
}

fn hessian_once<F>(objective: &mut F, x: &[f64], step: f64) -> Option<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| step * (1.0 + v.abs())).collect();
    let mut pt = x.to_vec();
    let mut at = |pt: &mut Vec<f64>, moves: &[(usize, f64)]| -> Option<f64> {
        for &(i, d) in moves {
            pt[i] = x[i] + d;
        }
        let v = objective(pt);
        for &(i, _) in moves {
            pt[i] = x[i];
        }
        v.is_finite().then_some(v)
    };
    let f0 = at(&mut pt, &[])?;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let fp = at(&mut pt, &[(i, h[i])])?;
        let fm = at(&mut pt, &[(i, -h[i])])?;
        out[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let fpp = at(&mut pt, &[(i, h[i]), (j, h[j])])?;
            let fpm = at(&mut pt, &[(i, h[i]), (j, -h[j])])?;
            let fmp = at(&mut pt, &[(i, -h[i]), (j, h[j])])?;
            let fmm = at(&mut pt, &[(i, -h[i]), (j, -h[j])])?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Some(out)
}

/// Standard errors and the physical-parameter block of the covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardErrors {
    /// Original-scale standard errors; `None` where the propagated variance
    /// is negative (parameter not identified).
    pub se: Vec<Option<f64>>,
    /// Original-scale covariance of all parameters.
    pub vcov: DMatrix<f64>,
    /// A pseudo-inverse replaced the inverse of the negative Hessian.
    pub pseudo_inverse: bool,
    /// Names-free indices of parameters with negative propagated variance.
    pub non_identified: Vec<usize>,
}

/// Relative eigenvalue cutoff below which the negative Hessian is treated as
/// singular.
const SINGULAR_RTOL: f64 = 1e-12;

/// `vcov = J (-H)^{-1} J'` with `J = diag(jacobian)`.
pub fn standard_errors(hessian: &DMatrix<f64>, jacobian: &[f64]) -> Result<StandardErrors> {
    let n = hessian.nrows();
    if hessian.ncols() != n || jacobian.len() != n {
        return Err(Error::Dimension(format!(
            "Hessian is {}x{}, Jacobian has {} entries",
            hessian.nrows(),
            hessian.ncols(),
            jacobian.len()
        )));
    }
    if hessian.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite Hessian".into()));
    }
    let neg = -hessian;
    let neg = (&neg + neg.transpose()) * 0.5;
    let eig = SymmetricEigen::new(neg);
    let max_abs = eig.eigenvalues.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
    let cutoff = SINGULAR_RTOL * max_abs.max(f64::MIN_POSITIVE);
    let mut pseudo = false;
    let inv_eigs = eig.eigenvalues.map(|l| {
        if l > cutoff {
            1.0 / l
        } else {
            pseudo = true;
            if l < -cutoff {
                1.0 / l
            } else {
                0.0
            }
        }
    });
    let v_unc = &eig.eigenvectors * DMatrix::from_diagonal(&inv_eigs) * eig.eigenvectors.transpose();
    let mut vcov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            vcov[(i, j)] = jacobian[i] * v_unc[(i, j)] * jacobian[j];
        }
    }
    let vcov = (&vcov + vcov.transpose()) * 0.5;
    let mut non_identified = Vec::new();
    let se = (0..n)
        .map(|i| {
            let d = vcov[(i, i)];
            if d >= 0.0 {
                Some(d.sqrt())
            } else {
                non_identified.push(i);
                None
            }
        })
        .collect();
    Ok(StandardErrors {
        se,
        vcov,
        pseudo_inverse: pseudo,
        non_identified,
    })
}

/// Projects a symmetric matrix onto the PSD cone by clipping eigenvalues at
/// zero. Returns whether any eigenvalue was clipped.
pub fn clip_to_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|l| *l >= 0.0) {
        return (sym, false);
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0)));
    let out = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    ((&out + out.transpose()) * 0.5, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_form() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0]);
        let obj = |x: &[f64]| {
            let v = nalgebra::DVector::from_column_slice(x);
            -0.5 * (v.transpose() * &a * &v)[0]
        };
        let h = numerical_hessian(obj, &[0.3, -1.2, 2.0], HESSIAN_STEP).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(((h[(i, j)] + a[(i, j)]) / a[(i, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn scalar_parabola() {
        let h = numerical_hessian(|x| -x[0] * x[0], &[0.7], HESSIAN_STEP).unwrap();
        assert!((h[(0, 0)] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn flat_direction_gives_zero_row() {
        let h = numerical_hessian(|x| -(x[0] - 1.0).powi(2), &[0.2, 5.0], HESSIAN_STEP).unwrap();
        assert!(h[(1, 1)].abs() < 1e-8);
        assert!(h[(0, 1)].abs() < 1e-8);
    }

    #[test]
    fn step_shrinks_once_then_errors() {
        // Finite only within 1.5e-4 of the origin: full step fails, half works.
        let obj = |x: &[f64]| if x[0].abs() < 1.5e-4 { -x[0] * x[0] } else { f64::NAN };
        let h = numerical_hessian(obj, &[0.0], HESSIAN_STEP).unwrap();
        assert!((h[(0, 0)] + 2.0).abs() < 1e-6);
        let never = |x: &[f64]| if x[0] == 0.0 { 0.0 } else { f64::NAN };
        assert!(numerical_hessian(never, &[0.0], HESSIAN_STEP).is_err());
    }

    #[test]
    fn identity_transform_gives_plain_asymptotics() {
        let h = DMatrix::from_row_slice(2, 2, &[-4.0, 1.0, 1.0, -2.0]);
        let se = standard_errors(&h, &[1.0, 1.0]).unwrap();
        let inv = (-&h).try_inverse().unwrap();
        assert_relative_eq!(se.se[0].unwrap(), inv[(0, 0)].sqrt(), epsilon = 1e-12);
        assert_relative_eq!(se.se[1].unwrap(), inv[(1, 1)].sqrt(), epsilon = 1e-12);
        assert!(!se.pseudo_inverse);
    }

    #[test]
    fn log_transform_scales_by_exp() {
        let (v, s) = (-1.3_f64, 0.2_f64);
        let h = DMatrix::from_element(1, 1, -1.0 / (s * s));
        let se = standard_errors(&h, &[v.exp()]).unwrap();
        assert_relative_eq!(se.se[0].unwrap(), v.exp() * s, epsilon = 1e-12);
    }

    #[test]
    fn singular_hessian_flags_pseudo_inverse() {
        let h = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 0.0]);
        let se = standard_errors(&h, &[1.0, 1.0]).unwrap();
        assert!(se.pseudo_inverse);
        assert_eq!(se.se[1], Some(0.0));
        assert_relative_eq!(se.se[0].unwrap(), 1.0);
    }

    #[test]
    fn indefinite_hessian_flags_non_identification() {
        let h = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 2.0]);
        let se = standard_errors(&h, &[1.0, 1.0]).unwrap();
        assert_eq!(se.non_identified, vec![1]);
        assert_eq!(se.se[1], None);
    }

    #[test]
    fn clipping() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let (c, clipped) = clip_to_psd(&m);
        assert!(clipped);
        assert!(SymmetricEigen::new(c).eigenvalues.min() >= -1e-12);
        let (c, clipped) = clip_to_psd(&DMatrix::identity(2, 2));
        assert!(!clipped);
        assert_eq!(c, DMatrix::identity(2, 2));
    }
}
