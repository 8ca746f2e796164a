//! Small dense linear-algebra helpers with explicit conditioning checks.
//!
//! Every system solved in this crate is at most a handful of columns wide, so
//! condition numbers are taken from a full SVD rather than estimated.

use nalgebra::{DMatrix, DVector};

use crate::error::{CdeError, Result};

/// Condition number threshold above which an estimating-equation matrix is
/// treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Ratio of the largest to the smallest singular value. Returns `f64::INFINITY`
/// for singular or non-finite input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() || m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() || max == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `m x = rhs` with a fully pivoted LU factorisation. Fails with
/// `on_singular(cond)` when the condition number exceeds [`MAX_CONDITION`].
pub fn solve_checked<F>(m: &DMatrix<f64>, rhs: &DVector<f64>, on_singular: F) -> Result<(DVector<f64>, f64)>
where
    F: Fn(f64) -> CdeError,
{
    if m.nrows() != m.ncols() || m.nrows() != rhs.len() {
        return Err(CdeError::Dimension(format!(
            "cannot solve a {}x{} system with a right-hand side of length {}",
            m.nrows(),
            m.ncols(),
            rhs.len()
        )));
    }
    let cond = condition_number(m);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(on_singular(cond));
    }
    let x = m
        .clone()
        .full_piv_lu()
        .solve(rhs)
        .ok_or_else(|| on_singular(f64::INFINITY))?;
    Ok((x, cond))
}

pub fn inverse_checked<F>(m: &DMatrix<f64>, on_singular: F) -> Result<(DMatrix<f64>, f64)>
where
    F: Fn(f64) -> CdeError,
{
    let cond = condition_number(m);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(on_singular(cond));
    }
    let inv = m
        .clone()
        .full_piv_lu()
        .try_inverse()
        .ok_or_else(|| on_singular(f64::INFINITY))?;
    Ok((inv, cond))
}

/// Ordinary least squares through the normal equations.
///
/// The rank check runs on the column-scaled cross-product so that covariates on
/// very different scales (age in years next to a 0/1 indicator) do not trip it.
pub fn ols(design: &DMatrix<f64>, y: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    if design.nrows() != y.len() {
        return Err(CdeError::Dimension(format!(
            "{context}: design has {} rows but response has {}",
            design.nrows(),
            y.len()
        )));
    }
    if design.nrows() < design.ncols() {
        return Err(CdeError::RankDeficient {
            context: context.to_string(),
            cond: f64::INFINITY,
        });
    }
    let xtx = design.tr_mul(design);
    let xty = design.tr_mul(y);
    let scale = DVector::from_iterator(
        xtx.nrows(),
        (0..xtx.nrows()).map(|j| {
            let d = xtx[(j, j)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        }),
    );
    let scaled = DMatrix::from_fn(xtx.nrows(), xtx.ncols(), |i, j| xtx[(i, j)] * scale[i] * scale[j]);
    let scaled_rhs = xty.component_mul(&scale);
    let ctx = context.to_string();
    let (beta_scaled, _) = solve_checked(&scaled, &scaled_rhs, |cond| CdeError::RankDeficient {
        context: ctx.clone(),
        cond,
    })?;
    Ok(beta_scaled.component_mul(&scale))
}

/// Symmetrises a matrix in place-free fashion: `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_has_unit_condition() {
        assert_relative_eq!(condition_number(&DMatrix::identity(3, 3)), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let rhs = DVector::from_vec(vec![1.0, 2.0]);
        let err = solve_checked(&m, &rhs, |cond| CdeError::Singular {
            context: "test".into(),
            cond,
        })
        .unwrap_err();
        assert!(matches!(err, CdeError::Singular { .. }));
    }

    #[test]
    fn solves_small_system() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let rhs = DVector::from_vec(vec![3.0, 5.0]);
        let (x, _) = solve_checked(&m, &rhs, |cond| CdeError::Singular {
            context: "test".into(),
            cond,
        })
        .unwrap();
        assert_relative_eq!(x[0], 0.8, epsilon = 1e-12);
        assert_relative_eq!(x[1], 1.4, epsilon = 1e-12);
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let b = ols(&x, &y, "line").unwrap();
        assert_relative_eq!(b[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(b[1], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn ols_rejects_duplicated_column() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(ols(&x, &y, "dup"), Err(CdeError::RankDeficient { .. })));
    }
}
