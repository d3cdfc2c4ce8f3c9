//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Matrix infinity norm: maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// 2-norm condition number estimate from singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverts a square matrix, refusing when the condition estimate exceeds `max_condition`.
pub fn checked_inverse(m: &DMatrix<f64>, max_condition: f64) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "cannot invert {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let condition = condition_number(m);
    if !(condition <= max_condition) {
        return Err(Error::Singular { condition });
    }
    m.clone()
        .lu()
        .try_inverse()
        .ok_or(Error::Singular { condition })
}

/// Solves `a x = b` for square `a` via LU.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone().lu().solve(b).ok_or(Error::Singular {
        condition: f64::INFINITY,
    })
}

/// Least-squares left inverse of a tall matrix.
///
/// For full column rank this is `(AᵀA)⁻¹Aᵀ`; when the matrix is rank deficient
/// the minimum-norm pseudo-inverse is returned instead. The second element is
/// the numerical column rank.
pub fn left_pseudo_inverse(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = f64::EPSILON * (a.nrows().max(a.ncols()) as f64) * max_sv;
    let rank = svd.rank(eps);
    let pinv = svd
        .pseudo_inverse(eps)
        .unwrap_or_else(|_| DMatrix::zeros(a.ncols(), a.nrows()));
    (pinv, rank)
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}
