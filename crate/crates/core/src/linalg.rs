//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

/// Cholesky factorisation; failure means the matrix is not positive definite.
pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Chol> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(format!(
            "{what} (non-finite entries)"
        )));
    }
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Cholesky with one jittered retry: adds `eps * tr(m)/p * I` when the plain
/// factorisation fails. Returns the factor and the (possibly repaired) matrix.
pub fn cholesky_with_jitter(
    m: &DMatrix<f64>,
    eps: f64,
    what: &str,
) -> Result<(Chol, DMatrix<f64>)> {
    if let Ok(c) = cholesky(m, what) {
        return Ok((c, m.clone()));
    }
    let p = m.nrows() as f64;
    let bump = eps * m.trace().abs().max(f64::MIN_POSITIVE) / p;
    let repaired = m + DMatrix::identity(m.nrows(), m.ncols()) * bump;
    let c = cholesky(&repaired, what)?;
    log::debug!("{what}: Cholesky repaired with jitter {bump:e}");
    Ok((c, repaired))
}

pub fn log_det(chol: &Chol) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
}

/// Squared Mahalanobis distance `(x - mu)' S^{-1} (x - mu)` given the Cholesky factor of `S`.
pub fn mahalanobis(chol: &Chol, x: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    let l = chol.l_dirty();
    let n = x.len();
    // forward substitution on the lower factor only
    let mut z = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..n {
        let mut s = x[i] - mu[i];
        for j in 0..i {
            s -= l[(i, j)] * z[j];
        }
        z[i] = s / l[(i, i)];
        acc += z[i] * z[i];
    }
    acc
}

pub fn sub_vector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

pub fn sub_matrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    max_asymmetry(m) <= tol
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Splits a covariance/scale matrix into standard deviations and the implied
/// correlation matrix, `S = diag(sd) C diag(sd)`.
pub fn scale_and_correlation(s: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sd = DVector::from_iterator(s.nrows(), s.diagonal().iter().map(|v| v.sqrt()));
    let c = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| {
        if i == j {
            1.0
        } else {
            s[(i, j)] / (sd[i] * sd[j])
        }
    });
    (sd, c)
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// `log(sum(exp(xs)))` with max subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mahalanobis_matches_explicit_inverse() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let x = DVector::from_vec(vec![1.0, -1.0]);
        let mu = DVector::zeros(2);
        let chol = cholesky(&s, "S").unwrap();
        let inv = s.clone().try_inverse().unwrap();
        let direct = (x.transpose() * inv * &x)[(0, 0)];
        assert!((mahalanobis(&chol, &x, &mu) - direct).abs() < 1e-14);
        assert!((log_det(&chol) - s.determinant().ln()).abs() < 1e-14);
    }

    #[test]
    fn jitter_repairs_a_singular_matrix() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky(&s, "S").is_err());
        let (_, repaired) = cholesky_with_jitter(&s, 1e-8, "S").unwrap();
        assert!((repaired[(0, 0)] - 1.0 - 1e-8).abs() < 1e-15);
    }

    #[test]
    fn correlation_split_roundtrips() {
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 1.2, 1.2, 1.0]);
        let (sd, c) = scale_and_correlation(&s);
        let back = DMatrix::from_diagonal(&sd) * &c * DMatrix::from_diagonal(&sd);
        assert!((back - s).abs().max() < 1e-14);
        assert!((c[(0, 1)] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}
