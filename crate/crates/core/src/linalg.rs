//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Eigendecomposition of a real symmetric matrix with eigenvalues sorted
/// ascending and eigenvectors as matching columns.
#[derive(Clone, Debug)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SortedEigen {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(m.clone());
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        // one Newton–Schulz step pulls VᵀV back to I at working precision
        let gram = vectors.tr_mul(&vectors);
        let correction = (DMatrix::identity(n, n) * 3.0 - gram) * 0.5;
        let vectors = vectors * correction;
        Self { values, vectors }
    }

    /// Rebuild `V f(D) Vᵀ`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            scaled.column_mut(j).scale_mut(s);
        }
        scaled * self.vectors.transpose()
    }
}

pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Spectral square root of a symmetric PSD matrix.
///
/// Eigenvalues in `[-tol, 0)` are clamped to zero; anything below `-tol`
/// is rejected.
pub fn matrix_sqrt_psd(k: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if !k.is_square() {
        return Err(Error::DimensionMismatch {
            what: "matrix_sqrt_psd columns",
            expected: k.nrows(),
            got: k.ncols(),
        });
    }
    let scale = k.amax().max(1.0);
    if symmetry_defect(k) > 1e-12 * scale {
        return Err(Error::ModelInvalid("matrix is not symmetric".into()));
    }
    let eig = SortedEigen::new(&symmetrize(k));
    let min = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -tol {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    Ok(eig.apply(|v| v.max(0.0).sqrt()))
}

/// Clamp negative eigenvalues to zero; returns the projection and the
/// Frobenius norm of the removed part.
pub fn psd_projection(k: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = symmetrize(k);
    let eig = SortedEigen::new(&sym);
    let clamped: f64 = eig
        .values
        .iter()
        .filter(|v| **v < 0.0)
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    (eig.apply(|v| v.max(0.0)), clamped)
}

pub fn outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose()
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    for r in rows {
        Error::check_dim(what, m, r.len())?;
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(matrix_sqrt_psd(&id, 1e-12).unwrap(), id, epsilon = 1e-14);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let s = matrix_sqrt_psd(&d, 1e-12).unwrap();
        assert_relative_eq!(s[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(s[(1, 1)], 3.0, epsilon = 1e-14);
        assert_relative_eq!(s[(0, 1)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            matrix_sqrt_psd(&m, 1e-12),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn sqrt_clamps_roundoff_negatives() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-14]);
        let s = matrix_sqrt_psd(&m, 1e-12).unwrap();
        assert_eq!(s[(1, 1)], 0.0);
    }

    #[test]
    fn sorted_eigen_is_ascending() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 1.0]);
        let e = SortedEigen::new(&m);
        assert!(e.values[0] <= e.values[1] && e.values[1] <= e.values[2]);
        let rebuilt = e.apply(|v| v);
        assert_relative_eq!(rebuilt, m, epsilon = 1e-12);
    }
}
