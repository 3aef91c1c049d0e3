use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a Gram matrix is treated as singular.
const RANK_TOL: f64 = 1e-11;

/// Cholesky factor of a symmetric positive definite Gram matrix, rejecting
/// numerically rank-deficient input.
pub(crate) fn factor_gram(gram: DMatrix<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{what}: non-finite Gram matrix")));
    }
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= RANK_TOL * max {
        return Err(Error::SingularDesign(format!(
            "{what}: eigenvalue range [{min:.3e}, {max:.3e}]"
        )));
    }
    gram.cholesky()
        .ok_or_else(|| Error::SingularDesign(format!("{what}: Cholesky failed")))
}
