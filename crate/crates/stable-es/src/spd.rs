//! Small dense symmetric-matrix utilities: SPD validation, Cholesky,
//! matrix square root, eigenvalues, and multivariate gamma/digamma.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Absolute tolerance for the symmetry check on SPD constructors.
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is empty")]
    Empty,
    #[error("non-finite entry at ({row},{col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not symmetric: max |A - A^T| = {max_asym:.3e}")]
    NotSymmetric { max_asym: f64 },
    #[error("matrix is not positive definite: leading minor of order {leading_minor} is not positive")]
    NotPositiveDefinite { leading_minor: usize },
    #[error("matrix is not positive definite: smallest eigenvalue {eigenvalue:.3e} <= 0")]
    NonPositiveEigenvalue { eigenvalue: f64 },
    #[error("multivariate gamma domain violation: a = {a} must exceed (d-1)/2 = {bound}")]
    GammaDomain { a: f64, bound: f64 },
}

/// A validated symmetric positive definite matrix.
///
/// Constructors symmetrize via `(A + A^T)/2` after rejecting inputs whose
/// asymmetry exceeds [`SYMMETRY_TOL`], then require the smallest eigenvalue
/// to be strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    m: DMatrix<f64>,
}

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, MatrixError> {
        if m.nrows() == 0 {
            return Err(MatrixError::Empty);
        }
        if m.nrows() != m.ncols() {
            return Err(MatrixError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if !m[(i, j)].is_finite() {
                    return Err(MatrixError::NonFinite { row: i, col: j });
                }
            }
        }
        let max_asym = max_asymmetry(&m);
        if max_asym > SYMMETRY_TOL {
            return Err(MatrixError::NotSymmetric { max_asym });
        }
        let sym = symmetrize(&m);
        let min_eig = min_symmetric_eigenvalue(&sym);
        if min_eig <= 0.0 {
            return Err(MatrixError::NonPositiveEigenvalue { eigenvalue: min_eig });
        }
        Ok(Self { m: sym })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    /// `c * I`; `c` must be strictly positive.
    pub fn scaled_identity(dim: usize, c: f64) -> Result<Self, MatrixError> {
        Self::new(DMatrix::identity(dim, dim) * c)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, MatrixError> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// 1x1 convenience constructor for scalar parameters.
    pub fn scalar(value: f64) -> Result<Self, MatrixError> {
        Self::new(DMatrix::from_element(1, 1, value))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.m
    }

    /// Lower-triangular Cholesky factor `L` with `L L^T = self`.
    pub fn cholesky(&self) -> Result<DMatrix<f64>, MatrixError> {
        cholesky(&self.m)
    }

    /// Symmetric positive definite square root.
    pub fn sqrt(&self) -> Result<SpdMatrix, MatrixError> {
        spd_sqrt(&self.m)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        symmetric_eigenvalues(&self.m)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_symmetric_eigenvalue(&self.m)
    }

    /// log(det) via the Cholesky factor.
    pub fn ln_det(&self) -> Result<f64, MatrixError> {
        let l = self.cholesky()?;
        Ok(2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
    }

    /// Solves `self * x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>, MatrixError> {
        let l = self.cholesky()?;
        let mut x = b.clone();
        // forward substitution L y = b
        for i in 0..l.nrows() {
            let mut acc = x[i];
            for k in 0..i {
                acc -= l[(i, k)] * x[k];
            }
            x[i] = acc / l[(i, i)];
        }
        // back substitution L^T x = y
        for i in (0..l.nrows()).rev() {
            let mut acc = x[i];
            for k in i + 1..l.nrows() {
                acc -= l[(k, i)] * x[k];
            }
            x[i] = acc / l[(i, i)];
        }
        Ok(x)
    }
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        matrix_rows(&self.m).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        let m = matrix_from_rows(&rows).map_err(D::Error::custom)?;
        SpdMatrix::new(m).map_err(D::Error::custom)
    }
}

/// Matrix as nested row arrays, the on-disk representation.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    if rows.is_empty() {
        return Err("empty matrix".into());
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix rows".into());
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i + 1..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix, ascending. Symmetric-only
/// decomposition; robust for the small dimensions used here.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut eigs: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(f64::total_cmp);
    eigs
}

pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m)
        .first()
        .copied()
        .unwrap_or(f64::NAN)
}

/// Lower-triangular Cholesky factorization of a symmetric matrix.
///
/// Fails with the 1-based order of the offending leading minor when the
/// input is not positive definite.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MatrixError> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(MatrixError::NotSquare {
            rows: n,
            cols: m.ncols(),
        });
    }
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(MatrixError::NotPositiveDefinite { leading_minor: j + 1 });
        }
        l[(j, j)] = d.sqrt();
        for i in j + 1..n {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = acc / l[(j, j)];
        }
    }
    Ok(l)
}

/// SPD square root via the symmetric eigendecomposition.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<SpdMatrix, MatrixError> {
    let max_asym = max_asymmetry(m);
    if max_asym > SYMMETRY_TOL {
        return Err(MatrixError::NotSymmetric { max_asym });
    }
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig <= 0.0 {
        return Err(MatrixError::NonPositiveEigenvalue { eigenvalue: min_eig });
    }
    let sqrt_vals = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|v| v.sqrt()),
    );
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    SpdMatrix::new(symmetrize(&root))
}

/// ln of the multivariate gamma function
/// `Gamma_D(a) = pi^(D(D-1)/4) * prod_j Gamma(a + (1-j)/2)`.
pub fn multivariate_gamma_ln(a: f64, dim: usize) -> Result<f64, MatrixError> {
    let bound = (dim as f64 - 1.0) / 2.0;
    if !(a > bound) {
        return Err(MatrixError::GammaDomain { a, bound });
    }
    let mut acc = (dim * (dim - 1)) as f64 / 4.0 * std::f64::consts::PI.ln();
    for j in 1..=dim {
        acc += statrs::function::gamma::ln_gamma(a + (1.0 - j as f64) / 2.0);
    }
    Ok(acc)
}

/// Log-derivative of the multivariate gamma function (sum of scalar digammas).
pub fn multivariate_digamma(a: f64, dim: usize) -> Result<f64, MatrixError> {
    let bound = (dim as f64 - 1.0) / 2.0;
    if !(a > bound) {
        return Err(MatrixError::GammaDomain { a, bound });
    }
    let mut acc = 0.0;
    for j in 1..=dim {
        acc += statrs::function::gamma::digamma(a + (1.0 - j as f64) / 2.0);
    }
    Ok(acc)
}

/// Random SPD matrix `G G^T / dim + 0.1 I` for tests and gamma estimation.
pub fn random_spd<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> SpdMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        v
    });
    let m = (&g * g.transpose()) / dim as f64 + DMatrix::identity(dim, dim) * 0.1;
    SpdMatrix::new(symmetrize(&m)).expect("G G^T / d + 0.1 I is SPD")
}
