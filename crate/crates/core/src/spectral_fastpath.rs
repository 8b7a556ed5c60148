//! Entropy of a centered, row-normalized matrix via whichever Gram side is smaller.
//!
//! For `M̃` with h' non-zero unit rows, `(1/h') M̃ᵀM̃` (d_h × d_h) and
//! `(1/h') M̃M̃ᵀ` (h' × h') share their non-zero eigenvalues, so the entropy can
//! be taken from the smaller one. With d_h = 128 and h = 32 that replaces a
//! 128×128 eigenproblem by a 32×32 one.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::matrix_entropy::{
    centered_unit_rows, gram_of_columns, gram_of_rows, von_neumann_entropy, DensityMatrix,
    EigenSpectrum,
};

const UNIT_NORM_TOL: f64 = 1e-10;

/// Rows centered over the row mean and scaled to unit L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredMatrix {
    matrix: DenseMatrix,
    zero_rows: Vec<usize>,
}

impl CenteredMatrix {
    /// Wraps rows that are already unit-norm or exactly zero.
    pub fn from_unit_rows(matrix: DenseMatrix) -> Result<Self> {
        let mut zero_rows = Vec::new();
        for (i, row) in matrix.row_iter().enumerate() {
            if row.iter().all(|&v| v == 0.0) {
                zero_rows.push(i);
                continue;
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Parameter(format!(
                    "row {i} has norm {norm}, expected 1 or 0"
                )));
            }
        }
        Ok(Self { matrix, zero_rows })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    /// Rows whose centered norm was below the degeneracy threshold.
    pub fn zero_rows(&self) -> &[usize] {
        &self.zero_rows
    }

    pub fn effective_rows(&self) -> usize {
        self.matrix.rows() - self.zero_rows.len()
    }
}

/// Which Gram product was formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GramSide {
    /// `M̃M̃ᵀ` over the non-zero rows.
    Dual,
    /// `M̃ᵀM̃`, columns × columns.
    Primal,
}

pub fn center_and_row_normalize(m: &DenseMatrix) -> Result<CenteredMatrix> {
    if m.rows() < 2 {
        return Err(Error::Parameter(format!(
            "centering needs at least 2 rows, got {}",
            m.rows()
        )));
    }
    let (matrix, zero_rows) = centered_unit_rows(m);
    Ok(CenteredMatrix { matrix, zero_rows })
}

/// Trace-one Gram matrix on the smaller side, or `None` when every row is zero.
pub fn gram_small_side(centered: &CenteredMatrix) -> Option<(DensityMatrix, GramSide)> {
    let effective = centered.effective_rows();
    if effective == 0 {
        return None;
    }
    let scale = 1.0 / effective as f64;
    let m = &centered.matrix;
    if effective <= m.cols() {
        let gram = if centered.zero_rows.is_empty() {
            gram_of_rows(m, scale)
        } else {
            let keep: Vec<usize> = (0..m.rows())
                .filter(|i| centered.zero_rows.binary_search(i).is_err())
                .collect();
            gram_of_rows(&m.select_rows(&keep).expect("indices in range"), scale)
        };
        Some((DensityMatrix::from_trusted(gram), GramSide::Dual))
    } else {
        Some((
            DensityMatrix::from_trusted(gram_of_columns(m, scale)),
            GramSide::Primal,
        ))
    }
}

/// Normalized spectrum of the small-side Gram of `m`, `None` if all rows are degenerate.
pub fn small_side_spectrum(m: &DenseMatrix) -> Result<Option<EigenSpectrum>> {
    let centered = center_and_row_normalize(m)?;
    gram_small_side(&centered)
        .map(|(rho, _)| rho.spectrum())
        .transpose()
}

/// Von Neumann entropy of the row covariance of `m` through the small-side Gram.
///
/// A matrix whose rows are all identical scores 0.
pub fn entropy_fast(m: &DenseMatrix) -> Result<f64> {
    match small_side_spectrum(m)? {
        Some(s) => von_neumann_entropy(&s),
        None => Ok(0.0),
    }
}

/// Same quantity as [`entropy_fast`] through the full columns × columns covariance.
pub fn entropy_naive(m: &DenseMatrix) -> Result<f64> {
    let centered = center_and_row_normalize(m)?;
    let effective = centered.effective_rows();
    if effective == 0 {
        return Ok(0.0);
    }
    let sigma = gram_of_columns(&centered.matrix, 1.0 / effective as f64);
    let spectrum = DensityMatrix::from_trusted(sigma).spectrum()?;
    von_neumann_entropy(&spectrum)
}

/// Ratio of cubic eigensolver costs, `(d_h / h)³`.
pub fn speedup_theoretical(head_dim: usize, heads: usize) -> Result<f64> {
    if heads == 0 || head_dim < heads {
        return Err(Error::Parameter(format!(
            "theoretical speedup needs head_dim >= heads >= 1, got {head_dim} and {heads}"
        )));
    }
    Ok((head_dim as f64 / heads as f64).powi(3))
}
