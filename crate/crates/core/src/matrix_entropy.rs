//! Trace-normalized covariance, symmetric eigenvalues and the matrix-entropy family.
//!
//! A token matrix `X` (N tokens of dimension d) is mapped to the density matrix
//!
//! ```text
//! Σ = 1/N' Σ_i (x_i - x̄)(x_i - x̄)ᵀ / ‖x_i - x̄‖²
//! ```
//!
//! where the sum runs over the N' tokens whose centered norm is non-negligible.
//! `tr Σ = 1` and `Σ` is positive semi-definite, so its eigenvalues form a
//! probability vector. Entropies are reported in nats.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Centered rows with norm below this are treated as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;
/// Maximum `|a_ij - a_ji|` accepted as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Negative eigenvalues down to `-CLAMP_TOL` are rounded to zero.
pub const CLAMP_TOL: f64 = 1e-10;
/// Allowed deviation of a spectrum's sum from 1 before it is rejected.
pub const TRACE_TOL: f64 = 1e-8;
/// Jacobi stops once the off-diagonal Frobenius norm is below `JACOBI_REL_TOL * ‖A‖_F`.
pub const JACOBI_REL_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric, unit-trace, positive semi-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(DenseMatrix);

impl DensityMatrix {
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        let asym = matrix.max_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let trace = matrix.trace();
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotNormalized(trace));
        }
        Ok(Self(matrix))
    }

    pub(crate) fn from_trusted(matrix: DenseMatrix) -> Self {
        Self(matrix)
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.0
    }

    /// Eigenvalues, clamped and renormalized to sum to exactly 1.
    pub fn spectrum(&self) -> Result<EigenSpectrum> {
        eigenvalues_sym(&self.0)?.normalized()
    }
}

/// Nonnegative eigenvalues in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpectrum {
    values: Vec<f64>,
}

impl EigenSpectrum {
    /// Sorts descending; rejects negative or non-finite values.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Parameter("empty spectrum".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("eigenvalue {v}")));
        }
        if let Some(&v) = values.iter().find(|&&v| v < 0.0) {
            return Err(Error::NegativeEigenvalue(v));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { values })
    }

    /// Uniform spectrum `1/k` repeated `k` times.
    pub fn uniform(k: usize) -> Self {
        assert!(k > 0);
        Self {
            values: vec![1.0 / k as f64; k],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Rescales to sum exactly 1 if within [`TRACE_TOL`]; larger deviations are an error.
    pub fn normalized(mut self) -> Result<Self> {
        let sum = self.sum();
        if (sum - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotNormalized(sum));
        }
        for v in &mut self.values {
            *v /= sum;
        }
        Ok(self)
    }

    fn check_normalized(&self) -> Result<()> {
        let sum = self.sum();
        if (sum - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotNormalized(sum));
        }
        Ok(())
    }
}

/// Returns the unit-normalized centered rows of `x` (mean taken over rows) and
/// the indices of rows whose centered norm fell below [`DEGENERATE_NORM`]; those
/// rows are left as zeros.
pub(crate) fn centered_unit_rows(x: &DenseMatrix) -> (DenseMatrix, Vec<usize>) {
    let (n, d) = x.shape();
    let mut mean = vec![0.0; d];
    for row in x.row_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut out = vec![0.0; n * d];
    let mut zero_rows = Vec::new();
    for (i, (src, dst)) in x.row_iter().zip(out.chunks_exact_mut(d)).enumerate() {
        for ((o, v), m) in dst.iter_mut().zip(src).zip(&mean) {
            *o = v - m;
        }
        let norm = dst.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < DEGENERATE_NORM {
            dst.fill(0.0);
            zero_rows.push(i);
        } else {
            for o in dst.iter_mut() {
                *o /= norm;
            }
        }
    }
    (DenseMatrix::from_parts(n, d, out), zero_rows)
}

/// `scale · AᵀA` (cols × cols), built from row outer products on the upper triangle.
pub(crate) fn gram_of_columns(a: &DenseMatrix, scale: f64) -> DenseMatrix {
    let d = a.cols();
    let mut g = vec![0.0; d * d];
    for row in a.row_iter() {
        for (i, &ri) in row.iter().enumerate() {
            if ri == 0.0 {
                continue;
            }
            let g_row = &mut g[i * d + i..(i + 1) * d];
            for (gij, &rj) in g_row.iter_mut().zip(&row[i..]) {
                *gij += ri * rj;
            }
        }
    }
    for i in 0..d {
        g[i * d + i] *= scale;
        for j in (i + 1)..d {
            let v = g[i * d + j] * scale;
            g[i * d + j] = v;
            g[j * d + i] = v;
        }
    }
    DenseMatrix::from_parts(d, d, g)
}

/// `scale · AAᵀ` (rows × rows) from row dot products.
pub(crate) fn gram_of_rows(a: &DenseMatrix, scale: f64) -> DenseMatrix {
    let n = a.rows();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        let ri = a.row(i);
        for j in i..n {
            let v = scale * ri.iter().zip(a.row(j)).map(|(x, y)| x * y).sum::<f64>();
            g[i * n + j] = v;
            g[j * n + i] = v;
        }
    }
    DenseMatrix::from_parts(n, n, g)
}

/// Builds the full d×d trace-normalized covariance of the token rows of `tokens`.
///
/// Tokens equal to the mean (centered norm below [`DEGENERATE_NORM`]) are
/// dropped from both the sum and the divisor so the trace stays 1.
pub fn trace_normalized_covariance(tokens: &DenseMatrix) -> Result<DensityMatrix> {
    if tokens.rows() < 2 {
        return Err(Error::Parameter(format!(
            "covariance needs at least 2 tokens, got {}",
            tokens.rows()
        )));
    }
    let (unit, zero_rows) = centered_unit_rows(tokens);
    let contributing = tokens.rows() - zero_rows.len();
    if contributing == 0 {
        return Err(Error::Degenerate(
            "all tokens are identical; covariance is undefined".into(),
        ));
    }
    Ok(DensityMatrix::from_trusted(gram_of_columns(
        &unit,
        1.0 / contributing as f64,
    )))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotation, descending, not clamped.
///
/// Works on the lower triangle only. Sweeps are row-cyclic; during the pass for
/// pivot `p` the column below `a[p][p]` lives in a contiguous buffer, since only
/// rotations involving `p` touch it.
pub fn jacobi_eigenvalues(matrix: &DenseMatrix) -> Result<Vec<f64>> {
    let (n, cols) = matrix.shape();
    if n != cols {
        return Err(Error::Shape(format!("eigenvalues need a square matrix, got {n}x{cols}")));
    }
    let asym = matrix.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let mut a = matrix.as_slice().to_vec();
    for i in 0..n {
        for j in 0..i {
            a[i * n + j] = 0.5 * (a[i * n + j] + a[j * n + i]);
        }
    }
    let norm = matrix.frobenius_norm();
    let target = JACOBI_REL_TOL * norm;
    // entries this small are skipped; n² of them still sum below `target`
    let skip = target / (10.0 * n as f64);

    let mut col_p = vec![0.0; n];
    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if lower_off_norm(&a, n) <= target || norm == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for k in (p + 1)..n {
                col_p[k] = a[k * n + p];
            }
            for q in (p + 1)..n {
                let apq = col_p[q];
                if apq.abs() <= skip {
                    continue;
                }
                rotate_lower(&mut a, &mut col_p, n, p, q);
            }
            for k in (p + 1)..n {
                a[k * n + p] = col_p[k];
            }
        }
    }
    if !converged && lower_off_norm(&a, n) > target {
        return Err(Error::NoConvergence(JACOBI_MAX_SWEEPS));
    }
    let mut values: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    values.sort_by(|x, y| y.total_cmp(x));
    Ok(values)
}

fn lower_off_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        s += a[i * n..i * n + i].iter().map(|v| v * v).sum::<f64>();
    }
    (2.0 * s).sqrt()
}

/// Rotation annihilating `a[q][p]` (p < q) on lower-triangle storage, with
/// column `p` below the diagonal held in `col_p`.
fn rotate_lower(a: &mut [f64], col_p: &mut [f64], n: usize, p: usize, q: usize) {
    let app = a[p * n + p];
    let aqq = a[q * n + q];
    let apq = col_p[q];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // k < p: a[p][k] and a[q][k], both row prefixes
    let (head, tail) = a.split_at_mut(q * n);
    let row_p = &mut head[p * n..p * n + p];
    let row_q = &mut tail[..q];
    for (x, y) in row_p.iter_mut().zip(row_q[..p].iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
    // p < k < q: a[k][p] and a[q][k]
    for (x, y) in col_p[p + 1..q].iter_mut().zip(row_q[p + 1..q].iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
    // k > q: a[k][p] and a[k][q]
    for k in (q + 1)..n {
        let xp = col_p[k];
        let yq = a[k * n + q];
        col_p[k] = c * xp - s * yq;
        a[k * n + q] = s * xp + c * yq;
    }
    a[p * n + p] = app - t * apq;
    a[q * n + q] = aqq + t * apq;
    col_p[q] = 0.0;
}

/// Full descending spectrum of a symmetric positive semi-definite matrix.
///
/// Negative eigenvalues in `[-CLAMP_TOL, 0)` are set to zero; anything more
/// negative is reported as [`Error::NegativeEigenvalue`].
pub fn eigenvalues_sym(matrix: &DenseMatrix) -> Result<EigenSpectrum> {
    let mut values = jacobi_eigenvalues(matrix)?;
    for v in &mut values {
        if *v < 0.0 {
            if *v < -CLAMP_TOL {
                return Err(Error::NegativeEigenvalue(*v));
            }
            *v = 0.0;
        }
    }
    EigenSpectrum::new(values)
}

/// Order-α entropy `ln(Σ σ_i^α) / (1 - α)` for α > 0, α ≠ 1.
pub fn renyi_entropy(spectrum: &EigenSpectrum, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) || alpha == 1.0 || !alpha.is_finite() {
        return Err(Error::Parameter(format!(
            "order must be positive, finite and != 1, got {alpha}"
        )));
    }
    spectrum.check_normalized()?;
    let sum: f64 = spectrum.values.iter().sum();
    if (alpha - 1.0).abs() >= 0.5 {
        let power: f64 = spectrum.values.iter().filter(|&&s| s > 0.0).map(|s| s.powf(alpha)).sum();
        return Ok(power.ln() / (1.0 - alpha) + 0.0);
    }
    // Σ σ^α - Σ σ, accumulated as σ·expm1((α-1)·ln σ) to survive α near 1
    let excess: f64 = spectrum
        .values
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| s * ((alpha - 1.0) * s.ln()).exp_m1())
        .sum();
    // adding 0.0 maps a -0 result to +0
    Ok((sum.ln() + (excess / sum).ln_1p()) / (1.0 - alpha) + 0.0)
}

fn plogp(s: f64) -> f64 {
    if s > 0.0 {
        s * s.ln()
    } else {
        0.0
    }
}

/// `-Σ σ_i ln σ_i` with `0 ln 0 = 0`.
pub fn von_neumann_entropy(spectrum: &EigenSpectrum) -> Result<f64> {
    spectrum.check_normalized()?;
    Ok(0.0 - spectrum.values.iter().copied().map(plogp).sum::<f64>())
}

/// Entropy restricted to the `k` largest eigenvalues.
pub fn topk_entropy(spectrum: &EigenSpectrum, k: usize) -> Result<f64> {
    if k == 0 || k > spectrum.len() {
        return Err(Error::Parameter(format!(
            "top-k needs 1 <= k <= {}, got {k}",
            spectrum.len()
        )));
    }
    spectrum.check_normalized()?;
    Ok(0.0 - spectrum.values[..k].iter().copied().map(plogp).sum::<f64>())
}
