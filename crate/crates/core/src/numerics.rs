//! Dense linear algebra on small matrices, empirical covariance operators and
//! the top of their spectrum.
//!
//! Everything here works on row-major `f64` storage. The only spectral quantity
//! the bounds ever need is the largest eigenvalue, which is obtained by power
//! iteration. A cyclic Jacobi solver is kept for the few places that need the
//! whole (small) spectrum, namely positive-semidefiniteness checks.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Tolerance for treating a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Default relative stopping tolerance of the power iteration.
pub const DEFAULT_REL_TOL: f64 = 1e-12;
/// Iteration cap of the power iteration.
pub const POWER_MAX_ITERS: usize = 10_000;
/// Sub-seed used for the power iteration start vector.
const POWER_START_SEED: u64 = 0x005E_ED0F_B0A7;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero width
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        self.row_iter().map(|r| dot(r, v)).collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), out.row_mut(i));
            }
        }
        Ok(out)
    }

    /// `AᵀA`, a `cols × cols` symmetric matrix.
    pub fn gram(&self) -> Matrix {
        let mut g = Matrix::zeros(self.cols, self.cols);
        for r in self.row_iter() {
            add_outer(&mut g, 1.0, r);
        }
        symmetrize_in_place(&mut g);
        g
    }

    /// `AAᵀ`, a `rows × rows` symmetric matrix.
    pub fn outer_gram(&self) -> Matrix {
        let mut g = Matrix::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in i..self.rows {
                let v = dot(self.row(i), self.row(j));
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        norm(&self.data)
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                found: other.data.len(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Largest `|A_ij − A_ji|`; infinite for non-square input.
    pub fn asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn check_finite(&self) -> Result<()> {
        for (k, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: k / self.cols.max(1),
                    col: k % self.cols.max(1),
                });
            }
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `m += alpha · x xᵀ` (upper triangle and lower triangle both written).
pub fn add_outer(m: &mut Matrix, alpha: f64, x: &[f64]) {
    let d = x.len();
    for i in 0..d {
        let ai = alpha * x[i];
        if ai == 0.0 {
            continue;
        }
        let row = m.row_mut(i);
        for j in 0..d {
            row[j] += ai * x[j];
        }
    }
}

fn symmetrize_in_place(m: &mut Matrix) {
    for i in 0..m.rows {
        for j in (i + 1)..m.cols {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// A sample `x_1, …, x_N` of vectors in `R^d`, stored as the rows of an
/// `N × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSample {
    rows: Matrix,
}

impl DataSample {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::EmptySample);
        }
        let d = vectors[0].len();
        if d == 0 {
            return Err(invalid("d", "dimension must be at least 1"));
        }
        let rows = Matrix::from_rows(&vectors)?;
        rows.check_finite()?;
        Ok(DataSample { rows })
    }

    pub fn from_matrix(rows: Matrix) -> Result<Self> {
        if rows.rows() == 0 {
            return Err(Error::EmptySample);
        }
        if rows.cols() == 0 {
            return Err(invalid("d", "dimension must be at least 1"));
        }
        rows.check_finite()?;
        Ok(DataSample { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.rows
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.row_iter()
    }

    pub fn squared_norms(&self) -> Vec<f64> {
        self.iter().map(|x| dot(x, x)).collect()
    }

    /// `Σ_i ‖x_i‖²` over the given indices.
    pub fn squared_norm_sum(&self, indices: &[usize]) -> f64 {
        indices.iter().map(|&i| dot(self.x(i), self.x(i))).sum()
    }

    /// Whether every row has unit norm within `tol`; returns the first
    /// offending row otherwise.
    pub fn check_unit_norm(&self, tol: f64) -> Result<()> {
        for (row, x) in self.iter().enumerate() {
            let n = norm(x);
            if (n - 1.0).abs() > tol {
                return Err(Error::NotUnitNorm { row, norm: n });
            }
        }
        Ok(())
    }
}

/// Empirical covariance `Ĉ = (1/N) Σ_i x_i x_iᵀ`.
pub fn empirical_covariance(sample: &DataSample) -> Matrix {
    let all: Vec<usize> = (0..sample.len()).collect();
    // cannot fail: the full index range is nonempty and in range
    subset_covariance(sample, &all).expect("full index set is valid")
}

/// `Ĉ_t = (1/|I_t|) Σ_{i∈I_t} x_i x_iᵀ`.
pub fn subset_covariance(sample: &DataSample, subset: &[usize]) -> Result<Matrix> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let d = sample.dim();
    let mut c = Matrix::zeros(d, d);
    for &i in subset {
        if i >= sample.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: sample.len(),
            });
        }
        add_outer(&mut c, 1.0, sample.x(i));
    }
    c.scale(1.0 / subset.len() as f64);
    symmetrize_in_place(&mut c);
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSummary {
    pub trace: f64,
    pub lambda_max: f64,
    pub dim: usize,
}

impl SpectralSummary {
    pub fn of(op: &Matrix) -> Result<Self> {
        Ok(SpectralSummary {
            trace: op.trace(),
            lambda_max: lambda_max(op, DEFAULT_REL_TOL)?,
            dim: op.rows(),
        })
    }

    /// `tr / λ_max`, infinite for the zero operator.
    pub fn effective_dimension(&self) -> f64 {
        if self.lambda_max > 0.0 {
            self.trace / self.lambda_max
        } else {
            f64::INFINITY
        }
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration.
///
/// The input is symmetrized as `(A + Aᵀ)/2` first. Iteration stops when two
/// successive Rayleigh quotients differ by less than `rel_tol` relative, or
/// after [`POWER_MAX_ITERS`] steps.
pub fn lambda_max(op: &Matrix, rel_tol: f64) -> Result<f64> {
    Ok(power_iteration(op, rel_tol)?.0)
}

/// Unit eigenvector for the largest eigenvalue (any unit vector for the zero
/// operator).
pub fn top_eigenvector(op: &Matrix) -> Result<Vec<f64>> {
    Ok(power_iteration(op, DEFAULT_REL_TOL)?.1)
}

fn power_iteration(op: &Matrix, rel_tol: f64) -> Result<(f64, Vec<f64>)> {
    let asym = op.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    op.check_finite()?;
    let n = op.rows();
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let mut a = op.clone();
    symmetrize_in_place(&mut a);
    if n == 1 {
        return Ok((a[(0, 0)].max(0.0), vec![1.0]));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(POWER_START_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut rayleigh = f64::NAN;
    for _ in 0..POWER_MAX_ITERS {
        let w = a.matvec(&v);
        let next = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return Ok((0.0, v));
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        if rayleigh.is_finite() && (next - rayleigh).abs() <= rel_tol * next.abs() {
            rayleigh = next;
            break;
        }
        rayleigh = next;
    }
    // one more quotient with the final iterate
    let final_q = dot(&v, &a.matvec(&v));
    Ok((final_q.max(rayleigh).max(0.0), v))
}

/// Largest singular value `‖D‖_∞ = √λ_max(DᵀD)`, computed from the smaller
/// of the two Gram matrices.
pub fn sigma_max(rect: &Matrix, rel_tol: f64) -> Result<f64> {
    rect.check_finite()?;
    if rect.rows() == 0 || rect.cols() == 0 {
        return Ok(0.0);
    }
    if rect.rows() == 1 {
        return Ok(norm(rect.row(0)));
    }
    let g = if rect.rows() <= rect.cols() {
        rect.outer_gram()
    } else {
        rect.gram()
    };
    Ok(lambda_max(&g, rel_tol)?.sqrt())
}

/// All eigenvalues of a small symmetric matrix by cyclic Jacobi rotations,
/// sorted ascending.
pub fn symmetric_eigenvalues(op: &Matrix) -> Result<Vec<f64>> {
    let asym = op.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    op.check_finite()?;
    let n = op.rows();
    let mut a = op.clone();
    symmetrize_in_place(&mut a);
    let scale = a.frobenius().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

pub fn min_eigenvalue(op: &Matrix) -> Result<f64> {
    Ok(symmetric_eigenvalues(op)?.first().copied().unwrap_or(0.0))
}
