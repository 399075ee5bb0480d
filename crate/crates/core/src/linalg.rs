//! Dense row-major matrices and symmetric positive-definite factorizations.
//!
//! Everything the bounds need reduces to three operations on an SPD matrix:
//! a Cholesky factorization (with a deterministic jitter ladder), solves
//! against that factor, and the log-determinant read off its diagonal.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative tolerance used when checking symmetry before factorizing.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Number of escalation steps after the first jittered attempt (×10 each).
pub const JITTER_ESCALATIONS: u32 = 3;

/// Products at least this large (n·k·m) go through faer's blocked kernel.
const BLOCKED_MATMUL_MIN_FLOPS: usize = 32 * 32 * 32;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::BadMatrixData {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix without validating finiteness. Length is still checked.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::from_raw(rows, cols, vec![value; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * n + i] = *d;
        }
        m
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_raw(1, 1, vec![value])
    }

    /// An n×1 column vector.
    pub fn column(values: &[f64]) -> Self {
        Self::from_raw(values.len(), 1, values.to_vec())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                op: "from_rows",
                detail: format!("row of length {} in a {cols}-column matrix", bad.len()),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    /// The single entry of a 1×1 matrix.
    pub fn to_scalar(&self) -> f64 {
        debug_assert_eq!(self.shape(), (1, 1));
        self.data[0]
    }

    /// Gathers the given rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::from_raw(idx.len(), self.cols, data)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                detail: format!("{:?} x {:?}", self.shape(), other.shape()),
            });
        }
        Ok(self.matmul_unchecked(other))
    }

    pub(crate) fn matmul_unchecked(&self, other: &Matrix) -> Matrix {
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(n, m);
        if n * k * m >= BLOCKED_MATMUL_MIN_FLOPS {
            faer::linalg::matmul::matmul(
                view_mut(&mut out),
                faer::Accum::Replace,
                view(self),
                view(other),
                1.0,
                faer::Par::Seq,
            );
            settle_simd();
            return out;
        }
        for i in 0..n {
            let out_row = &mut out.data[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                axpy(a, &other.data[p * m..(p + 1) * m], out_row);
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        debug_assert_eq!(self.shape(), other.shape());
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_raw(self.rows, self.cols, data)
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Matrix {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|v| v * c)
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        axpy(1.0, &other.data, &mut self.data);
    }

    pub fn add_diag(&self, d: f64) -> Matrix {
        let mut out = self.clone();
        let n = self.rows.min(self.cols);
        for i in 0..n {
            out.data[i * self.cols + i] += d;
        }
        out
    }

    pub fn diag(&self) -> Vec<f64> {
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self.data[i * self.cols + i]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest |A_ij − A_ji|; `None` for non-square input.
    pub fn max_asymmetry(&self) -> Option<f64> {
        if !self.is_square() {
            return None;
        }
        let n = self.rows;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i]).abs());
            }
        }
        Some(worst)
    }

    /// (A + Aᵀ)/2.
    pub fn symmetrized(&self) -> Matrix {
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..i {
                let avg = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                out.data[i * n + j] = avg;
                out.data[j * n + i] = avg;
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators let the compiler vectorize without reassociating.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Lower Cholesky factor of `A + jitter_used·I`.
#[derive(Clone, Debug)]
pub struct CholFactor {
    lower: Matrix,
    jitter_used: f64,
}

impl CholFactor {
    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn dim(&self) -> usize {
        self.lower.rows
    }
}

/// Default base jitter: 1e-8 times the mean diagonal magnitude.
pub fn default_jitter(a: &Matrix) -> f64 {
    let d = a.diag();
    if d.is_empty() {
        return 0.0;
    }
    1e-8 * d.iter().map(|v| v.abs()).sum::<f64>() / d.len() as f64
}

/// Cholesky factorization with a jitter ladder.
///
/// The input is symmetrized first. A plain factorization is attempted; on
/// failure the diagonal is inflated by `base_jitter·{1, 10, 100, 1000}` in
/// turn. With `base_jitter == 0` only the plain attempt is made.
pub fn cholesky(a: &Matrix, base_jitter: f64) -> Result<CholFactor> {
    if !a.is_square() {
        return Err(Error::NonSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    // One sweep: finiteness, asymmetry, and the averaged lower triangle in
    // column-major order (faer only reads the lower half).
    let mut lower = faer::Mat::<f64>::zeros(n, n);
    let (mut asym, mut max_abs) = (0.0_f64, 0.0_f64);
    for j in 0..n {
        for i in j..n {
            let (u, v) = (a.data[i * n + j], a.data[j * n + i]);
            if !u.is_finite() || !v.is_finite() {
                return Err(Error::NonFinite("cholesky input"));
            }
            asym = asym.max((u - v).abs());
            max_abs = max_abs.max(u.abs()).max(v.abs());
            lower[(i, j)] = 0.5 * (u + v);
        }
    }
    if asym > SYMMETRY_TOL * max_abs.max(f64::MIN_POSITIVE) {
        return Err(Error::NonSymmetric { asymmetry: asym });
    }
    if let Some(l) = factor_lower(&lower, 0.0) {
        return Ok(CholFactor {
            lower: l,
            jitter_used: 0.0,
        });
    }
    let mut jitter = base_jitter;
    if jitter > 0.0 {
        for _ in 0..=JITTER_ESCALATIONS {
            if let Some(l) = factor_lower(&lower, jitter) {
                return Ok(CholFactor {
                    lower: l,
                    jitter_used: jitter,
                });
            }
            jitter *= 10.0;
        }
        jitter /= 10.0;
    }
    Err(Error::NotPositiveDefinite { jitter })
}

/// [`cholesky`] with [`default_jitter`].
pub fn cholesky_default(a: &Matrix) -> Result<CholFactor> {
    cholesky(a, default_jitter(a))
}

/// faer's wide SIMD kernels can return with the upper vector lanes dirty,
/// which stalls the SSE-encoded scalar code (notably `exp`) that runs
/// next. Clearing them after each call keeps the rest of the crate at full
/// speed.
#[inline]
fn settle_simd() {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: the instruction set was detected at runtime.
        unsafe { zero_upper() }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn zero_upper() {
    std::arch::x86_64::_mm256_zeroupper();
}

fn view(m: &Matrix) -> faer::MatRef<'_, f64> {
    faer::MatRef::from_row_major_slice(&m.data, m.rows, m.cols)
}

fn view_mut(m: &mut Matrix) -> faer::MatMut<'_, f64> {
    faer::MatMut::from_row_major_slice_mut(&mut m.data, m.rows, m.cols)
}

fn factor_lower(a: &faer::Mat<f64>, jitter: f64) -> Option<Matrix> {
    let n = a.nrows();
    let mut work = a.clone();
    if jitter > 0.0 {
        for i in 0..n {
            work[(i, i)] += jitter;
        }
    }
    let llt = work.llt(faer::Side::Lower).ok();
    settle_simd();
    let llt = llt?;
    let l = llt.L();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        let row = &mut out.data[i * n..i * n + i + 1];
        for (j, v) in row.iter_mut().enumerate() {
            *v = l[(i, j)];
        }
    }
    (0..n)
        .all(|i| {
            let d = out.data[i * n + i];
            d > 0.0 && d.is_finite()
        })
        .then_some(out)
}

/// Solves L·Z = B in place.
fn forward_substitute(l: &Matrix, b: &mut Matrix) {
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(
        view(l),
        view_mut(b),
        faer::Par::Seq,
    );
    settle_simd();
}

/// Solves Lᵀ·X = Z in place.
fn backward_substitute(l: &Matrix, z: &mut Matrix) {
    faer::linalg::triangular_solve::solve_upper_triangular_in_place(
        view(l).transpose(),
        view_mut(z),
        faer::Par::Seq,
    );
    settle_simd();
}

/// Returns X with (L·Lᵀ)·X = B.
pub fn solve_psd(f: &CholFactor, b: &Matrix) -> Result<Matrix> {
    if f.lower.rows != b.rows {
        return Err(Error::DimensionMismatch {
            op: "solve_psd",
            detail: format!("factor is {}x{}, rhs has {} rows", f.dim(), f.dim(), b.rows),
        });
    }
    let mut x = b.clone();
    forward_substitute(&f.lower, &mut x);
    backward_substitute(&f.lower, &mut x);
    Ok(x)
}

/// Solves against a single vector.
pub fn solve_psd_vec(f: &CholFactor, b: &[f64]) -> Result<Vec<f64>> {
    solve_psd(f, &Matrix::column(b)).map(Matrix::into_vec)
}

/// Returns Z with L·Z = B (half solve; ‖Z‖² columns give quadratic forms).
pub fn solve_lower(f: &CholFactor, b: &Matrix) -> Result<Matrix> {
    if f.lower.rows != b.rows {
        return Err(Error::DimensionMismatch {
            op: "solve_lower",
            detail: format!("factor is {}x{}, rhs has {} rows", f.dim(), f.dim(), b.rows),
        });
    }
    let mut z = b.clone();
    forward_substitute(&f.lower, &mut z);
    Ok(z)
}

/// ln|A| = 2·Σ ln Lᵢᵢ.
pub fn logdet_psd(f: &CholFactor) -> f64 {
    2.0 * f.lower.diag().iter().map(|d| d.ln()).sum::<f64>()
}

/// (L·Lᵀ)⁻¹ = L⁻ᵀ·L⁻¹.
pub fn inverse_psd(f: &CholFactor) -> Matrix {
    use faer::linalg::matmul::triangular::{matmul, BlockStructure};
    let n = f.dim();
    let mut w = faer::Mat::<f64>::zeros(n, n);
    faer::linalg::triangular_inverse::invert_lower_triangular(w.as_mut(), view(&f.lower), faer::Par::Seq);
    let mut lower = faer::Mat::<f64>::zeros(n, n);
    matmul(
        lower.as_mut(),
        BlockStructure::TriangularLower,
        faer::Accum::Replace,
        w.transpose(),
        BlockStructure::TriangularUpper,
        w.as_ref(),
        BlockStructure::TriangularLower,
        1.0,
        faer::Par::Seq,
    );
    settle_simd();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = lower[(i, j)];
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}
