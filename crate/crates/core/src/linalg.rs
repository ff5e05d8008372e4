//! Dense complex linear algebra.
//!
//! Everything in the crate is built on [`CMatrix`], a row-major dense complex
//! matrix. The decompositions here are tuned for desk-scale problems
//! (dimensions up to a few hundred) where exactness matters more than speed.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative cutoff below which a singular value counts as zero.
pub const RANK_REL_TOL: f64 = 1e-10;
/// Eigenvalues in `[-PSD_TOL, 0)` are treated as roundoff and clamped to zero.
pub const PSD_TOL: f64 = 1e-10;
/// Tolerance for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-10;

const SVD_MAX_SWEEPS: usize = 60;

#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    /// Builds a matrix from row-major data, rejecting empty shapes, length
    /// mismatches and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!("empty shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "data length {} does not match shape {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(k) = data
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::invalid(format!(
                "non-finite entry at ({}, {})",
                k / cols,
                k % cols
            )));
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    /// Column vector `n x 1`.
    pub fn column_vector(v: &[C64]) -> Self {
        CMatrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    /// Rank-one projector `|v><v|`.
    pub fn outer(v: &[C64]) -> Self {
        Self::from_fn(v.len(), v.len(), |i, j| v[i] * v[j].conj())
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

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[C64]) {
        for (i, &z) in v.iter().enumerate() {
            self[(i, j)] = z;
        }
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Self {
        Self::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    /// Rows `start..start + len`.
    pub fn row_block(&self, start: usize, len: usize) -> Self {
        Self::from_fn(len, self.cols, |i, j| self[(start + i, j)])
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn add(&self, other: &CMatrix) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in add");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &CMatrix) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in sub");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: C64, other: &CMatrix) {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in axpy");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn matmul(&self, other: &CMatrix) -> Self {
        assert_eq!(self.cols, other.rows, "shape mismatch in matmul");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "shape mismatch in mul_vec");
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &CMatrix) -> Self {
        let (r2, c2) = other.shape();
        Self::from_fn(self.rows * r2, self.cols * c2, |i, j| {
            self[(i / r2, j / c2)] * other[(i % r2, j % c2)]
        })
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise distance; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        self.sub(other).max_abs()
    }

    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    /// `(H + H†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * 0.5
        })
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Thin singular value decomposition `a = left · diag(singulars) · right†`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub left: CMatrix,
    pub singulars: Vec<f64>,
    pub right: CMatrix,
}

impl SvdResult {
    /// Number of singular values above `RANK_REL_TOL · σ₁`.
    pub fn rank(&self) -> usize {
        numerical_rank(&self.singulars)
    }

    pub fn reconstruct(&self) -> CMatrix {
        let k = self.singulars.len();
        let mut scaled = self.left.clone();
        for j in 0..k {
            for i in 0..scaled.rows() {
                scaled[(i, j)] *= self.singulars[j];
            }
        }
        scaled.matmul(&self.right.adjoint())
    }
}

/// Counts entries of a descending list that exceed the relative zero threshold.
pub fn numerical_rank(singulars: &[f64]) -> usize {
    let Some(&top) = singulars.first() else {
        return 0;
    };
    if top <= 0.0 {
        return 0;
    }
    singulars
        .iter()
        .take_while(|&&s| s > RANK_REL_TOL * top)
        .count()
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations. Small singular values
/// and their vectors come out with high relative accuracy, which the Schmidt
/// block extraction relies on for nearly rank-deficient states.
pub fn svd(a: &CMatrix) -> Result<SvdResult> {
    if a.data
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::invalid("svd input has non-finite entries"));
    }
    if a.rows < a.cols {
        let t = svd(&a.adjoint())?;
        return Ok(SvdResult {
            left: t.right,
            singulars: t.singulars,
            right: t.left,
        });
    }
    let (m, n) = (a.rows, a.cols);
    let mut cols: Vec<Vec<C64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vs: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(1.0, 0.0);
            e
        })
        .collect();

    for _ in 0..SVD_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = cols[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma = inner(&cols[p], &cols[q]);
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                // [a_p, a_q] ← [c a_p − s e^{−iφ} a_q, s a_p + c e^{−iφ} a_q]
                let rot = |x: &mut [C64], y: &mut [C64]| {
                    for (u, w) in x.iter_mut().zip(y.iter_mut()) {
                        let wq = *w * phase.conj();
                        let up = *u;
                        *u = up * c - wq * s;
                        *w = up * s + wq * c;
                    }
                };
                let (lo, hi) = cols.split_at_mut(q);
                rot(&mut lo[p], &mut hi[0]);
                let (lo, hi) = vs.split_at_mut(q);
                rot(&mut lo[p], &mut hi[0]);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let top = norms.iter().copied().fold(0.0, f64::max);

    let mut left_cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    let mut singulars = Vec::with_capacity(n);
    let mut right = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        singulars.push(sigma);
        right.set_column(dst, &vs[src]);
        if sigma > top * f64::EPSILON * m as f64 && sigma > f64::MIN_POSITIVE {
            left_cols.push(cols[src].iter().map(|z| z / sigma).collect());
        }
    }
    // null directions: complete to an orthonormal family
    let mut e = 0;
    while left_cols.len() < n && e < m {
        let mut cand = vec![C64::new(0.0, 0.0); m];
        cand[e] = C64::new(1.0, 0.0);
        e += 1;
        for _ in 0..2 {
            for c in &left_cols {
                let proj = inner(c, &cand);
                for (x, y) in cand.iter_mut().zip(c) {
                    *x -= proj * y;
                }
            }
        }
        let nrm = norm(&cand);
        if nrm > 1e-6 {
            left_cols.push(cand.into_iter().map(|z| z / nrm).collect());
        }
    }
    let mut left = CMatrix::zeros(m, n);
    for (j, c) in left_cols.iter().enumerate() {
        left.set_column(j, c);
    }
    Ok(SvdResult {
        left,
        singulars,
        right,
    })
}

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
///
/// Returns eigenvalues in descending order and the unitary whose columns are
/// the matching eigenvectors.
pub fn eigh(h: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if !h.is_square() {
        return Err(Error::invalid(format!(
            "eigh needs a square matrix, got {}x{}",
            h.rows, h.cols
        )));
    }
    let scale = h.max_abs().max(1.0);
    let defect = h.hermitian_defect();
    if defect > HERMITIAN_TOL * scale {
        return Err(Error::invalid(format!(
            "matrix is not Hermitian (defect {defect:e})"
        )));
    }
    let n = h.rows;
    let mut a = h.hermitian_part();
    let mut v = CMatrix::identity(n);

    let off = |a: &CMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)].norm_sqr();
                }
            }
        }
        s
    };
    let total: f64 = a.data.iter().map(|z| z.norm_sqr()).sum();

    for _sweep in 0..100 {
        if off(&a).sqrt() <= 1e-15 * total.sqrt() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                // Dephase the (p,q) entry, then apply a real symmetric rotation.
                let phase = apq / mag;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // G restricted to (p,q): [[c, s], [-s·conj(phase), c·conj(phase)]]
                let g_pp = C64::new(c, 0.0);
                let g_pq = C64::new(s, 0.0);
                let g_qp = -phase.conj() * s;
                let g_qq = phase.conj() * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * g_pp + akq * g_qp;
                    a[(k, q)] = akp * g_pq + akq * g_qq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = g_pp.conj() * apk + g_qp.conj() * aqk;
                    a[(q, k)] = g_pq.conj() * apk + g_qq.conj() * aqk;
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * g_pp + vkq * g_qp;
                    v[(k, q)] = vkp * g_pq + vkq * g_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok((values, vectors))
}

/// `V · diag(values) · V†`.
pub fn compose_spectral(values: &[f64], vectors: &CMatrix) -> CMatrix {
    let n = vectors.rows();
    let mut out = CMatrix::zeros(n, n);
    for (k, &lam) in values.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = vectors[(i, k)] * lam;
            for j in 0..n {
                out[(i, j)] += vik * vectors[(j, k)].conj();
            }
        }
    }
    out
}

/// Principal square root of a positive semidefinite matrix.
pub fn psd_sqrt(h: &CMatrix) -> Result<CMatrix> {
    let (values, vectors) = eigh(h)?;
    let min = values.last().copied().unwrap_or(0.0);
    if min < -PSD_TOL {
        return Err(Error::NotPsd { min_eig: min });
    }
    let roots: Vec<f64> = values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    Ok(compose_spectral(&roots, &vectors))
}

/// Factor `X` with `h = X X†`, keeping only strictly positive eigenvalues.
fn psd_factor(h: &CMatrix) -> Result<CMatrix> {
    let (values, vectors) = eigh(h)?;
    let min = values.last().copied().unwrap_or(0.0);
    if min < -PSD_TOL {
        return Err(Error::NotPsd { min_eig: min });
    }
    let kept: Vec<usize> = (0..values.len()).filter(|&k| values[k] > 0.0).collect();
    if kept.is_empty() {
        return Ok(CMatrix::zeros(h.rows(), 1));
    }
    Ok(CMatrix::from_fn(h.rows(), kept.len(), |i, j| {
        vectors[(i, kept[j])] * values[kept[j]].sqrt()
    }))
}

/// Bipartite density matrix on `A ⊗ B`, basis index `x·dim_b + y`.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    dim_a: usize,
    dim_b: usize,
    mat: CMatrix,
}

impl DensityMatrix {
    pub fn new(mat: CMatrix, dim_a: usize, dim_b: usize) -> Result<Self> {
        let d = dim_a * dim_b;
        if d == 0 || mat.shape() != (d, d) {
            return Err(Error::invalid(format!(
                "density matrix of shape {}x{} does not match dims {dim_a}x{dim_b}",
                mat.rows(),
                mat.cols()
            )));
        }
        let defect = mat.hermitian_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::invalid(format!(
                "density matrix is not Hermitian (defect {defect:e})"
            )));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::invalid(format!("density matrix has trace {tr}")));
        }
        let mat = mat.hermitian_part();
        let (values, _) = eigh(&mat)?;
        let min = values.last().copied().unwrap_or(0.0);
        if min < -PSD_TOL {
            return Err(Error::invalid(format!(
                "density matrix has negative eigenvalue {min:e}"
            )));
        }
        Ok(DensityMatrix { dim_a, dim_b, mat })
    }

    /// `|ψ⟩⟨ψ|` for a normalized amplitude vector.
    pub fn from_pure(amps: &[C64], dim_a: usize, dim_b: usize) -> Result<Self> {
        if amps.len() != dim_a * dim_b {
            return Err(Error::invalid("amplitude length does not match dims"));
        }
        Self::new(CMatrix::outer(amps), dim_a, dim_b)
    }

    /// Diagonal state `Σ p(x,y) |xy⟩⟨xy|`.
    pub fn classical(p: &[f64], dim_a: usize, dim_b: usize) -> Result<Self> {
        if p.len() != dim_a * dim_b {
            return Err(Error::invalid("distribution length does not match dims"));
        }
        Self::new(CMatrix::diag_real(p), dim_a, dim_b)
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn dim(&self) -> usize {
        self.dim_a * self.dim_b
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    /// Largest off-diagonal magnitude.
    pub fn off_diagonal_max(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    worst = worst.max(self.mat[(i, j)].norm());
                }
            }
        }
        worst
    }

    pub fn is_classical(&self, tol: f64) -> bool {
        self.off_diagonal_max() <= tol
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).collect()
    }
}

/// Maps a flat index over `dims` (row-major) to (kept index, traced index).
fn split_index(idx: usize, dims: &[usize], keep: &[usize], rest: &[usize]) -> (usize, usize) {
    let mut digits = vec![0usize; dims.len()];
    let mut r = idx;
    for k in (0..dims.len()).rev() {
        digits[k] = r % dims[k];
        r /= dims[k];
    }
    let fold = |regs: &[usize]| {
        regs.iter()
            .fold(0usize, |acc, &k| acc * dims[k] + digits[k])
    };
    (fold(keep), fold(rest))
}

fn check_registers(total: usize, dims: &[usize], keep: &[usize]) -> Result<Vec<usize>> {
    if dims.contains(&0) || dims.iter().product::<usize>() != total {
        return Err(Error::invalid(format!(
            "register dims {dims:?} do not multiply to state dimension {total}"
        )));
    }
    if keep.is_empty() {
        return Err(Error::invalid("keep set is empty"));
    }
    let mut seen = vec![false; dims.len()];
    for &k in keep {
        if k >= dims.len() || seen[k] {
            return Err(Error::invalid(format!(
                "bad register index {k} in keep set"
            )));
        }
        seen[k] = true;
    }
    Ok((0..dims.len()).filter(|&k| !seen[k]).collect())
}

/// Rearranges a pure state on registers `dims` into the matrix
/// `M[keep, rest]`, with both index groups in the order given.
pub fn regroup_pure(amps: &[C64], dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let rest = check_registers(amps.len(), dims, keep)?;
    let keep_dim: usize = keep.iter().map(|&k| dims[k]).product();
    let rest_dim: usize = rest.iter().map(|&k| dims[k]).product();
    let mut m = CMatrix::zeros(keep_dim, rest_dim);
    for (idx, &z) in amps.iter().enumerate() {
        let (i, j) = split_index(idx, dims, keep, &rest);
        m[(i, j)] = z;
    }
    Ok(m)
}

/// Reduced density matrix of a pure state on the registers in `keep`.
pub fn partial_trace_pure(amps: &[C64], dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let m = regroup_pure(amps, dims, keep)?;
    Ok(m.matmul(&m.adjoint()))
}

/// Partial trace of a density matrix on registers `dims`, keeping `keep`.
pub fn partial_trace(rho: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    if !rho.is_square() {
        return Err(Error::invalid("partial trace needs a square matrix"));
    }
    let rest = check_registers(rho.rows(), dims, keep)?;
    let keep_dim: usize = keep.iter().map(|&k| dims[k]).product();
    let n = rho.rows();
    let split: Vec<(usize, usize)> = (0..n).map(|i| split_index(i, dims, keep, &rest)).collect();
    let mut out = CMatrix::zeros(keep_dim, keep_dim);
    for i in 0..n {
        let (ki, ri) = split[i];
        for j in 0..n {
            let (kj, rj) = split[j];
            if ri == rj {
                out[(ki, kj)] += rho[(i, j)];
            }
        }
    }
    Ok(out)
}

/// Reduction of a bipartite density matrix to one side.
pub fn reduce(rho: &DensityMatrix, keep_alice: bool) -> CMatrix {
    let keep = if keep_alice { [0] } else { [1] };
    partial_trace(rho.matrix(), &[rho.dim_a(), rho.dim_b()], &keep)
        .expect("bipartite dims are consistent by construction")
}

/// Uhlmann fidelity `tr √(√σ ρ √σ)` (not squared).
///
/// Computed as the trace norm of `X†Y` where `ρ = XX†` and `σ = YY†`, which
/// avoids square roots of roundoff-level eigenvalues.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim_a() != sigma.dim_a() || rho.dim_b() != sigma.dim_b() {
        return Err(Error::invalid(format!(
            "fidelity of states with dims {}x{} and {}x{}",
            rho.dim_a(),
            rho.dim_b(),
            sigma.dim_a(),
            sigma.dim_b()
        )));
    }
    fidelity_matrices(rho.matrix(), sigma.matrix())
}

pub(crate) fn fidelity_matrices(rho: &CMatrix, sigma: &CMatrix) -> Result<f64> {
    let x = psd_factor(rho)?;
    let y = psd_factor(sigma)?;
    let overlap = x.adjoint().matmul(&y);
    Ok(svd(&overlap)?.singulars.iter().sum())
}

/// `√⟨ψ|ρ|ψ⟩`, the fidelity against a pure state.
pub fn fidelity_pure(rho: &CMatrix, psi: &[C64]) -> f64 {
    inner(psi, &rho.mul_vec(psi)).re.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_matrix, rng};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn svd_of_permutation() {
        let a = CMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let s = svd(&a).unwrap();
        assert!((s.singulars[0] - 1.0).abs() < 1e-12);
        assert!((s.singulars[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn svd_of_diagonal() {
        let a = CMatrix::diag_real(&[0.9f64.sqrt(), 0.1f64.sqrt()]);
        let s = svd(&a).unwrap();
        assert!((s.singulars[0] - 0.9f64.sqrt()).abs() < 1e-12);
        assert!((s.singulars[1] - 0.1f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn svd_wide_nearly_rank_one() {
        let mut g = rng(21);
        let (u1, v1) = (random_matrix(&mut g, 3, 1), random_matrix(&mut g, 12, 1));
        let (u2, v2) = (random_matrix(&mut g, 3, 1), random_matrix(&mut g, 12, 1));
        let a = u1
            .matmul(&v1.adjoint())
            .add(&u2.matmul(&v2.adjoint()).scale(1e-9));
        let dec = svd(&a).unwrap();
        assert!(dec.reconstruct().max_abs_diff(&a) < 1e-14 * dec.singulars[0]);
        assert_eq!(dec.rank(), 2);
        let gram = dec.left.adjoint().matmul(&dec.left);
        assert!(gram.max_abs_diff(&CMatrix::identity(3)) < 1e-12);
    }

    #[test]
    fn svd_matches_gram_spectrum() {
        let mut r = rng(7);
        let a = random_matrix(&mut r, 3, 2);
        let s = svd(&a).unwrap();
        let err = s.reconstruct().sub(&a).frobenius_norm();
        assert!(err <= 1e-10 * a.frobenius_norm().max(1.0), "{err}");
        let (eig, _) = eigh(&a.adjoint().matmul(&a)).unwrap();
        for (l, sv) in eig.iter().zip(&s.singulars) {
            assert!((l - sv * sv).abs() < 1e-10, "{l} vs {}", sv * sv);
        }
    }

    #[test]
    fn svd_rank_deficient_has_orthonormal_factors() {
        let mut r = rng(11);
        let u = random_matrix(&mut r, 5, 2);
        let v = random_matrix(&mut r, 2, 4);
        let a = u.matmul(&v);
        let s = svd(&a).unwrap();
        assert_eq!(s.singulars.len(), 4);
        assert_eq!(s.rank(), 2);
        let gl = s.left.adjoint().matmul(&s.left);
        let gr = s.right.adjoint().matmul(&s.right);
        assert!(gl.max_abs_diff(&CMatrix::identity(4)) < 1e-10);
        assert!(gr.max_abs_diff(&CMatrix::identity(4)) < 1e-10);
    }

    #[test]
    fn svd_rejects_nan() {
        let mut a = CMatrix::identity(2);
        a.data[1] = C64::new(f64::NAN, 0.0);
        assert!(matches!(svd(&a), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn eigh_examples() {
        let x = CMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let (vals, _) = eigh(&x).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] + 1.0).abs() < 1e-12);

        let (vals, _) = eigh(&CMatrix::identity(3)).unwrap();
        assert!(vals.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn eigh_random_hermitian() {
        let mut r = rng(3);
        let g = random_matrix(&mut r, 4, 4);
        let h = g.add(&g.adjoint());
        let (vals, vecs) = eigh(&h).unwrap();
        let tr = h.trace().re;
        assert!((vals.iter().sum::<f64>() - tr).abs() < 1e-10);
        assert!(
            vecs.adjoint()
                .matmul(&vecs)
                .max_abs_diff(&CMatrix::identity(4))
                < 1e-10
        );
        assert!(compose_spectral(&vals, &vecs).max_abs_diff(&h) < 1e-10);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let a = CMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(eigh(&a), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn psd_sqrt_examples() {
        let s = psd_sqrt(&CMatrix::diag_real(&[4.0, 9.0])).unwrap();
        assert!(s.max_abs_diff(&CMatrix::diag_real(&[2.0, 3.0])) < 1e-12);
        let z = psd_sqrt(&CMatrix::zeros(3, 3)).unwrap();
        assert!(z.max_abs() == 0.0);

        let mut r = rng(5);
        let g = random_matrix(&mut r, 3, 3);
        let h = g.adjoint().matmul(&g);
        let s = psd_sqrt(&h).unwrap();
        assert!(s.matmul(&s).max_abs_diff(&h) < 1e-9);
        assert!(s.is_hermitian(1e-10));
    }

    #[test]
    fn psd_sqrt_rejects_negative() {
        let h = CMatrix::diag_real(&[1.0, -1e-6]);
        assert!(matches!(psd_sqrt(&h), Err(Error::NotPsd { .. })));
        // within roundoff is clamped
        assert!(psd_sqrt(&CMatrix::diag_real(&[1.0, -1e-12])).is_ok());
    }

    #[test]
    fn partial_trace_epr_and_product() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let epr = [c(h), c(0.0), c(0.0), c(h)];
        let red = partial_trace_pure(&epr, &[2, 2], &[0]).unwrap();
        assert!(red.max_abs_diff(&CMatrix::identity(2).scale(0.5)) < 1e-12);

        let prod = [c(0.0), c(1.0), c(0.0), c(0.0)];
        let red = partial_trace_pure(&prod, &[2, 2], &[0]).unwrap();
        assert!(red.max_abs_diff(&CMatrix::diag_real(&[1.0, 0.0])) < 1e-12);

        let rho = CMatrix::outer(&epr);
        let red = partial_trace(&rho, &[2, 2], &[1]).unwrap();
        assert!(red.max_abs_diff(&CMatrix::identity(2).scale(0.5)) < 1e-12);
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        let v = vec![c(1.0); 6];
        assert!(partial_trace_pure(&v, &[2, 2], &[0]).is_err());
        assert!(partial_trace_pure(&v, &[2, 3], &[]).is_err());
        assert!(partial_trace_pure(&v, &[2, 3], &[2]).is_err());
    }

    #[test]
    fn reduced_spectra_agree() {
        let mut r = rng(17);
        let m = random_matrix(&mut r, 4, 1);
        let v: Vec<C64> = m.data().iter().map(|z| z / m.frobenius_norm()).collect();
        let ra = partial_trace_pure(&v, &[2, 2], &[0]).unwrap();
        let rb = partial_trace_pure(&v, &[2, 2], &[1]).unwrap();
        let (ea, _) = eigh(&ra).unwrap();
        let (eb, _) = eigh(&rb).unwrap();
        for (x, y) in ea.iter().zip(&eb) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!((ra.trace().re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fidelity_examples() {
        let zero = DensityMatrix::new(CMatrix::diag_real(&[1.0, 0.0]), 2, 1).unwrap();
        let one = DensityMatrix::new(CMatrix::diag_real(&[0.0, 1.0]), 2, 1).unwrap();
        let mixed = DensityMatrix::new(CMatrix::identity(2).scale(0.5), 2, 1).unwrap();
        assert!((fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-12);
        assert!(fidelity(&zero, &one).unwrap().abs() < 1e-12);
        assert!((fidelity(&zero, &mixed).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fidelity_dimension_mismatch() {
        let a = DensityMatrix::new(CMatrix::identity(2).scale(0.5), 2, 1).unwrap();
        let b = DensityMatrix::new(CMatrix::identity(2).scale(0.5), 1, 2).unwrap();
        assert!(fidelity(&a, &b).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(CMatrix::diag_real(&[0.5, 0.4]), 2, 1).is_err());
        assert!(DensityMatrix::new(CMatrix::diag_real(&[1.5, -0.5]), 2, 1).is_err());
        assert!(DensityMatrix::new(CMatrix::identity(2).scale(0.5), 2, 2).is_err());
    }
}
