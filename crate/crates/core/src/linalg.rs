//! Dense symmetric linear algebra.
//!
//! Everything here works on small matrices (C ≤ 32) stored row-major in
//! double precision: covariance estimation, OAS shrinkage, a cyclic Jacobi
//! eigensolver and the matrix functions built on it.

use crate::error::{DsfError, Result};

/// Eigenvalues at or below this are treated as zero by [`matrix_log_eig`].
pub const EIG_FLOOR: f64 = 1e-12;
/// Most negative eigenvalue tolerated as rounding noise in a PSD input.
pub const PSD_TOLERANCE: f64 = 1e-9;
/// Returned (times identity) by [`oas_shrink`] on zero-trace input.
pub const OAS_EPSILON: f64 = 1e-12;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-9;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(DsfError::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Panics on ragged input; intended for literals and tests.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
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

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(DsfError::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(DsfError::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Largest absolute asymmetry `|S_ij - S_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// `(S + Sᵀ) / 2`.
    pub fn symmetrized(&self) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigendecomposition `S = U Λ Uᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigDecomp {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors, in the same order as `eigenvalues`.
    pub eigenvectors: Matrix,
}

impl SymEigDecomp {
    /// `U diag(f(λ)) Uᵀ`.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.eigenvalues.len();
        let u = &self.eigenvectors;
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = (0..n).map(|k| u[(i, k)] * mapped[k] * u[(j, k)]).sum();
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.map_eigenvalues(|l| l)
    }
}

fn check_square(s: &Matrix, what: &str) -> Result<()> {
    if !s.is_square() {
        return Err(DsfError::Shape(format!("{what} needs a square matrix, got {}x{}", s.rows, s.cols)));
    }
    Ok(())
}

/// Unbiased covariance of the rows of a C×T window, after centering each row.
pub fn sample_covariance(x: &Matrix) -> Result<Matrix> {
    let (c, t) = (x.rows(), x.cols());
    if t < 2 {
        return Err(DsfError::Degenerate(format!("covariance needs T >= 2, got {t}")));
    }
    let centered: Vec<Vec<f64>> = (0..c)
        .map(|i| {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / t as f64;
            row.iter().map(|v| v - mean).collect()
        })
        .collect();
    let denom = (t - 1) as f64;
    let mut cov = Matrix::zeros(c, c);
    for i in 0..c {
        for j in i..c {
            let v = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>() / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

/// Output of [`oas_shrink`].
#[derive(Debug, Clone)]
pub struct Shrunk {
    pub matrix: Matrix,
    /// Shrinkage intensity applied toward `tr(S)/C · I`.
    pub rho: f64,
    /// Set when the input had zero trace and `εI` was returned.
    pub degenerate: bool,
}

/// Oracle Approximating Shrinkage of a sample covariance toward a scaled identity.
pub fn oas_shrink(s: &Matrix, n_samples: usize) -> Result<Shrunk> {
    check_square(s, "oas_shrink")?;
    if n_samples < 2 {
        return Err(DsfError::Argument(format!("OAS needs n_samples >= 2, got {n_samples}")));
    }
    let c = s.rows();
    let tr = s.trace();
    if tr == 0.0 {
        return Ok(Shrunk { matrix: Matrix::identity(c).scale(OAS_EPSILON), rho: 1.0, degenerate: true });
    }
    let cf = c as f64;
    let n = n_samples as f64;
    // tr(S²) = ‖S‖_F² for symmetric S.
    let tr_s2 = s.data().iter().map(|v| v * v).sum::<f64>();
    let num = (1.0 - 2.0 / cf) * tr_s2 + tr * tr;
    let den = (n + 1.0 - 2.0 / cf) * (tr_s2 - tr * tr / cf);
    let rho = if den <= 0.0 { 1.0 } else { (num / den).min(1.0) };
    let mu = tr / cf;
    let mut out = s.scale(1.0 - rho);
    for i in 0..c {
        out[(i, i)] += rho * mu;
    }
    Ok(Shrunk { matrix: out.symmetrized(), rho, degenerate: false })
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps visit `(p, q)` pairs in row-major order until the off-diagonal
/// Frobenius mass falls below `1e-12·‖S‖_F`, for at most 100 sweeps.
pub fn sym_eig(s: &Matrix) -> Result<SymEigDecomp> {
    check_square(s, "sym_eig")?;
    if !s.is_finite() {
        return Err(DsfError::InvalidInput("non-finite matrix entry".into()));
    }
    if s.asymmetry() >= SYMMETRY_TOL * s.max_abs().max(1.0) {
        return Err(DsfError::InvalidInput(format!("matrix is not symmetric (asymmetry {:e})", s.asymmetry())));
    }
    let n = s.rows();
    let mut a = s.symmetrized();
    let mut v = Matrix::identity(n);
    let threshold = JACOBI_TOL * a.frobenius_norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cos = 1.0 / (t * t + 1.0).sqrt();
                let sin = t * cos;
                rotate(&mut a, &mut v, p, q, cos, sin);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors[(r, dst)] = v[(r, src)];
        }
    }
    Ok(SymEigDecomp { eigenvalues, eigenvectors })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

// Applies Jᵀ A J and V J for the rotation J in the (p, q) plane.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
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
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Matrix logarithm of a symmetric PSD matrix through its eigendecomposition.
///
/// Eigenvalues at or below [`EIG_FLOOR`] contribute a logarithm of 0.
pub fn matrix_log_eig(s: &Matrix) -> Result<Matrix> {
    let eig = sym_eig(s)?;
    if let Some(&min) = eig.eigenvalues.last() {
        if min < -PSD_TOLERANCE {
            return Err(DsfError::NotPsd(min));
        }
    }
    Ok(eig.map_eigenvalues(|l| if l <= EIG_FLOOR { 0.0 } else { l.ln() }))
}

pub fn matrix_exp_eig(s: &Matrix) -> Result<Matrix> {
    Ok(sym_eig(s)?.map_eigenvalues(f64::exp))
}

/// Truncated Taylor series of `log(A)` for SPD `A`, with Frobenius normalization.
///
/// `A` is scaled by `s = ‖A‖_F / 2` so the series argument `A/s - I` has
/// spectral radius below one; `log(s)·I` is added back afterwards.
pub fn matrix_log_taylor(a: &Matrix, n_terms: usize) -> Result<Matrix> {
    check_square(a, "matrix_log_taylor")?;
    if n_terms == 0 {
        return Err(DsfError::Argument("n_terms must be at least 1".into()));
    }
    let n = a.rows();
    let s = a.frobenius_norm() / 2.0;
    if s <= 0.0 || !s.is_finite() {
        return Err(DsfError::InvalidInput("Taylor logarithm needs a nonzero finite matrix".into()));
    }
    let mut x = a.scale(1.0 / s);
    for i in 0..n {
        x[(i, i)] -= 1.0;
    }
    let mut power = x.clone();
    let mut sum = x.clone();
    for k in 2..=n_terms {
        power = power.matmul(&x)?;
        let coef = if k % 2 == 0 { -1.0 } else { 1.0 } / k as f64;
        for (acc, p) in sum.data_mut().iter_mut().zip(power.data()) {
            *acc += coef * p;
        }
    }
    let shift = s.ln();
    for i in 0..n {
        sum[(i, i)] += shift;
    }
    Ok(sum.symmetrized())
}

/// Diagonal and strict upper triangle, row by row: `(S11, S12, …, S1C, S22, …, SCC)`.
pub fn vec_upper(s: &Matrix) -> Vec<f64> {
    let n = s.rows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(s[(i, j)]);
        }
    }
    out
}

/// Inverse of [`vec_upper`].
pub fn unvec_upper(v: &[f64]) -> Result<Matrix> {
    // n(n+1)/2 = len
    let n = (((8 * v.len() + 1) as f64).sqrt() as usize - 1) / 2;
    if n * (n + 1) / 2 != v.len() {
        return Err(DsfError::Shape(format!("{} is not a triangular number", v.len())));
    }
    let mut m = Matrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    Ok(m)
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn spectral_norm_sym(s: &Matrix) -> Result<f64> {
    Ok(sym_eig(s)?.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, standard_normal};

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = rng_from_seed(seed);
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = standard_normal(&mut rng);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    fn random_spd(n: usize, seed: u64) -> Matrix {
        let r = random_symmetric(n, seed);
        let mut s = r.matmul(&r.transpose()).unwrap();
        for i in 0..n {
            s[(i, i)] += 0.5;
        }
        s
    }

    // LU with partial pivoting, independent of the eigensolver.
    fn lu_determinant(m: &Matrix) -> f64 {
        let n = m.rows();
        let mut a = m.clone();
        let mut det = 1.0;
        for col in 0..n {
            let pivot = (col..n).max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs())).unwrap();
            if a[(pivot, col)] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                for k in 0..n {
                    let tmp = a[(col, k)];
                    a[(col, k)] = a[(pivot, k)];
                    a[(pivot, k)] = tmp;
                }
                det = -det;
            }
            det *= a[(col, col)];
            for r in (col + 1)..n {
                let f = a[(r, col)] / a[(col, col)];
                for k in col..n {
                    a[(r, k)] -= f * a[(col, k)];
                }
            }
        }
        det
    }

    #[test]
    fn covariance_of_zero_mean_rows() {
        let x = Matrix::from_rows(&[vec![1.0, -1.0], vec![2.0, -2.0]]);
        let c = sample_covariance(&x).unwrap();
        assert_eq!(c, Matrix::from_rows(&[vec![2.0, 4.0], vec![4.0, 8.0]]));
    }

    #[test]
    fn covariance_of_constant_rows_is_zero() {
        let x = Matrix::from_rows(&[vec![3.0; 10], vec![-7.5; 10]]);
        assert_eq!(sample_covariance(&x).unwrap(), Matrix::zeros(2, 2));
    }

    #[test]
    fn covariance_needs_two_samples() {
        let x = Matrix::zeros(3, 1);
        assert!(matches!(sample_covariance(&x), Err(DsfError::Degenerate(_))));
    }

    #[test]
    fn random_covariance_is_psd() {
        let mut rng = rng_from_seed(5);
        let x = Matrix::from_vec(4, 256, (0..1024).map(|_| standard_normal(&mut rng)).collect()).unwrap();
        let c = sample_covariance(&x).unwrap();
        assert_eq!(c.asymmetry(), 0.0);
        let eig = sym_eig(&c).unwrap();
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-12));
    }

    // Direct transcription of the OAS intensity, kept separate from oas_shrink.
    fn oas_oracle(s: &Matrix, n: usize) -> Matrix {
        let c = s.rows();
        let cf = c as f64;
        let mut tr = 0.0;
        for i in 0..c {
            tr += s[(i, i)];
        }
        let mut tr2 = 0.0;
        for i in 0..c {
            for k in 0..c {
                tr2 += s[(i, k)] * s[(k, i)];
            }
        }
        let rho = (((1.0 - 2.0 / cf) * tr2 + tr * tr) / ((n as f64 + 1.0 - 2.0 / cf) * (tr2 - tr * tr / cf))).min(1.0);
        let mut out = Matrix::zeros(c, c);
        for i in 0..c {
            for j in 0..c {
                out[(i, j)] = (1.0 - rho) * s[(i, j)] + if i == j { rho * tr / cf } else { 0.0 };
            }
        }
        out
    }

    #[test]
    fn oas_matches_scalar_oracle() {
        let s = random_spd(6, 42);
        let got = oas_shrink(&s, 600).unwrap();
        let want = oas_oracle(&s, 600);
        assert!(got.matrix.sub(&want).unwrap().max_abs() < 1e-12);
        assert!(got.rho > 0.0 && got.rho < 1.0);
    }

    #[test]
    fn oas_leaves_scaled_identity_alone() {
        for n in [2, 10, 1000] {
            let s = Matrix::identity(4).scale(3.5);
            let out = oas_shrink(&s, n).unwrap();
            assert_eq!(out.rho, 1.0);
            assert!(out.matrix.sub(&s).unwrap().max_abs() < 1e-15);
        }
    }

    #[test]
    fn oas_zero_trace_is_flagged() {
        let out = oas_shrink(&Matrix::zeros(3, 3), 50).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.matrix, Matrix::identity(3).scale(OAS_EPSILON));
    }

    #[test]
    fn eig_of_simple_matrices() {
        let e = sym_eig(&Matrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
        let e = sym_eig(&Matrix::from_diag(&[2.0, -1.0, 5.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![5.0, 2.0, -1.0]);
    }

    #[test]
    fn eig_reconstructs_and_is_orthogonal() {
        for seed in 0..20 {
            let s = random_symmetric(6, seed);
            let e = sym_eig(&s).unwrap();
            let u = &e.eigenvectors;
            let utu = u.transpose().matmul(u).unwrap();
            assert!(utu.sub(&Matrix::identity(6)).unwrap().frobenius_norm() < 1e-10);
            let rel = e.reconstruct().sub(&s).unwrap().frobenius_norm() / s.frobenius_norm();
            assert!(rel < 1e-10, "seed {seed}: {rel}");
            let sum: f64 = e.eigenvalues.iter().sum();
            assert!((sum - s.trace()).abs() <= 1e-10 * s.trace().abs().max(1.0));
            let prod: f64 = e.eigenvalues.iter().product();
            let det = lu_determinant(&s);
            assert!((prod - det).abs() <= 1e-9 * det.abs().max(1.0), "{prod} vs {det}");
            assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn eig_rejects_bad_input() {
        let mut m = Matrix::identity(2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(sym_eig(&m), Err(DsfError::InvalidInput(_))));
        let mut m = Matrix::identity(2);
        m[(0, 1)] = 1.0;
        assert!(matches!(sym_eig(&m), Err(DsfError::InvalidInput(_))));
        assert!(sym_eig(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn eig_is_deterministic() {
        let s = random_symmetric(5, 9);
        let a = sym_eig(&s).unwrap();
        let b = sym_eig(&s).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.eigenvectors, b.eigenvectors);
    }

    #[test]
    fn log_and_exp_of_diagonals() {
        assert!(matrix_log_eig(&Matrix::identity(4)).unwrap().max_abs() < 1e-15);
        let e = std::f64::consts::E;
        let l = matrix_log_eig(&Matrix::from_diag(&[e, e * e])).unwrap();
        assert!(l.sub(&Matrix::from_diag(&[1.0, 2.0])).unwrap().max_abs() < 1e-14);
        assert_eq!(matrix_exp_eig(&Matrix::zeros(3, 3)).unwrap(), Matrix::identity(3));
        let x = matrix_exp_eig(&Matrix::from_diag(&[1.0, 2.0])).unwrap();
        assert!(x.sub(&Matrix::from_diag(&[e, e * e])).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn log_floors_zero_eigenvalues_and_rejects_negative() {
        let l = matrix_log_eig(&Matrix::from_diag(&[std::f64::consts::E, 0.0])).unwrap();
        assert!(l.sub(&Matrix::from_diag(&[1.0, 0.0])).unwrap().max_abs() < 1e-14);
        assert!(matches!(matrix_log_eig(&Matrix::from_diag(&[1.0, -1e-3])), Err(DsfError::NotPsd(_))));
    }

    #[test]
    fn log_exp_roundtrips() {
        for seed in 0..10 {
            let r = random_symmetric(6, 100 + seed);
            let back = matrix_log_eig(&matrix_exp_eig(&r).unwrap()).unwrap();
            let rel = back.sub(&r).unwrap().frobenius_norm() / r.frobenius_norm();
            assert!(rel < 1e-8, "{rel}");

            let s = random_spd(6, 200 + seed);
            let back = matrix_exp_eig(&matrix_log_eig(&s).unwrap()).unwrap();
            let rel = back.sub(&s).unwrap().frobenius_norm() / s.frobenius_norm();
            assert!(rel < 1e-8, "{rel}");
        }
    }

    #[test]
    fn taylor_identity() {
        // With C = 4 the normalization is s = 1 and the series argument is zero.
        for n in [1, 5, 20, 50] {
            let l = matrix_log_taylor(&Matrix::identity(4), n).unwrap();
            assert!(l.max_abs() < 1e-12, "n={n}: {}", l.max_abs());
        }
        // Otherwise each diagonal entry is the truncated scalar series of log(1/s) plus log(s).
        let s = 6f64.sqrt() / 2.0;
        let x = 1.0 / s - 1.0;
        for n in [1, 5, 20, 50] {
            let scalar: f64 = (1..=n).map(|k| if k % 2 == 1 { 1.0 } else { -1.0 } * x.powi(k as i32) / k as f64).sum::<f64>() + s.ln();
            let l = matrix_log_taylor(&Matrix::identity(6), n).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    let want = if i == j { scalar } else { 0.0 };
                    assert!((l[(i, j)] - want).abs() < 1e-14);
                }
            }
        }
        let l = matrix_log_taylor(&Matrix::identity(6), 50).unwrap();
        assert!(l.max_abs() < 1e-10);
    }

    #[test]
    fn taylor_refines_with_more_terms() {
        let a = Matrix::from_diag(&[1.2, 0.8]);
        let exact = matrix_log_eig(&a).unwrap();
        let err = |n| matrix_log_taylor(&a, n).unwrap().sub(&exact).unwrap().frobenius_norm();
        assert!(err(50) < err(5));
    }

    #[test]
    fn taylor_error_non_increasing() {
        for seed in 0..5 {
            let a = random_spd(6, 300 + seed);
            let exact = matrix_log_eig(&a).unwrap();
            let errs: Vec<f64> = [5, 10, 20, 50]
                .iter()
                .map(|&n| matrix_log_taylor(&a, n).unwrap().sub(&exact).unwrap().frobenius_norm())
                .collect();
            assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
        }
    }

    #[test]
    fn taylor_rejects_zero_terms() {
        assert!(matches!(matrix_log_taylor(&Matrix::identity(2), 0), Err(DsfError::Argument(_))));
    }

    #[test]
    fn vec_upper_layout() {
        let s = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 3.0]]);
        assert_eq!(vec_upper(&s), vec![1.0, 2.0, 3.0]);
        assert_eq!(vec_upper(&Matrix::identity(6)).len(), 21);
        let s = random_symmetric(5, 3);
        assert_eq!(unvec_upper(&vec_upper(&s)).unwrap(), s);
        assert!(unvec_upper(&[1.0, 2.0]).is_err());
    }
}
