//! Small dense linear algebra used throughout the crate.
//!
//! Matrices here are tiny (a handful of states for circuits, a few dozen
//! for meshed networks), so everything is row-major `Vec<f64>` storage with
//! straightforward O(n³) algorithms: Cholesky for definiteness tests, cyclic
//! Jacobi rotations for symmetric spectra, LU with partial pivoting for
//! linear solves, and a real Schur decomposition for the spectral abscissa.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of cyclic Jacobi sweeps before giving up.
pub const MAX_JACOBI_SWEEPS: usize = 100;

/// Relative tolerance for accepting a matrix as symmetric.
const SYMMETRY_TOL: f64 = 1e-12;

/// Dense row-major real matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Input(format!("matrix data has {} entries, expected {}x{}", data.len(), rows, cols)));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite matrix entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from a slice of rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|row| row.len() != c) {
            return Err(Error::Input(format!(
                "ragged matrix: row {} has {} entries, expected {}",
                bad,
                rows[bad].len(),
                c
            )));
        }
        Self::new(r, c, rows.iter().flatten().copied().collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest off-diagonal magnitude; zero for diagonal matrices.
    pub fn max_off_diagonal(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                if i != j {
                    m = m.max(self[(i, j)].abs());
                }
            }
        }
        m
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Largest entry of `A + Aᵀ` in magnitude.
    pub fn skew_defect(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                m = m.max((self[(i, j)] + self[(j, i)]).abs());
            }
        }
        m
    }

    /// Block-diagonal assembly `diag(a, b)`.
    pub fn block_diagonal(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows + b.rows, a.cols + b.cols);
        for i in 0..a.rows {
            for j in 0..a.cols {
                out[(i, j)] = a[(i, j)];
            }
        }
        for i in 0..b.rows {
            for j in 0..b.cols {
                out[(a.rows + i, a.cols + j)] = b[(i, j)];
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

/// Square symmetric matrix.
///
/// Construction accepts rounding-level asymmetry (relative `1e-12`) and stores
/// the symmetric part; anything larger is rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() || m.rows() == 0 {
            return Err(Error::Input(format!(
                "symmetric matrix must be square and nonempty, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        let n = m.rows();
        let mut sym = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (sym[(i, j)], sym[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Input(format!(
                        "matrix is not symmetric: entry ({i}, {j}) = {a} but ({j}, {i}) = {b}"
                    )));
                }
                let avg = 0.5 * (a + b);
                sym[(i, j)] = avg;
                sym[(j, i)] = avg;
            }
        }
        Ok(Self(sym))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(Matrix::new(diag.len(), diag.len(), Matrix::from_diagonal(diag).data)?)
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n))
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        self.0.max_off_diagonal() <= tol
    }

    /// Adds a diagonal matrix given by its entries.
    pub fn add_diagonal(&self, diag: &[f64]) -> SymMatrix {
        let mut m = self.0.clone();
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] += d;
        }
        SymMatrix(m)
    }

    /// Pivot floor used by the definiteness test: `1e-12 · max(1, largest diagonal entry)`.
    pub fn pd_tolerance(&self) -> f64 {
        let dmax = self.0.diagonal().into_iter().fold(f64::NEG_INFINITY, f64::max);
        1e-12 * dmax.max(1.0)
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

impl TryFrom<Matrix> for SymMatrix {
    type Error = Error;

    fn try_from(m: Matrix) -> Result<Self> {
        SymMatrix::new(m)
    }
}

impl From<SymMatrix> for Matrix {
    fn from(s: SymMatrix) -> Matrix {
        s.0
    }
}

/// Diagonal matrix stored by its entries.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagMatrix(pub Vec<f64>);

impl DiagMatrix {
    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_diagonal(&self.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.0.iter().zip(x).map(|(d, v)| d * v).collect()
    }
}

/// Outcome of a Cholesky definiteness test.
#[derive(Clone, Debug, PartialEq)]
pub struct PdVerdict {
    pub positive_definite: bool,
    /// Lower-triangular factor, present only when the matrix is positive definite.
    pub factor: Option<Matrix>,
}

/// Cholesky factorization used as a strict positive-definiteness test.
///
/// Every pivot must exceed [`SymMatrix::pd_tolerance`].
pub fn cholesky_pd(a: &SymMatrix) -> Result<PdVerdict> {
    let m = a.matrix();
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite entry in definiteness test".into()));
    }
    let n = a.n();
    let tol = a.pd_tolerance();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let pivot = m[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if !(pivot > tol) {
            return Ok(PdVerdict { positive_definite: false, factor: None });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let s = m[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = s / d;
        }
    }
    Ok(PdVerdict { positive_definite: true, factor: Some(l) })
}

pub fn is_positive_definite(a: &SymMatrix) -> bool {
    cholesky_pd(a).map(|v| v.positive_definite).unwrap_or(false)
}

/// All eigenvalues of a symmetric matrix in ascending order, by cyclic Jacobi rotations.
pub fn sym_eigenvalues(a: &SymMatrix) -> Result<Vec<f64>> {
    let n = a.n();
    let mut w = a.matrix().clone();
    let off = |w: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += w[(i, j)] * w[(i, j)];
            }
        }
        s
    };
    let total: f64 = w.as_slice().iter().map(|v| v * v).sum();
    let mut converged = off(&w) <= f64::EPSILON * f64::EPSILON * total;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_JACOBI_SWEEPS {
            return Err(Error::EigenNoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (w[(p, p)], w[(q, q)]);
                // rotation angle annihilating w[p][q]
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (wkp, wkq) = (w[(k, p)], w[(k, q)]);
                    w[(k, p)] = c * wkp - s * wkq;
                    w[(k, q)] = s * wkp + c * wkq;
                }
                for k in 0..n {
                    let (wpk, wqk) = (w[(p, k)], w[(q, k)]);
                    w[(p, k)] = c * wpk - s * wqk;
                    w[(q, k)] = s * wpk + c * wqk;
                }
                w[(p, q)] = 0.0;
                w[(q, p)] = 0.0;
            }
        }
        converged = off(&w) <= f64::EPSILON * f64::EPSILON * total;
    }
    let mut eig = w.diagonal();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_extremes(a: &SymMatrix) -> Result<(f64, f64)> {
    let eig = sym_eigenvalues(a)?;
    Ok((eig[0], eig[eig.len() - 1]))
}

/// LU factorization with partial pivoting, stored compactly.
struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

fn lu_factor(a: &Matrix) -> Result<Lu> {
    if !a.is_square() {
        return Err(Error::Input(format!("linear solve needs a square matrix, got {}x{}", a.rows(), a.cols())));
    }
    let n = a.rows();
    let threshold = 1e-14 * a.max_abs().max(f64::MIN_POSITIVE);
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (piv_row, piv_val) =
            (k..n).map(|i| (i, lu[(i, k)].abs())).fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_val <= threshold {
            return Err(Error::Singular { column: k, pivot: piv_val });
        }
        if piv_row != k {
            perm.swap(k, piv_row);
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(piv_row, j)];
                lu[(piv_row, j)] = tmp;
            }
        }
        let pivot = lu[(k, k)];
        for i in (k + 1)..n {
            let f = lu[(i, k)] / pivot;
            lu[(i, k)] = f;
            for j in (k + 1)..n {
                lu[(i, j)] -= f * lu[(k, j)];
            }
        }
    }
    Ok(Lu { lu, perm })
}

impl Lu {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.lu[(i, k)] * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }
}

/// Solves `A x = b` by LU with partial pivoting and one step of iterative refinement.
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::Input(format!("right-hand side has length {}, expected {}", b.len(), a.rows())));
    }
    let lu = lu_factor(a)?;
    let mut x = lu.solve(b);
    let r: Vec<f64> = a.mul_vec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
    let dx = lu.solve(&r);
    for (xi, d) in x.iter_mut().zip(dx) {
        *xi += d;
    }
    Ok(x)
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    let lu = lu_factor(a)?;
    let n = a.rows();
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = lu.solve(&e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Ok(inv)
}

/// Eigenvalues of a general real matrix as `(re, im)` pairs.
///
/// Sizes 1 and 2 are solved in closed form; larger matrices go through a real
/// Schur decomposition. Intended for the small dense Jacobians met here
/// (accuracy checked up to n = 8).
pub fn eigenvalues(a: &Matrix) -> Result<Vec<(f64, f64)>> {
    if !a.is_square() || a.rows() == 0 {
        return Err(Error::Input("eigenvalues need a nonempty square matrix".into()));
    }
    match a.rows() {
        1 => Ok(vec![(a[(0, 0)], 0.0)]),
        2 => {
            let tr = a[(0, 0)] + a[(1, 1)];
            let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
            let half = 0.5 * tr;
            // discriminant written to avoid cancellation in tr² − 4det
            let d = 0.25 * (a[(0, 0)] - a[(1, 1)]).powi(2) + a[(0, 1)] * a[(1, 0)];
            if d >= 0.0 {
                let s = d.sqrt();
                let big = if half >= 0.0 { half + s } else { half - s };
                let small = if big != 0.0 { det / big } else { half - s };
                Ok(vec![(big, 0.0), (small, 0.0)])
            } else {
                let s = (-d).sqrt();
                Ok(vec![(half, s), (half, -s)])
            }
        }
        n => {
            let m = nalgebra::DMatrix::from_row_slice(n, n, a.as_slice());
            let schur = nalgebra::linalg::Schur::try_new(m, f64::EPSILON, 10_000)
                .ok_or_else(|| Error::Numeric("real Schur iteration did not converge".into()))?;
            Ok(schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect())
        }
    }
}

/// Maximum real part over the eigenvalues of `a`.
pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?.into_iter().map(|(re, _)| re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(rows: &[Vec<f64>]) -> SymMatrix {
        SymMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn cholesky_identity_and_indefinite() {
        assert!(cholesky_pd(&SymMatrix::identity(2)).unwrap().positive_definite);
        let v = cholesky_pd(&SymMatrix::from_diagonal(&[1.0, -1.0]).unwrap()).unwrap();
        assert!(!v.positive_definite);
        assert!(v.factor.is_none());
    }

    #[test]
    fn cholesky_factor_reproduces_matrix() {
        let a = sym(&[vec![4.0, 2.0, 0.4], vec![2.0, 3.0, 0.5], vec![0.4, 0.5, 2.0]]);
        let l = cholesky_pd(&a).unwrap().factor.unwrap();
        let llt = l.matmul(&l.transpose());
        assert!(llt.sub(a.matrix()).max_abs() < 1e-14);
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(Matrix::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn asymmetric_rejected() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.5, 1.0]]).unwrap();
        assert!(SymMatrix::new(m).is_err());
    }

    #[test]
    fn eig_extremes_small_cases() {
        let (lo, hi) = sym_eig_extremes(&SymMatrix::from_diagonal(&[2.0, 5.0]).unwrap()).unwrap();
        assert_eq!((lo, hi), (2.0, 5.0));
        let (lo, hi) = sym_eig_extremes(&sym(&[vec![2.0, 1.0], vec![1.0, 2.0]])).unwrap();
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 3.0).abs() < 1e-14);
    }

    #[test]
    fn solve_trivial_systems() {
        let x = solve_linear(&Matrix::identity(3), &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 3.0]);
        let x = solve_linear(&Matrix::from_diagonal(&[2.0, 4.0]), &[2.0, 8.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn singular_matrix_reported() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(solve_linear(&a, &[1.0, 1.0]), Err(Error::Singular { .. })));
    }

    #[test]
    fn inverse_roundtrip() {
        let a = Matrix::from_rows(&[vec![3.0, 1.0, 0.0], vec![1.0, 4.0, 1.0], vec![0.0, 2.0, 5.0]]).unwrap();
        let inv = inverse(&a).unwrap();
        assert!(a.matmul(&inv).sub(&Matrix::identity(3)).max_abs() < 1e-14);
    }

    #[test]
    fn spectral_abscissa_basic() {
        assert_eq!(spectral_abscissa(&Matrix::from_diagonal(&[-1.0, -2.0])).unwrap(), -1.0);
        let rot = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(spectral_abscissa(&rot).unwrap(), 0.0);
        let a = Matrix::from_rows(&[vec![-1.0, 5.0, 0.0], vec![-5.0, -1.0, 0.0], vec![0.0, 0.0, -3.0]]).unwrap();
        assert!((spectral_abscissa(&a).unwrap() + 1.0).abs() < 1e-12);
    }
}
