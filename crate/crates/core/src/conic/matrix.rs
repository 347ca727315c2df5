//! Dense matrices and the symmetric eigen utilities used by the cone programs.

use std::ops::{Index, IndexMut};

use crate::error::{invalid, Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * c);
        for r in rows {
            if r.len() != c {
                return Err(Error::DimensionMismatch { expected: c, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: n, cols: c, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ x`.
    pub fn tmatvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * xi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(orow) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    /// Largest |a_ij − a_ji|.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn sym_tol<T: Real>(scale: T) -> T {
    let base = lit::<T>(1e-12).max(T::epsilon() * lit(64.0));
    base * scale.max(T::one())
}

/// Square symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    inner: Matrix<T>,
}

/// Eigen-decomposition `M = V diag(values) Vᵀ`, eigenvectors stored as columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Real> SymMatrix<T> {
    /// Wraps a square matrix, checking symmetry within `1e-12` (scaled by the entry magnitude).
    pub fn new(m: Matrix<T>) -> Result<Self> {
        if !m.is_square() {
            return invalid(format!("matrix is {}x{}, expected square", m.rows(), m.cols()));
        }
        let asym = m.asymmetry();
        if asym > sym_tol(m.max_abs()) {
            return invalid(format!("matrix not symmetric (max asymmetry {:e})", to_f64(asym)));
        }
        Ok(Self { inner: m })
    }

    /// Symmetrizes `(M + Mᵀ)/2` without checking.
    pub fn symmetrized(m: &Matrix<T>) -> Result<Self> {
        if !m.is_square() {
            return invalid("matrix must be square");
        }
        let half = lit::<T>(0.5);
        Ok(Self { inner: Matrix::from_fn(m.rows(), m.cols(), |i, j| (m[(i, j)] + m[(j, i)]) * half) })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn identity(n: usize) -> Self {
        Self { inner: Matrix::identity(n) }
    }

    pub fn diag(values: &[T]) -> Self {
        let n = values.len();
        Self { inner: Matrix::from_fn(n, n, |i, j| if i == j { values[i] } else { T::zero() }) }
    }

    pub fn dim(&self) -> usize {
        self.inner.rows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.inner
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.inner[(i, j)]
    }

    /// `M + ridge·I`.
    pub fn add_ridge(&self, ridge: T) -> Self {
        let mut m = self.inner.clone();
        for i in 0..self.dim() {
            m[(i, i)] = m[(i, i)] + ridge;
        }
        Self { inner: m }
    }

    /// `xᵀ M x`.
    pub fn quad_form(&self, x: &[T]) -> T {
        dot(x, &self.inner.matvec(x))
    }

    /// Cyclic Jacobi eigen-decomposition, converged to off-diagonal norm ≤ 1e-12·‖M‖_F.
    pub fn eigh(&self) -> SymEigen<T> {
        jacobi(&self.inner)
    }

    /// Smallest eigenvalue.
    pub fn min_eig(&self) -> T {
        self.eigh().values.into_iter().fold(T::infinity(), T::min)
    }

    /// Shifts the spectrum up by `−κ_min` when the matrix is indefinite.
    pub fn spectral_shift(&self) -> Self {
        let kmin = self.min_eig();
        if kmin < T::zero() {
            self.add_ridge(-kmin)
        } else {
            self.clone()
        }
    }

    /// Symmetric square root `A` with `A·A = M`. Eigenvalues in `[−clip, 0)` are clipped to zero.
    pub fn psd_sqrt(&self, clip: T) -> Result<Self> {
        let eig = self.eigh();
        let kmin = eig.values.iter().copied().fold(T::infinity(), T::min);
        if kmin < -clip {
            return Err(Error::NotPsd { min_eig: to_f64(kmin), clip: to_f64(clip) });
        }
        let roots: Vec<T> = eig.values.iter().map(|&v| v.max(T::zero()).sqrt()).collect();
        Ok(Self { inner: reconstruct(&eig.vectors, &roots) })
    }
}

/// `V diag(d) Vᵀ`, symmetrized.
fn reconstruct<T: Real>(v: &Matrix<T>, d: &[T]) -> Matrix<T> {
    let n = v.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = T::zero();
            for (k, &dk) in d.iter().enumerate() {
                acc = acc + v[(i, k)] * dk * v[(j, k)];
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    out
}

fn jacobi<T: Real>(m: &Matrix<T>) -> SymEigen<T> {
    let n = m.rows();
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    let total = a.frobenius_norm();
    let tol = lit::<T>(1e-12).max(T::epsilon() * lit(8.0)) * total;
    let two = lit::<T>(2.0);

    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off = off + a[(i, j)] * a[(i, j)];
                }
            }
        }
        if off.sqrt() <= tol || total == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
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
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    SymEigen { values: (0..n).map(|i| a[(i, i)]).collect(), vectors: v }
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn factor(mut a: Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return invalid("LU needs a square matrix");
        }
        let n = a.rows();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (piv, pval) = (k..n)
                .map(|i| (i, a[(i, k)].abs()))
                .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pval <= T::zero() {
                return Err(Error::Solver("singular linear system".into()));
            }
            if piv != k {
                for j in 0..n {
                    let tmp = a[(k, j)];
                    a[(k, j)] = a[(piv, j)];
                    a[(piv, j)] = tmp;
                }
                perm.swap(k, piv);
            }
            let d = a[(k, k)];
            for i in (k + 1)..n {
                let f = a[(i, k)] / d;
                if f == T::zero() {
                    continue;
                }
                a[(i, k)] = f;
                for j in (k + 1)..n {
                    a[(i, j)] = a[(i, j)] - f * a[(k, j)];
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows();
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] = x[i] - s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s = dot(&row[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }
}
