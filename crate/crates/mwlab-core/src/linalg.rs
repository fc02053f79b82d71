//! Small dense complex matrix algebra (`m <= 8`).
//!
//! Everything here is deterministic: the Hermitian eigensolver is a cyclic
//! Jacobi iteration with a fixed row-major sweep order and no pivoting, so a
//! given input always produces bitwise-identical output.

use crate::scalar::Real;
use crate::Cplx;
use thiserror::Error;

/// Maximum matrix dimension.
pub const MAX_MATRIX_DIM: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix dimension {0} outside 1..={MAX_MATRIX_DIM}")]
    BadDimension(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not Hermitian (relative defect {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not positive definite (minimum eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("Jacobi eigensolver failed to converge")]
    NoConvergence,
}

/// Dense row-major `m x m` complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    m: usize,
    a: Vec<Cplx<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(m: usize) -> Self {
        Self { m, a: vec![Cplx::new(T::zero(), T::zero()); m * m] }
    }

    pub fn identity(m: usize) -> Self {
        let mut out = Self::zeros(m);
        for i in 0..m {
            out[(i, i)] = Cplx::new(T::one(), T::zero());
        }
        out
    }

    pub fn from_fn(m: usize, mut f: impl FnMut(usize, usize) -> Cplx<T>) -> Self {
        let mut out = Self::zeros(m);
        for i in 0..m {
            for j in 0..m {
                out[(i, j)] = f(i, j);
            }
        }
        out
    }

    /// Builds from real entries in row-major order.
    pub fn from_real_rows(rows: &[&[T]]) -> Self {
        let m = rows.len();
        Self::from_fn(m, |i, j| Cplx::new(rows[i][j], T::zero()))
    }

    /// Diagonal matrix from real entries.
    pub fn diag(d: &[T]) -> Self {
        let mut out = Self::zeros(d.len());
        for (i, &di) in d.iter().enumerate() {
            out[(i, i)] = Cplx::new(di, T::zero());
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn scale(&self, c: T) -> Self {
        Self { m: self.m, a: self.a.iter().map(|&z| z * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.m, other.m);
        Self {
            m: self.m,
            a: self.a.iter().zip(&other.a).map(|(&x, &y)| x + y).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.m, other.m);
        Self {
            m: self.m,
            a: self.a.iter().zip(&other.a).map(|(&x, &y)| x - y).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.m, other.m);
        let m = self.m;
        let mut out = Self::zeros(m);
        for i in 0..m {
            for k in 0..m {
                let aik = self[(i, k)];
                if aik.re.is_zero() && aik.im.is_zero() {
                    continue;
                }
                for j in 0..m {
                    out[(i, j)] = out[(i, j)] + aik * other[(k, j)];
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.m, |i, j| self[(j, i)].conj())
    }

    pub fn mul_vec(&self, v: &[Cplx<T>]) -> Vec<Cplx<T>> {
        assert_eq!(v.len(), self.m);
        (0..self.m)
            .map(|i| {
                let mut acc = Cplx::new(T::zero(), T::zero());
                for j in 0..self.m {
                    acc = acc + self[(i, j)] * v[j];
                }
                acc
            })
            .collect()
    }

    /// Hermitian quadratic form `v^* A v` (real part; exact for Hermitian A).
    pub fn quadratic_form(&self, v: &[Cplx<T>]) -> T {
        let av = self.mul_vec(v);
        let mut acc = T::zero();
        for (x, y) in v.iter().zip(&av) {
            acc = acc + (x.conj() * y).re;
        }
        acc
    }

    /// Rank-one Hermitian update `A + c * v v^*`.
    pub fn add_scaled_outer(&self, c: T, v: &[Cplx<T>]) -> Self {
        assert_eq!(v.len(), self.m);
        Self::from_fn(self.m, |i, j| self[(i, j)] + v[i] * v[j].conj() * c)
    }

    pub fn frobenius_norm(&self) -> T {
        self.a.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    /// Largest singular value, computed as `sqrt(lambda_max(A^* A))` with the
    /// deterministic Jacobi solver.
    pub fn op_norm(&self) -> T {
        if self.m == 1 {
            return self.a[0].norm();
        }
        let gram = self.adjoint().mul(self);
        let (_, mut lambda) = jacobi_hermitian(&gram).expect("Gram matrix is Hermitian");
        let top = lambda.pop().unwrap_or(T::zero());
        top.max(T::zero()).sqrt()
    }

    pub fn hermitian_defect(&self) -> T {
        self.sub(&self.adjoint()).frobenius_norm()
    }
}

impl<T> std::ops::Index<(usize, usize)> for CMatrix<T> {
    type Output = Cplx<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Cplx<T> {
        &self.a[i * self.m + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for CMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Cplx<T> {
        &mut self.a[i * self.m + j]
    }
}

/// Hermitian positive-definite matrix with its spectral factorization
/// `A = U diag(lambda) U^*` computed at construction.
///
/// Eigenvalues are sorted ascending; the eigenvector columns carry the same
/// permutation, so the factorization is deterministic.
#[derive(Debug, Clone)]
pub struct HermitianPd<T> {
    mat: CMatrix<T>,
    u: CMatrix<T>,
    lambda: Vec<T>,
}

impl<T: Real> HermitianPd<T> {
    /// Relative Hermitian-defect tolerance at construction.
    pub fn hermitian_tol() -> T {
        T::of(1e-10)
    }

    pub fn new(mat: CMatrix<T>) -> Result<Self, LinalgError> {
        if mat.dim() == 0 || mat.dim() > MAX_MATRIX_DIM {
            return Err(LinalgError::BadDimension(mat.dim()));
        }
        let scale = mat.frobenius_norm().max(T::min_positive_value());
        let defect = mat.hermitian_defect() / scale;
        if defect > Self::hermitian_tol() {
            return Err(LinalgError::NotHermitian(defect.as_f64()));
        }
        // Work on the symmetrized matrix so the factorization is exactly
        // Hermitian regardless of roundoff in the input.
        let sym = mat.add(&mat.adjoint()).scale(T::of(0.5));
        let (u, lambda) = jacobi_hermitian(&sym)?;
        if lambda[0] <= T::zero() {
            return Err(LinalgError::NotPositiveDefinite(lambda[0].as_f64()));
        }
        Ok(Self { mat: sym, u, lambda })
    }

    pub fn from_real_rows(rows: &[&[T]]) -> Result<Self, LinalgError> {
        Self::new(CMatrix::from_real_rows(rows))
    }

    /// Scalar 1x1 weight value.
    pub fn scalar(v: T) -> Result<Self, LinalgError> {
        Self::new(CMatrix::diag(&[v]))
    }

    /// Builds directly from a spectral factorization; used internally where
    /// positivity is known by construction.
    fn from_spectral(u: CMatrix<T>, lambda: Vec<T>) -> Self {
        let m = u.dim();
        let mut mat = CMatrix::zeros(m);
        for i in 0..m {
            for j in 0..m {
                let mut acc = Cplx::new(T::zero(), T::zero());
                for (t, &lt) in lambda.iter().enumerate() {
                    acc = acc + u[(i, t)] * u[(j, t)].conj() * lt;
                }
                mat[(i, j)] = acc;
            }
        }
        Self { mat, u, lambda }
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.mat
    }

    /// Eigenvalues ascending.
    pub fn eigenvalues(&self) -> &[T] {
        &self.lambda
    }

    /// Unitary eigenvector matrix (columns match `eigenvalues`).
    pub fn eigenvectors(&self) -> &CMatrix<T> {
        &self.u
    }

    /// Spectral power `A^alpha = U diag(lambda^alpha) U^*`.
    pub fn power(&self, alpha: T) -> Self {
        if alpha == T::one() {
            return self.clone();
        }
        let lambda = self.lambda.iter().map(|&l| l.powf(alpha)).collect();
        Self::from_spectral(self.u.clone(), lambda)
    }

    pub fn inverse(&self) -> Self {
        self.power(-T::one())
    }

    pub fn sqrt(&self) -> Self {
        self.power(T::of(0.5))
    }

    /// Operator norm = largest eigenvalue.
    pub fn op_norm(&self) -> T {
        self.lambda[self.lambda.len() - 1]
    }

    pub fn min_eigenvalue(&self) -> T {
        self.lambda[0]
    }

    pub fn scale(&self, c: T) -> Result<Self, LinalgError> {
        if c <= T::zero() {
            return Err(LinalgError::NotPositiveDefinite(c.as_f64()));
        }
        Ok(Self {
            mat: self.mat.scale(c),
            u: self.u.clone(),
            lambda: self.lambda.iter().map(|&l| l * c).collect(),
        })
    }
}

/// Cyclic Jacobi eigensolver for Hermitian matrices.
///
/// Sweeps the strict upper triangle in row-major order, annihilating each
/// off-diagonal entry with a complex rotation, until the off-diagonal
/// Frobenius mass falls below `8 eps * ||A||_F`. Returns the eigenvector
/// matrix and ascending eigenvalues.
pub fn jacobi_hermitian<T: Real>(
    a: &CMatrix<T>,
) -> Result<(CMatrix<T>, Vec<T>), LinalgError> {
    let m = a.dim();
    if m == 0 || m > MAX_MATRIX_DIM {
        return Err(LinalgError::BadDimension(m));
    }
    let mut w = a.clone();
    let mut u = CMatrix::identity(m);
    if m == 1 {
        return Ok((u, vec![w[(0, 0)].re]));
    }
    let norm = w.frobenius_norm();
    let tol = T::of(8.0) * T::epsilon() * norm.max(T::min_positive_value());
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut off = T::zero();
        for p in 0..m {
            for q in (p + 1)..m {
                off = off + w[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            return Ok(finish_jacobi(w, u));
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = w[(p, q)];
                let b = apq.norm();
                if b <= tol * T::of(1e-3) {
                    continue;
                }
                // Phase of the pivot and real rotation angle.
                let phase = apq / b;
                let app = w[(p, p)].re;
                let aqq = w[(q, q)].re;
                let tau = (aqq - app) / (T::of(2.0) * b);
                let t = if tau == T::zero() {
                    T::one()
                } else {
                    let s = if tau > T::zero() { T::one() } else { -T::one() };
                    s / (tau.abs() + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                let sp = phase * s; // s * e^{i phi}
                // Left multiply by G^*: rows p, q.
                for col in 0..m {
                    let xp = w[(p, col)];
                    let xq = w[(q, col)];
                    w[(p, col)] = xp * c - sp * xq;
                    w[(q, col)] = sp.conj() * xp + xq * c;
                }
                // Right multiply by G: columns p, q.
                for row in 0..m {
                    let xp = w[(row, p)];
                    let xq = w[(row, q)];
                    w[(row, p)] = xp * c - sp.conj() * xq;
                    w[(row, q)] = sp * xp + xq * c;
                }
                for row in 0..m {
                    let xp = u[(row, p)];
                    let xq = u[(row, q)];
                    u[(row, p)] = xp * c - sp.conj() * xq;
                    u[(row, q)] = sp * xp + xq * c;
                }
                // Roundoff cleanup: the pivot is zero by construction.
                w[(p, q)] = Cplx::new(T::zero(), T::zero());
                w[(q, p)] = Cplx::new(T::zero(), T::zero());
            }
        }
    }
    Err(LinalgError::NoConvergence)
}

fn finish_jacobi<T: Real>(w: CMatrix<T>, u: CMatrix<T>) -> (CMatrix<T>, Vec<T>) {
    let m = w.dim();
    let mut order: Vec<usize> = (0..m).collect();
    let diag: Vec<T> = (0..m).map(|i| w[(i, i)].re).collect();
    // Stable ascending sort; ties keep sweep order for determinism.
    order.sort_by(|&x, &y| diag[x].partial_cmp(&diag[y]).expect("finite eigenvalues"));
    let lambda: Vec<T> = order.iter().map(|&i| diag[i]).collect();
    let mut up = CMatrix::zeros(m);
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..m {
            up[(row, new_col)] = u[(row, old_col)];
        }
    }
    (up, lambda)
}

/// Euclidean norm of a complex vector.
pub fn vec_norm<T: Real>(v: &[Cplx<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}
