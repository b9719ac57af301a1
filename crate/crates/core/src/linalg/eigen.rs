//! Hermitian eigendecomposition by cyclic complex Jacobi rotations.
//!
//! Operators handled by the solvers never exceed a few dozen rows, where
//! Jacobi is accurate to a few ulps in every eigenvalue (including the tiny
//! ones that dominate matrix logarithms) and needs no tuning.

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::scalar::{re, Real, C};

const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen<T: Real> {
    pub values: Vec<T>,
    /// Unitary whose columns are the eigenvectors.
    pub vectors: ComplexMatrix<T>,
}

impl<T: Real> HermitianEigen<T> {
    /// Decomposes `a`, which must be square; only its Hermitian part is used.
    pub fn new(a: &ComplexMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::usage(format!(
                "eigendecomposition of non-square {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let mut m = a.hermitian_part();
        let mut v = ComplexMatrix::identity(n);
        let scale = m.frobenius_norm();
        if n <= 1 || scale.is_zero() {
            return Ok(Self::sorted(&m, v));
        }
        let tiny = T::min_positive_value().sqrt();
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            let off: T = off_diagonal_norm(&m);
            if off <= T::eps() * T::lit(0.25) * scale || off <= tiny {
                converged = true;
                break;
            }
            for p in 0..n - 1 {
                for q in p + 1..n {
                    rotate(&mut m, &mut v, p, q, tiny);
                }
            }
        }
        if !converged && off_diagonal_norm(&m) > T::lit(1e3) * T::eps() * scale {
            return Err(Error::numerical("Jacobi eigensolver did not converge"));
        }
        Ok(Self::sorted(&m, v))
    }

    fn sorted(m: &ComplexMatrix<T>, v: ComplexMatrix<T>) -> Self {
        let n = m.rows();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            m[(i, i)]
                .re
                .partial_cmp(&m[(j, j)].re)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let values = order.iter().map(|&i| m[(i, i)].re).collect();
        let vectors = ComplexMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
        Self { values, vectors }
    }

    pub fn min(&self) -> T {
        self.values.first().copied().unwrap_or_else(T::zero)
    }

    pub fn max(&self) -> T {
        self.values.last().copied().unwrap_or_else(T::zero)
    }

    /// Reassembles `V f(Λ) V†`.
    pub fn map(&self, f: impl Fn(T) -> T) -> ComplexMatrix<T> {
        let n = self.values.len();
        let fv: Vec<T> = self.values.iter().map(|&x| f(x)).collect();
        let mut out = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = C::zero();
                for (k, &w) in fv.iter().enumerate() {
                    if w.is_zero() {
                        continue;
                    }
                    acc += self.vectors[(i, k)] * self.vectors[(j, k)].conj() * w;
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc.conj();
            }
            out[(i, i)] = re(out[(i, i)].re);
        }
        out
    }
}

fn off_diagonal_norm<T: Real>(m: &ComplexMatrix<T>) -> T {
    let n = m.rows();
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// One Jacobi rotation annihilating entry (p, q).
fn rotate<T: Real>(
    m: &mut ComplexMatrix<T>,
    v: &mut ComplexMatrix<T>,
    p: usize,
    q: usize,
    tiny: T,
) {
    let apq = m[(p, q)];
    let mag = apq.norm();
    if mag <= tiny {
        return;
    }
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    // Phase making the (p, q) entry real and positive.
    let phase = apq / mag;
    let theta = (aqq - app) / (mag + mag);
    let t = if theta.is_infinite() {
        T::zero()
    } else {
        let sgn = if theta >= T::zero() {
            T::one()
        } else {
            -T::one()
        };
        sgn / (theta.abs() + (theta * theta + T::one()).sqrt())
    };
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;
    // U = diag(1, conj(phase)) * [[c, s], [-s, c]]
    let ph = phase.conj();
    let u_pp = re(c);
    let u_pq = re(s);
    let u_qp = ph * (-s);
    let u_qq = ph * c;
    let n = m.rows();
    // M <- M U (columns p, q)
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = mkp * u_pp + mkq * u_qp;
        m[(k, q)] = mkp * u_pq + mkq * u_qq;
    }
    // M <- U† M (rows p, q)
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = u_pp.conj() * mpk + u_qp.conj() * mqk;
        m[(q, k)] = u_pq.conj() * mpk + u_qq.conj() * mqk;
    }
    m[(p, q)] = C::zero();
    m[(q, p)] = C::zero();
    m[(p, p)] = re(m[(p, p)].re);
    m[(q, q)] = re(m[(q, q)].re);
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * u_pp + vkq * u_qp;
        v[(k, q)] = vkp * u_pq + vkq * u_qq;
    }
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue<T: Real>(a: &ComplexMatrix<T>) -> Result<T> {
    Ok(HermitianEigen::new(a)?.min())
}

/// Inverse square root `A^{-1/2}` of a positive-definite Hermitian matrix.
pub fn inv_sqrt<T: Real>(a: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let e = HermitianEigen::new(a)?;
    if e.min() <= T::zero() {
        return Err(Error::domain(
            "inverse square root of a non-positive-definite matrix",
        ));
    }
    Ok(e.map(|x| T::one() / x.sqrt()))
}

/// Inverse of a positive-definite Hermitian matrix.
pub fn inv_hpd<T: Real>(a: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let e = HermitianEigen::new(a)?;
    if e.min() <= T::zero() {
        return Err(Error::domain("inverse of a non-positive-definite matrix"));
    }
    Ok(e.map(|x| T::one() / x))
}

#[allow(dead_code)]
pub(crate) fn is_unitary<T: Real>(u: &ComplexMatrix<T>, tol: T) -> bool {
    let p = u.adjoint_mul(u);
    p.max_abs_diff(&ComplexMatrix::identity(u.cols())) <= tol
}
