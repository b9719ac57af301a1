//! Dense real linear solves used by the interior-point normal equations.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major square real matrix.
#[derive(Debug, Clone)]
pub struct RealSquare<T: Real> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> RealSquare<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] += v;
    }

    pub fn max_diag(&self) -> T {
        (0..self.n)
            .map(|i| self.get(i, i).abs())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    /// Solves `self · x = rhs` for symmetric positive-definite `self`,
    /// falling back to pivoted LU when Cholesky breaks down.
    pub fn solve_spd(&self, rhs: &[T]) -> Result<Vec<T>> {
        match self.cholesky() {
            Some(l) => Ok(cholesky_solve(&l, self.n, rhs)),
            None => self.solve_lu(rhs),
        }
    }

    fn cholesky(&self) -> Option<Vec<T>> {
        let n = self.n;
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= T::zero() || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Some(l)
    }

    /// Gaussian elimination with partial pivoting.
    pub fn solve_lu(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut b = rhs.to_vec();
        let scale = self.max_diag().max(T::min_positive_value());
        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].abs();
            for r in col + 1..n {
                let v = a[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best <= T::eps() * scale * T::lit(1e-4) {
                return Err(Error::numerical("singular linear system"));
            }
            if piv != col {
                for k in 0..n {
                    a.swap(col * n + k, piv * n + k);
                }
                b.swap(col, piv);
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / d;
                if f == T::zero() {
                    continue;
                }
                for k in col..n {
                    let v = a[col * n + k];
                    a[r * n + k] -= f * v;
                }
                let bc = b[col];
                b[r] -= f * bc;
            }
        }
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= a[i * n + k] * x[k];
            }
            x[i] = s / a[i * n + i];
        }
        Ok(x)
    }
}

fn cholesky_solve<T: Real>(l: &[T], n: usize, rhs: &[T]) -> Vec<T> {
    let mut y = rhs.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}
