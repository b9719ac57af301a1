//! Tensor products, partial traces, perturbed matrix logarithms and entropies.

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::linalg::{kron2, ComplexMatrix, HermitianEigen};
use crate::scalar::{re, Real, C};

/// Entrywise tolerance for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Asymmetry below this is silently symmetrized at construction.
pub const SYMMETRIZE_TOL: f64 = 1e-10;
/// Eigenvalue floor for density operators.
pub const PSD_TOL: f64 = 1e-9;
/// Eigenvalues below this are rejected by [`matrix_log_perturbed`].
pub const LOG_DOMAIN_TOL: f64 = 1e-6;

/// Kronecker product of an ordered list of factors.
pub fn kron_product<T: Real>(factors: &[ComplexMatrix<T>]) -> Result<ComplexMatrix<T>> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| Error::usage("kron_product of an empty list"))?;
    Ok(rest.iter().fold(first.clone(), |acc, f| kron2(&acc, f)))
}

/// Traces out every subsystem not listed in `keep`.
///
/// `keep` is interpreted as a set; the kept subsystems appear in their
/// original order.
pub fn partial_trace<T: Real>(
    op: &ComplexMatrix<T>,
    dims: &[usize],
    keep: &[usize],
) -> Result<ComplexMatrix<T>> {
    let total: usize = dims.iter().product();
    if !op.is_square() || op.rows() != total {
        return Err(Error::usage(format!(
            "partial_trace: operator is {}x{}, subsystem dims {:?} give {}",
            op.rows(),
            op.cols(),
            dims,
            total
        )));
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::usage(format!(
            "partial_trace: subsystem {bad} out of range"
        )));
    }
    let kept: Vec<bool> = (0..dims.len()).map(|i| keep.contains(&i)).collect();
    let kdims: Vec<usize> = dims
        .iter()
        .zip(&kept)
        .filter(|(_, &k)| k)
        .map(|(&d, _)| d)
        .collect();
    let tdims: Vec<usize> = dims
        .iter()
        .zip(&kept)
        .filter(|(_, &k)| !k)
        .map(|(&d, _)| d)
        .collect();
    let kd: usize = kdims.iter().product();
    let td: usize = tdims.iter().product();

    // Compose a full multi-index from kept and traced digits.
    let full_index = |kidx: usize, tidx: usize| -> usize {
        let mut kdig = digits(kidx, &kdims);
        let mut tdig = digits(tidx, &tdims);
        kdig.reverse();
        tdig.reverse();
        let mut idx = 0;
        for (s, &d) in dims.iter().enumerate() {
            let digit = if kept[s] {
                kdig.pop().unwrap_or(0)
            } else {
                tdig.pop().unwrap_or(0)
            };
            idx = idx * d + digit;
        }
        idx
    };

    let mut out = ComplexMatrix::zeros(kd, kd);
    for r in 0..kd {
        for c in 0..kd {
            let mut acc = C::zero();
            for t in 0..td {
                acc += op[(full_index(r, t), full_index(c, t))];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

fn digits(mut idx: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for (slot, &d) in out.iter_mut().zip(dims).rev() {
        *slot = idx % d;
        idx /= d;
    }
    out
}

/// Hermitian operator; asymmetric input is symmetrized when the defect is
/// below [`SYMMETRIZE_TOL`] and rejected otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator<T: Real> {
    matrix: ComplexMatrix<T>,
}

impl<T: Real> HermitianOperator<T> {
    pub fn new(matrix: ComplexMatrix<T>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::usage("Hermitian operator must be square"));
        }
        let defect = matrix.hermiticity_defect();
        if defect > T::lit(SYMMETRIZE_TOL) {
            return Err(Error::domain(format!(
                "matrix is not Hermitian (max |A - A†| = {defect:e})"
            )));
        }
        let matrix = if defect > T::zero() {
            matrix.hermitian_part()
        } else {
            matrix
        };
        Ok(Self { matrix })
    }

    /// Wraps a matrix the caller guarantees to be exactly Hermitian.
    pub(crate) fn from_hermitian_unchecked(matrix: ComplexMatrix<T>) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix<T> {
        self.matrix
    }

    pub fn eigen(&self) -> Result<HermitianEigen<T>> {
        HermitianEigen::new(&self.matrix)
    }

    /// Real expectation `Tr(self · other)`.
    pub fn expectation(&self, other: &ComplexMatrix<T>) -> T {
        self.matrix.re_trace_product(other)
    }
}

/// Positive-semidefinite operator with a declared trace normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator<T: Real> {
    op: HermitianOperator<T>,
    normalization: T,
}

impl<T: Real> DensityOperator<T> {
    /// Unit-trace density operator.
    pub fn new(matrix: ComplexMatrix<T>) -> Result<Self> {
        Self::with_normalization(matrix, T::one())
    }

    pub fn with_normalization(matrix: ComplexMatrix<T>, normalization: T) -> Result<Self> {
        let op = HermitianOperator::new(matrix)?;
        let tol = T::lit(PSD_TOL);
        let tr = op.matrix().trace().re;
        if (tr - normalization).abs() > tol {
            return Err(Error::domain(format!(
                "trace {tr} differs from normalization {normalization}"
            )));
        }
        let lmin = op.eigen()?.min();
        if lmin < -tol {
            return Err(Error::domain(format!(
                "density operator has eigenvalue {lmin:e}"
            )));
        }
        Ok(Self { op, normalization })
    }

    /// Maximally mixed state of dimension `dim`.
    pub fn maximally_mixed(dim: usize) -> Self {
        let m = ComplexMatrix::identity(dim).scale(T::one() / T::from_usize_lossy(dim));
        Self {
            op: HermitianOperator::from_hermitian_unchecked(m),
            normalization: T::one(),
        }
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn normalization(&self) -> T {
        self.normalization
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        self.op.matrix()
    }

    pub fn as_hermitian(&self) -> &HermitianOperator<T> {
        &self.op
    }
}

/// `log₂((1-ε)·A + ε·I/d)` by eigendecomposition.
pub fn matrix_log_perturbed<T: Real>(
    op: &HermitianOperator<T>,
    epsilon: T,
) -> Result<HermitianOperator<T>> {
    if !(epsilon >= T::zero() && epsilon < T::one()) {
        return Err(Error::usage(format!("epsilon {epsilon} outside [0, 1)")));
    }
    let e = op.eigen()?;
    let m = log2_from_eigen(&e, epsilon)?;
    Ok(HermitianOperator::from_hermitian_unchecked(m))
}

pub(crate) fn log2_from_eigen<T: Real>(
    e: &HermitianEigen<T>,
    epsilon: T,
) -> Result<ComplexMatrix<T>> {
    let d = T::from_usize_lossy(e.values.len());
    if e.min() < -T::lit(LOG_DOMAIN_TOL) {
        return Err(Error::domain(format!(
            "matrix logarithm of operator with eigenvalue {:e}",
            e.min()
        )));
    }
    let shift = epsilon / d;
    Ok(e.map(|x| {
        let y = (T::one() - epsilon) * x.max(T::zero()) + shift;
        if y > T::zero() {
            y.log2()
        } else {
            T::neg_infinity()
        }
    }))
}

/// `Tr(X log₂ X) - Tr(X log₂ Y)` with both arguments ε-perturbed.
pub fn relative_entropy<T: Real>(
    x: &HermitianOperator<T>,
    y: &HermitianOperator<T>,
    epsilon: T,
) -> Result<T> {
    if x.dim() != y.dim() {
        return Err(Error::usage("relative_entropy: dimension mismatch"));
    }
    let xe = perturb(x.matrix(), epsilon);
    let lx = matrix_log_perturbed(x, epsilon)?;
    let ly = matrix_log_perturbed(y, epsilon)?;
    Ok(xe.re_trace_product(lx.matrix()) - xe.re_trace_product(ly.matrix()))
}

/// `(1-ε)·A + ε·I/d`.
pub(crate) fn perturb<T: Real>(a: &ComplexMatrix<T>, epsilon: T) -> ComplexMatrix<T> {
    let d = a.rows();
    let mut out = a.scale(T::one() - epsilon);
    let shift = epsilon / T::from_usize_lossy(d);
    for i in 0..d {
        out[(i, i)] += re(shift);
    }
    out
}

/// Binary entropy `h₂(x)` in bits.
pub fn binary_entropy<T: Real>(x: T) -> Result<T> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::domain(format!(
            "binary entropy argument {x} outside [0, 1]"
        )));
    }
    Ok(h2_unchecked(x))
}

/// `h₂` with the argument clamped into [0, 1].
pub fn h2_clamped<T: Real>(x: T) -> T {
    h2_unchecked(x.max(T::zero()).min(T::one()))
}

fn h2_unchecked<T: Real>(x: T) -> T {
    let term = |p: T| {
        if p > T::zero() {
            -p * p.log2()
        } else {
            T::zero()
        }
    };
    term(x) + term(T::one() - x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag(v: &[f64]) -> ComplexMatrix<f64> {
        ComplexMatrix::from_diag(v)
    }

    fn herm(v: &[f64]) -> HermitianOperator<f64> {
        HermitianOperator::new(diag(v)).unwrap()
    }

    #[test]
    fn kron_examples() {
        let i6 = kron_product(&[
            ComplexMatrix::<f64>::identity(2),
            ComplexMatrix::identity(3),
        ])
        .unwrap();
        assert_eq!(i6, ComplexMatrix::identity(6));
        let p = kron_product(&[diag(&[1.0, 0.0]), diag(&[0.0, 1.0])]).unwrap();
        assert_eq!(p, diag(&[0.0, 1.0, 0.0, 0.0]));
        let x = ComplexMatrix::<f64>::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let xx = kron_product(&[x.clone(), x]).unwrap();
        let out = &xx * &ComplexMatrix::basis_ket(4, 0);
        assert_eq!(out, ComplexMatrix::basis_ket(4, 3));
        assert!(kron_product::<f64>(&[]).is_err());
    }

    #[test]
    fn partial_trace_examples() {
        let a = ComplexMatrix::<f64>::from_real(2, 2, &[0.7, 0.1, 0.1, 0.3]).unwrap();
        let b = diag(&[0.2, 0.5, 0.3]);
        let ab = kron2(&a, &b);
        assert!(partial_trace(&ab, &[2, 3], &[0]).unwrap().max_abs_diff(&a) < 1e-15);
        assert!(partial_trace(&ab, &[2, 3], &[1]).unwrap().max_abs_diff(&b) < 1e-15);

        let s = 0.5f64.sqrt();
        let phi = ComplexMatrix::column(&[re(s), re(0.0), re(0.0), re(s)]);
        let bell = ComplexMatrix::outer(&phi, &phi);
        let red = partial_trace(&bell, &[2, 2], &[0]).unwrap();
        assert!(red.max_abs_diff(&diag(&[0.5, 0.5])) < 1e-15);

        let all = partial_trace(&ab, &[2, 3], &[]).unwrap();
        assert_eq!(all.rows(), 1);
        assert_relative_eq!(all[(0, 0)].re, ab.trace().re, epsilon = 1e-15);
        assert!(partial_trace(&ab, &[2, 2], &[0]).is_err());
    }

    #[test]
    fn partial_trace_middle_subsystem() {
        let a = diag(&[1.0, 2.0]);
        let b = diag(&[0.5, 0.5]);
        let c = diag(&[3.0, 4.0, 5.0]);
        let abc = kron_product(&[a.clone(), b, c.clone()]).unwrap();
        let ac = partial_trace(&abc, &[2, 2, 3], &[0, 2]).unwrap();
        assert!(ac.max_abs_diff(&kron2(&a, &c)) < 1e-14);
    }

    #[test]
    fn log_examples() {
        let eps = 1e-3;
        let l = matrix_log_perturbed(&herm(&[1.0, 1.0, 1.0]), eps).unwrap();
        let expect = (1.0 - eps + eps / 3.0f64).log2();
        assert!(l.matrix().max_abs_diff(&diag(&[expect; 3])) < 1e-14);

        let l = matrix_log_perturbed(&herm(&[4.0, 1.0]), 0.0).unwrap();
        assert!(l.matrix().max_abs_diff(&diag(&[2.0, 0.0])) < 1e-14);

        let eps = 1e-10;
        let l = matrix_log_perturbed(&herm(&[1.0, 0.0]), eps).unwrap();
        let want = diag(&[(1.0 - eps + eps / 2.0f64).log2(), (eps / 2.0f64).log2()]);
        assert!(l.matrix().max_abs_diff(&want) < 1e-12);

        assert!(matrix_log_perturbed(&herm(&[1.0, -1e-3]), 1e-12).is_err());
    }

    #[test]
    fn relative_entropy_examples() {
        let rho = herm(&[0.3, 0.7]);
        assert!(relative_entropy(&rho, &rho, 1e-12).unwrap().abs() < 1e-12);
        let d = relative_entropy(&herm(&[1.0, 0.0]), &herm(&[0.5, 0.5]), 1e-12).unwrap();
        assert_relative_eq!(d, 1.0, epsilon = 1e-9);
        let d = relative_entropy(&herm(&[0.5, 0.5]), &herm(&[0.75, 0.25]), 1e-12).unwrap();
        let want = 0.5 * (0.5f64 / 0.75).log2() + 0.5 * (0.5f64 / 0.25).log2();
        assert_relative_eq!(d, want, epsilon = 1e-9);
        assert_relative_eq!(d, 0.2075, epsilon = 1e-4);
    }

    #[test]
    fn binary_entropy_examples() {
        assert_eq!(binary_entropy(0.0f64).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0f64).unwrap(), 0.0);
        assert_relative_eq!(binary_entropy(0.5f64).unwrap(), 1.0);
        // Independent evaluation gives 0.4999159581645; the commonly quoted 0.49993 is rounded.
        assert_relative_eq!(
            binary_entropy(0.11f64).unwrap(),
            0.499_915_958_164_528,
            epsilon = 1e-13
        );
        assert!((binary_entropy(0.11f64).unwrap() - 0.49993).abs() < 5e-5);
        assert!(binary_entropy(1.5f64).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn hermitian_construction_rules() {
        let mut m = diag(&[1.0, 2.0]);
        m[(0, 1)] = C::new(0.0, 1e-11);
        let h = HermitianOperator::new(m.clone()).unwrap();
        assert!(h.matrix().hermiticity_defect() == 0.0);
        m[(0, 1)] = C::new(0.0, 1e-6);
        assert!(HermitianOperator::new(m).is_err());
    }

    #[test]
    fn density_operator_checks() {
        assert!(DensityOperator::new(diag(&[0.5, 0.5])).is_ok());
        assert!(DensityOperator::new(diag(&[0.6, 0.5])).is_err());
        assert!(DensityOperator::new(diag(&[1.1, -0.1])).is_err());
        assert!(DensityOperator::with_normalization(diag(&[0.2, 0.1]), 0.3).is_ok());
    }
}
