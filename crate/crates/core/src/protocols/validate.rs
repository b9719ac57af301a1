use std::fmt;

use crate::linalg::{ComplexMatrix, HermitianEigen};
use crate::scalar::Real;

use super::ProtocolDescription;

const TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Dimension,
    PovmNotPositive,
    PovmCompleteness,
    KrausContraction,
    KeyMapIdempotence,
    KeyMapOrthogonality,
    KeyMapCompleteness,
    BlockStructure,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub kind: ViolationKind,
    pub magnitude: f64,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} ({:.3e}): {}",
            self.kind, self.magnitude, self.detail
        )
    }
}

/// Checks every structural invariant of a description; empty means valid.
pub fn validate_description<T: Real>(desc: &ProtocolDescription<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let tol = T::lit(TOL);
    let dim = desc.dim();

    for g in &desc.povms {
        if g.op.dim() != dim {
            push(
                &mut out,
                ViolationKind::Dimension,
                T::one(),
                format!("POVM {} has dim {}", g.label, g.op.dim()),
            );
        }
    }
    for c in &desc.source_constraints {
        if c.op.dim() != dim {
            push(
                &mut out,
                ViolationKind::Dimension,
                T::one(),
                format!("source constraint {} has dim {}", c.label, c.op.dim()),
            );
        }
    }
    for k in &desc.kraus {
        if k.matrix.cols() != dim {
            push(
                &mut out,
                ViolationKind::Dimension,
                T::one(),
                format!("Kraus {} has {} columns", k.label, k.matrix.cols()),
            );
        }
    }
    if !out.is_empty() {
        return out;
    }

    let mut sum = ComplexMatrix::zeros(dim, dim);
    for g in &desc.povms {
        sum.add_assign_scaled(g.op.matrix(), T::one());
        if let Ok(e) = g.op.eigen() {
            if e.min() < -tol {
                push(
                    &mut out,
                    ViolationKind::PovmNotPositive,
                    -e.min(),
                    g.label.clone(),
                );
            }
        }
    }
    let deficit = &ComplexMatrix::identity(dim) - &sum;
    let norm = spectral_norm(&deficit);
    if norm > tol {
        push(
            &mut out,
            ViolationKind::PovmCompleteness,
            norm,
            "Σ Γ_k ≠ I".into(),
        );
    }

    let mut kk = ComplexMatrix::zeros(dim, dim);
    for k in &desc.kraus {
        kk.add_assign_scaled(&k.matrix.adjoint_mul(&k.matrix), T::one());
    }
    if let Ok(e) = HermitianEigen::new(&(&ComplexMatrix::identity(dim) - &kk)) {
        if e.min() < -tol {
            push(
                &mut out,
                ViolationKind::KrausContraction,
                -e.min(),
                "Σ K†K exceeds I".into(),
            );
        }
    }

    let out_dim = desc.output_dim();
    let mut zsum = ComplexMatrix::zeros(out_dim, out_dim);
    for (j, z) in desc.keymaps.iter().enumerate() {
        if z.dim() != out_dim {
            push(
                &mut out,
                ViolationKind::Dimension,
                T::one(),
                format!("key map {j} has dim {}", z.dim()),
            );
            continue;
        }
        let m = z.matrix();
        let idem = (&(m * m) - m).max_abs();
        if idem > tol {
            push(
                &mut out,
                ViolationKind::KeyMapIdempotence,
                idem,
                format!("key map {j}"),
            );
        }
        for (l, w) in desc.keymaps.iter().enumerate().skip(j + 1) {
            if w.dim() == out_dim {
                let cross = (m * w.matrix()).max_abs();
                if cross > tol {
                    push(
                        &mut out,
                        ViolationKind::KeyMapOrthogonality,
                        cross,
                        format!("key maps {j},{l}"),
                    );
                }
            }
        }
        zsum.add_assign_scaled(m, T::one());
    }
    let zdef = zsum.max_abs_diff(&ComplexMatrix::identity(out_dim));
    if zdef > tol {
        push(
            &mut out,
            ViolationKind::KeyMapCompleteness,
            zdef,
            "Σ Z_j ≠ I".into(),
        );
    }

    if !desc.blocks.is_empty() {
        let mut block_of = vec![usize::MAX; dim];
        for (b, idx) in desc.blocks.iter().enumerate() {
            for &i in idx {
                if i < dim {
                    block_of[i] = b;
                }
            }
        }
        if block_of.contains(&usize::MAX) {
            push(
                &mut out,
                ViolationKind::BlockStructure,
                T::one(),
                "blocks do not cover the space".into(),
            );
        } else {
            let ops = desc.povms.iter().map(|g| (&g.label, g.op.matrix())).chain(
                desc.source_constraints
                    .iter()
                    .map(|c| (&c.label, c.op.matrix())),
            );
            for (label, m) in ops {
                let off = off_block(m, &block_of);
                if off > tol {
                    push(
                        &mut out,
                        ViolationKind::BlockStructure,
                        off,
                        format!("{label} couples blocks"),
                    );
                }
            }
        }
    }
    out
}

fn push<T: Real>(out: &mut Vec<Violation>, kind: ViolationKind, magnitude: T, detail: String) {
    out.push(Violation {
        kind,
        magnitude: magnitude.to_f64_lossy(),
        detail,
    });
}

fn off_block<T: Real>(m: &ComplexMatrix<T>, block_of: &[usize]) -> T {
    let mut worst = T::zero();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if block_of[i] != block_of[j] {
                worst = worst.max(m[(i, j)].norm());
            }
        }
    }
    worst
}

fn spectral_norm<T: Real>(m: &ComplexMatrix<T>) -> T {
    match HermitianEigen::new(m) {
        Ok(e) => e.min().abs().max(e.max().abs()),
        Err(_) => m.frobenius_norm(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_bb84, build_mdi, BasisStrategy};
    use super::*;
    use crate::quantum::HermitianOperator;

    #[test]
    fn built_in_descriptions_are_valid() {
        let d = build_bb84::<f64>(0.5, BasisStrategy::ZOnly).unwrap();
        assert!(
            validate_description(&d).is_empty(),
            "{:?}",
            validate_description(&d)
        );
        let d = build_mdi::<f64>(0.5).unwrap();
        assert!(
            validate_description(&d).is_empty(),
            "{:?}",
            validate_description(&d)
        );
    }

    #[test]
    fn missing_vacuum_outcome_is_reported() {
        let mut d = build_bb84::<f64>(0.5, BasisStrategy::ZOnly).unwrap();
        d.povms.retain(|g| !g.label.ends_with("none"));
        let v = validate_description(&d);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::PovmCompleteness);
        assert!((v[0].magnitude - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_projector_key_map_is_reported() {
        let mut d = build_bb84::<f64>(0.5, BasisStrategy::ZOnly).unwrap();
        let m = d.keymaps[0].matrix().scale(0.5);
        d.keymaps[0] = HermitianOperator::new(m).unwrap();
        let v = validate_description(&d);
        assert!(v.iter().any(|x| x.kind == ViolationKind::KeyMapIdempotence));
    }
}
