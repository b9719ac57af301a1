use crate::error::{Error, Result};
use crate::linalg::{kron2, ComplexMatrix};
use crate::quantum::HermitianOperator;
use crate::scalar::{re, Real};

use super::{
    check_pz, hermitian_source_constraints, key_maps, key_register_map, local_source_state,
    state_prior, Basis, BasisStrategy, KrausOperator, LabeledOperator, ProtocolDescription,
    ProtocolKind, BB84_STATES,
};

/// Charlie's announcements in register order.
pub const MDI_OUTCOMES: [&str; 3] = ["psi+", "psi-", "none"];

/// Charlie's optical POVM on two polarization qubits: projectors onto
/// (|HV⟩ ± |VH⟩)/√2 and their complement.
pub fn charlie_bell_povm<T: Real>() -> [ComplexMatrix<T>; 3] {
    let s = T::FRAC_1_SQRT_2();
    let plus = ComplexMatrix::column(&[re(T::zero()), re(s), re(s), re(T::zero())]);
    let minus = ComplexMatrix::column(&[re(T::zero()), re(s), re(-s), re(T::zero())]);
    let p1 = ComplexMatrix::outer(&plus, &plus);
    let p2 = ComplexMatrix::outer(&minus, &minus);
    let p3 = &(&ComplexMatrix::identity(4) - &p1) - &p2;
    [p1, p2, p3]
}

/// MDI description with the Kraus pair `{K_Z, K_X}`.
pub fn build_mdi<T: Real>(p_z: T) -> Result<ProtocolDescription<T>> {
    build_mdi_with_strategy(p_z, BasisStrategy::ZzXx)
}

/// MDI description on A(4) ⊗ B(4) ⊗ C̃(3); only Z-only and ZZ+XX strategies.
pub fn build_mdi_with_strategy<T: Real>(
    p_z: T,
    strategy: BasisStrategy,
) -> Result<ProtocolDescription<T>> {
    check_pz(p_z)?;
    if !matches!(strategy, BasisStrategy::ZOnly | BasisStrategy::ZzXx) {
        return Err(Error::usage(format!(
            "MDI supports z-only and zz-xx strategies, not {strategy}"
        )));
    }
    let mut povms = Vec::with_capacity(48);
    for i in 0..4 {
        for j in 0..4 {
            let ab = kron2(&ComplexMatrix::unit(4, i, i), &ComplexMatrix::unit(4, j, j));
            for (k, o) in MDI_OUTCOMES.iter().enumerate() {
                povms.push(LabeledOperator {
                    label: format!("{}{}->{o}", BB84_STATES[i], BB84_STATES[j]),
                    op: HermitianOperator::from_hermitian_unchecked(kron2(
                        &ab,
                        &ComplexMatrix::unit(3, k, k),
                    )),
                });
            }
        }
    }

    let rho_a = local_source_state(p_z);
    let rho_ab = kron2(&rho_a, &rho_a);
    let source_constraints = hermitian_source_constraints(&rho_ab, 3, |p, q| {
        format!(
            "|{}{}><{}{}|_AB",
            BB84_STATES[p / 4],
            BB84_STATES[p % 4],
            BB84_STATES[q / 4],
            BB84_STATES[q % 4]
        )
    });

    let combos = strategy.combinations();
    let conclusive = ComplexMatrix::from_diag(&[T::one(), T::one(), T::zero()]);
    let kraus = combos
        .iter()
        .enumerate()
        .map(|(slot, &(a, b))| {
            let off = if b == Basis::Z { 0 } else { 2 };
            let bob = &ComplexMatrix::unit(4, off, off) + &ComplexMatrix::unit(4, off + 1, off + 1);
            let m = kron2(
                &kron2(&kron2(&key_register_map::<T>(a), &bob), &conclusive),
                &ComplexMatrix::basis_ket(2, slot),
            );
            KrausOperator {
                label: format!("K_{}{}", a.letter(), b.letter()),
                bases: (a, b),
                matrix: m,
            }
        })
        .collect::<Vec<_>>();
    let out_dim = kraus[0].matrix.rows();

    let mut sift_filter = Vec::new();
    for &(a, b) in &combos {
        for i in 0..4 {
            for j in 0..4 {
                if Basis::of_index(i) != a || Basis::of_index(j) != b {
                    continue;
                }
                for o in MDI_OUTCOMES.iter().take(2) {
                    sift_filter.push(format!("{}{}->{o}", BB84_STATES[i], BB84_STATES[j]));
                }
            }
        }
    }

    let pa = state_prior(p_z);
    let source_prior = (0..16).map(|s| pa[s / 4] * pa[s % 4]).collect();
    let blocks = (0..3)
        .map(|k| (0..16).map(|ab| ab * 3 + k).collect())
        .collect();

    Ok(ProtocolDescription {
        kind: ProtocolKind::Mdi,
        p_z,
        strategy,
        dims: vec![4, 4, 3],
        povms,
        source_constraints,
        kraus,
        keymaps: key_maps(out_dim),
        sift_filter,
        source_prior,
        outcomes: 3,
        blocks,
        source_state: rho_ab,
        rest_dim: 3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_povm_is_complete_and_orthogonal() {
        let [p1, p2, p3] = charlie_bell_povm::<f64>();
        let sum = &(&p1 + &p2) + &p3;
        assert!(sum.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-15);
        assert!((&p1 * &p2).max_abs() < 1e-15);
    }

    #[test]
    fn counts_and_values() {
        let d = build_mdi::<f64>(0.5).unwrap();
        assert_eq!(d.povms.len(), 48);
        assert_eq!(d.source_constraints.len(), 256);
        assert_eq!(d.kraus.len(), 2);
        assert_eq!(d.kraus[0].matrix.cols(), 48);
        assert_eq!(d.kraus[0].matrix.rows(), 192);
        let c = d
            .source_constraints
            .iter()
            .find(|c| c.label == "re |HH><HH|_AB")
            .unwrap();
        assert!((c.value - 1.0 / 16.0).abs() < 1e-15);
        assert_eq!(d.sift_filter.len(), 16);
        assert!(build_mdi_with_strategy::<f64>(0.5, BasisStrategy::AllFour).is_err());
    }
}
