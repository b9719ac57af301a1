use crate::error::Result;
use crate::linalg::{kron2, ComplexMatrix};
use crate::quantum::HermitianOperator;
use crate::scalar::{re, Real};

use super::{
    check_pz, hermitian_source_constraints, key_maps, key_register_map, local_source_state,
    state_prior, Basis, BasisStrategy, KrausOperator, LabeledOperator, ProtocolDescription,
    ProtocolKind,
};

/// Alice's states in source-row order.
pub const BB84_STATES: [&str; 4] = ["H", "V", "+", "-"];
/// Bob's squashed outcomes in column order; the last is the inconclusive event.
pub const BB84_OUTCOMES: [&str; 5] = ["H", "V", "+", "-", "none"];

/// Bob's squashed POVM on span{vacuum, H, V}.
fn bob_povm<T: Real>(p_z: T) -> [ComplexMatrix<T>; 5] {
    let p_x = T::one() - p_z;
    let h = T::lit(0.5) * p_x;
    let m = |v: [T; 9]| ComplexMatrix::from_fn(3, 3, |i, j| re(v[i * 3 + j]));
    let z = T::zero();
    let o = T::one();
    [
        m([z, z, z, z, p_z, z, z, z, z]),
        m([z, z, z, z, z, z, z, z, p_z]),
        m([z, z, z, z, h, h, z, h, h]),
        m([z, z, z, z, h, -h, z, -h, h]),
        m([o, z, z, z, z, z, z, z, z]),
    ]
}

/// BB84 description on Alice's 4-dim qudit ⊗ Bob's 3-dim squashed space.
pub fn build_bb84<T: Real>(p_z: T, strategy: BasisStrategy) -> Result<ProtocolDescription<T>> {
    check_pz(p_z)?;
    let p_x = T::one() - p_z;
    let bob = bob_povm(p_z);
    let mut povms = Vec::with_capacity(20);
    for (i, s) in BB84_STATES.iter().enumerate() {
        let pa = ComplexMatrix::unit(4, i, i);
        for (k, o) in BB84_OUTCOMES.iter().enumerate() {
            povms.push(LabeledOperator {
                label: format!("{s}->{o}"),
                op: HermitianOperator::from_hermitian_unchecked(kron2(&pa, &bob[k])),
            });
        }
    }

    let rho_a = local_source_state(p_z);
    let source_constraints = hermitian_source_constraints(&rho_a, 3, |i, j| {
        format!("|{}><{}|_A", BB84_STATES[i], BB84_STATES[j])
    });

    let combos = strategy.combinations();
    let ann = if combos.len() > 2 { 4 } else { 2 };
    let kraus = combos
        .iter()
        .enumerate()
        .map(|(slot, &(a, b))| {
            let amp = match b {
                Basis::Z => p_z.sqrt(),
                Basis::X => p_x.sqrt(),
            };
            let slot = if combos.len() == 1 { 0 } else { slot };
            let reg = key_register_map::<T>(a);
            let bob_part = ComplexMatrix::identity(3).scale(amp);
            let m = kron2(
                &kron2(&reg, &bob_part),
                &ComplexMatrix::basis_ket(ann, slot),
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
        for (i, s) in BB84_STATES.iter().enumerate() {
            if Basis::of_index(i) != a {
                continue;
            }
            for (k, o) in BB84_OUTCOMES.iter().take(4).enumerate() {
                if Basis::of_index(k) == b {
                    sift_filter.push(format!("{s}->{o}"));
                }
            }
        }
    }

    let blocks = vec![
        (0..4).map(|a| a * 3).collect(),
        (0..4).flat_map(|a| [a * 3 + 1, a * 3 + 2]).collect(),
    ];

    Ok(ProtocolDescription {
        kind: ProtocolKind::Bb84,
        p_z,
        strategy,
        dims: vec![4, 3],
        povms,
        source_constraints,
        kraus,
        keymaps: key_maps(out_dim),
        sift_filter,
        source_prior: state_prior(p_z).to_vec(),
        outcomes: 5,
        blocks,
        source_state: rho_a,
        rest_dim: 3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bob_povm_sums_to_identity() {
        let p = bob_povm::<f64>(0.3);
        let sum = p.iter().skip(1).fold(p[0].clone(), |acc, x| &acc + x);
        assert!(sum.max_abs_diff(&ComplexMatrix::identity(3)) < 1e-15);
        let z = &p[0] + &p[1];
        assert!(z.max_abs_diff(&ComplexMatrix::from_diag(&[0.0, 0.3, 0.3])) < 1e-15);
    }

    #[test]
    fn counts_and_shapes() {
        let d = build_bb84::<f64>(0.5, BasisStrategy::ZOnly).unwrap();
        assert_eq!(d.povms.len(), 20);
        assert_eq!(d.source_constraints.len(), 16);
        assert_eq!(d.kraus.len(), 1);
        assert_eq!(d.kraus[0].matrix.rows(), 48);
        assert_eq!(d.kraus[0].matrix.cols(), 12);
        assert_eq!(d.sift_filter, vec!["H->H", "H->V", "V->H", "V->V"]);
        let first = d
            .source_constraints
            .iter()
            .find(|c| c.label == "re |H><H|_A")
            .unwrap();
        assert!((first.value - 0.25).abs() < 1e-15);

        let d = build_bb84::<f64>(0.5, BasisStrategy::AllFour).unwrap();
        assert_eq!(d.kraus.len(), 4);
        assert_eq!(d.kraus[0].matrix.rows(), 96);
        assert_eq!(d.kraus[1].label, "K_ZX");
        assert!(build_bb84::<f64>(1.0, BasisStrategy::ZOnly).is_err());
        assert!(build_bb84::<f64>(0.0, BasisStrategy::ZOnly).is_err());
    }
}
