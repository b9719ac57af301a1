//! Formal protocol descriptions: POVMs, source constraints, Kraus operators
//! and key maps for BB84 and MDI-QKD.

mod bb84;
mod mdi;
mod validate;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::quantum::HermitianOperator;
use crate::scalar::{re, Real};

pub use bb84::{build_bb84, BB84_OUTCOMES, BB84_STATES};
pub use mdi::{build_mdi, build_mdi_with_strategy, charlie_bell_povm, MDI_OUTCOMES};
pub use validate::{validate_description, Violation, ViolationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Bb84,
    Mdi,
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolKind::Bb84 => "bb84",
            ProtocolKind::Mdi => "mdi",
        })
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bb84" => Ok(ProtocolKind::Bb84),
            "mdi" | "mdi-qkd" => Ok(ProtocolKind::Mdi),
            other => Err(Error::usage(format!("unknown protocol `{other}`"))),
        }
    }
}

/// Preparation / measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub fn of_index(i: usize) -> Basis {
        if i < 2 {
            Basis::Z
        } else {
            Basis::X
        }
    }

    pub fn letter(self) -> char {
        match self {
            Basis::Z => 'Z',
            Basis::X => 'X',
        }
    }
}

/// Which basis combinations generate key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisStrategy {
    ZOnly,
    ZzXx,
    AllFour,
    Independent,
}

impl BasisStrategy {
    /// (Alice basis, Bob basis) pairs whose Kraus operators enter the objective.
    pub fn combinations(self) -> Vec<(Basis, Basis)> {
        use Basis::*;
        match self {
            BasisStrategy::ZOnly => vec![(Z, Z)],
            BasisStrategy::ZzXx => vec![(Z, Z), (X, X)],
            BasisStrategy::AllFour | BasisStrategy::Independent => {
                vec![(Z, Z), (Z, X), (X, Z), (X, X)]
            }
        }
    }
}

impl fmt::Display for BasisStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisStrategy::ZOnly => "z-only",
            BasisStrategy::ZzXx => "zz-xx",
            BasisStrategy::AllFour => "all-four",
            BasisStrategy::Independent => "independent",
        })
    }
}

impl FromStr for BasisStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "z-only" | "z" | "zz" => Ok(BasisStrategy::ZOnly),
            "zz-xx" | "zz+xx" => Ok(BasisStrategy::ZzXx),
            "all-four" | "all" => Ok(BasisStrategy::AllFour),
            "independent" => Ok(BasisStrategy::Independent),
            other => Err(Error::usage(format!("unknown basis strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledOperator<T: Real> {
    pub label: String,
    pub op: HermitianOperator<T>,
}

/// Hermitian source-characterization constraint `Tr(op ρ) = value`.
#[derive(Debug, Clone)]
pub struct SourceConstraint<T: Real> {
    pub label: String,
    pub op: HermitianOperator<T>,
    pub value: T,
}

#[derive(Debug, Clone)]
pub struct KrausOperator<T: Real> {
    pub label: String,
    /// Basis pair (Alice, Bob) this operator sifts on.
    pub bases: (Basis, Basis),
    pub matrix: ComplexMatrix<T>,
}

/// Complete protocol description.
///
/// Observation POVMs are ordered source-major: entry `s * outcomes + k`
/// belongs to source row `s` (Alice's state for BB84, the pair `4i + j` for
/// MDI) and announced outcome `k`.
#[derive(Debug, Clone)]
pub struct ProtocolDescription<T: Real> {
    pub kind: ProtocolKind,
    pub p_z: T,
    pub strategy: BasisStrategy,
    /// Input subsystem dimensions.
    pub dims: Vec<usize>,
    pub povms: Vec<LabeledOperator<T>>,
    pub source_constraints: Vec<SourceConstraint<T>>,
    pub kraus: Vec<KrausOperator<T>>,
    pub keymaps: Vec<HermitianOperator<T>>,
    /// Observation labels whose statistics enter p_pass and leakage.
    pub sift_filter: Vec<String>,
    /// Prior probability of each source row.
    pub source_prior: Vec<T>,
    pub outcomes: usize,
    /// Index sets on which every constraint operator is block diagonal.
    pub blocks: Vec<Vec<usize>>,
    /// Reduced state of the source registers (Alice's, or Alice's ⊗ Bob's).
    pub source_state: ComplexMatrix<T>,
    /// Dimension of the non-source part (Bob's squashed space, Charlie's register).
    pub rest_dim: usize,
}

impl<T: Real> ProtocolDescription<T> {
    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn output_dim(&self) -> usize {
        self.kraus.first().map(|k| k.matrix.rows()).unwrap_or(0)
    }

    pub fn sources(&self) -> usize {
        self.source_prior.len()
    }

    /// Copy that keeps only Kraus operator `i` (independent-per-combination runs).
    pub fn with_single_kraus(&self, i: usize) -> Result<Self> {
        let k = self
            .kraus
            .get(i)
            .cloned()
            .ok_or_else(|| Error::usage(format!("Kraus index {i} out of range")))?;
        let mut out = self.clone();
        out.kraus = vec![k];
        Ok(out)
    }

    /// Short text dump of labels and dimensions.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} pZ={} strategy={} dims={:?} output_dim={}\n",
            self.kind,
            self.p_z,
            self.strategy,
            self.dims,
            self.output_dim()
        );
        s.push_str(&format!("  povms: {}\n", self.povms.len()));
        s.push_str(&format!(
            "  source constraints: {}\n",
            self.source_constraints.len()
        ));
        for k in &self.kraus {
            s.push_str(&format!(
                "  kraus {} {}x{}\n",
                k.label,
                k.matrix.rows(),
                k.matrix.cols()
            ));
        }
        s.push_str(&format!("  key maps: {}\n", self.keymaps.len()));
        s.push_str(&format!(
            "  blocks: {:?}\n",
            self.blocks.iter().map(Vec::len).collect::<Vec<_>>()
        ));
        s
    }
}

/// The four encoded qubit states H, V, +, − as real amplitude pairs.
pub(crate) fn qubit_state<T: Real>(i: usize) -> [T; 2] {
    let s = T::FRAC_1_SQRT_2();
    match i {
        0 => [T::one(), T::zero()],
        1 => [T::zero(), T::one()],
        2 => [s, s],
        _ => [s, -s],
    }
}

/// Prior over the four local states given the Z-basis probability.
pub(crate) fn state_prior<T: Real>(p_z: T) -> [T; 4] {
    let half = T::lit(0.5);
    let p_x = T::one() - p_z;
    [p_z * half, p_z * half, p_x * half, p_x * half]
}

/// `ρ_A = Tr_{A'} |ψ⟩⟨ψ|` for `|ψ⟩ = Σ √p_i |i⟩|ψ_i⟩`.
pub(crate) fn local_source_state<T: Real>(p_z: T) -> ComplexMatrix<T> {
    let p = state_prior(p_z);
    ComplexMatrix::from_fn(4, 4, |i, j| {
        let a = qubit_state::<T>(i);
        let b = qubit_state::<T>(j);
        re((p[i] * p[j]).sqrt() * (a[0] * b[0] + a[1] * b[1]))
    })
}

/// Hermitian basis of `|i⟩⟨j|` operators on a `d`-dimensional source register,
/// each tensored with `I_rest`, with values read off `state`.
pub(crate) fn hermitian_source_constraints<T: Real>(
    state: &ComplexMatrix<T>,
    rest: usize,
    label: impl Fn(usize, usize) -> String,
) -> Vec<SourceConstraint<T>> {
    let d = state.rows();
    let id = ComplexMatrix::<T>::identity(rest);
    let half = T::lit(0.5);
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in i..d {
            if i == j {
                let op = crate::linalg::kron2(&ComplexMatrix::unit(d, i, i), &id);
                out.push(SourceConstraint {
                    label: format!("re {}", label(i, i)),
                    op: HermitianOperator::from_hermitian_unchecked(op),
                    value: state[(i, i)].re,
                });
                continue;
            }
            let eij = ComplexMatrix::<T>::unit(d, i, j);
            let eji = ComplexMatrix::<T>::unit(d, j, i);
            let sym = (&eij + &eji).scale(half);
            let anti = (&eij - &eji).scale_c(crate::scalar::cplx(T::zero(), half));
            // Tr(|i⟩⟨j| ρ) = ρ[j][i]
            let rji = state[(j, i)];
            out.push(SourceConstraint {
                label: format!("re {}", label(i, j)),
                op: HermitianOperator::from_hermitian_unchecked(crate::linalg::kron2(&sym, &id)),
                value: rji.re,
            });
            out.push(SourceConstraint {
                label: format!("im {}", label(i, j)),
                op: HermitianOperator::from_hermitian_unchecked(crate::linalg::kron2(&anti, &id)),
                value: -rji.im,
            });
        }
    }
    out
}

/// `|0⟩ ⊗ P₀ + |1⟩ ⊗ P₁` for the two states of `basis` on Alice's qudit.
pub(crate) fn key_register_map<T: Real>(basis: Basis) -> ComplexMatrix<T> {
    let off = match basis {
        Basis::Z => 0,
        Basis::X => 2,
    };
    let e0 = ComplexMatrix::basis_ket(2, 0);
    let e1 = ComplexMatrix::basis_ket(2, 1);
    let p0 = ComplexMatrix::unit(4, off, off);
    let p1 = ComplexMatrix::unit(4, off + 1, off + 1);
    &crate::linalg::kron2(&e0, &p0) + &crate::linalg::kron2(&e1, &p1)
}

pub(crate) fn key_maps<T: Real>(output_dim: usize) -> Vec<HermitianOperator<T>> {
    let rest = ComplexMatrix::identity(output_dim / 2);
    (0..2)
        .map(|j| {
            HermitianOperator::from_hermitian_unchecked(crate::linalg::kron2(
                &ComplexMatrix::unit(2, j, j),
                &rest,
            ))
        })
        .collect()
}

pub(crate) fn check_pz<T: Real>(p_z: T) -> Result<()> {
    if !(p_z > T::zero() && p_z < T::one()) {
        return Err(Error::usage(format!(
            "pZ must lie strictly inside (0, 1), got {p_z}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_parsing_round_trips() {
        for s in [
            BasisStrategy::ZOnly,
            BasisStrategy::ZzXx,
            BasisStrategy::AllFour,
            BasisStrategy::Independent,
        ] {
            assert_eq!(s.to_string().parse::<BasisStrategy>().unwrap(), s);
        }
        assert!("diagonal".parse::<BasisStrategy>().is_err());
    }

    #[test]
    fn source_state_is_unit_trace_rank_two() {
        let rho = local_source_state::<f64>(0.3);
        assert!((rho.trace().re - 1.0).abs() < 1e-15);
        let e = crate::linalg::HermitianEigen::new(&rho).unwrap();
        assert!(e.values[0].abs() < 1e-14 && e.values[1].abs() < 1e-14);
        assert!(e.values[2] > 0.1);
    }

    #[test]
    fn hermitian_constraints_reproduce_state() {
        let rho = local_source_state::<f64>(0.5);
        let cons = hermitian_source_constraints(&rho, 1, |i, j| format!("{i}{j}"));
        assert_eq!(cons.len(), 16);
        for c in &cons {
            assert!(
                (c.op.expectation(&rho) - c.value).abs() < 1e-15,
                "{}",
                c.label
            );
        }
    }
}
