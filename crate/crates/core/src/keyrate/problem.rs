//! Feasible-set construction: restriction to the support of the source
//! state, block structure, and decoy-bound constraints.

use crate::decoy::PhotonBounds;
use crate::error::{Error, Result};
use crate::linalg::{kron2, ComplexMatrix, HermitianEigen};
use crate::mapping::coarse_entries;
use crate::protocols::{hermitian_source_constraints, ProtocolDescription};
use crate::quantum::DensityOperator;
use crate::scalar::Real;
use crate::sdp::{assemble, Blocks, FeasibleSet};

use super::objective::Objective;

/// Which observation entries constrain the feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintMode {
    /// Every source/outcome entry.
    Fine,
    /// Matched-basis entries only (what the analytical method sees).
    Coarse,
}

impl std::fmt::Display for ConstraintMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConstraintMode::Fine => "fine",
            ConstraintMode::Coarse => "coarse",
        })
    }
}

/// Minimization problem over block-diagonal `X_b`, with `ρ = Σ_b U_b X_b U_b†`.
#[derive(Debug, Clone)]
pub struct KeyRateProblem<T: Real> {
    pub objective: Objective<T>,
    pub set: FeasibleSet<T>,
    /// Isometries from each block into the full input space.
    pub lifts: Vec<ComplexMatrix<T>>,
}

impl<T: Real> KeyRateProblem<T> {
    /// Problem on the full input space with a caller-built set (single block).
    pub fn on_full_space(
        desc: &ProtocolDescription<T>,
        set: FeasibleSet<T>,
        epsilon: T,
    ) -> Result<Self> {
        let d = desc.dim();
        if set.block_dims != [d] {
            return Err(Error::usage(format!(
                "full-space set must have one block of dimension {d}, got {:?}",
                set.block_dims
            )));
        }
        let lifts = vec![ComplexMatrix::identity(d)];
        let objective = objective_for(desc, &lifts, epsilon)?;
        Ok(Self {
            objective,
            set,
            lifts,
        })
    }

    /// Decoy-constrained problem restricted to `supp(ρ_source) ⊗ H_rest`.
    ///
    /// The source characterization fixes the marginal on the source registers,
    /// so every feasible ρ lives on that support; the restriction is exact.
    pub fn from_bounds(
        desc: &ProtocolDescription<T>,
        bounds: &PhotonBounds<T>,
        mode: ConstraintMode,
        epsilon: T,
    ) -> Result<Self> {
        if bounds.protocol != desc.kind || bounds.shape != (desc.sources(), desc.outcomes) {
            return Err(Error::usage(format!(
                "{} bounds with shape {:?} do not fit the {} description",
                bounds.protocol, bounds.shape, desc.kind
            )));
        }
        let rest = desc.rest_dim;
        let eig = HermitianEigen::new(&desc.source_state)?;
        let cut = T::tol(1e-12) * eig.max().max(T::zero());
        let keep: Vec<usize> = (0..eig.values.len())
            .filter(|&i| eig.values[i] > cut)
            .collect();
        if keep.is_empty() {
            return Err(Error::domain("source state has no support"));
        }
        let rank = keep.len();
        let va = eig
            .vectors
            .select(&(0..eig.vectors.rows()).collect::<Vec<_>>(), &keep);
        let w = kron2(&va, &ComplexMatrix::identity(rest));

        // Every full index a·rest + k of a description block shares its k.
        let mut lifts = Vec::with_capacity(desc.blocks.len());
        for block in &desc.blocks {
            let mut ks: Vec<usize> = block.iter().map(|&i| i % rest).collect();
            ks.sort_unstable();
            ks.dedup();
            let cols: Vec<usize> = (0..rank)
                .flat_map(|a| ks.iter().map(move |&k| a * rest + k))
                .collect();
            let sel = ComplexMatrix::from_fn(rank * rest, cols.len(), |r, c| {
                if r == cols[c] {
                    T::one().into()
                } else {
                    T::zero().into()
                }
            });
            lifts.push(w.checked_mul(&sel)?);
        }
        let restrict = |op: &ComplexMatrix<T>| -> Blocks<T> {
            lifts.iter().map(|u| u.adjoint_sandwich(op)).collect()
        };
        let mut set = FeasibleSet::new(lifts.iter().map(ComplexMatrix::cols).collect())?;
        let dims = set.block_dims.clone();
        set.add_equality(
            "trace",
            dims.iter().map(|&d| ComplexMatrix::identity(d)).collect(),
            T::one(),
        )?;

        // Source characterization on the reduced register, where ρ_source is diagonal.
        let reduced =
            ComplexMatrix::from_diag(&keep.iter().map(|&i| eig.values[i]).collect::<Vec<_>>());
        for c in hermitian_source_constraints(&reduced, rest, |i, j| format!("src {i}{j}")) {
            let full = w.sandwich(c.op.matrix());
            set.add_equality(c.label, restrict(&full), c.value)?;
        }

        let entries: Vec<usize> = match mode {
            ConstraintMode::Fine => (0..bounds.len()).collect(),
            ConstraintMode::Coarse => coarse_entries(desc.kind),
        };
        let (lower, upper) = relaxed_intervals(desc, bounds, mode);
        for k in entries {
            let s = k / desc.outcomes;
            let w_s = desc.source_prior[s];
            let blocks = restrict(desc.povms[k].op.matrix());
            set.add_interval(
                desc.povms[k].label.clone(),
                blocks,
                w_s * lower[k],
                w_s * upper[k],
            )?;
        }
        let objective = objective_for(desc, &lifts, epsilon)?;
        Ok(Self {
            objective,
            set,
            lifts,
        })
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.set.block_dims
    }

    /// `Σ_b U_b X_b U_b†`.
    pub fn lift(&self, x: &Blocks<T>) -> ComplexMatrix<T> {
        let n = self.lifts[0].rows();
        let mut out = ComplexMatrix::zeros(n, n);
        for (u, xb) in self.lifts.iter().zip(x) {
            out = &out + &u.sandwich(xb);
        }
        out.hermitian_part()
    }

    /// `U_b† ρ U_b` per block.
    pub fn restrict(&self, rho: &ComplexMatrix<T>) -> Blocks<T> {
        self.lifts.iter().map(|u| u.adjoint_sandwich(rho)).collect()
    }

    /// Full-space density operator for block variables. The interior-point
    /// iterate is feasible only to solver tolerance, so the result is
    /// projected onto the PSD cone and renormalized.
    pub fn density(&self, x: &Blocks<T>) -> Result<DensityOperator<T>> {
        let full = if self.lifts.len() == 1 && self.lifts[0].is_square() {
            assemble(x)
        } else {
            self.lift(x)
        };
        let psd = HermitianEigen::new(&full.hermitian_part())?.map(|v| v.max(T::zero()));
        let tr = psd.trace().re;
        if !(tr > T::zero()) {
            return Err(Error::domain("iterate has no positive part"));
        }
        DensityOperator::new(psd.scale(T::one() / tr))
    }
}

fn objective_for<T: Real>(
    desc: &ProtocolDescription<T>,
    lifts: &[ComplexMatrix<T>],
    epsilon: T,
) -> Result<Objective<T>> {
    let kraus: Vec<ComplexMatrix<T>> = desc.kraus.iter().map(|k| k.matrix.clone()).collect();
    let keymaps: Vec<ComplexMatrix<T>> = desc.keymaps.iter().map(|z| z.matrix().clone()).collect();
    Objective::new(&kraus, &keymaps, lifts, epsilon)
}

/// Decoy intervals with the inconclusive entry of each source row relaxed
/// so the row can still sum to one.
///
/// Observed rows may sum to less than one (cross-basis clicks discarded by the
/// detection model) while the squashed POVM is complete; raising the upper
/// bound on the inconclusive outcome (and lowering its lower bound in the
/// mirror case) only enlarges the feasible set.
pub fn relaxed_intervals<T: Real>(
    desc: &ProtocolDescription<T>,
    bounds: &PhotonBounds<T>,
    mode: ConstraintMode,
) -> (Vec<T>, Vec<T>) {
    let mut lower = bounds.lower.clone();
    let mut upper = bounds.upper.clone();
    let n_out = desc.outcomes;
    let last = n_out - 1;
    let row_complete = |s: usize| match mode {
        ConstraintMode::Fine => true,
        ConstraintMode::Coarse => coarse_entries(desc.kind).contains(&(s * n_out + last)),
    };
    for s in 0..desc.sources() {
        if !row_complete(s) {
            continue;
        }
        let base = s * n_out;
        let up: T = (0..last).map(|k| upper[base + k]).sum();
        let lo: T = (0..last).map(|k| lower[base + k]).sum();
        let need_up = T::one() - up;
        if upper[base + last] < need_up {
            upper[base + last] = need_up.min(T::one());
        }
        let need_lo = (T::one() - lo).max(T::zero());
        if lower[base + last] > need_lo {
            lower[base + last] = need_lo;
        }
    }
    (lower, upper)
}
