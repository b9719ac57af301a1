//! Decoy-state photon-number linear programs: from per-intensity statistics
//! to intervals on the single-photon (or single-photon-pair) contributions.

mod lp;

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::channel::{RawPatternTable, PATTERNS};
use crate::error::{Error, Result};
use crate::mapping::{source_label, MappingMatrix, ObservationTable};
use crate::protocols::ProtocolKind;
use crate::scalar::Real;

pub use lp::{solve_lp, LinearProgram, LpSolution, LpStatus, Row, RowKind, Sense};

/// Default photon-number cutoff.
pub const DEFAULT_CUTOFF: usize = 10;

/// Tolerance used when checking that a value lies inside an interval.
pub const BRACKET_TOL: f64 = 1e-9;

/// `μⁿ e^{−μ} / n!` evaluated in log space.
pub fn poisson_pmf<T: Real>(mu: T, n: usize) -> T {
    if mu <= T::zero() {
        return if n == 0 { T::one() } else { T::zero() };
    }
    let nf = T::from_usize_lossy(n);
    let log_fact: T = (1..=n).map(|k| T::from_usize_lossy(k).ln()).sum();
    (nf * mu.ln() - mu - log_fact).exp()
}

/// `Σ_{n > N} p_μ(n)`, summed directly to avoid cancellation in `1 − Σ_{n≤N}`.
pub fn poisson_tail<T: Real>(mu: T, cutoff: usize) -> T {
    if mu <= T::zero() {
        return T::zero();
    }
    let mut term = poisson_pmf(mu, cutoff + 1);
    let mut sum = T::zero();
    let mut n = cutoff + 1;
    while term > sum * T::eps() * T::lit(1e-3) && n < cutoff + 2000 {
        sum += term;
        n += 1;
        term *= mu / T::from_usize_lossy(n);
    }
    sum
}

/// Photon-number index whose yield the LP bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhotonTarget {
    pub alice: usize,
    /// Ignored for BB84.
    pub bob: usize,
}

impl PhotonTarget {
    pub const SINGLE: PhotonTarget = PhotonTarget { alice: 1, bob: 1 };
    pub const VACUUM: PhotonTarget = PhotonTarget { alice: 0, bob: 0 };
}

/// Statistics of one observable family recorded at several intensity settings.
///
/// Each setting is `[μ]` (BB84) or `[μ_A, μ_B]` (MDI); `data[s][k]` is the
/// value of observable `k` at setting `s`. All observables take values in
/// `[0, 1]` for every photon number, which is what the unit box assumes.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoyEnsemble<T: Real> {
    pub protocol: ProtocolKind,
    pub settings: Vec<Vec<T>>,
    pub labels: Vec<String>,
    pub data: Vec<Vec<T>>,
    /// Row/column shape of the underlying table (sources × outcomes or patterns).
    pub shape: (usize, usize),
}

impl<T: Real> DecoyEnsemble<T> {
    pub fn new(
        protocol: ProtocolKind,
        settings: Vec<Vec<T>>,
        labels: Vec<String>,
        data: Vec<Vec<T>>,
        shape: (usize, usize),
    ) -> Result<Self> {
        if settings.len() < 2 {
            return Err(Error::usage(format!(
                "decoy analysis needs at least 2 intensity settings, got {}",
                settings.len()
            )));
        }
        if data.len() != settings.len() {
            return Err(Error::usage("one data row per intensity setting required"));
        }
        let arity = match protocol {
            ProtocolKind::Bb84 => 1,
            ProtocolKind::Mdi => 2,
        };
        for (i, s) in settings.iter().enumerate() {
            if s.len() != arity {
                return Err(Error::usage(format!(
                    "{protocol} settings need {arity} intensities"
                )));
            }
            if s.iter().any(|m| !(m.is_finite() && *m >= T::zero())) {
                return Err(Error::usage(format!(
                    "intensity setting {i} has a negative or non-finite value"
                )));
            }
            if settings[..i].contains(s) {
                return Err(Error::usage(format!("duplicate intensity setting {s:?}")));
            }
        }
        for row in &data {
            if row.len() != labels.len() {
                return Err(Error::usage("all tables must share shape and labels"));
            }
        }
        if shape.0 * shape.1 != labels.len() {
            return Err(Error::usage("ensemble shape does not match label count"));
        }
        Ok(Self {
            protocol,
            settings,
            labels,
            data,
            shape,
        })
    }

    pub fn from_observations(tables: &[ObservationTable<T>]) -> Result<Self> {
        let first = tables
            .first()
            .ok_or_else(|| Error::usage("empty decoy ensemble"))?;
        if tables
            .iter()
            .any(|t| t.protocol != first.protocol || t.len() != first.len())
        {
            return Err(Error::usage("all tables must share shape and labels"));
        }
        let labels = (0..first.len()).map(|i| first.entry_label(i)).collect();
        Self::new(
            first.protocol,
            tables.iter().map(|t| t.intensities.clone()).collect(),
            labels,
            tables.iter().map(|t| t.values.clone()).collect(),
            (first.sources, first.outcomes),
        )
    }

    pub fn from_raw(tables: &[RawPatternTable<T>]) -> Result<Self> {
        let first = tables
            .first()
            .ok_or_else(|| Error::usage("empty decoy ensemble"))?;
        if tables.iter().any(|t| t.protocol != first.protocol) {
            return Err(Error::usage("all tables must share shape and labels"));
        }
        let labels = (0..first.sources * PATTERNS)
            .map(|i| {
                format!(
                    "{}->{:04b}",
                    source_label(first.protocol, i / PATTERNS),
                    i % PATTERNS
                )
            })
            .collect();
        Self::new(
            first.protocol,
            tables.iter().map(|t| t.intensities.clone()).collect(),
            labels,
            tables.iter().map(|t| t.probs.clone()).collect(),
            (first.sources, PATTERNS),
        )
    }

    pub fn observables(&self) -> usize {
        self.labels.len()
    }

    /// Observed values of observable `k` across settings.
    pub fn series(&self, k: usize) -> Vec<T> {
        self.data.iter().map(|row| row[k]).collect()
    }

    /// Observed values of `Σ_k w_k · observable_k` across settings.
    pub fn combination(&self, weights: &[(usize, T)]) -> Vec<T> {
        self.data
            .iter()
            .map(|row| weights.iter().map(|&(k, w)| w * row[k]).sum())
            .collect()
    }

    /// Copy with only the settings at the given indices.
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        Self::new(
            self.protocol,
            keep.iter().map(|&i| self.settings[i].clone()).collect(),
            self.labels.clone(),
            keep.iter().map(|&i| self.data[i].clone()).collect(),
            self.shape,
        )
    }
}

fn photon_dims(protocol: ProtocolKind, cutoff: usize) -> usize {
    match protocol {
        ProtocolKind::Bb84 => cutoff + 1,
        ProtocolKind::Mdi => (cutoff + 1) * (cutoff + 1),
    }
}

fn target_index(protocol: ProtocolKind, cutoff: usize, target: PhotonTarget) -> usize {
    match protocol {
        ProtocolKind::Bb84 => target.alice,
        ProtocolKind::Mdi => target.alice * (cutoff + 1) + target.bob,
    }
}

/// Photon-number weights and tail mass for one setting.
fn setting_row<T: Real>(protocol: ProtocolKind, setting: &[T], cutoff: usize) -> (Vec<T>, T) {
    match protocol {
        ProtocolKind::Bb84 => {
            let mu = setting[0];
            (
                (0..=cutoff).map(|n| poisson_pmf(mu, n)).collect(),
                poisson_tail(mu, cutoff),
            )
        }
        ProtocolKind::Mdi => {
            let (ma, mb) = (setting[0], setting[1]);
            let pa: Vec<T> = (0..=cutoff).map(|n| poisson_pmf(ma, n)).collect();
            let pb: Vec<T> = (0..=cutoff).map(|n| poisson_pmf(mb, n)).collect();
            let (ta, tb) = (poisson_tail(ma, cutoff), poisson_tail(mb, cutoff));
            let row = pa
                .iter()
                .flat_map(|&a| pb.iter().map(move |&b| a * b))
                .collect();
            (row, ta + tb - ta * tb)
        }
    }
}

/// The two-sided photon-number LP for observed values `observed[s]`:
/// `Σ_{n≤N} p_s(n) γ_n ≤ obs_s ≤ Σ_{n≤N} p_s(n) γ_n + tail_s`, `γ ∈ [0,1]`.
pub fn build_decoy_lp<T: Real>(
    protocol: ProtocolKind,
    settings: &[Vec<T>],
    observed: &[T],
    cutoff: usize,
    target: PhotonTarget,
    sense: Sense,
) -> Result<LinearProgram<T>> {
    if cutoff < 2 {
        return Err(Error::usage(format!(
            "photon-number cutoff must be at least 2, got {cutoff}"
        )));
    }
    if settings.len() != observed.len() {
        return Err(Error::usage(
            "one observation per intensity setting required",
        ));
    }
    let n = photon_dims(protocol, cutoff);
    let mut objective = vec![T::zero(); n];
    objective[target_index(protocol, cutoff, target)] = T::one();
    let mut lp = LinearProgram::unit_box(objective, sense);
    for (setting, &obs) in settings.iter().zip(observed) {
        let (row, tail) = setting_row(protocol, setting, cutoff);
        lp.push(row.clone(), RowKind::Ge, obs - tail);
        lp.push(row, RowKind::Le, obs);
    }
    Ok(lp)
}

/// Per-observable intervals `[γᴸ, γᵁ]` on one photon-number component.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonBounds<T: Real> {
    pub protocol: ProtocolKind,
    pub labels: Vec<String>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub shape: (usize, usize),
}

impl<T: Real> PhotonBounds<T> {
    /// Degenerate intervals pinned at the table values.
    pub fn exact(table: &ObservationTable<T>) -> Self {
        Self {
            protocol: table.protocol,
            labels: (0..table.len()).map(|i| table.entry_label(i)).collect(),
            lower: table.values.clone(),
            upper: table.values.clone(),
            shape: (table.sources, table.outcomes),
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn interval(&self, k: usize) -> (T, T) {
        (self.lower[k], self.upper[k])
    }

    pub fn contains(&self, k: usize, v: T, tol: T) -> bool {
        v >= self.lower[k] - tol && v <= self.upper[k] + tol
    }

    /// Indices of observables whose interval misses the matching table value.
    pub fn misses(&self, table: &ObservationTable<T>, tol: T) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| !self.contains(k, table.values[k], tol))
            .collect()
    }

    pub fn max_width(&self) -> T {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| u - l)
            .fold(T::zero(), T::max)
    }

    /// Every interval widened by `delta` on each side, clamped to `[0, 1]`.
    pub fn widened(&self, delta: T) -> Self {
        let mut out = self.clone();
        for (l, u) in out.lower.iter_mut().zip(out.upper.iter_mut()) {
            *l = (*l - delta).max(T::zero());
            *u = (*u + delta).min(T::one());
        }
        out
    }

    /// Lower ends as an observation table (for leakage-free sanity checks).
    pub fn lower_table(&self) -> Result<ObservationTable<T>> {
        ObservationTable::from_values(self.protocol, Vec::new(), self.lower.clone())
    }

    /// CSV with columns `observable,lower,upper`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("observable,lower,upper\n");
        for k in 0..self.len() {
            let _ = writeln!(
                s,
                "{},{:.17e},{:.17e}",
                self.labels[k], self.lower[k], self.upper[k]
            );
        }
        s
    }
}

/// Solves the min/max LP pair for one observed series.
pub fn bound_series<T: Real>(
    protocol: ProtocolKind,
    settings: &[Vec<T>],
    observed: &[T],
    cutoff: usize,
    target: PhotonTarget,
) -> Result<(T, T)> {
    let mut ends = [T::zero(); 2];
    for (slot, sense) in ends.iter_mut().zip([Sense::Min, Sense::Max]) {
        let lp = build_decoy_lp(protocol, settings, observed, cutoff, target, sense)?;
        let sol = solve_lp(&lp)?;
        match sol.status {
            LpStatus::Optimal => *slot = sol.value,
            LpStatus::Infeasible => {
                return Err(Error::Infeasible(
                    "decoy LP has no solution; statistics are inconsistent".into(),
                ))
            }
            LpStatus::Unbounded => {
                return Err(Error::numerical(
                    "decoy LP reported unbounded despite the unit box",
                ))
            }
        }
    }
    let lo = ends[0].max(T::zero()).min(T::one());
    let hi = ends[1].max(lo).min(T::one());
    Ok((lo, hi))
}

/// Intervals for every observable of the ensemble on photon component `target`.
pub fn photon_bounds<T: Real>(
    ensemble: &DecoyEnsemble<T>,
    cutoff: usize,
    target: PhotonTarget,
) -> Result<PhotonBounds<T>> {
    let results: Vec<Result<(T, T)>> = (0..ensemble.observables())
        .into_par_iter()
        .map(|k| {
            bound_series(
                ensemble.protocol,
                &ensemble.settings,
                &ensemble.series(k),
                cutoff,
                target,
            )
            .map_err(|e| match e {
                Error::Infeasible(msg) => {
                    Error::Infeasible(format!("{}: {msg}", ensemble.labels[k]))
                }
                other => other,
            })
        })
        .collect();
    let mut lower = Vec::with_capacity(results.len());
    let mut upper = Vec::with_capacity(results.len());
    for r in results {
        let (l, u) = r?;
        lower.push(l);
        upper.push(u);
    }
    Ok(PhotonBounds {
        protocol: ensemble.protocol,
        labels: ensemble.labels.clone(),
        lower,
        upper,
        shape: ensemble.shape,
    })
}

/// Single-photon (BB84) or single-photon-pair (MDI) bounds.
pub fn single_photon_bounds<T: Real>(
    ensemble: &DecoyEnsemble<T>,
    cutoff: usize,
) -> Result<PhotonBounds<T>> {
    photon_bounds(ensemble, cutoff, PhotonTarget::SINGLE)
}

/// Vacuum-component bounds (for the zero-photon term).
pub fn zero_photon_bounds<T: Real>(
    ensemble: &DecoyEnsemble<T>,
    cutoff: usize,
) -> Result<PhotonBounds<T>> {
    photon_bounds(ensemble, cutoff, PhotonTarget::VACUUM)
}

/// Maps raw-pattern bounds through `M`: `L_k = Σ_j w_jk L_j`, likewise for `U`.
pub fn map_bounds<T: Real>(raw: &PhotonBounds<T>, m: &MappingMatrix<T>) -> Result<PhotonBounds<T>> {
    if raw.shape.1 != PATTERNS || raw.protocol != m.protocol {
        return Err(Error::usage(
            "map_bounds needs raw-pattern bounds of the mapping's protocol",
        ));
    }
    let sources = raw.shape.0;
    let mut lower = vec![T::zero(); sources * m.outcomes];
    let mut upper = vec![T::zero(); sources * m.outcomes];
    for s in 0..sources {
        for j in 0..PATTERNS {
            for k in 0..m.outcomes {
                let w = m.weight(j, k);
                if w != T::zero() {
                    lower[s * m.outcomes + k] += w * raw.lower[s * PATTERNS + j];
                    upper[s * m.outcomes + k] += w * raw.upper[s * PATTERNS + j];
                }
            }
        }
    }
    for (l, u) in lower.iter_mut().zip(upper.iter_mut()) {
        *u = u.min(T::one());
        *l = l.min(*u);
    }
    let table = ObservationTable::<T>::zeros(raw.protocol, Vec::new());
    Ok(PhotonBounds {
        protocol: raw.protocol,
        labels: (0..table.len()).map(|i| table.entry_label(i)).collect(),
        lower,
        upper,
        shape: (table.sources, table.outcomes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_examples() {
        assert!((poisson_pmf(0.3f64, 0) - (-0.3f64).exp()).abs() < 1e-16);
        assert!((poisson_pmf(0.25f64, 1) - 0.194_700_195_767_851_5).abs() < 1e-15);
        assert_eq!(poisson_pmf(0.0f64, 3), 0.0);
        assert_eq!(poisson_pmf(0.0f64, 0), 1.0);
        let s: f64 = (0..=40).map(|n| poisson_pmf(0.6, n)).sum();
        assert!((s - 1.0).abs() < 1e-15);
        let direct = 1.0 - (0..=3).map(|n| poisson_pmf(0.6f64, n)).sum::<f64>();
        assert!((poisson_tail(0.6f64, 3) - direct).abs() < 1e-15);
        assert!(poisson_tail(0.001f64, 10) > 0.0);
    }

    #[test]
    fn lp_shapes() {
        let settings = vec![vec![0.25f64], vec![0.02], vec![0.001]];
        let lp = build_decoy_lp(
            ProtocolKind::Bb84,
            &settings,
            &[0.1, 0.01, 0.001],
            10,
            PhotonTarget::SINGLE,
            Sense::Min,
        )
        .unwrap();
        assert_eq!(lp.rows.len(), 6);
        assert_eq!(lp.variables(), 11);
        let grid: Vec<Vec<f64>> = [0.25, 0.02, 0.001]
            .iter()
            .flat_map(|&a| [0.25, 0.02, 0.001].map(|b| vec![a, b]))
            .collect();
        let lp = build_decoy_lp(
            ProtocolKind::Mdi,
            &grid,
            &[0.0; 9],
            10,
            PhotonTarget::SINGLE,
            Sense::Max,
        )
        .unwrap();
        assert_eq!(lp.rows.len(), 18);
        assert_eq!(lp.variables(), 121);
        assert!(build_decoy_lp(
            ProtocolKind::Bb84,
            &settings,
            &[0.0; 3],
            1,
            PhotonTarget::SINGLE,
            Sense::Min
        )
        .is_err());
    }

    #[test]
    fn vacuum_setting_pins_gamma0() {
        let settings = vec![vec![0.0f64], vec![0.3]];
        let obs = [0.04, 0.04 * (-0.3f64).exp() + 0.2 * 0.3 * (-0.3f64).exp()];
        let (l, u) = bound_series(
            ProtocolKind::Bb84,
            &settings,
            &obs,
            10,
            PhotonTarget::VACUUM,
        )
        .unwrap();
        assert!((l - 0.04).abs() < 1e-12 && (u - 0.04).abs() < 1e-12);
    }

    #[test]
    fn forward_generated_yields_are_bracketed() {
        // Y_n = 1 − (1 − η)^n with background 0.01.
        let eta = 0.3f64;
        let y = |n: usize| 1.0 - (1.0 - 0.01) * (1.0 - eta).powi(n as i32);
        let settings: Vec<Vec<f64>> = [0.5, 0.1, 0.0].iter().map(|&m| vec![m]).collect();
        let obs: Vec<f64> = settings
            .iter()
            .map(|s| (0..200).map(|n| poisson_pmf(s[0], n) * y(n)).sum())
            .collect();
        let (l, u) = bound_series(
            ProtocolKind::Bb84,
            &settings,
            &obs,
            10,
            PhotonTarget::SINGLE,
        )
        .unwrap();
        assert!(l <= y(1) + 1e-12 && y(1) <= u + 1e-12, "{l} {} {u}", y(1));
        assert!(u - l < 0.1);
    }

    #[test]
    fn ensemble_validation() {
        let e = DecoyEnsemble::<f64>::new(
            ProtocolKind::Bb84,
            vec![vec![0.1]],
            vec!["a".into()],
            vec![vec![0.0]],
            (1, 1),
        );
        assert!(e.is_err());
        let e = DecoyEnsemble::<f64>::new(
            ProtocolKind::Bb84,
            vec![vec![0.1], vec![0.1]],
            vec!["a".into()],
            vec![vec![0.0], vec![0.0]],
            (1, 1),
        );
        assert!(e.is_err());
    }
}
