//! Squashing maps from 16 detector patterns onto the protocol outcome
//! alphabets, observation tables, and coarse-grained gain/QBER.

use std::fmt::Write as _;

use crate::channel::{RawPatternTable, PATTERNS};
use crate::error::{Error, Result};
use crate::protocols::{Basis, ProtocolKind, BB84_OUTCOMES, BB84_STATES, MDI_OUTCOMES};
use crate::scalar::Real;

/// Pattern → outcome weights, row-major `16 × outcomes`.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingMatrix<T: Real> {
    pub protocol: ProtocolKind,
    pub outcomes: usize,
    pub weights: Vec<T>,
}

impl<T: Real> MappingMatrix<T> {
    pub fn weight(&self, pattern: usize, outcome: usize) -> T {
        self.weights[pattern * self.outcomes + outcome]
    }

    /// Sum of the weights assigned to `pattern`.
    pub fn row_sum(&self, pattern: usize) -> T {
        (0..self.outcomes).map(|k| self.weight(pattern, k)).sum()
    }
}

/// Passive-detection BB84 map: single clicks are kept, same-basis double
/// clicks are assigned a random bit, cross-basis multi-clicks are discarded
/// and no-click goes to ∅.
pub fn bb84_mapping<T: Real>() -> MappingMatrix<T> {
    let half = T::lit(0.5);
    let mut w = vec![T::zero(); PATTERNS * 5];
    let mut set = |j: usize, k: usize, v: T| w[j * 5 + k] = v;
    set(0b1000, 0, T::one());
    set(0b0100, 1, T::one());
    set(0b0010, 2, T::one());
    set(0b0001, 3, T::one());
    set(0b1100, 0, half);
    set(0b1100, 1, half);
    set(0b0011, 2, half);
    set(0b0011, 3, half);
    set(0, 4, T::one());
    MappingMatrix {
        protocol: ProtocolKind::Bb84,
        outcomes: 5,
        weights: w,
    }
}

/// MDI Bell-state map: (1100, 0011) → Ψ⁺, (1001, 0110) → Ψ⁻, the rest → ∅.
pub fn mdi_mapping<T: Real>() -> MappingMatrix<T> {
    let mut w = vec![T::zero(); PATTERNS * 3];
    for j in 0..PATTERNS {
        let k = match j {
            0b1100 | 0b0011 => 0,
            0b1001 | 0b0110 => 1,
            _ => 2,
        };
        w[j * 3 + k] = T::one();
    }
    MappingMatrix {
        protocol: ProtocolKind::Mdi,
        outcomes: 3,
        weights: w,
    }
}

pub fn mapping_for<T: Real>(protocol: ProtocolKind) -> MappingMatrix<T> {
    match protocol {
        ProtocolKind::Bb84 => bb84_mapping(),
        ProtocolKind::Mdi => mdi_mapping(),
    }
}

/// Outcome expectations per source row: 4×5 for BB84, (4·4)×3 for MDI with
/// row `4i + j` for Alice's state `i` and Bob's state `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable<T: Real> {
    pub protocol: ProtocolKind,
    /// Intensity setting the table was recorded at (`[μ]` or `[μ_A, μ_B]`).
    pub intensities: Vec<T>,
    pub sources: usize,
    pub outcomes: usize,
    pub values: Vec<T>,
}

impl<T: Real> ObservationTable<T> {
    pub fn zeros(protocol: ProtocolKind, intensities: Vec<T>) -> Self {
        let (sources, outcomes) = shape(protocol);
        Self {
            protocol,
            intensities,
            sources,
            outcomes,
            values: vec![T::zero(); sources * outcomes],
        }
    }

    pub fn from_values(
        protocol: ProtocolKind,
        intensities: Vec<T>,
        values: Vec<T>,
    ) -> Result<Self> {
        let (sources, outcomes) = shape(protocol);
        if values.len() != sources * outcomes {
            return Err(Error::usage(format!(
                "{protocol} observation table needs {} entries, got {}",
                sources * outcomes,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite observation {v}")));
        }
        Ok(Self {
            protocol,
            intensities,
            sources,
            outcomes,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, source: usize, outcome: usize) -> T {
        self.values[source * self.outcomes + outcome]
    }

    pub fn set(&mut self, source: usize, outcome: usize, v: T) {
        self.values[source * self.outcomes + outcome] = v;
    }

    pub fn row(&self, source: usize) -> &[T] {
        &self.values[source * self.outcomes..(source + 1) * self.outcomes]
    }

    pub fn source_label(&self, source: usize) -> String {
        source_label(self.protocol, source)
    }

    pub fn outcome_label(&self, outcome: usize) -> &'static str {
        outcome_labels(self.protocol)[outcome]
    }

    /// `"<source>-><outcome>"`, matching the POVM labels of the protocol description.
    pub fn entry_label(&self, index: usize) -> String {
        format!(
            "{}->{}",
            self.source_label(index / self.outcomes),
            self.outcome_label(index % self.outcomes)
        )
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        (0..self.len()).find(|&i| self.entry_label(i) == label)
    }

    /// CSV with columns `source,outcome,value`, preceded by an intensity comment.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let mu: Vec<String> = self.intensities.iter().map(|m| m.to_string()).collect();
        let _ = writeln!(s, "# protocol={} intensity={}", self.protocol, mu.join(","));
        s.push_str("source,outcome,value\n");
        for i in 0..self.len() {
            let _ = writeln!(
                s,
                "{},{},{:.17e}",
                self.source_label(i / self.outcomes),
                self.outcome_label(i % self.outcomes),
                self.values[i]
            );
        }
        s
    }
}

fn shape(protocol: ProtocolKind) -> (usize, usize) {
    match protocol {
        ProtocolKind::Bb84 => (4, 5),
        ProtocolKind::Mdi => (16, 3),
    }
}

pub fn source_label(protocol: ProtocolKind, source: usize) -> String {
    match protocol {
        ProtocolKind::Bb84 => BB84_STATES[source].to_string(),
        ProtocolKind::Mdi => format!("{}{}", BB84_STATES[source / 4], BB84_STATES[source % 4]),
    }
}

pub fn outcome_labels(protocol: ProtocolKind) -> &'static [&'static str] {
    match protocol {
        ProtocolKind::Bb84 => &BB84_OUTCOMES,
        ProtocolKind::Mdi => &MDI_OUTCOMES,
    }
}

/// `P_raw × M` row by row.
pub fn apply_mapping<T: Real>(
    raw: &RawPatternTable<T>,
    m: &MappingMatrix<T>,
) -> Result<ObservationTable<T>> {
    if raw.protocol != m.protocol {
        return Err(Error::usage(format!(
            "mapping for {} applied to a {} raw table",
            m.protocol, raw.protocol
        )));
    }
    let mut out = ObservationTable::zeros(raw.protocol, raw.intensities.clone());
    if out.sources != raw.sources
        || out.outcomes != m.outcomes
        || m.weights.len() != PATTERNS * m.outcomes
    {
        return Err(Error::usage("raw table and mapping dimensions disagree"));
    }
    for s in 0..raw.sources {
        for j in 0..PATTERNS {
            let p = raw.get(s, j);
            for k in 0..m.outcomes {
                let w = m.weight(j, k);
                if w != T::zero() {
                    out.values[s * m.outcomes + k] += p * w;
                }
            }
        }
    }
    Ok(out)
}

/// `true` when `(source, outcome)` is a matched-basis conclusive entry
/// (the coarse-grained constraint subset).
pub fn is_coarse_entry(protocol: ProtocolKind, source: usize, outcome: usize) -> bool {
    match protocol {
        ProtocolKind::Bb84 => outcome < 4 && Basis::of_index(source) == Basis::of_index(outcome),
        ProtocolKind::Mdi => {
            outcome < 3 && Basis::of_index(source / 4) == Basis::of_index(source % 4)
        }
    }
}

/// Flat indices of the coarse-grained entries: 8 for BB84, 24 for MDI.
pub fn coarse_entries(protocol: ProtocolKind) -> Vec<usize> {
    let (sources, outcomes) = shape(protocol);
    (0..sources * outcomes)
        .filter(|&i| is_coarse_entry(protocol, i / outcomes, i % outcomes))
        .collect()
}

/// Whether a conclusive event is a bit error.
///
/// BB84: Alice's bit differs from Bob's. MDI: in Z, equal inputs announcing
/// any Bell state; in X, Ψ⁺ with opposite bits or Ψ⁻ with equal bits.
pub fn is_error(protocol: ProtocolKind, source: usize, outcome: usize) -> bool {
    match protocol {
        ProtocolKind::Bb84 => outcome < 4 && source % 2 != outcome % 2,
        ProtocolKind::Mdi => {
            let (i, j) = (source / 4, source % 4);
            if outcome > 1 || Basis::of_index(i) != Basis::of_index(j) {
                return false;
            }
            match Basis::of_index(i) {
                Basis::Z => i == j,
                Basis::X => (outcome == 0) == (i != j),
            }
        }
    }
}

/// Gain and error mass of one basis pair, averaged over the source rows
/// prepared in that pair (uniform state choice within the basis).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisStats<T: Real> {
    pub gain: T,
    pub errors: T,
}

impl<T: Real> BasisStats<T> {
    /// Conditional QBER, `None` when nothing was detected.
    pub fn qber(&self) -> Option<T> {
        if self.gain > T::zero() {
            Some(self.errors / self.gain)
        } else {
            None
        }
    }

    /// Conditional QBER or a domain error on zero gain.
    pub fn try_qber(&self) -> Result<T> {
        self.qber()
            .ok_or_else(|| Error::domain("zero gain: QBER undefined"))
    }
}

/// Coarse-grained matched-basis statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseGrained<T: Real> {
    pub z: BasisStats<T>,
    pub x: BasisStats<T>,
}

impl<T: Real> CoarseGrained<T> {
    pub fn basis(&self, b: Basis) -> BasisStats<T> {
        match b {
            Basis::Z => self.z,
            Basis::X => self.x,
        }
    }
}

/// Gain/error of the (Alice, Bob) basis combination, averaged over the
/// source rows prepared in those bases.
pub fn basis_pair_stats<T: Real>(table: &ObservationTable<T>, a: Basis, b: Basis) -> BasisStats<T> {
    let mut gain = T::zero();
    let mut errors = T::zero();
    let mut rows = 0usize;
    match table.protocol {
        ProtocolKind::Bb84 => {
            for s in (0..4).filter(|&s| Basis::of_index(s) == a) {
                rows += 1;
                for k in (0..4).filter(|&k| Basis::of_index(k) == b) {
                    let v = table.get(s, k);
                    gain += v;
                    if s % 2 != k % 2 {
                        errors += v;
                    }
                }
            }
        }
        ProtocolKind::Mdi => {
            for s in (0..16).filter(|&s| Basis::of_index(s / 4) == a && Basis::of_index(s % 4) == b)
            {
                rows += 1;
                for k in 0..2 {
                    let v = table.get(s, k);
                    gain += v;
                    if is_error(ProtocolKind::Mdi, s, k) {
                        errors += v;
                    }
                }
            }
        }
    }
    let n = T::from_usize_lossy(rows.max(1));
    BasisStats {
        gain: gain / n,
        errors: errors / n,
    }
}

/// Matched-basis gain and QBER for Z and X.
pub fn coarse_grain_observations<T: Real>(fine: &ObservationTable<T>) -> CoarseGrained<T> {
    CoarseGrained {
        z: basis_pair_stats(fine, Basis::Z, Basis::Z),
        x: basis_pair_stats(fine, Basis::X, Basis::X),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bb84_map_examples() {
        let m = bb84_mapping::<f64>();
        assert_eq!(m.weight(8, 0), 1.0);
        assert_eq!((m.weight(12, 0), m.weight(12, 1)), (0.5, 0.5));
        assert_eq!(m.weight(0, 4), 1.0);
        for j in 0..PATTERNS {
            assert!(m.row_sum(j) <= 1.0);
        }
        // Cross-basis double click is discarded.
        assert_eq!(m.row_sum(0b1010), 0.0);
    }

    #[test]
    fn mdi_map_examples() {
        let m = mdi_mapping::<f64>();
        assert_eq!(m.weight(9, 1), 1.0);
        assert_eq!(m.weight(3, 0), 1.0);
        assert_eq!(m.weight(15, 2), 1.0);
        for j in 0..PATTERNS {
            assert_eq!(m.row_sum(j), 1.0);
        }
    }

    #[test]
    fn apply_examples() {
        let mut probs = vec![0.0; 64];
        for s in 0..4 {
            probs[s * 16] = 1.0;
        }
        let raw = RawPatternTable::new(ProtocolKind::Bb84, vec![0.0], probs).unwrap();
        let t = apply_mapping(&raw, &bb84_mapping()).unwrap();
        assert_eq!(t.row(2), &[0.0, 0.0, 0.0, 0.0, 1.0]);

        let raw = RawPatternTable::<f64>::new(ProtocolKind::Bb84, vec![0.1], vec![1.0 / 16.0; 64])
            .unwrap();
        let t = apply_mapping(&raw, &bb84_mapping()).unwrap();
        assert!((t.get(0, 0) - 1.5 / 16.0).abs() < 1e-15);

        let mdi_raw =
            RawPatternTable::new(ProtocolKind::Mdi, vec![0.1, 0.1], vec![1.0 / 16.0; 256]).unwrap();
        assert!(apply_mapping(&mdi_raw, &bb84_mapping()).is_err());
    }

    #[test]
    fn coarse_grain_examples() {
        let mut t = ObservationTable::<f64>::zeros(ProtocolKind::Bb84, vec![0.5]);
        t.set(0, 0, 0.5);
        t.set(1, 1, 0.5);
        let c = coarse_grain_observations(&t);
        assert_eq!(c.z.gain, 0.5);
        assert_eq!(c.z.qber(), Some(0.0));
        assert!(c.x.qber().is_none());
        assert!(c.x.try_qber().is_err());

        for (s, k) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            t.set(s, k, 0.2);
        }
        assert_eq!(coarse_grain_observations(&t).z.qber(), Some(0.5));
    }

    #[test]
    fn coarse_entry_counts_and_labels() {
        assert_eq!(coarse_entries(ProtocolKind::Bb84).len(), 8);
        assert_eq!(coarse_entries(ProtocolKind::Mdi).len(), 24);
        let t = ObservationTable::<f64>::zeros(ProtocolKind::Mdi, vec![0.1, 0.1]);
        assert_eq!(t.entry_label(3), "HV->psi+");
        assert_eq!(t.index_of("--->none"), Some(47));
    }

    #[test]
    fn mdi_error_convention() {
        let mdi = ProtocolKind::Mdi;
        assert!(is_error(mdi, 0, 0) && is_error(mdi, 0, 1));
        assert!(!is_error(mdi, 1, 0));
        // ++ → ψ+ is correct, +− → ψ+ is an error.
        assert!(!is_error(mdi, 10, 0) && is_error(mdi, 11, 0));
        assert!(is_error(mdi, 10, 1) && !is_error(mdi, 11, 1));
        assert!(!is_error(mdi, 2, 0));
    }
}
