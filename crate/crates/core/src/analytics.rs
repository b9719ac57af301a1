//! Analytical Shor–Preskill baselines and error-correction leakage.

use crate::decoy::{bound_series, poisson_pmf, DecoyEnsemble, PhotonTarget};
use crate::error::{Error, Result};
use crate::mapping::{is_error, ObservationTable};
use crate::protocols::{Basis, BasisStrategy, ProtocolKind};
use crate::quantum::h2_clamped;
use crate::scalar::Real;

/// Coarse-grained inputs of the analytical rate.
///
/// Gains and yields are conditioned on both parties using the named basis
/// (for BB84 the Bob-side basis probability is divided out), so the `pZ²`
/// prefactor accounts for sifting exactly once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseStats<T: Real> {
    /// Signal gain in the key basis.
    pub q: T,
    /// Signal QBER in the key basis.
    pub e: T,
    pub y1_lower: T,
    pub y1_upper: T,
    /// Single-photon phase-error rate (from the X basis).
    pub e1_lower: T,
    pub e1_upper: T,
    /// `p₁` (BB84) or `p₁₁` (MDI).
    pub p1: T,
    /// Error-correction inefficiency multiplying the leakage term.
    pub f_ec: T,
}

impl<T: Real> CoarseStats<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("q", self.q),
            ("e", self.e),
            ("y1_lower", self.y1_lower),
            ("y1_upper", self.y1_upper),
            ("e1_lower", self.e1_lower),
            ("e1_upper", self.e1_upper),
            ("p1", self.p1),
        ] {
            if !(v >= T::zero() && v <= T::one()) {
                return Err(Error::domain(format!("{name} = {v} is not a probability")));
            }
        }
        if self.e1_lower > self.e1_upper || self.y1_lower > self.y1_upper {
            return Err(Error::domain("interval ends out of order"));
        }
        if self.f_ec < T::one() {
            return Err(Error::domain(format!("f_EC = {} below 1", self.f_ec)));
        }
        Ok(())
    }
}

fn shor_preskill<T: Real>(stats: &CoarseStats<T>, p_z: T) -> Result<T> {
    stats.validate()?;
    let e1 = stats.e1_upper.min(T::lit(0.5));
    let sift = p_z * p_z;
    Ok(
        sift * stats.p1 * stats.y1_lower * (T::one() - h2_clamped(e1))
            - sift * stats.f_ec * stats.q * h2_clamped(stats.e),
    )
}

/// `pZ² p₁ Y₁ (1 − h₂(e₁)) − pZ² Q h₂(E)`.
pub fn shor_preskill_bb84<T: Real>(stats: &CoarseStats<T>, p_z: T) -> Result<T> {
    shor_preskill(stats, p_z)
}

/// `pZ² p₁₁ Y₁₁ (1 − h₂(e₁₁)) − pZ² Q h₂(E)`.
pub fn shor_preskill_mdi<T: Real>(stats: &CoarseStats<T>, p_z: T) -> Result<T> {
    shor_preskill(stats, p_z)
}

/// Gain and conditional QBER of one basis combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinationStats<T: Real> {
    pub bases: (Basis, Basis),
    pub gain: T,
    pub qber: T,
}

/// `Σ Q h₂(E)` over the combinations the strategy keys on.
///
/// For the independent strategy this is the sum of the per-combination
/// terms; the positive-part selection happens in the rate assembly.
pub fn ec_leakage<T: Real>(stats: &[CombinationStats<T>], strategy: BasisStrategy) -> T {
    let keep = strategy.combinations();
    stats
        .iter()
        .filter(|c| keep.contains(&c.bases))
        .map(|c| c.gain * h2_clamped(c.qber))
        .sum()
}

/// Flat-index weights of the matched-basis gain (and error) observables,
/// averaged over the source rows of the combination.
fn basis_weights<T: Real>(
    protocol: ProtocolKind,
    outcomes: usize,
    basis: Basis,
) -> (Vec<(usize, T)>, Vec<(usize, T)>) {
    let mut gain = Vec::new();
    let mut err = Vec::new();
    let rows: Vec<usize> = match protocol {
        ProtocolKind::Bb84 => (0..4).filter(|&s| Basis::of_index(s) == basis).collect(),
        ProtocolKind::Mdi => (0..16)
            .filter(|&s| Basis::of_index(s / 4) == basis && Basis::of_index(s % 4) == basis)
            .collect(),
    };
    let w = T::one() / T::from_usize_lossy(rows.len());
    for &s in &rows {
        let conclusive: Vec<usize> = match protocol {
            ProtocolKind::Bb84 => (0..4).filter(|&k| Basis::of_index(k) == basis).collect(),
            ProtocolKind::Mdi => vec![0, 1],
        };
        for k in conclusive {
            gain.push((s * outcomes + k, w));
            if is_error(protocol, s, k) {
                err.push((s * outcomes + k, w));
            }
        }
    }
    (gain, err)
}

/// Probability that Bob's side lands in `basis` (BB84); 1 for MDI, whose
/// source rows already fix both bases.
fn bob_basis_probability<T: Real>(protocol: ProtocolKind, p_z: T, basis: Basis) -> T {
    match (protocol, basis) {
        (ProtocolKind::Mdi, _) => T::one(),
        (ProtocolKind::Bb84, Basis::Z) => p_z,
        (ProtocolKind::Bb84, Basis::X) => T::one() - p_z,
    }
}

/// Poissonian single-photon (pair) probability of a setting.
pub fn single_photon_probability<T: Real>(protocol: ProtocolKind, setting: &[T]) -> Result<T> {
    match (protocol, setting) {
        (ProtocolKind::Bb84, [mu]) => Ok(poisson_pmf(*mu, 1)),
        (ProtocolKind::Mdi, [ma, mb]) => Ok(poisson_pmf(*ma, 1) * poisson_pmf(*mb, 1)),
        _ => Err(Error::usage(
            "intensity setting arity does not match the protocol",
        )),
    }
}

/// Decoy-estimated coarse statistics from an ensemble of observation tables.
///
/// `signal` indexes the setting whose gain and QBER enter the leakage term.
pub fn coarse_stats<T: Real>(
    ensemble: &DecoyEnsemble<T>,
    signal: usize,
    p_z: T,
    cutoff: usize,
    f_ec: T,
) -> Result<CoarseStats<T>> {
    let protocol = ensemble.protocol;
    let outcomes = match protocol {
        ProtocolKind::Bb84 => 5,
        ProtocolKind::Mdi => 3,
    };
    if ensemble.shape.1 != outcomes {
        return Err(Error::usage(
            "coarse statistics need mapped observation tables",
        ));
    }
    if signal >= ensemble.settings.len() {
        return Err(Error::usage(format!(
            "signal setting {signal} out of range"
        )));
    }
    let bound = |w: &[(usize, T)]| {
        bound_series(
            protocol,
            &ensemble.settings,
            &ensemble.combination(w),
            cutoff,
            PhotonTarget::SINGLE,
        )
    };
    let (zg, ze) = basis_weights::<T>(protocol, outcomes, Basis::Z);
    let (xg, xe) = basis_weights::<T>(protocol, outcomes, Basis::X);
    let nz = bob_basis_probability(protocol, p_z, Basis::Z);

    let (y1_lo, y1_hi) = bound(&zg)?;
    // The Bob-side basis probability cancels in the X error fraction.
    let (yx_lo, _) = bound(&xg)?;
    let (ex_lo, ex_hi) = bound(&xe)?;
    let (e1_lower, e1_upper) = if yx_lo > T::zero() {
        (
            (ex_lo / yx_lo).min(T::lit(0.5)).max(T::zero()),
            (ex_hi / yx_lo).min(T::lit(0.5)).max(T::zero()),
        )
    } else {
        (T::zero(), T::lit(0.5))
    };
    let q_raw: T = ensemble.combination(&zg)[signal];
    let err_raw: T = ensemble.combination(&ze)[signal];
    let e = if q_raw > T::zero() {
        err_raw / q_raw
    } else {
        T::zero()
    };
    let clamp = |v: T| v.max(T::zero()).min(T::one());
    Ok(CoarseStats {
        q: clamp(q_raw / nz),
        e: clamp(e),
        y1_lower: clamp(y1_lo / nz),
        y1_upper: clamp(y1_hi / nz).max(clamp(y1_lo / nz)),
        e1_lower: e1_lower.min(e1_upper),
        e1_upper,
        p1: single_photon_probability(protocol, &ensemble.settings[signal])?,
        f_ec,
    })
}

/// Analytical rate for either protocol from an ensemble.
pub fn analytical_rate<T: Real>(
    ensemble: &DecoyEnsemble<T>,
    signal: usize,
    p_z: T,
    cutoff: usize,
    f_ec: T,
) -> Result<(T, CoarseStats<T>)> {
    let stats = coarse_stats(ensemble, signal, p_z, cutoff, f_ec)?;
    let r = match ensemble.protocol {
        ProtocolKind::Bb84 => shor_preskill_bb84(&stats, p_z)?,
        ProtocolKind::Mdi => shor_preskill_mdi(&stats, p_z)?,
    };
    Ok((r, stats))
}

/// Matched and mismatched basis-combination statistics of a signal table,
/// averaged over source rows as in [`crate::mapping::basis_pair_stats`].
pub fn combination_stats<T: Real>(table: &ObservationTable<T>) -> Vec<CombinationStats<T>> {
    let mut out = Vec::with_capacity(4);
    for a in [Basis::Z, Basis::X] {
        for b in [Basis::Z, Basis::X] {
            let st = crate::mapping::basis_pair_stats(table, a, b);
            out.push(CombinationStats {
                bases: (a, b),
                gain: st.gain,
                qber: st.qber().unwrap_or(T::zero()),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(y1: f64, e1: f64, q: f64, e: f64, p1: f64) -> CoarseStats<f64> {
        CoarseStats {
            q,
            e,
            y1_lower: y1,
            y1_upper: y1,
            e1_lower: e1,
            e1_upper: e1,
            p1,
            f_ec: 1.0,
        }
    }

    #[test]
    fn perfect_channel_rate_is_one() {
        assert!(
            (shor_preskill_bb84(&stats(1.0, 0.0, 1.0, 0.0, 1.0), 1.0).unwrap() - 1.0).abs() < 1e-15
        );
        assert!(
            (shor_preskill_mdi(&stats(1.0, 0.0, 1.0, 0.0, 1.0), 0.5).unwrap() - 0.25).abs() < 1e-15
        );
    }

    #[test]
    fn eleven_percent_threshold() {
        let r = shor_preskill_bb84(&stats(1.0, 0.11, 1.0, 0.11, 1.0), 1.0).unwrap();
        let h = crate::quantum::binary_entropy(0.11f64).unwrap();
        assert!((r - (1.0 - 2.0 * h)).abs() < 1e-15);
        assert!(r > 0.0 && r < 3e-3, "{r}");
    }

    #[test]
    fn maximal_phase_error_kills_privacy_term() {
        let r = shor_preskill_mdi(&stats(0.5, 0.5, 0.2, 0.05, 0.1), 0.5).unwrap();
        assert!(r <= 0.0);
        let e_hi = shor_preskill_mdi(&stats(0.5, 0.7, 0.2, 0.05, 0.1), 0.5).unwrap();
        assert_eq!(r, e_hi);
    }

    #[test]
    fn leakage_per_strategy() {
        let c = |a, b, g, q| CombinationStats {
            bases: (a, b),
            gain: g,
            qber: q,
        };
        let all = [
            c(Basis::Z, Basis::Z, 0.5, 0.11),
            c(Basis::Z, Basis::X, 0.5, 0.3),
            c(Basis::X, Basis::Z, 0.5, 0.3),
            c(Basis::X, Basis::X, 0.5, 0.0),
        ];
        let z = ec_leakage(&all, BasisStrategy::ZOnly);
        assert!((z - 0.5 * crate::quantum::binary_entropy(0.11f64).unwrap()).abs() < 1e-15);
        assert!((z - 0.24997).abs() < 1e-4);
        assert_eq!(ec_leakage(&all, BasisStrategy::ZzXx), z);
        assert!(ec_leakage(&all, BasisStrategy::AllFour) > z);
        let zero: Vec<_> = all
            .iter()
            .map(|s| CombinationStats { qber: 0.0, ..*s })
            .collect();
        assert_eq!(ec_leakage(&zero, BasisStrategy::AllFour), 0.0);
    }

    #[test]
    fn invalid_stats_rejected() {
        let mut s = stats(1.0, 0.0, 1.0, 0.0, 1.0);
        s.e1_lower = 0.2;
        assert!(shor_preskill_bb84(&s, 0.5).is_err());
    }
}
