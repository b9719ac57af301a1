//! Detector-pattern statistics of weak coherent pulses through lossy,
//! misaligned channels, plus single-photon oracles for testing.

mod bb84;
mod mdi;
mod oracle;

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::protocols::{ProtocolKind, BB84_STATES};
use crate::scalar::{Real, C};

pub use bb84::{bb84_amplitudes, bb84_raw_table};
pub use mdi::{mdi_amplitudes, mdi_raw_table, mdi_raw_table_checked, MdiPort};
pub use oracle::{single_photon_oracle, single_photon_raw, ChannelParams};

pub const PATTERNS: usize = 16;
/// Default node count of the periodic trapezoid rule over the relative phase.
pub const DEFAULT_PHASE_POINTS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionScheme {
    Passive,
    Active,
}

impl FromStr for DetectionScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "passive" => Ok(DetectionScheme::Passive),
            "active" => Ok(DetectionScheme::Active),
            other => Err(Error::usage(format!("unknown detection scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bb84ChannelParams<T: Real> {
    /// Misalignment rotation (radians).
    pub theta: T,
    /// Transmittance including detector efficiency.
    pub eta: T,
    pub p_d: T,
    /// Bob's Z-basis probability.
    pub p_z: T,
    pub scheme: DetectionScheme,
}

impl<T: Real> Bb84ChannelParams<T> {
    pub fn validate(&self) -> Result<()> {
        check_unit("eta", self.eta)?;
        check_dark(self.p_d)?;
        if !(self.p_z > T::zero() && self.p_z < T::one()) {
            return Err(Error::usage(format!("pZ {} outside (0, 1)", self.p_z)));
        }
        if !self.theta.is_finite() {
            return Err(Error::usage("theta must be finite"));
        }
        Ok(())
    }

    /// Misalignment error `sin²θ`.
    pub fn e_d(&self) -> T {
        let s = self.theta.sin();
        s * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdiChannelParams<T: Real> {
    /// Misalignment of Alice's and Bob's signals relative to Charlie's basis.
    pub theta_a: T,
    pub theta_b: T,
    pub eta_a: T,
    pub eta_b: T,
    pub p_d: T,
    pub phase_points: usize,
}

impl<T: Real> MdiChannelParams<T> {
    pub fn validate(&self) -> Result<()> {
        check_unit("eta_a", self.eta_a)?;
        check_unit("eta_b", self.eta_b)?;
        check_dark(self.p_d)?;
        if self.phase_points < 16 {
            return Err(Error::usage(format!(
                "phase_points {} below 16",
                self.phase_points
            )));
        }
        if !(self.theta_a.is_finite() && self.theta_b.is_finite()) {
            return Err(Error::usage("misalignment angles must be finite"));
        }
        Ok(())
    }
}

fn check_unit<T: Real>(name: &str, v: T) -> Result<()> {
    if !(v >= T::zero() && v <= T::one()) {
        return Err(Error::usage(format!("{name} = {v} outside [0, 1]")));
    }
    Ok(())
}

fn check_dark<T: Real>(p_d: T) -> Result<()> {
    if !(p_d >= T::zero() && p_d < T::one()) {
        return Err(Error::usage(format!(
            "dark-count probability {p_d} outside [0, 1)"
        )));
    }
    Ok(())
}

/// `η = 10^(-α L / 10)`.
pub fn transmittance<T: Real>(distance_km: T, loss_db_per_km: T) -> T {
    T::lit(10.0).powf(-loss_db_per_km * distance_km / T::lit(10.0))
}

/// `1 - (1 - p_d)·exp(-|α|²)`.
pub fn click_probability<T: Real>(amplitude: C<T>, p_d: T) -> T {
    // Written as -expm1 + p_d·e^{-x} to avoid cancellation at small x.
    let x = amplitude.norm_sqr();
    -(-x).exp_m1() + p_d * (-x).exp()
}

/// Bit `k` (detector `k`, 0-based) of pattern index `j = 8b₁ + 4b₂ + 2b₃ + b₄`.
#[inline]
pub fn pattern_bit(j: usize, k: usize) -> bool {
    (j >> (3 - k)) & 1 == 1
}

/// Probabilities of all 16 patterns for independent detectors.
pub(crate) fn pattern_distribution<T: Real>(clicks: &[T; 4]) -> [T; PATTERNS] {
    let mut out = [T::zero(); PATTERNS];
    for (j, slot) in out.iter_mut().enumerate() {
        let mut p = T::one();
        for (k, &c) in clicks.iter().enumerate() {
            p *= if pattern_bit(j, k) { c } else { T::one() - c };
        }
        *slot = p;
    }
    out
}

/// Per-source detector-pattern probabilities at one intensity setting.
///
/// Sources are Alice's four states (BB84) or the 16 pairs `4i + j` (MDI).
#[derive(Debug, Clone, PartialEq)]
pub struct RawPatternTable<T: Real> {
    pub protocol: ProtocolKind,
    /// `[μ]` for BB84, `[μ_A, μ_B]` for MDI.
    pub intensities: Vec<T>,
    pub sources: usize,
    /// Row-major `sources × 16`.
    pub probs: Vec<T>,
}

impl<T: Real> RawPatternTable<T> {
    pub fn new(protocol: ProtocolKind, intensities: Vec<T>, probs: Vec<T>) -> Result<Self> {
        let sources = match protocol {
            ProtocolKind::Bb84 => 4,
            ProtocolKind::Mdi => 16,
        };
        if probs.len() != sources * PATTERNS {
            return Err(Error::usage(format!(
                "raw table needs {} entries, got {}",
                sources * PATTERNS,
                probs.len()
            )));
        }
        Ok(Self {
            protocol,
            intensities,
            sources,
            probs,
        })
    }

    pub fn get(&self, source: usize, pattern: usize) -> T {
        self.probs[source * PATTERNS + pattern]
    }

    pub fn row(&self, source: usize) -> &[T] {
        &self.probs[source * PATTERNS..(source + 1) * PATTERNS]
    }

    pub fn source_label(&self, source: usize) -> String {
        match self.protocol {
            ProtocolKind::Bb84 => BB84_STATES[source].to_string(),
            ProtocolKind::Mdi => format!("{}{}", BB84_STATES[source / 4], BB84_STATES[source % 4]),
        }
    }

    /// Largest deviation of any row sum from 1.
    pub fn normalization_defect(&self) -> T {
        (0..self.sources)
            .map(|s| (self.row(s).iter().copied().sum::<T>() - T::one()).abs())
            .fold(T::zero(), T::max)
    }

    /// CSV with columns `source,pattern,probability`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("source,pattern,probability\n");
        for src in 0..self.sources {
            for j in 0..PATTERNS {
                let _ = writeln!(
                    s,
                    "{},{},{:.17e}",
                    self.source_label(src),
                    j,
                    self.get(src, j)
                );
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn click_examples() {
        assert!((click_probability(C::new(0.0f64, 0.0), 1e-6) - 1e-6).abs() < 1e-18);
        let a = C::new(0.1f64.sqrt(), 0.0);
        assert!((click_probability(a, 0.0) - 0.095_162_581_964_040_43).abs() < 1e-15);
        assert_eq!(click_probability(C::new(0.0f64, 0.0), 0.0), 0.0);
    }

    #[test]
    fn pattern_bits_are_msb_first() {
        assert!(pattern_bit(8, 0));
        assert!(!pattern_bit(8, 1));
        assert!(pattern_bit(1, 3));
        let d = pattern_distribution(&[0.5f64, 0.25, 0.0, 1.0]);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((d[0b1001] - 0.5 * 0.75).abs() < 1e-15);
    }

    #[test]
    fn transmittance_matches_decibels() {
        assert!((transmittance(100.0f64, 0.2) - 0.01).abs() < 1e-15);
        assert_eq!(transmittance(0.0f64, 0.2), 1.0);
    }
}
