//! Exact single-photon statistics through the same channel model, used as an
//! independent oracle for the decoy-state bounds.

use crate::error::Result;
use crate::mapping::{apply_mapping, bb84_mapping, mdi_mapping, ObservationTable};
use crate::protocols::ProtocolKind;
use crate::scalar::Real;

use super::bb84::bb84_coefficients;
use super::mdi::{encoded_angle, photon_modes};
use super::{
    pattern_bit, Bb84ChannelParams, DetectionScheme, MdiChannelParams, RawPatternTable, PATTERNS,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelParams<T: Real> {
    Bb84(Bb84ChannelParams<T>),
    Mdi(MdiChannelParams<T>),
}

impl<T: Real> ChannelParams<T> {
    pub fn protocol(&self) -> ProtocolKind {
        match self {
            ChannelParams::Bb84(_) => ProtocolKind::Bb84,
            ChannelParams::Mdi(_) => ProtocolKind::Mdi,
        }
    }
}

/// Pattern distribution when the detectors in `lit` receive photons (and so
/// click with certainty) while every other `active` detector only sees dark counts.
fn forced_pattern<T: Real>(lit: &[usize], active: [bool; 4], p_d: T, pattern: usize) -> T {
    let mut p = T::one();
    for k in 0..4 {
        let bit = pattern_bit(pattern, k);
        let q = if lit.contains(&k) {
            T::one()
        } else if active[k] {
            p_d
        } else {
            T::zero()
        };
        p *= if bit { q } else { T::one() - q };
    }
    p
}

fn bb84_single_photon_row<T: Real>(params: &Bb84ChannelParams<T>, state: usize, out: &mut Vec<T>) {
    let c = bb84_coefficients(params.theta, state);
    let eta = params.eta;
    let p_z = params.p_z;
    let p_x = T::one() - p_z;
    let mut row = [T::zero(); PATTERNS];
    // (mixture weight, active detectors, per-detector arrival probability)
    let modes: Vec<(T, [bool; 4], [T; 4])> = match params.scheme {
        DetectionScheme::Passive => vec![(
            T::one(),
            [true; 4],
            [
                p_z * c[0] * c[0],
                p_z * c[1] * c[1],
                p_x * c[2] * c[2],
                p_x * c[3] * c[3],
            ],
        )],
        DetectionScheme::Active => vec![
            (
                p_z,
                [true, true, false, false],
                [c[0] * c[0], c[1] * c[1], T::zero(), T::zero()],
            ),
            (
                p_x,
                [false, false, true, true],
                [T::zero(), T::zero(), c[2] * c[2], c[3] * c[3]],
            ),
        ],
    };
    for (w, active, arrive) in modes {
        for (j, slot) in row.iter_mut().enumerate() {
            let mut p = (T::one() - eta) * forced_pattern(&[], active, params.p_d, j);
            for (k, &a) in arrive.iter().enumerate() {
                if a > T::zero() {
                    p += eta * a * forced_pattern(&[k], active, params.p_d, j);
                }
            }
            *slot += w * p;
        }
    }
    out.extend(row);
}

fn mdi_single_photon_row<T: Real>(
    params: &MdiChannelParams<T>,
    sa: usize,
    sb: usize,
    out: &mut Vec<T>,
) {
    let u = photon_modes(encoded_angle::<T>(sa) + params.theta_a, true);
    let v = photon_modes(encoded_angle::<T>(sb) + params.theta_b, false);
    let (ea, eb) = (params.eta_a, params.eta_b);
    let active = [true; 4];
    let pd = params.p_d;
    let mut row = [T::zero(); PATTERNS];
    for (j, slot) in row.iter_mut().enumerate() {
        let mut p = (T::one() - ea) * (T::one() - eb) * forced_pattern(&[], active, pd, j);
        for x in 0..4 {
            p += ea * (T::one() - eb) * u[x].norm_sqr() * forced_pattern(&[x], active, pd, j);
            p += (T::one() - ea) * eb * v[x].norm_sqr() * forced_pattern(&[x], active, pd, j);
            // Both photons arrive: bosonic two-photon amplitudes.
            p += ea
                * eb
                * T::lit(2.0)
                * (u[x] * v[x]).norm_sqr()
                * forced_pattern(&[x], active, pd, j);
            for y in x + 1..4 {
                let amp = u[x] * v[y] + u[y] * v[x];
                p += ea * eb * amp.norm_sqr() * forced_pattern(&[x, y], active, pd, j);
            }
        }
        *slot = p;
    }
    out.extend(row);
}

/// Raw pattern statistics for exactly one photon per source.
pub fn single_photon_raw<T: Real>(params: &ChannelParams<T>) -> Result<RawPatternTable<T>> {
    match params {
        ChannelParams::Bb84(p) => {
            p.validate()?;
            let mut probs = Vec::with_capacity(4 * PATTERNS);
            for s in 0..4 {
                bb84_single_photon_row(p, s, &mut probs);
            }
            RawPatternTable::new(ProtocolKind::Bb84, vec![T::one()], probs)
        }
        ChannelParams::Mdi(p) => {
            p.validate()?;
            let mut probs = Vec::with_capacity(16 * PATTERNS);
            for sa in 0..4 {
                for sb in 0..4 {
                    mdi_single_photon_row(p, sa, sb, &mut probs);
                }
            }
            RawPatternTable::new(ProtocolKind::Mdi, vec![T::one(), T::one()], probs)
        }
    }
}

/// Single-photon (pair) observation table after the standard mapping.
pub fn single_photon_oracle<T: Real>(params: &ChannelParams<T>) -> Result<ObservationTable<T>> {
    let raw = single_photon_raw(params)?;
    match params {
        ChannelParams::Bb84(_) => apply_mapping(&raw, &bb84_mapping()),
        ChannelParams::Mdi(_) => apply_mapping(&raw, &mdi_mapping()),
    }
}
