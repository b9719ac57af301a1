use crate::error::Result;
use crate::protocols::ProtocolKind;
use crate::scalar::{cplx, Real, C};

use super::{click_probability, pattern_distribution, MdiChannelParams, RawPatternTable, PATTERNS};

/// Charlie's output modes in the order returned by [`mdi_amplitudes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdiPort {
    H3,
    H4,
    V3,
    V4,
}

/// Polarization angle encoding H, V, +, −.
pub(crate) fn encoded_angle<T: Real>(state: usize) -> T {
    match state {
        0 => T::zero(),
        1 => T::FRAC_PI_2(),
        2 => T::FRAC_PI_4(),
        _ => -T::FRAC_PI_4(),
    }
}

/// Single-photon mode amplitudes over detectors (3H, 3V, 4H, 4V) for a
/// photon entering from Alice's (`from_alice`) or Bob's beamsplitter input.
pub(crate) fn photon_modes<T: Real>(angle: T, from_alice: bool) -> [C<T>; 4] {
    let s = T::FRAC_1_SQRT_2();
    let (c, v) = (angle.cos() * s, angle.sin() * s);
    if from_alice {
        [
            cplx(c, T::zero()),
            cplx(v, T::zero()),
            cplx(T::zero(), c),
            cplx(T::zero(), v),
        ]
    } else {
        [
            cplx(T::zero(), c),
            cplx(T::zero(), v),
            cplx(c, T::zero()),
            cplx(v, T::zero()),
        ]
    }
}

/// Amplitudes at ports (3H, 4H, 3V, 4V) for relative phase `phi`.
pub fn mdi_amplitudes<T: Real>(
    params: &MdiChannelParams<T>,
    mu_a: T,
    mu_b: T,
    state_a: usize,
    state_b: usize,
    phi: T,
) -> [C<T>; 4] {
    let half = T::lit(0.5);
    let ta = encoded_angle::<T>(state_a) + params.theta_a;
    let tb = encoded_angle::<T>(state_b) + params.theta_b;
    let a = (mu_a * params.eta_a * half).sqrt();
    let b = (mu_b * params.eta_b * half).sqrt();
    let e = cplx(phi.cos(), phi.sin());
    let i = cplx(T::zero(), T::one());
    let (ah, av) = (cplx(a * ta.cos(), T::zero()), cplx(a * ta.sin(), T::zero()));
    let (bh, bv) = (e * (b * tb.cos()), e * (b * tb.sin()));
    [ah + i * bh, i * ah + bh, av + i * bv, i * av + bv]
}

/// Phase-averaged 16×16 pattern table with the quadrature self-consistency
/// defect (max change between `phase_points/2` and `phase_points` nodes).
pub fn mdi_raw_table_checked<T: Real>(
    params: &MdiChannelParams<T>,
    mu_a: T,
    mu_b: T,
) -> Result<(RawPatternTable<T>, T)> {
    params.validate()?;
    let n = params.phase_points;
    let two_pi = T::TAU();
    let mut full = vec![T::zero(); 16 * PATTERNS];
    let mut half = vec![T::zero(); 16 * PATTERNS];
    for node in 0..n {
        let phi = two_pi * T::from_usize_lossy(node) / T::from_usize_lossy(n);
        for sa in 0..4 {
            for sb in 0..4 {
                let amp = mdi_amplitudes(params, mu_a, mu_b, sa, sb, phi);
                let clicks =
                    [amp[0], amp[2], amp[1], amp[3]].map(|x| click_probability(x, params.p_d));
                let dist = pattern_distribution(&clicks);
                let row = (sa * 4 + sb) * PATTERNS;
                for (j, &p) in dist.iter().enumerate() {
                    full[row + j] += p;
                    if node % 2 == 0 {
                        half[row + j] += p;
                    }
                }
            }
        }
    }
    let nf = T::from_usize_lossy(n);
    let nh = T::from_usize_lossy(n.div_ceil(2));
    let mut defect = T::zero();
    for (f, h) in full.iter_mut().zip(&half) {
        *f /= nf;
        defect = defect.max((*f - *h / nh).abs());
    }
    Ok((
        RawPatternTable::new(ProtocolKind::Mdi, vec![mu_a, mu_b], full)?,
        defect,
    ))
}

/// Phase-averaged pattern table; warns when node halving moves an entry
/// by more than 1e-10.
pub fn mdi_raw_table<T: Real>(
    params: &MdiChannelParams<T>,
    mu_a: T,
    mu_b: T,
) -> Result<RawPatternTable<T>> {
    let (table, defect) = mdi_raw_table_checked(params, mu_a, mu_b)?;
    if defect > T::lit(1e-10) {
        log::warn!(
            "phase quadrature with {} nodes not converged (halving changes entries by {:e})",
            params.phase_points,
            defect
        );
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(theta_a: f64, theta_b: f64, eta: f64, p_d: f64) -> MdiChannelParams<f64> {
        MdiChannelParams {
            theta_a,
            theta_b,
            eta_a: eta,
            eta_b: eta,
            p_d,
            phase_points: 128,
        }
    }

    #[test]
    fn amplitude_examples() {
        let p = params(0.0, 0.0, 0.5, 0.0);
        let a = mdi_amplitudes(&p, 0.2, 0.2, 0, 0, 0.0);
        let s = (0.2f64 * 0.5 / 2.0).sqrt();
        assert!((a[0] - C::new(s, s)).norm() < 1e-15);
        assert!((a[1].norm() - a[0].norm()).abs() < 1e-15);

        let m0 = mdi_amplitudes(&p, 0.3, 0.0, 2, 1, 0.0);
        let m1 = mdi_amplitudes(&p, 0.3, 0.0, 2, 1, 1.3);
        for (x, y) in m0.iter().zip(&m1) {
            assert!((x.norm() - y.norm()).abs() < 1e-15);
        }

        let q = params(std::f64::consts::FRAC_PI_2, 0.0, 1.0, 0.0);
        let h = mdi_amplitudes(&q, 0.3, 0.0, 0, 0, 0.4);
        assert!(h[0].norm() < 1e-15 && h[1].norm() < 1e-15);
    }

    #[test]
    fn slices_are_distributions_and_quadrature_converges() {
        let p = params(0.2, 0.0, 1.0, 1e-6);
        let (t, defect) = mdi_raw_table_checked(&p, 0.25, 0.25).unwrap();
        assert!(t.normalization_defect() < 1e-13);
        assert!(defect < 1e-10, "{defect}");
    }

    #[test]
    fn vacuum_inputs_never_click() {
        let t = mdi_raw_table(&params(0.1, -0.1, 1.0, 0.0), 0.0, 0.0).unwrap();
        for s in 0..16 {
            assert_eq!(t.get(s, 0), 1.0);
        }
    }

    #[test]
    fn bell_patterns_follow_polarizations() {
        let t = mdi_raw_table(&params(0.0, 0.0, 1.0, 0.0), 0.25, 0.25).unwrap();
        // HH never yields a coincidence in orthogonal polarizations.
        for j in [0b1100usize, 0b0011, 0b1001, 0b0110] {
            assert!(t.get(0, j) < 1e-15);
        }
        // HV splits evenly between the two Bell announcements.
        let hv = 1;
        let plus = t.get(hv, 0b1100) + t.get(hv, 0b0011);
        let minus = t.get(hv, 0b1001) + t.get(hv, 0b0110);
        assert!(plus > 1e-3 && (plus - minus).abs() < 1e-12);
        // ++ favours ψ+; coherent-state multi-photon terms still leak into ψ−.
        let pp = 2 * 4 + 2;
        assert!(t.get(pp, 0b1001) + t.get(pp, 0b0110) < t.get(pp, 0b1100) + t.get(pp, 0b0011));
    }
}
