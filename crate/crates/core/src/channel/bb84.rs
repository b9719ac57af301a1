use crate::error::Result;
use crate::protocols::ProtocolKind;
use crate::scalar::{re, Real, C};

use super::{
    click_probability, pattern_distribution, Bb84ChannelParams, DetectionScheme, RawPatternTable,
    PATTERNS,
};

/// Unit-intensity amplitude coefficients (H, V, +, − detectors) for `state`,
/// without any basis-splitting factor.
pub(crate) fn bb84_coefficients<T: Real>(theta: T, state: usize) -> [T; 4] {
    let alpha = T::FRAC_PI_4() - theta;
    let (ct, st) = (theta.cos(), theta.sin());
    let (ca, sa) = (alpha.cos(), alpha.sin());
    match state {
        0 => [ct, st, ca, sa],
        1 => [-st, ct, sa, -ca],
        2 => [sa, ca, ct, -st],
        _ => [ca, -sa, st, ct],
    }
}

/// Amplitudes at Bob's four detectors, scaled by `√(μη)`; the passive
/// scheme includes the `√pZ`, `√pX` beamsplitter factors.
pub fn bb84_amplitudes<T: Real>(params: &Bb84ChannelParams<T>, state: usize, mu: T) -> [C<T>; 4] {
    let c = bb84_coefficients(params.theta, state);
    let scale = (mu * params.eta).sqrt();
    let (z, x) = match params.scheme {
        DetectionScheme::Passive => (params.p_z.sqrt(), (T::one() - params.p_z).sqrt()),
        DetectionScheme::Active => (T::one(), T::one()),
    };
    [
        re(c[0] * z * scale),
        re(c[1] * z * scale),
        re(c[2] * x * scale),
        re(c[3] * x * scale),
    ]
}

/// 4×16 pattern table at intensity `mu`.
pub fn bb84_raw_table<T: Real>(params: &Bb84ChannelParams<T>, mu: T) -> Result<RawPatternTable<T>> {
    params.validate()?;
    let mut probs = Vec::with_capacity(4 * PATTERNS);
    for state in 0..4 {
        let amps = bb84_amplitudes(params, state, mu);
        let clicks = amps.map(|a| click_probability(a, params.p_d));
        match params.scheme {
            DetectionScheme::Passive => probs.extend(pattern_distribution(&clicks)),
            DetectionScheme::Active => {
                let z = pattern_distribution(&[clicks[0], clicks[1], T::zero(), T::zero()]);
                let x = pattern_distribution(&[T::zero(), T::zero(), clicks[2], clicks[3]]);
                let p_z = params.p_z;
                let p_x = T::one() - p_z;
                probs.extend(z.iter().zip(&x).map(|(&a, &b)| p_z * a + p_x * b));
            }
        }
    }
    RawPatternTable::new(ProtocolKind::Bb84, vec![mu], probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(theta: f64, scheme: DetectionScheme) -> Bb84ChannelParams<f64> {
        Bb84ChannelParams {
            theta,
            eta: 1.0,
            p_d: 1e-6,
            p_z: 0.5,
            scheme,
        }
    }

    #[test]
    fn amplitude_examples() {
        let p = Bb84ChannelParams {
            theta: 0.0,
            eta: 0.3,
            p_d: 0.0,
            p_z: 0.7,
            scheme: DetectionScheme::Passive,
        };
        let mu = 0.25f64;
        let a = bb84_amplitudes(&p, 0, mu);
        let me = mu * 0.3;
        let want = [
            (0.7 * me).sqrt(),
            0.0,
            (0.3 * me / 2.0).sqrt(),
            (0.3 * me / 2.0).sqrt(),
        ];
        for (x, w) in a.iter().zip(want) {
            assert!((x.re - w).abs() < 1e-15 && x.im == 0.0);
        }
        let p2 = Bb84ChannelParams {
            theta: std::f64::consts::FRAC_PI_2,
            ..p
        };
        let a = bb84_amplitudes(&p2, 1, mu);
        assert!((a[0].re + (0.7 * me).sqrt()).abs() < 1e-15);
        assert!(a[1].re.abs() < 1e-15);
        assert!(bb84_amplitudes(&p, 2, 0.0).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn rows_are_distributions() {
        for scheme in [DetectionScheme::Passive, DetectionScheme::Active] {
            let t = bb84_raw_table(&params(0.3, scheme), 0.25).unwrap();
            assert!(t.normalization_defect() < 1e-14);
        }
    }

    #[test]
    fn single_clicks_dominate_and_product_rule_holds() {
        let p = params(0.3, DetectionScheme::Passive);
        let t = bb84_raw_table(&p, 0.25).unwrap();
        for s in 0..4 {
            let singles = [8usize, 4, 2, 1]
                .iter()
                .map(|&j| t.get(s, j))
                .fold(0.0, f64::max);
            for j in [3usize, 5, 6, 7, 9, 10, 11, 12, 13, 14, 15] {
                assert!(t.get(s, j) < singles);
            }
        }
        let c = bb84_amplitudes(&p, 0, 0.25).map(|a| click_probability(a, p.p_d));
        let want = c[0] * c[1] * (1.0 - c[2]) * (1.0 - c[3]);
        assert!((t.get(0, 12) - want).abs() < 1e-17);
    }

    #[test]
    fn vacuum_input_never_clicks() {
        let p = Bb84ChannelParams {
            p_d: 0.0,
            ..params(0.1, DetectionScheme::Passive)
        };
        let t = bb84_raw_table(&p, 0.0).unwrap();
        for s in 0..4 {
            assert_eq!(t.get(s, 0), 1.0);
        }
    }

    #[test]
    fn active_scheme_has_no_cross_basis_clicks() {
        let t = bb84_raw_table(&params(0.2, DetectionScheme::Active), 0.5).unwrap();
        for s in 0..4 {
            for j in [0b1010usize, 0b1001, 0b0110, 0b0101, 0b1111] {
                assert_eq!(t.get(s, j), 0.0);
            }
        }
    }
}
