mod common;

use common::vertex_optimum;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

use qkdrate::channel::{
    bb84_raw_table, mdi_raw_table, single_photon_oracle, Bb84ChannelParams, ChannelParams,
    DetectionScheme, MdiChannelParams, RawPatternTable,
};
use qkdrate::decoy::{
    single_photon_bounds, solve_lp, DecoyEnsemble, LinearProgram, LpStatus, PhotonBounds, RowKind,
    Sense, BRACKET_TOL,
};
use qkdrate::mapping::{apply_mapping, mapping_for};

fn config(cases: u32, seed: u64) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..Config::default()
    }
}

fn bounds_from_raw(raw: &[RawPatternTable<f64>]) -> (DecoyEnsemble<f64>, PhotonBounds<f64>) {
    let m = mapping_for(raw[0].protocol);
    let obs: Vec<_> = raw.iter().map(|t| apply_mapping(t, &m).unwrap()).collect();
    let ens = DecoyEnsemble::from_observations(&obs).unwrap();
    let b = single_photon_bounds(&ens, 10).unwrap();
    (ens, b)
}

/// `inner` ⊆ `outer` entrywise, up to LP tolerance.
fn nested(inner: &PhotonBounds<f64>, outer: &PhotonBounds<f64>) -> bool {
    (0..inner.len()).all(|k| {
        inner.lower[k] >= outer.lower[k] - BRACKET_TOL
            && inner.upper[k] <= outer.upper[k] + BRACKET_TOL
    })
}

fn bb84_params() -> impl Strategy<Value = Bb84ChannelParams<f64>> {
    (
        -0.7f64..0.7,
        1e-3f64..1.0,
        0.0f64..1e-4,
        0.2f64..0.8,
        any::<bool>(),
    )
        .prop_map(|(theta, eta, p_d, p_z, act)| Bb84ChannelParams {
            theta,
            eta,
            p_d,
            p_z,
            scheme: if act {
                DetectionScheme::Active
            } else {
                DetectionScheme::Passive
            },
        })
}

fn mdi_params() -> impl Strategy<Value = MdiChannelParams<f64>> {
    (
        -0.5f64..0.5,
        -0.5f64..0.5,
        1e-2f64..1.0,
        1e-2f64..1.0,
        0.0f64..1e-4,
    )
        .prop_map(|(ta, tb, ea, eb, p_d)| MdiChannelParams {
            theta_a: ta,
            theta_b: tb,
            eta_a: ea,
            eta_b: eb,
            p_d,
            phase_points: 64,
        })
}

proptest! {
    #![proptest_config(config(60, 0x5eed_0001))]

    #[test]
    fn bb84_oracle_inside_bounds_and_refinement_is_monotone(
        params in bb84_params(),
        mu in 0.2f64..0.6,
        nu in 0.01f64..0.1,
        omega in 0.0f64..0.005,
        extra in 0.6f64..0.9,
    ) {
        let levels = [mu, nu, omega, extra, 0.5 * (mu + nu)];
        let raw: Vec<_> = levels.iter().map(|&m| bb84_raw_table(&params, m).unwrap()).collect();
        let (ens, full) = bounds_from_raw(&raw);
        let oracle = single_photon_oracle(&ChannelParams::Bb84(params)).unwrap();
        prop_assert!(full.misses(&oracle, BRACKET_TOL).is_empty(), "{:?}", full.misses(&oracle, BRACKET_TOL));

        let three = single_photon_bounds(&ens.subset(&[0, 1, 2]).unwrap(), 10).unwrap();
        prop_assert!(three.misses(&oracle, BRACKET_TOL).is_empty());
        prop_assert!(nested(&full, &three));
    }
}

proptest! {
    #![proptest_config(config(50, 0x5eed_0002))]

    #[test]
    fn mdi_oracle_inside_bounds_and_refinement_is_monotone(
        params in mdi_params(),
        mu in 0.2f64..0.5,
        nu in 0.01f64..0.1,
        omega in 0.0f64..0.005,
    ) {
        let levels = [mu, nu, omega];
        let mut raw = Vec::new();
        for &a in &levels {
            for &b in &levels {
                raw.push(mdi_raw_table(&params, a, b).unwrap());
            }
        }
        let (ens, full) = bounds_from_raw(&raw);
        let oracle = single_photon_oracle(&ChannelParams::Mdi(params)).unwrap();
        prop_assert!(full.misses(&oracle, BRACKET_TOL).is_empty(), "{:?}", full.misses(&oracle, BRACKET_TOL));

        // Drop the (ω, ·) and (·, ω) settings.
        let four = single_photon_bounds(&ens.subset(&[0, 1, 3, 4]).unwrap(), 10).unwrap();
        prop_assert!(four.misses(&oracle, BRACKET_TOL).is_empty());
        prop_assert!(nested(&full, &four));
    }
}

#[test]
fn many_intensities_shrink_intervals() {
    let params = Bb84ChannelParams {
        theta: 0.3,
        eta: 1.0,
        p_d: 1e-6,
        p_z: 0.5,
        scheme: DetectionScheme::Passive,
    };
    let three = [0.25, 0.02, 0.001];
    let twelve: Vec<f64> = (0..12).map(|i| 0.001 + 0.08 * i as f64).collect();
    let oracle = single_photon_oracle(&ChannelParams::Bb84(params)).unwrap();
    let b3 = bounds_from_raw(&three.map(|m| bb84_raw_table(&params, m).unwrap())).1;
    let b12 = bounds_from_raw(
        &twelve
            .iter()
            .map(|&m| bb84_raw_table(&params, m).unwrap())
            .collect::<Vec<_>>(),
    )
    .1;
    assert!(b3.misses(&oracle, BRACKET_TOL).is_empty());
    assert!(b12.misses(&oracle, BRACKET_TOL).is_empty());
    assert!(b12.max_width() < b3.max_width());
}

#[test]
fn noiseless_lossless_channel_has_no_single_photon_errors() {
    let params = Bb84ChannelParams {
        theta: 0.0,
        eta: 1.0,
        p_d: 0.0,
        p_z: 0.5,
        scheme: DetectionScheme::Passive,
    };
    let raw = [0.25, 0.02, 0.001].map(|m| bb84_raw_table(&params, m).unwrap());
    let b = bounds_from_raw(&raw).1;
    let k = b.labels.iter().position(|l| l == "H->V").unwrap();
    assert!(b.upper[k] <= 1e-6, "{}", b.upper[k]);
}

fn small_int() -> impl Strategy<Value = f64> {
    (-4i32..=4).prop_map(f64::from)
}

proptest! {
    #![proptest_config(config(200, 0x5eed_0003))]

    #[test]
    fn simplex_matches_vertex_enumeration(
        objective in prop::array::uniform3(small_int()),
        rows in prop::collection::vec((prop::array::uniform3(small_int()), 0usize..3, -3i32..=6), 1..5),
        max in any::<bool>(),
    ) {
        let mut lp = LinearProgram::unit_box(objective.to_vec(), if max { Sense::Max } else { Sense::Min });
        for (coeffs, kind, rhs) in rows {
            let kind = [RowKind::Le, RowKind::Ge, RowKind::Eq][kind];
            lp.push(coeffs.to_vec(), kind, f64::from(rhs) / 2.0);
        }
        let sol = solve_lp(&lp).unwrap();
        match vertex_optimum(&lp) {
            Some(v) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.value - v).abs() < 1e-9, "simplex {} vs vertices {}", sol.value, v);
                prop_assert!(lp.max_violation(&sol.x) < 1e-9);
            }
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
        }
    }
}
