mod common;

use common::{mix, random_feasible, random_hermitian, rng, source_marginal};
use qkdrate::channel::{single_photon_oracle, Bb84ChannelParams, ChannelParams, DetectionScheme};
use qkdrate::decoy::PhotonBounds;
use qkdrate::keyrate::{
    gradient_f, minimize, minimize_with_bounds, objective_f, ConstraintMode, KeyRateProblem,
    SolverConfig,
};
use qkdrate::linalg::{kron2, ComplexMatrix, HermitianEigen};
use qkdrate::protocols::{build_bb84, build_mdi_with_strategy, BasisStrategy};
use qkdrate::quantum::DensityOperator;

const EPS: f64 = 1e-12;

fn perfect_bounds(p_z: f64) -> PhotonBounds<f64> {
    let t = single_photon_oracle(&ChannelParams::Bb84(Bb84ChannelParams {
        theta: 0.0,
        eta: 1.0,
        p_d: 0.0,
        p_z,
        scheme: DetectionScheme::Passive,
    }))
    .unwrap();
    PhotonBounds::exact(&t)
}

fn unconstrained(desc_len: usize, shape: (usize, usize)) -> PhotonBounds<f64> {
    PhotonBounds {
        protocol: qkdrate::protocols::ProtocolKind::Bb84,
        labels: (0..desc_len).map(|k| format!("e{k}")).collect(),
        lower: vec![0.0; desc_len],
        upper: vec![1.0; desc_len],
        shape,
    }
}

#[test]
fn random_feasible_states_match_source_marginal() {
    let desc = build_bb84(0.5, BasisStrategy::ZOnly).unwrap();
    let mut r = rng(1);
    for _ in 0..5 {
        let rho = random_feasible(&desc, &mut r);
        let m = source_marginal(&desc, rho.matrix());
        assert!(m.max_abs_diff(&desc.source_state) < 1e-12);
    }
}

#[test]
fn objective_is_convex_on_feasible_pairs() {
    let mut r = rng(7);
    for (i, desc) in [
        build_bb84(0.5, BasisStrategy::ZOnly).unwrap(),
        build_bb84(0.7, BasisStrategy::AllFour).unwrap(),
        build_mdi_with_strategy(0.5, BasisStrategy::ZzXx).unwrap(),
    ]
    .iter()
    .enumerate()
    {
        let n = if i == 2 { 20 } else { 40 };
        for k in 0..n {
            let a = random_feasible(desc, &mut r);
            let b = random_feasible(desc, &mut r);
            let t = (k as f64 + 0.5) / n as f64;
            let lhs = objective_f(&mix(&a, &b, t), desc, EPS).unwrap();
            let rhs = t * objective_f(&a, desc, EPS).unwrap()
                + (1.0 - t) * objective_f(&b, desc, EPS).unwrap();
            assert!(lhs <= rhs + 1e-10, "convexity violated: {lhs} > {rhs}");
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    let desc = build_bb84(0.5, BasisStrategy::ZzXx).unwrap();
    let mut r = rng(11);
    // Keep the point well inside the face so the probes stay positive.
    let floor = DensityOperator::new(kron2(
        &desc.source_state,
        &ComplexMatrix::identity(3).scale(1.0 / 3.0),
    ))
    .unwrap();
    let rho = mix(&random_feasible(&desc, &mut r), &floor, 0.8);
    let g = gradient_f(&rho, &desc, EPS).unwrap();
    let h = 1e-5;
    let support =
        HermitianEigen::new(&desc.source_state)
            .unwrap()
            .map(|v| if v > 1e-12 { 1.0 } else { 0.0 });
    let proj = kron2(&support, &ComplexMatrix::identity(desc.rest_dim));
    for _ in 0..20 {
        // Feasible states live on supp(ρ_source) ⊗ H_rest; stay inside it.
        let raw = proj.sandwich(&random_hermitian(desc.dim(), &mut r));
        // Traceless, so the perturbed points stay unit trace.
        let shift = proj.scale(raw.trace().re / proj.trace().re);
        let dir = (&raw - &shift).scale(0.05);
        let at = |s: f64| {
            let op = DensityOperator::new(rho.matrix() + &dir.scale(s)).unwrap();
            objective_f(&op, &desc, EPS).unwrap()
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let an = g.matrix().re_trace_product(&dir);
        let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8);
        assert!(rel < 1e-5, "fd {fd} vs analytic {an}");
    }
}

#[test]
fn certified_bound_lies_below_every_sampled_feasible_point() {
    let desc = build_bb84(0.5, BasisStrategy::ZOnly).unwrap();
    let bounds = unconstrained(desc.povms.len(), (desc.sources(), desc.outcomes));
    let m = minimize_with_bounds(
        &desc,
        &bounds,
        ConstraintMode::Fine,
        &SolverConfig::default(),
    )
    .unwrap();
    // Only the source constraints bind: Eve can hold everything, f = 0.
    assert!(m.f_upper() < 1e-6, "{}", m.f_upper());
    let mut r = rng(3);
    for _ in 0..100 {
        let rho = random_feasible(&desc, &mut r);
        assert!(m.f_certified() <= objective_f(&rho, &desc, EPS).unwrap() + 1e-12);
    }
}

#[test]
fn certified_bound_below_feasible_points_of_decoy_problem() {
    // Noisy but loose constraints, so random feasible points exist in quantity.
    let desc = build_bb84(0.5, BasisStrategy::ZOnly).unwrap();
    let mut r = rng(5);
    let samples: Vec<_> = (0..100).map(|_| random_feasible(&desc, &mut r)).collect();
    let n = desc.povms.len();
    let mut lower = vec![1.0f64; n];
    let mut upper = vec![0.0f64; n];
    for rho in &samples {
        for (k, g) in desc.povms.iter().enumerate() {
            let s = k / desc.outcomes;
            let v = rho.matrix().re_trace_product(g.op.matrix()) / desc.source_prior[s];
            lower[k] = lower[k].min(v);
            upper[k] = upper[k].max(v);
        }
    }
    let bounds = PhotonBounds {
        lower: lower.iter().map(|v| (v - 1e-9).max(0.0)).collect(),
        upper: upper.iter().map(|v| (v + 1e-9).min(1.0)).collect(),
        ..unconstrained(n, (desc.sources(), desc.outcomes))
    };
    let m = minimize_with_bounds(
        &desc,
        &bounds,
        ConstraintMode::Fine,
        &SolverConfig::default(),
    )
    .unwrap();
    for rho in &samples {
        assert!(m.f_certified() <= objective_f(rho, &desc, EPS).unwrap() + 1e-12);
    }
    assert!(m.f_certified() <= m.f_upper());
}

#[test]
fn perfect_and_product_states_bracket_mixtures() {
    let desc = build_bb84(0.5, BasisStrategy::ZOnly).unwrap();
    let problem =
        KeyRateProblem::from_bounds(&desc, &perfect_bounds(0.5), ConstraintMode::Fine, EPS)
            .unwrap();
    let m = minimize(&problem, &SolverConfig::default()).unwrap();
    let perfect = problem.density(&m.fw.x).unwrap();
    let perfect_f = objective_f(&perfect, &desc, EPS).unwrap();
    assert!((perfect_f - 0.25).abs() < 1e-4, "{perfect_f}");

    // Source marginal with Bob maximally mixed: no correlation, no key.
    let product = kron2(
        &desc.source_state,
        &ComplexMatrix::identity(3).scale(1.0 / 3.0),
    );
    let product = DensityOperator::new(product).unwrap();
    assert!(objective_f(&product, &desc, EPS).unwrap().abs() < 1e-9);

    let half = objective_f(&mix(&perfect, &product, 0.5), &desc, EPS).unwrap();
    assert!(half > 0.0 && half < perfect_f, "{half}");
}

#[test]
fn perfect_channel_gap_is_tight() {
    for p_z in [0.5, 0.8] {
        let desc = build_bb84(p_z, BasisStrategy::ZOnly).unwrap();
        let m = minimize_with_bounds(
            &desc,
            &perfect_bounds(p_z),
            ConstraintMode::Fine,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!((m.f_upper() - p_z * p_z).abs() < 1e-4);
        assert!(m.f_upper() - m.f_certified() <= 1e-3);
    }
}
