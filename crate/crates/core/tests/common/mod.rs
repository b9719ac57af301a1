//! Seeded helpers shared by the integration tests.
#![allow(dead_code)]

use qkdrate::decoy::{LinearProgram, Sense};
use qkdrate::linalg::{inv_sqrt, kron2, ComplexMatrix, HermitianEigen};
use qkdrate::protocols::ProtocolDescription;
use qkdrate::quantum::DensityOperator;
use qkdrate::C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(d: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix<f64> {
    ComplexMatrix::from_fn(d, d, |_, _| {
        C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

pub fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix<f64> {
    random_matrix(d, rng).hermitian_part()
}

/// Random full-rank state whose source marginal equals the description's,
/// i.e. a point satisfying every source constraint.
pub fn random_feasible(
    desc: &ProtocolDescription<f64>,
    rng: &mut ChaCha8Rng,
) -> DensityOperator<f64> {
    let d = desc.dim();
    let rest = desc.rest_dim;
    let src = d / rest;
    let g = random_matrix(d, rng);
    let sigma = &g * &g.adjoint();
    let sigma_src = ComplexMatrix::from_fn(src, src, |i, j| {
        (0..rest).map(|k| sigma[(i * rest + k, j * rest + k)]).sum()
    });
    let sqrt_rho = HermitianEigen::new(&desc.source_state)
        .unwrap()
        .map(|v| v.max(0.0).sqrt());
    let x = &sqrt_rho * &inv_sqrt(&sigma_src).unwrap();
    let xi = kron2(&x, &ComplexMatrix::identity(rest));
    let rho = (&(&xi * &sigma) * &xi.adjoint()).hermitian_part();
    let tr = rho.trace().re;
    DensityOperator::new(rho.scale(1.0 / tr)).unwrap()
}

pub fn mix(a: &DensityOperator<f64>, b: &DensityOperator<f64>, t: f64) -> DensityOperator<f64> {
    DensityOperator::new(&a.matrix().scale(t) + &b.matrix().scale(1.0 - t)).unwrap()
}

/// Source marginal of a full-space operator.
pub fn source_marginal(
    desc: &ProtocolDescription<f64>,
    m: &ComplexMatrix<f64>,
) -> ComplexMatrix<f64> {
    let rest = desc.rest_dim;
    let src = desc.dim() / rest;
    ComplexMatrix::from_fn(src, src, |i, j| {
        (0..rest).map(|k| m[(i * rest + k, j * rest + k)]).sum()
    })
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-9 {
        return None;
    }
    let mut x = [0.0; 3];
    for (c, xc) in x.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        *xc = det(m) / d;
    }
    Some(x)
}

/// Best objective over all vertices of `{x ∈ [0,1]³ : rows}`; `None` if empty.
pub fn vertex_optimum(lp: &LinearProgram<f64>) -> Option<f64> {
    let mut planes: Vec<([f64; 3], f64)> = lp
        .rows
        .iter()
        .map(|r| ([r.coeffs[0], r.coeffs[1], r.coeffs[2]], r.rhs))
        .collect();
    for i in 0..3 {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        planes.push((e, 0.0));
        planes.push((e, 1.0));
    }
    let mut best: Option<f64> = None;
    for i in 0..planes.len() {
        for j in i + 1..planes.len() {
            for k in j + 1..planes.len() {
                let a = [planes[i].0, planes[j].0, planes[k].0];
                let Some(x) = solve3(a, [planes[i].1, planes[j].1, planes[k].1]) else {
                    continue;
                };
                if lp.max_violation(&x) > 1e-9 {
                    continue;
                }
                let v: f64 = lp.objective.iter().zip(&x).map(|(c, xi)| c * xi).sum();
                best = Some(match (best, lp.sense) {
                    (None, _) => v,
                    (Some(b), Sense::Min) => b.min(v),
                    (Some(b), Sense::Max) => b.max(v),
                });
            }
        }
    }
    best
}
