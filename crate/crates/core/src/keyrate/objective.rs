//! The relative-entropy objective `f(ρ) = D(G(ρ) ‖ Z(G(ρ)))` on a
//! block-diagonal variable, evaluated on compressed output subspaces.

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, HermitianEigen};
use crate::quantum::{log2_from_eigen, LOG_DOMAIN_TOL};
use crate::scalar::{Real, C};
use crate::sdp::Blocks;

/// Kraus operator `i` restricted to input block `b` and compressed onto its
/// component's output basis.
#[derive(Debug, Clone)]
struct Member<T: Real> {
    block: usize,
    kraus: ComplexMatrix<T>,
}

/// A set of mutually overlapping output spans, invariant under every key
/// projector. `segments[j]` is the dimension of the key-value-`j` part;
/// compressed coordinates list the segments in order.
#[derive(Debug, Clone)]
struct Component<T: Real> {
    segments: Vec<usize>,
    members: Vec<Member<T>>,
}

impl<T: Real> Component<T> {
    fn dim(&self) -> usize {
        self.segments.iter().sum()
    }

    fn image(&self, x: &Blocks<T>) -> ComplexMatrix<T> {
        let d = self.dim();
        let mut g = ComplexMatrix::zeros(d, d);
        for m in &self.members {
            g = &g + &m.kraus.sandwich(&x[m.block]);
        }
        g.hermitian_part()
    }

    /// `Z(G)` as its diagonal segment blocks.
    fn pinched(&self, g: &ComplexMatrix<T>) -> Vec<ComplexMatrix<T>> {
        let mut off = 0;
        self.segments
            .iter()
            .map(|&n| {
                let idx: Vec<usize> = (off..off + n).collect();
                off += n;
                g.select(&idx, &idx)
            })
            .collect()
    }
}

/// Objective data for a fixed protocol and input block structure.
#[derive(Debug, Clone)]
pub struct Objective<T: Real> {
    block_dims: Vec<usize>,
    components: Vec<Component<T>>,
    epsilon: T,
}

/// Orthonormal basis of the column span of `cols` (Gram–Schmidt, twice).
fn orthonormal_columns<T: Real>(vectors: &[Vec<C<T>>], tol: T) -> Vec<Vec<C<T>>> {
    let mut basis: Vec<Vec<C<T>>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        let n0 = norm(&w);
        if n0 <= T::zero() {
            continue;
        }
        for _ in 0..2 {
            for q in &basis {
                let d: C<T> = q.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= d * qi;
                }
            }
        }
        let n = norm(&w);
        if n > tol * n0.max(T::one()) {
            basis.push(w.into_iter().map(|z| z / n).collect());
        }
    }
    basis
}

fn norm<T: Real>(v: &[C<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}

fn columns<T: Real>(m: &ComplexMatrix<T>) -> Vec<Vec<C<T>>> {
    (0..m.cols())
        .map(|j| (0..m.rows()).map(|i| m[(i, j)]).collect())
        .collect()
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut k = i;
    while parent[k] != r {
        let next = parent[k];
        parent[k] = r;
        k = next;
    }
    r
}

impl<T: Real> Objective<T> {
    /// Builds the objective for Kraus operators acting on `⊕_b` blocks through
    /// the isometries `lifts[b]` (full input space × block dimension).
    pub fn new(
        kraus: &[ComplexMatrix<T>],
        keymaps: &[ComplexMatrix<T>],
        lifts: &[ComplexMatrix<T>],
        epsilon: T,
    ) -> Result<Self> {
        if !(epsilon > T::zero() && epsilon < T::one()) {
            return Err(Error::usage(format!("epsilon {epsilon} outside (0, 1)")));
        }
        if kraus.is_empty() || keymaps.is_empty() {
            return Err(Error::usage("objective needs Kraus operators and key maps"));
        }
        let tol = T::tol(1e-10);
        // Per (kraus, block): restricted Kraus and key-segment bases.
        let mut raw: Vec<(usize, ComplexMatrix<T>, Vec<Vec<Vec<C<T>>>>)> = Vec::new();
        for k in kraus {
            for (b, u) in lifts.iter().enumerate() {
                let kb = k.checked_mul(u)?;
                if kb.max_abs() <= tol {
                    continue;
                }
                let segs = keymaps
                    .iter()
                    .map(|z| Ok(orthonormal_columns(&columns(&z.checked_mul(&kb)?), tol)))
                    .collect::<Result<Vec<_>>>()?;
                raw.push((b, kb, segs));
            }
        }
        let n = raw.len();
        let mut parent: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for j in i + 1..n {
                let overlap = raw[i].2.iter().zip(&raw[j].2).any(|(si, sj)| {
                    si.iter().any(|u| {
                        sj.iter().any(|v| {
                            u.iter()
                                .zip(v)
                                .map(|(a, b)| a.conj() * b)
                                .sum::<C<T>>()
                                .norm()
                                > tol
                        })
                    })
                });
                if overlap {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[rj] = ri;
                    }
                }
            }
        }
        let mut roots: Vec<usize> = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            match roots.iter().position(|&x| x == r) {
                Some(p) => groups[p].push(i),
                None => {
                    roots.push(r);
                    groups.push(vec![i]);
                }
            }
        }
        let mut components = Vec::with_capacity(groups.len());
        for g in groups {
            let mut segments = Vec::with_capacity(keymaps.len());
            let mut basis: Vec<Vec<C<T>>> = Vec::new();
            for j in 0..keymaps.len() {
                let vecs: Vec<Vec<C<T>>> = g.iter().flat_map(|&i| raw[i].2[j].clone()).collect();
                let seg = orthonormal_columns(&vecs, tol);
                segments.push(seg.len());
                basis.extend(seg);
            }
            let out = raw[g[0]].1.rows();
            let v = ComplexMatrix::from_fn(out, basis.len(), |r, c| basis[c][r]);
            let members = g
                .iter()
                .map(|&i| Member {
                    block: raw[i].0,
                    kraus: v.adjoint_mul(&raw[i].1),
                })
                .collect();
            components.push(Component { segments, members });
        }
        Ok(Self {
            block_dims: lifts.iter().map(ComplexMatrix::cols).collect(),
            components,
            epsilon,
        })
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// Compressed output dimensions, one per component.
    pub fn component_dims(&self) -> Vec<usize> {
        self.components.iter().map(Component::dim).collect()
    }

    /// Upper bound on `f_ε − f` summed over components:
    /// `2ε(d−1) log₂(d / (ε(d−1)))` per component of dimension `d`.
    pub fn perturbation_slack(&self) -> T {
        let e = self.epsilon;
        self.components
            .iter()
            .map(|c| {
                let d = T::from_usize_lossy(c.dim());
                if d <= T::one() {
                    T::zero()
                } else {
                    T::lit(2.0) * e * (d - T::one()) * (d / (e * (d - T::one()))).log2()
                }
            })
            .sum()
    }

    fn check(&self, x: &Blocks<T>) -> Result<()> {
        if x.len() != self.block_dims.len()
            || x.iter().zip(&self.block_dims).any(|(b, &d)| b.rows() != d)
        {
            return Err(Error::usage("variable blocks do not match the objective"));
        }
        Ok(())
    }

    /// `f_ε(X) = Σ_c S(Z(G_c)_ε) − S(G_{c,ε})`, evaluated from spectra.
    pub fn value(&self, x: &Blocks<T>) -> Result<T> {
        self.check(x)?;
        let mut total = T::zero();
        for c in &self.components {
            let g = c.image(x);
            let d = T::from_usize_lossy(c.dim());
            let e = HermitianEigen::new(&g)?;
            total += self.xlogx_sum(&e.values, d)?;
            for seg in c.pinched(&g) {
                let es = HermitianEigen::new(&seg)?;
                total -= self.xlogx_sum(&es.values, d)?;
            }
        }
        Ok(total)
    }

    /// `Σ y log₂ y` over `y = (1−ε)λ + ε/d`.
    fn xlogx_sum(&self, values: &[T], d: T) -> Result<T> {
        let mut s = T::zero();
        for &l in values {
            if l < -T::lit(LOG_DOMAIN_TOL) {
                return Err(Error::domain(format!("G(ρ) has eigenvalue {l:e}")));
            }
            let y = (T::one() - self.epsilon) * l.max(T::zero()) + self.epsilon / d;
            s += y * y.log2();
        }
        Ok(s)
    }

    /// `∇f_ε = (1−ε) Σ K'† (log₂ G_ε − log₂ Z(G)_ε) K'` per block.
    pub fn gradient(&self, x: &Blocks<T>) -> Result<Blocks<T>> {
        self.check(x)?;
        let mut out: Blocks<T> = self
            .block_dims
            .iter()
            .map(|&d| ComplexMatrix::zeros(d, d))
            .collect();
        for c in &self.components {
            let g = c.image(x);
            let dim = c.dim();
            let lg = log2_from_eigen(&HermitianEigen::new(&g)?, self.epsilon)?;
            // log₂ of the pinched operator, perturbed with the component dimension.
            let mut lz = ComplexMatrix::zeros(dim, dim);
            let mut off = 0;
            let shift = self.epsilon / T::from_usize_lossy(dim);
            for seg in c.pinched(&g) {
                let e = HermitianEigen::new(&seg)?;
                let l = e.map(|v| ((T::one() - self.epsilon) * v.max(T::zero()) + shift).log2());
                for i in 0..seg.rows() {
                    for j in 0..seg.rows() {
                        lz[(off + i, off + j)] = l[(i, j)];
                    }
                }
                off += seg.rows();
            }
            // log2_from_eigen perturbs with the component dimension as well.
            let diff = (&lg - &lz).scale(T::one() - self.epsilon);
            for m in &c.members {
                let term = m.kraus.adjoint_sandwich(&diff);
                out[m.block] = &out[m.block] + &term;
            }
        }
        Ok(out.into_iter().map(|b| b.hermitian_part()).collect())
    }
}
