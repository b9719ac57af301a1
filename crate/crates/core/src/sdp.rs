//! Linear-objective semidefinite programs over block-diagonal density
//! operators with equality and interval constraints, solved by an
//! infeasible-start HKM primal-dual interior-point method with Mehrotra
//! predictor-corrector steps.
//!
//! Every solve also returns a rigorous lower bound on the optimum built from
//! the final dual multipliers, valid whether or not they are dual feasible:
//! for any feasible `X` with unit trace,
//! `⟨C,X⟩ = ⟨C − A*y, X⟩ + Σ yᵢ⟨Aᵢ,X⟩ ≥ λ_min(C − A*y) + Σ min_{t∈[Lᵢ,Uᵢ]} yᵢ t`.

use crate::error::{Error, Result};
use crate::linalg::{inv_hpd, inv_sqrt, min_eigenvalue, ComplexMatrix, RealSquare};
use crate::scalar::Real;

/// Block-diagonal Hermitian operator stored block by block.
pub type Blocks<T> = Vec<ComplexMatrix<T>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintKind<T: Real> {
    Equality(T),
    Interval(T, T),
}

#[derive(Debug, Clone)]
pub struct SdpConstraint<T: Real> {
    pub label: String,
    pub blocks: Blocks<T>,
    pub kind: ConstraintKind<T>,
}

/// `{X = ⊕ X_b ⪰ 0 : Tr X = 1, ⟨A_i, X⟩ = v_i or ∈ [L_i, U_i]}`.
#[derive(Debug, Clone)]
pub struct FeasibleSet<T: Real> {
    pub block_dims: Vec<usize>,
    pub constraints: Vec<SdpConstraint<T>>,
}

impl<T: Real> FeasibleSet<T> {
    pub fn new(block_dims: Vec<usize>) -> Result<Self> {
        if block_dims.is_empty() || block_dims.contains(&0) {
            return Err(Error::usage("feasible set needs non-empty blocks"));
        }
        Ok(Self {
            block_dims,
            constraints: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.block_dims.iter().sum()
    }

    fn check_blocks(&self, blocks: &Blocks<T>) -> Result<()> {
        if blocks.len() != self.block_dims.len()
            || blocks
                .iter()
                .zip(&self.block_dims)
                .any(|(b, &d)| b.rows() != d || b.cols() != d)
        {
            return Err(Error::usage(
                "constraint block shapes do not match the feasible set",
            ));
        }
        if let Some(b) = blocks
            .iter()
            .find(|b| b.hermiticity_defect() > T::lit(1e-10))
        {
            return Err(Error::domain(format!(
                "constraint operator not Hermitian (defect {:e})",
                b.hermiticity_defect()
            )));
        }
        Ok(())
    }

    pub fn add_equality(
        &mut self,
        label: impl Into<String>,
        blocks: Blocks<T>,
        value: T,
    ) -> Result<()> {
        self.check_blocks(&blocks)?;
        self.constraints.push(SdpConstraint {
            label: label.into(),
            blocks,
            kind: ConstraintKind::Equality(value),
        });
        Ok(())
    }

    /// Adds `lower ≤ ⟨A, X⟩ ≤ upper`; a zero-width interval becomes an equality.
    pub fn add_interval(
        &mut self,
        label: impl Into<String>,
        blocks: Blocks<T>,
        lower: T,
        upper: T,
    ) -> Result<()> {
        let label = label.into();
        self.check_blocks(&blocks)?;
        if !(lower <= upper) {
            return Err(Error::usage(format!(
                "constraint {label}: lower {lower} exceeds upper {upper}"
            )));
        }
        let kind = if lower == upper {
            ConstraintKind::Equality(lower)
        } else {
            ConstraintKind::Interval(lower, upper)
        };
        self.constraints.push(SdpConstraint {
            label,
            blocks,
            kind,
        });
        Ok(())
    }

    /// Largest constraint violation of `x`, trace included (PSD not checked).
    pub fn violation(&self, x: &Blocks<T>) -> T {
        let tr: T = x.iter().map(|b| b.trace().re).sum();
        let mut v = (tr - T::one()).abs();
        for c in &self.constraints {
            let a = inner(&c.blocks, x);
            v = v.max(match c.kind {
                ConstraintKind::Equality(e) => (a - e).abs(),
                ConstraintKind::Interval(l, u) => (l - a).max(a - u).max(T::zero()),
            });
        }
        v
    }
}

/// `Σ_b Re Tr(A_b X_b)`.
pub fn inner<T: Real>(a: &Blocks<T>, x: &Blocks<T>) -> T {
    a.iter().zip(x).map(|(p, q)| p.re_trace_product(q)).sum()
}

pub fn identity_blocks<T: Real>(dims: &[usize]) -> Blocks<T> {
    dims.iter().map(|&d| ComplexMatrix::identity(d)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpSettings {
    /// Relative duality-gap and infeasibility stop.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution<T: Real> {
    pub x: Blocks<T>,
    pub primal_value: T,
    pub dual_value: T,
    /// Rigorous lower bound on `min ⟨C, X⟩` over the feasible set.
    pub lower_bound: T,
    pub iterations: usize,
    pub primal_infeasibility: T,
    pub dual_infeasibility: T,
    pub converged: bool,
}

impl<T: Real> SdpSolution<T> {
    /// Full block-diagonal matrix of the primal solution.
    pub fn assemble(&self) -> ComplexMatrix<T> {
        assemble(&self.x)
    }
}

pub fn assemble<T: Real>(blocks: &Blocks<T>) -> ComplexMatrix<T> {
    let n: usize = blocks.iter().map(ComplexMatrix::rows).sum();
    let mut out = ComplexMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        for i in 0..b.rows() {
            for j in 0..b.cols() {
                out[(off + i, off + j)] = b[(i, j)];
            }
        }
        off += b.rows();
    }
    out
}

/// A row of the standard-form problem `A(X) + β s = b`.
struct StdRow<T: Real> {
    a: Blocks<T>,
    b: T,
    /// Slack index and its sign β.
    slack: Option<(usize, T)>,
    /// Constraint this row came from (`None` for the trace row).
    origin: Option<usize>,
    /// Normalization divisor applied to `a` and `b`.
    scale: T,
}

struct Standard<T: Real> {
    rows: Vec<StdRow<T>>,
    slacks: usize,
}

/// Normalizes rows, splits intervals into two slack rows and drops
/// linearly dependent equalities.
fn standardize<T: Real>(set: &FeasibleSet<T>) -> Standard<T> {
    let mut rows = Vec::new();
    let mut slacks = 0;
    let norm = |a: &Blocks<T>| {
        a.iter()
            .map(|b| b.frobenius_norm().powi(2))
            .sum::<T>()
            .sqrt()
    };
    let trace = identity_blocks::<T>(&set.block_dims);
    let tn = norm(&trace);
    rows.push(StdRow {
        a: trace.iter().map(|b| b.scale(T::one() / tn)).collect(),
        b: T::one() / tn,
        slack: None,
        origin: None,
        scale: tn,
    });
    // Orthonormal basis of accepted equality rows for the dependency test.
    let mut basis: Vec<Vec<T>> = vec![flatten(&rows[0].a)];
    let mut basis_vals: Vec<T> = vec![rows[0].b];
    let dep_tol = T::tol(1e-9);
    for (ci, c) in set.constraints.iter().enumerate() {
        let n = norm(&c.blocks);
        if n <= T::zero() {
            let ok = match c.kind {
                ConstraintKind::Equality(v) => v.abs() <= T::lit(1e-12),
                ConstraintKind::Interval(l, u) => l <= T::zero() && u >= T::zero(),
            };
            if !ok {
                log::warn!("constraint {} has a zero operator but excludes 0", c.label);
            }
            continue;
        }
        let a: Blocks<T> = c.blocks.iter().map(|b| b.scale(T::one() / n)).collect();
        match c.kind {
            ConstraintKind::Equality(v) => {
                let mut r = flatten(&a);
                let mut val = v / n;
                for (q, &qv) in basis.iter().zip(&basis_vals) {
                    let d: T = r.iter().zip(q).map(|(x, y)| *x * *y).sum();
                    for (x, y) in r.iter_mut().zip(q) {
                        *x -= d * *y;
                    }
                    val -= d * qv;
                }
                let rn = r.iter().map(|x| *x * *x).sum::<T>().sqrt();
                if rn <= dep_tol {
                    if val.abs() > T::lit(1e-8) {
                        log::warn!(
                            "dependent equality {} is inconsistent with earlier ones by {:e}",
                            c.label,
                            val
                        );
                    }
                    continue;
                }
                for x in r.iter_mut() {
                    *x /= rn;
                }
                basis.push(r);
                basis_vals.push(val / rn);
                rows.push(StdRow {
                    a,
                    b: v / n,
                    slack: None,
                    origin: Some(ci),
                    scale: n,
                });
            }
            ConstraintKind::Interval(l, u) => {
                rows.push(StdRow {
                    a: a.clone(),
                    b: l / n,
                    slack: Some((slacks, -T::one())),
                    origin: Some(ci),
                    scale: n,
                });
                rows.push(StdRow {
                    a,
                    b: u / n,
                    slack: Some((slacks + 1, T::one())),
                    origin: Some(ci),
                    scale: n,
                });
                slacks += 2;
            }
        }
    }
    Standard { rows, slacks }
}

fn flatten<T: Real>(a: &Blocks<T>) -> Vec<T> {
    let mut out = Vec::new();
    for b in a {
        for z in b.data() {
            out.push(z.re);
            out.push(z.im);
        }
    }
    out
}

fn apply_adjoint<T: Real>(rows: &[StdRow<T>], y: &[T], dims: &[usize]) -> Blocks<T> {
    let mut out: Blocks<T> = dims.iter().map(|&d| ComplexMatrix::zeros(d, d)).collect();
    for (r, &yi) in rows.iter().zip(y) {
        if yi != T::zero() {
            for (o, a) in out.iter_mut().zip(&r.a) {
                o.add_assign_scaled(a, yi);
            }
        }
    }
    out
}

/// Largest α ≤ cap keeping `X + αΔX ⪰ 0`.
fn psd_step<T: Real>(x: &Blocks<T>, dx: &Blocks<T>, cap: T) -> Result<T> {
    let mut alpha = cap;
    for (xb, db) in x.iter().zip(dx) {
        let l = inv_sqrt(xb)?;
        let w = (&(&l * db) * &l).hermitian_part();
        let lmin = min_eigenvalue(&w)?;
        if lmin < T::zero() {
            alpha = alpha.min(-T::one() / lmin);
        }
    }
    Ok(alpha)
}

fn vec_step<T: Real>(v: &[T], dv: &[T], cap: T) -> T {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < T::zero())
        .map(|(x, d)| -*x / *d)
        .fold(cap, T::min)
}

fn blocks_norm<T: Real>(a: &Blocks<T>) -> T {
    a.iter()
        .map(|b| b.frobenius_norm().powi(2))
        .sum::<T>()
        .sqrt()
}

fn vnorm<T: Real>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).sum::<T>().sqrt()
}

/// Rigorous lower bound on `min ⟨C, X⟩` for the multipliers `y` of the
/// standardized rows.
fn certified_bound<T: Real>(
    set: &FeasibleSet<T>,
    std: &Standard<T>,
    c: &Blocks<T>,
    y: &[T],
) -> Result<T> {
    let s = apply_adjoint(&std.rows, y, &set.block_dims);
    let mut lmin = T::infinity();
    for (cb, sb) in c.iter().zip(&s) {
        lmin = lmin.min(min_eigenvalue(&(cb - sb))?);
    }
    // Aggregate multipliers per original constraint in unscaled units.
    let mut coef = vec![T::zero(); set.constraints.len()];
    let mut bound = lmin;
    for (r, &yi) in std.rows.iter().zip(y) {
        match r.origin {
            None => bound += yi * r.b,
            Some(ci) => coef[ci] += yi / r.scale,
        }
    }
    for (c, &k) in set.constraints.iter().zip(&coef) {
        bound += match c.kind {
            ConstraintKind::Equality(v) => k * v,
            ConstraintKind::Interval(l, u) => {
                if k >= T::zero() {
                    k * l
                } else {
                    k * u
                }
            }
        };
    }
    Ok(bound)
}

/// Minimizes `⟨C, X⟩` over the feasible set.
///
/// Returns an error only when the iteration breaks down numerically or ends
/// far from feasibility; mild non-convergence is reported in the solution.
pub fn linear_sdp_subproblem<T: Real>(
    objective: &Blocks<T>,
    set: &FeasibleSet<T>,
    settings: &SdpSettings,
) -> Result<SdpSolution<T>> {
    if objective.len() != set.block_dims.len()
        || objective
            .iter()
            .zip(&set.block_dims)
            .any(|(b, &d)| b.rows() != d || b.cols() != d)
    {
        return Err(Error::usage(
            "objective block shapes do not match the feasible set",
        ));
    }
    let c: Blocks<T> = objective.iter().map(|b| b.hermitian_part()).collect();
    let std = standardize(set);
    let rows = &std.rows;
    let m = rows.len();
    let ns = std.slacks;
    let dims = &set.block_dims;
    let n_tot = T::from_usize_lossy(set.dim() + ns);
    let tol = T::tol(settings.tol);

    let c_norm = blocks_norm(&c);
    let b_norm = vnorm(&rows.iter().map(|r| r.b).collect::<Vec<_>>());
    let mut x: Blocks<T> = dims.iter().map(|&d| ComplexMatrix::identity(d)).collect();
    let z0 = T::one().max(c_norm);
    let mut zm: Blocks<T> = dims
        .iter()
        .map(|&d| ComplexMatrix::<T>::identity(d).scale(z0))
        .collect();
    let mut y = vec![T::zero(); m];
    let mut s = vec![T::one(); ns];
    let mut z = vec![z0; ns];
    let mut slack_row = vec![(0usize, T::zero()); ns];
    for (i, r) in rows.iter().enumerate() {
        if let Some((k, beta)) = r.slack {
            slack_row[k] = (i, beta);
        }
    }

    let mut converged = false;
    let mut iterations = 0;
    let mut stalls = 0;
    let (mut pinf, mut dinf) = (T::infinity(), T::infinity());
    // Best iterate by max(pinf, dinf, gap); ill-conditioned late steps can
    // move away from it.
    let mut best: Option<(T, Blocks<T>, Vec<T>, T, T)> = None;
    for it in 0..settings.max_iters {
        iterations = it + 1;
        // Residuals.
        let mut rp: Vec<T> = rows.iter().map(|r| r.b - inner(&r.a, &x)).collect();
        for (k, &(i, beta)) in slack_row.iter().enumerate() {
            rp[i] -= beta * s[k];
        }
        let aty = apply_adjoint(rows, &y, dims);
        let rd: Blocks<T> = c
            .iter()
            .zip(&aty)
            .zip(&zm)
            .map(|((cb, ab), zb)| &(cb - ab) - zb)
            .collect();
        let rds: Vec<T> = (0..ns)
            .map(|k| {
                let (i, beta) = slack_row[k];
                -beta * y[i] - z[k]
            })
            .collect();
        let xz = inner(&x, &zm) + s.iter().zip(&z).map(|(a, b)| *a * *b).sum::<T>();
        let mu = xz / n_tot;
        let pobj = inner(&c, &x);
        let dobj: T = rows.iter().zip(&y).map(|(r, &yi)| r.b * yi).sum();
        pinf = vnorm(&rp) / (T::one() + b_norm);
        dinf = (blocks_norm(&rd) + vnorm(&rds)) / (T::one() + c_norm);
        let gap = (pobj - dobj).abs() / (T::one() + pobj.abs() + dobj.abs());
        log::trace!("sdp it {it}: pobj {pobj:e} dobj {dobj:e} gap {gap:e} pinf {pinf:e} dinf {dinf:e} mu {mu:e}");
        if gap < tol && pinf < tol && dinf < tol {
            converged = true;
            break;
        }
        let merit = pinf.max(dinf).max(gap);
        match &best {
            Some((b, ..)) if merit >= *b => {
                if *b < T::lit(1e-4) && merit > *b * T::lit(1e4) {
                    log::debug!("SDP diverging at iteration {it}; keeping best iterate");
                    break;
                }
            }
            _ => best = Some((merit, x.clone(), y.clone(), pinf, dinf)),
        }
        if !mu.is_finite() {
            return Err(Error::numerical(
                "interior-point complementarity became non-finite",
            ));
        }

        let computed = (|| -> Result<_> {
            let zinv: Blocks<T> = zm.iter().map(inv_hpd).collect::<Result<_>>()?;
            // Schur complement M_ij = ⟨A_i, X A_j Z⁻¹⟩ + slack terms.
            let g: Vec<Blocks<T>> = rows
                .iter()
                .map(|r| {
                    x.iter()
                        .zip(&r.a)
                        .zip(&zinv)
                        .map(|((xb, ab), zb)| &(xb * ab) * zb)
                        .collect()
                })
                .collect();
            let mut mat = RealSquare::zeros(m);
            for i in 0..m {
                for j in i..m {
                    let v = inner(&rows[i].a, &g[j]);
                    mat.set(i, j, v);
                    mat.set(j, i, v);
                }
            }
            for (k, &(i, _)) in slack_row.iter().enumerate() {
                mat.add(i, i, s[k] / z[k]);
            }
            let x_rd_zinv: Blocks<T> = x
                .iter()
                .zip(&rd)
                .zip(&zinv)
                .map(|((xb, rb), zb)| &(xb * rb) * zb)
                .collect();

            // Solve for a direction with centering σ and optional corrector terms.
            let direction = |sigma: T,
                             corr: Option<(&Blocks<T>, &[T])>|
             -> Result<(Vec<T>, Blocks<T>, Blocks<T>, Vec<T>, Vec<T>)> {
                let smu = sigma * mu;
                // K = σμZ⁻¹ − X − X R_d Z⁻¹ − E
                let kmat: Blocks<T> = (0..dims.len())
                    .map(|b| {
                        let mut k = &(&zinv[b].scale(smu) - &x[b]) - &x_rd_zinv[b];
                        if let Some((e, _)) = corr {
                            k = &k - &e[b];
                        }
                        k
                    })
                    .collect();
                let kv: Vec<T> = (0..ns)
                    .map(|k| {
                        let mut v = smu / z[k] - s[k] - s[k] / z[k] * rds[k];
                        if let Some((_, ev)) = corr {
                            v -= ev[k];
                        }
                        v
                    })
                    .collect();
                let mut rhs: Vec<T> = rows
                    .iter()
                    .zip(&rp)
                    .map(|(r, &p)| p - inner(&r.a, &kmat))
                    .collect();
                for (k, &(i, beta)) in slack_row.iter().enumerate() {
                    rhs[i] -= beta * kv[k];
                }
                let dy = mat.solve_spd(&rhs)?;
                let atdy = apply_adjoint(rows, &dy, dims);
                let dzm: Blocks<T> = rd.iter().zip(&atdy).map(|(r, a)| r - a).collect();
                let dz: Vec<T> = (0..ns)
                    .map(|k| {
                        let (i, beta) = slack_row[k];
                        rds[k] - beta * dy[i]
                    })
                    .collect();
                let dx: Blocks<T> = (0..dims.len())
                    .map(|b| (&kmat[b] - &(&(&x[b] * &dzm[b]) * &zinv[b])).hermitian_part())
                    .collect();
                let ds: Vec<T> = (0..ns).map(|k| kv[k] - s[k] / z[k] * dz[k]).collect();
                Ok((dy, dx, dzm, ds, dz))
            };

            // Predictor.
            let (_, dxa, dza, dsa, dza_v) = direction(T::zero(), None)?;
            let ap = psd_step(&x, &dxa, T::one())?.min(vec_step(&s, &dsa, T::one()));
            let ad = psd_step(&zm, &dza, T::one())?.min(vec_step(&z, &dza_v, T::one()));
            let mut xz_aff = T::zero();
            for b in 0..dims.len() {
                let xa = &x[b] + &dxa[b].scale(ap);
                let za = &zm[b] + &dza[b].scale(ad);
                xz_aff += xa.re_trace_product(&za);
            }
            for k in 0..ns {
                xz_aff += (s[k] + ap * dsa[k]) * (z[k] + ad * dza_v[k]);
            }
            let sigma = (xz_aff / xz).max(T::zero()).min(T::one()).powi(3);
            let e: Blocks<T> = (0..dims.len())
                .map(|b| &(&dxa[b] * &dza[b]) * &zinv[b])
                .collect();
            let ev: Vec<T> = (0..ns).map(|k| dsa[k] * dza_v[k] / z[k]).collect();

            // Corrector.
            let (dy, dx, dzm, ds, dz) = direction(sigma, Some((&e, &ev)))?;
            let gamma = T::lit(0.98);
            let ap = (gamma * psd_step(&x, &dx, T::lit(1e6))?.min(vec_step(&s, &ds, T::lit(1e6))))
                .min(T::one());
            let ad = (gamma
                * psd_step(&zm, &dzm, T::lit(1e6))?.min(vec_step(&z, &dz, T::lit(1e6))))
            .min(T::one());
            Ok((dy, dx, dzm, ds, dz, ap, ad))
        })();
        // Near the optimum the iterates become ill-conditioned; once some
        // progress has been made, keep the last point (the bound below is
        // valid for any multipliers).
        let (dy, dx, dzm, ds, dz, ap, ad) = match computed {
            Ok(v) => v,
            Err(e) if it > 0 => {
                log::debug!("SDP step failed at iteration {it}: {e}");
                break;
            }
            Err(e) => return Err(e),
        };
        if ap < T::lit(1e-12) && ad < T::lit(1e-12) {
            stalls += 1;
            if stalls > 3 {
                break;
            }
        }
        for b in 0..dims.len() {
            x[b].add_assign_scaled(&dx[b], ap);
            zm[b].add_assign_scaled(&dzm[b], ad);
            x[b] = x[b].hermitian_part();
            zm[b] = zm[b].hermitian_part();
        }
        for k in 0..ns {
            s[k] += ap * ds[k];
            z[k] += ad * dz[k];
        }
        for (yi, d) in y.iter_mut().zip(&dy) {
            *yi += ad * *d;
        }
    }

    let mut lower_bound = certified_bound(set, &std, &c, &y)?;
    if !converged {
        if let Some((_, bx, by, bp, bd)) = best {
            if bp < pinf {
                lower_bound = lower_bound.max(certified_bound(set, &std, &c, &by)?);
                x = bx;
                y = by;
                pinf = bp;
                dinf = bd;
            }
        }
    }
    let primal_value = inner(&c, &x);
    let dual_value = rows.iter().zip(&y).map(|(r, &yi)| r.b * yi).sum();
    if !converged {
        if pinf > T::lit(1e-5) {
            return Err(Error::numerical(format!(
                "SDP subproblem did not reach feasibility after {iterations} iterations \
                 (primal residual {pinf:e}, dual residual {dinf:e}, bound {lower_bound:e})"
            )));
        }
        log::debug!("SDP stopped at {iterations} iterations: pinf {pinf:e} dinf {dinf:e}");
    }
    Ok(SdpSolution {
        x,
        primal_value,
        dual_value,
        lower_bound,
        iterations,
        primal_infeasibility: pinf,
        dual_infeasibility: dinf,
        converged,
    })
}
