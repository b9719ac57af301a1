//! Dense two-phase tableau simplex with Bland's rule.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row<T: Real> {
    pub coeffs: Vec<T>,
    pub kind: RowKind,
    pub rhs: T,
}

/// `opt c·x` subject to rows and `lower ≤ x ≤ upper` (bounds finite).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram<T: Real> {
    pub objective: Vec<T>,
    pub sense: Sense,
    pub rows: Vec<Row<T>>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T: Real> {
    pub status: LpStatus,
    pub value: T,
    pub x: Vec<T>,
    pub pivots: usize,
}

impl<T: Real> LinearProgram<T> {
    /// Problem over `n` variables boxed in `[0, 1]`.
    pub fn unit_box(objective: Vec<T>, sense: Sense) -> Self {
        let n = objective.len();
        Self {
            objective,
            sense,
            rows: Vec::new(),
            lower: vec![T::zero(); n],
            upper: vec![T::one(); n],
        }
    }

    pub fn variables(&self) -> usize {
        self.objective.len()
    }

    pub fn push(&mut self, coeffs: Vec<T>, kind: RowKind, rhs: T) {
        self.rows.push(Row { coeffs, kind, rhs });
    }

    fn check(&self) -> Result<()> {
        let n = self.variables();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::usage(
                "LP bound vectors do not match the variable count",
            ));
        }
        for r in &self.rows {
            if r.coeffs.len() != n {
                return Err(Error::usage(
                    "LP row length does not match the variable count",
                ));
            }
            if !r.rhs.is_finite() || r.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::domain("non-finite LP coefficient"));
            }
        }
        for (l, u) in self.lower.iter().zip(&self.upper) {
            if !(l.is_finite() && u.is_finite()) {
                return Err(Error::usage("LP variable bounds must be finite"));
            }
        }
        Ok(())
    }

    /// Largest row violation of `x`, bounds included.
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut v = T::zero();
        for r in &self.rows {
            let lhs: T = r.coeffs.iter().zip(x).map(|(&a, &b)| a * b).sum();
            let d = lhs - r.rhs;
            v = v.max(match r.kind {
                RowKind::Le => d,
                RowKind::Ge => -d,
                RowKind::Eq => d.abs(),
            });
        }
        for ((&xi, &l), &u) in x.iter().zip(&self.lower).zip(&self.upper) {
            v = v.max(l - xi).max(xi - u);
        }
        v
    }
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-10;

struct Tableau<T: Real> {
    m: usize,
    width: usize,
    /// `m` constraint rows then the cost row; last column is the rhs.
    a: Vec<T>,
    basis: Vec<usize>,
    pivots: usize,
}

impl<T: Real> Tableau<T> {
    fn at(&self, i: usize, j: usize) -> T {
        self.a[i * (self.width + 1) + j]
    }

    fn rhs(&self, i: usize) -> T {
        self.at(i, self.width)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width + 1;
        let p = self.a[r * w + c];
        for j in 0..w {
            self.a[r * w + j] /= p;
        }
        for i in 0..=self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * w + c];
            if f == T::zero() {
                continue;
            }
            for j in 0..w {
                let v = self.a[r * w + j];
                if v != T::zero() {
                    self.a[i * w + j] -= f * v;
                }
            }
            self.a[i * w + c] = T::zero();
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Bland's rule on columns `< allowed`; returns `Some(true)` when unbounded.
    fn run(&mut self, allowed: usize, max_pivots: usize) -> Result<bool> {
        let ptol = T::tol(PIVOT_TOL);
        let ctol = T::tol(COST_TOL);
        loop {
            let entering = (0..allowed).find(|&j| self.at(self.m, j) < -ctol);
            let Some(c) = entering else { return Ok(false) };
            let mut best: Option<(usize, T)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > ptol {
                    let ratio = self.rhs(i) / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br || (ratio == br && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else { return Ok(true) };
            self.pivot(r, c);
            if self.pivots > max_pivots {
                return Err(Error::numerical(format!(
                    "simplex exceeded {max_pivots} pivots"
                )));
            }
        }
    }
}

/// Solves the LP; infeasibility and unboundedness are reported in the status.
pub fn solve_lp<T: Real>(lp: &LinearProgram<T>) -> Result<LpSolution<T>> {
    lp.check()?;
    let n = lp.variables();
    for (j, (&l, &u)) in lp.lower.iter().zip(&lp.upper).enumerate() {
        if l > u {
            return Ok(infeasible(n, format!("variable {j} has empty box")));
        }
    }
    // Shift x = lower + y, y ∈ [0, upper − lower]; bounds become explicit rows.
    let mut rows: Vec<(Vec<T>, RowKind, T)> = Vec::with_capacity(lp.rows.len() + n);
    for r in &lp.rows {
        let shift: T = r.coeffs.iter().zip(&lp.lower).map(|(&a, &l)| a * l).sum();
        rows.push((r.coeffs.clone(), r.kind, r.rhs - shift));
    }
    for j in 0..n {
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        rows.push((e, RowKind::Le, lp.upper[j] - lp.lower[j]));
    }
    // Row scaling and non-negative right-hand sides.
    for (c, kind, b) in rows.iter_mut() {
        let s = c.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        if s > T::zero() {
            for v in c.iter_mut() {
                *v /= s;
            }
            *b /= s;
        }
        if *b < T::zero() {
            for v in c.iter_mut() {
                *v = -*v;
            }
            *b = -*b;
            *kind = match *kind {
                RowKind::Le => RowKind::Ge,
                RowKind::Ge => RowKind::Le,
                RowKind::Eq => RowKind::Eq,
            };
        }
    }
    let m = rows.len();
    let slacks = rows.iter().filter(|r| r.1 != RowKind::Eq).count();
    let arts = rows.iter().filter(|r| r.1 != RowKind::Le).count();
    let width = n + slacks + arts;
    let art0 = n + slacks;
    let mut t = Tableau {
        m,
        width,
        a: vec![T::zero(); (m + 1) * (width + 1)],
        basis: vec![0; m],
        pivots: 0,
    };
    let w = width + 1;
    let (mut si, mut ai) = (n, art0);
    for (i, (c, kind, b)) in rows.iter().enumerate() {
        t.a[i * w..i * w + n].copy_from_slice(c);
        t.a[i * w + width] = *b;
        match kind {
            RowKind::Le => {
                t.a[i * w + si] = T::one();
                t.basis[i] = si;
                si += 1;
            }
            RowKind::Ge => {
                t.a[i * w + si] = -T::one();
                si += 1;
                t.a[i * w + ai] = T::one();
                t.basis[i] = ai;
                ai += 1;
            }
            RowKind::Eq => {
                t.a[i * w + ai] = T::one();
                t.basis[i] = ai;
                ai += 1;
            }
        }
    }
    let max_pivots = 50 * (m + width);
    // Phase 1: minimize the artificial sum.
    if arts > 0 {
        for i in 0..m {
            if t.basis[i] >= art0 {
                for j in 0..w {
                    let v = t.a[i * w + j];
                    t.a[m * w + j] -= v;
                }
                t.a[m * w + t.basis[i]] = T::zero();
            }
        }
        t.run(art0, max_pivots)?;
        let infeas = -t.rhs(m);
        if infeas > T::tol(FEAS_TOL) {
            return Ok(infeasible(n, format!("phase-1 residual {infeas:e}")));
        }
        // Drive zero-level artificials out where a structural pivot exists.
        for i in 0..m {
            if t.basis[i] >= art0 {
                if let Some(c) = (0..art0).find(|&j| t.at(i, j).abs() > T::tol(PIVOT_TOL)) {
                    t.pivot(i, c);
                }
            }
        }
    }
    // Phase 2 cost row.
    let sign = match lp.sense {
        Sense::Min => T::one(),
        Sense::Max => -T::one(),
    };
    for j in 0..w {
        t.a[m * w + j] = T::zero();
    }
    for j in 0..n {
        t.a[m * w + j] = sign * lp.objective[j];
    }
    for i in 0..m {
        let c = t.at(m, t.basis[i]);
        if c != T::zero() {
            for j in 0..w {
                let v = t.a[i * w + j];
                t.a[m * w + j] -= c * v;
            }
        }
    }
    if t.run(art0, max_pivots)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            value: sign * -T::infinity(),
            x: vec![T::zero(); n],
            pivots: t.pivots,
        });
    }
    let mut x = lp.lower.clone();
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] += t.rhs(i);
        }
    }
    let value = lp.objective.iter().zip(&x).map(|(&c, &v)| c * v).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        value,
        x,
        pivots: t.pivots,
    })
}

fn infeasible<T: Real>(n: usize, why: String) -> LpSolution<T> {
    log::debug!("LP infeasible: {why}");
    LpSolution {
        status: LpStatus::Infeasible,
        value: T::nan(),
        x: vec![T::nan(); n],
        pivots: 0,
    }
}
