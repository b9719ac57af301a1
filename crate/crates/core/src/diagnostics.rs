//! Self-checks run by `diagnose`: decoy ordering, oracle bracketing,
//! gradient accuracy, description validity and certificate tightness.

use std::fmt;

use crate::channel::single_photon_oracle;
use crate::config::ScenarioConfig;
use crate::decoy::{
    map_bounds, poisson_tail, single_photon_bounds, DecoyEnsemble, PhotonBounds, BRACKET_TOL,
};
use crate::error::Result;
use crate::keyrate::{minimize, ConstraintMode, KeyRateProblem};
use crate::linalg::ComplexMatrix;
use crate::mapping::mapping_for;
use crate::pipeline::{channel_params, describe, grid, observe, simulate, ScenarioPoint};
use crate::protocols::{
    build_bb84, build_mdi_with_strategy, charlie_bell_povm, validate_description, BasisStrategy,
    ProtocolKind,
};
use crate::scalar::C;

/// Agreement required between the two decoy orderings.
pub const ORDER_TOL: f64 = 1e-8;
/// Relative agreement required between analytic and finite-difference slopes.
pub const GRADIENT_TOL: f64 = 1e-5;
/// Relative certificate gap above which the gap check is flagged.
pub const GAP_WARN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "PASS",
            CheckStatus::Warn => "WARN",
            CheckStatus::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, status: CheckStatus, detail: impl Into<String>) -> Self {
        Self {
            name,
            status,
            detail: detail.into(),
        }
    }

    fn from_result(name: &'static str, r: Result<CheckResult>) -> Self {
        r.unwrap_or_else(|e| CheckResult::new(name, CheckStatus::Fail, format!("error: {e}")))
    }
}

#[derive(Debug, Clone)]
pub struct DiagnosticsReport {
    pub point: ScenarioPoint,
    pub checks: Vec<CheckResult>,
}

impl DiagnosticsReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }
}

impl fmt::Display for DiagnosticsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "diagnostics at L = {} km, theta = {}{}",
            self.point.distance_km,
            self.point.theta_a,
            self.point
                .theta_b
                .map(|t| format!(", theta_b = {t}"))
                .unwrap_or_default()
        )?;
        for c in &self.checks {
            writeln!(f, "  [{}] {:<18} {}", c.status, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Runs every check at the first grid point and the configured μ.
pub fn run_diagnostics(config: &ScenarioConfig) -> Result<DiagnosticsReport> {
    config.validate()?;
    let point = grid(config)[0];
    let raw = simulate(config, &point, config.mu)?;
    let tables = observe(&raw)?;
    let ensemble = DecoyEnsemble::from_observations(&tables)?;
    let bounds = single_photon_bounds(&ensemble, config.cutoff);

    let mut checks = vec![
        CheckResult::from_result(
            "order-equivalence",
            order_check(config, &raw, bounds.as_ref().ok()),
        ),
        CheckResult::from_result(
            "oracle-bracket",
            bracket_check(config, &point, &ensemble, bounds.as_ref().ok()),
        ),
        povm_check(config),
    ];
    match bounds {
        Ok(b) => {
            let (grad, gap) = solver_checks(config, &b);
            checks.push(grad);
            checks.push(gap);
        }
        Err(e) => {
            let msg = format!("no decoy bounds: {e}");
            checks.push(CheckResult::new(
                "gradient-fd",
                CheckStatus::Fail,
                msg.clone(),
            ));
            checks.push(CheckResult::new("certificate-gap", CheckStatus::Fail, msg));
        }
    }
    Ok(DiagnosticsReport { point, checks })
}

/// Decoy-then-map versus map-then-decoy. Both orders give valid intervals,
/// so disjoint intervals are a failure; a difference beyond [`ORDER_TOL`]
/// with overlapping intervals is reported as a warning.
fn order_check(
    config: &ScenarioConfig,
    raw: &[crate::channel::RawPatternTable<f64>],
    mapped_first: Option<&PhotonBounds<f64>>,
) -> Result<CheckResult> {
    let mapped_first = match mapped_first {
        Some(b) => b.clone(),
        None => {
            return Ok(CheckResult::new(
                "order-equivalence",
                CheckStatus::Fail,
                "map-first LP failed",
            ))
        }
    };
    let decoy_first = map_bounds(
        &single_photon_bounds(&DecoyEnsemble::from_raw(raw)?, config.cutoff)?,
        &mapping_for(config.protocol),
    )?;
    let (diff, disjoint) = compare_bounds(&mapped_first, &decoy_first);
    let status = if disjoint > BRACKET_TOL {
        CheckStatus::Fail
    } else if diff > ORDER_TOL {
        CheckStatus::Warn
    } else {
        CheckStatus::Pass
    };
    Ok(CheckResult::new(
        "order-equivalence",
        status,
        format!("max |difference| {diff:.3e} (tol {ORDER_TOL:.0e}), max separation {disjoint:.3e}"),
    ))
}

/// Largest endpoint difference and largest gap between the two intervals of
/// any entry (positive only when some pair is disjoint).
pub fn compare_bounds(a: &PhotonBounds<f64>, b: &PhotonBounds<f64>) -> (f64, f64) {
    let mut diff = 0.0f64;
    let mut sep = 0.0f64;
    for k in 0..a.len().min(b.len()) {
        diff = diff
            .max((a.lower[k] - b.lower[k]).abs())
            .max((a.upper[k] - b.upper[k]).abs());
        sep = sep.max(a.lower[k].max(b.lower[k]) - a.upper[k].min(b.upper[k]));
    }
    (diff, sep)
}

fn bracket_check(
    config: &ScenarioConfig,
    point: &ScenarioPoint,
    ensemble: &DecoyEnsemble<f64>,
    bounds: Option<&PhotonBounds<f64>>,
) -> Result<CheckResult> {
    let bounds = match bounds {
        Some(b) => b,
        None => {
            return Ok(CheckResult::new(
                "oracle-bracket",
                CheckStatus::Fail,
                "decoy LP failed",
            ))
        }
    };
    let oracle = single_photon_oracle(&channel_params(config, point))?;
    let misses = bounds.misses(&oracle, BRACKET_TOL);
    let tail = ensemble
        .settings
        .iter()
        .flat_map(|s| s.iter())
        .map(|&mu| poisson_tail(mu, config.cutoff))
        .fold(0.0, f64::max);
    let (status, detail) = if !misses.is_empty() {
        let names: Vec<String> = misses.iter().map(|&k| bounds.labels[k].clone()).collect();
        (
            CheckStatus::Fail,
            format!("oracle outside bounds at {}", names.join(", ")),
        )
    } else if tail > BRACKET_TOL {
        (
            CheckStatus::Warn,
            format!(
                "all entries bracketed, but tail mass {tail:.3e} beyond N = {} is large",
                config.cutoff
            ),
        )
    } else {
        (
            CheckStatus::Pass,
            format!("{} entries bracketed, tail mass {tail:.1e}", bounds.len()),
        )
    };
    Ok(CheckResult::new("oracle-bracket", status, detail))
}

fn povm_check(config: &ScenarioConfig) -> CheckResult {
    let mut built = Vec::new();
    match config.protocol {
        ProtocolKind::Bb84 => {
            for s in [
                BasisStrategy::ZOnly,
                BasisStrategy::ZzXx,
                BasisStrategy::AllFour,
                BasisStrategy::Independent,
            ] {
                built.push((s, build_bb84(config.p_z, s)));
            }
        }
        ProtocolKind::Mdi => {
            for s in [BasisStrategy::ZOnly, BasisStrategy::ZzXx] {
                built.push((s, build_mdi_with_strategy(config.p_z, s)));
            }
        }
    }
    let mut problems = Vec::new();
    for (s, desc) in &built {
        match desc {
            Ok(d) => problems.extend(validate_description(d).iter().map(|v| format!("{s}: {v}"))),
            Err(e) => problems.push(format!("{s}: {e}")),
        }
    }
    if config.protocol == ProtocolKind::Mdi {
        let bell = charlie_bell_povm::<f64>();
        let sum = &(&bell[0] + &bell[1]) + &bell[2];
        let err = sum.max_abs_diff(&ComplexMatrix::identity(4));
        if err > 1e-12 {
            problems.push(format!("Bell POVM completeness error {err:.2e}"));
        }
    }
    if problems.is_empty() {
        CheckResult::new(
            "povm-validation",
            CheckStatus::Pass,
            format!(
                "{} descriptions complete, Kraus maps contractive",
                built.len()
            ),
        )
    } else {
        CheckResult::new("povm-validation", CheckStatus::Fail, problems.join("; "))
    }
}

/// Fixed Hermitian direction with every entry populated.
fn probe_direction(d: usize, seed: usize) -> ComplexMatrix<f64> {
    ComplexMatrix::from_fn(d, d, |i, j| {
        let t = (i * 7 + j * 13 + seed * 3) as f64;
        if i == j {
            C::new((0.37 * t).sin(), 0.0)
        } else {
            let (a, b) = (i.min(j), i.max(j));
            let u = (a * 7 + b * 13 + seed * 3) as f64;
            let im = (0.53 * u).cos() * if i < j { 1.0 } else { -1.0 };
            C::new((0.29 * u).cos(), im)
        }
    })
}

fn solver_checks(
    config: &ScenarioConfig,
    bounds: &PhotonBounds<f64>,
) -> (CheckResult, CheckResult) {
    let solver = config.solver();
    let built = describe(config).and_then(|desc| {
        let problem =
            KeyRateProblem::from_bounds(&desc, bounds, ConstraintMode::Fine, solver.epsilon)?;
        let m = minimize(&problem, &solver)?;
        Ok((problem, m))
    });
    let (problem, m) = match built {
        Ok(v) => v,
        Err(e) => {
            let msg = format!("solver error: {e}");
            return (
                CheckResult::new("gradient-fd", CheckStatus::Fail, msg.clone()),
                CheckResult::new("certificate-gap", CheckStatus::Fail, msg),
            );
        }
    };

    // Full-rank point near the iterate so the logarithms are smooth.
    let total: usize = problem.block_dims().iter().sum();
    let x: Vec<ComplexMatrix<f64>> =
        m.fw.x
            .iter()
            .map(|b| &b.scale(0.9) + &ComplexMatrix::identity(b.rows()).scale(0.1 / total as f64))
            .collect();
    let dir: Vec<ComplexMatrix<f64>> = problem
        .block_dims()
        .iter()
        .enumerate()
        .map(|(i, &d)| probe_direction(d, i).scale(1e-2))
        .collect();
    let grad = (|| -> Result<(f64, f64)> {
        let g = problem.objective.gradient(&x)?;
        let analytic: f64 = g
            .iter()
            .zip(&dir)
            .map(|(gb, db)| gb.re_trace_product(db))
            .sum();
        let h = 1e-6;
        let shift = |s: f64| -> Vec<ComplexMatrix<f64>> {
            x.iter()
                .zip(&dir)
                .map(|(xb, db)| xb + &db.scale(s))
                .collect()
        };
        let fd = (problem.objective.value(&shift(h))? - problem.objective.value(&shift(-h))?)
            / (2.0 * h);
        Ok((analytic, fd))
    })();
    let grad_check = match grad {
        Ok((an, fd)) => {
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-12);
            let status = if rel <= GRADIENT_TOL {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            };
            CheckResult::new(
                "gradient-fd",
                status,
                format!("analytic {an:.6e}, finite difference {fd:.6e}, relative {rel:.2e}"),
            )
        }
        Err(e) => CheckResult::new("gradient-fd", CheckStatus::Fail, format!("error: {e}")),
    };

    let f_up = m.f_upper();
    let f_cert = m.f_certified();
    let rel = if f_up.abs() > 0.0 {
        (f_up - f_cert) / f_up.abs()
    } else {
        0.0
    };
    let status = if rel <= GAP_WARN && m.fw.converged {
        CheckStatus::Pass
    } else {
        CheckStatus::Warn
    };
    let gap_check =
        CheckResult::new(
            "certificate-gap",
            status,
            format!(
            "f_upper {f_up:.6e}, f_certified {f_cert:.6e}, relative gap {rel:.2e}, {} iterations{}",
            m.fw.iterations,
            if m.fw.converged { "" } else { " (not converged: loose certificate)" }
        ),
        );
    (grad_check, gap_check)
}
