//! Minimization of `f(ρ) = D(G(ρ) ‖ Z(G(ρ)))` over the decoy-constrained
//! set: Frank–Wolfe descent, then a linearized dual certificate, then the
//! single-photon key-rate assembly.

mod objective;
mod problem;

use std::fmt;

use crate::decoy::PhotonBounds;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::mapping::{is_error, BasisStats, ObservationTable};
use crate::protocols::{Basis, BasisStrategy, ProtocolDescription, ProtocolKind};
use crate::quantum::{h2_clamped, DensityOperator, HermitianOperator};
use crate::scalar::Real;
use crate::sdp::{identity_blocks, inner, linear_sdp_subproblem, Blocks, FeasibleSet, SdpSettings};

pub use objective::Objective;
pub use problem::{relaxed_intervals, ConstraintMode, KeyRateProblem};

/// Line search used for the Frank–Wolfe step length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LineSearch {
    /// Golden-section minimization on `[0, 1]`.
    Exact,
    /// Armijo halving from a unit step.
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(default)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub fw_max_iters: usize,
    /// Relative objective decrease below which Frank–Wolfe stops.
    pub fw_tol: f64,
    pub sdp_tol: f64,
    pub sdp_max_iters: usize,
    pub linesearch: LineSearch,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-12,
            fw_max_iters: 300,
            fw_tol: 1e-6,
            sdp_tol: 1e-8,
            sdp_max_iters: 100,
            linesearch: LineSearch::Exact,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be positive, got {v}")))
            }
        };
        pos("epsilon", self.epsilon)?;
        pos("fw_tol", self.fw_tol)?;
        pos("sdp_tol", self.sdp_tol)?;
        if self.epsilon >= 1.0 {
            return Err(Error::config("epsilon", "must be below 1"));
        }
        if self.fw_max_iters == 0 {
            return Err(Error::config("fw_max_iters", "must be at least 1"));
        }
        if self.sdp_max_iters == 0 {
            return Err(Error::config("sdp_max_iters", "must be at least 1"));
        }
        Ok(())
    }

    fn sdp(&self) -> SdpSettings {
        SdpSettings {
            tol: self.sdp_tol,
            max_iters: self.sdp_max_iters,
        }
    }
}

/// `f_ε(ρ)` on the full input space of `desc`.
pub fn objective_f<T: Real>(
    rho: &DensityOperator<T>,
    desc: &ProtocolDescription<T>,
    epsilon: T,
) -> Result<T> {
    let obj = full_space_objective(rho, desc, epsilon)?;
    obj.value(&vec![rho.matrix().clone()])
}

/// `∇f_ε(ρ)` on the full input space of `desc`.
pub fn gradient_f<T: Real>(
    rho: &DensityOperator<T>,
    desc: &ProtocolDescription<T>,
    epsilon: T,
) -> Result<HermitianOperator<T>> {
    let obj = full_space_objective(rho, desc, epsilon)?;
    let mut g = obj.gradient(&vec![rho.matrix().clone()])?;
    HermitianOperator::new(g.remove(0))
}

fn full_space_objective<T: Real>(
    rho: &DensityOperator<T>,
    desc: &ProtocolDescription<T>,
    epsilon: T,
) -> Result<Objective<T>> {
    if rho.dim() != desc.dim() {
        return Err(Error::usage(format!(
            "state dimension {} does not match protocol dimension {}",
            rho.dim(),
            desc.dim()
        )));
    }
    let kraus: Vec<ComplexMatrix<T>> = desc.kraus.iter().map(|k| k.matrix.clone()).collect();
    let keymaps: Vec<ComplexMatrix<T>> = desc.keymaps.iter().map(|z| z.matrix().clone()).collect();
    Objective::new(
        &kraus,
        &keymaps,
        &[ComplexMatrix::identity(desc.dim())],
        epsilon,
    )
}

/// Outcome of the Frank–Wolfe stage.
#[derive(Debug, Clone)]
pub struct FwOutcome<T: Real> {
    pub x: Blocks<T>,
    /// `f_ε` at the final iterate.
    pub f_upper: T,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each iteration, starting with the initial point.
    pub history: Vec<T>,
}

/// Frank–Wolfe from the interior-point analytic center of the feasible set.
pub fn frank_wolfe_minimize<T: Real>(
    problem: &KeyRateProblem<T>,
    config: &SolverConfig,
) -> Result<FwOutcome<T>> {
    config.validate()?;
    let sdp = config.sdp();
    let set = &problem.set;
    let obj = &problem.objective;
    let start =
        linear_sdp_subproblem(&identity_blocks(&set.block_dims), set, &sdp).map_err(setup_error)?;
    let mut x = clip_psd(start.x)?;
    let mut f = obj.value(&x)?;
    let mut history = vec![f];
    let tol = T::lit(config.fw_tol);
    let tiny = T::tol(1e-14);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..config.fw_max_iters {
        iterations = it + 1;
        let g = obj.gradient(&x)?;
        let sigma = linear_sdp_subproblem(&g, set, &sdp).map_err(setup_error)?;
        let d: Blocks<T> = sigma.x.iter().zip(&x).map(|(s, xb)| s - xb).collect();
        let slope = inner(&g, &d);
        if slope >= -tiny || slope >= -tol * f.abs() * T::lit(1e-3) {
            converged = true;
            history.push(f);
            break;
        }
        let along = |t: T| -> Result<T> { obj.value(&step(&x, &d, t)) };
        let (t, f_new) = match config.linesearch {
            LineSearch::Exact => golden_section(&along, f)?,
            LineSearch::Backtracking => backtracking(&along, f, slope)?,
        };
        if f_new >= f || t <= T::zero() {
            converged = true;
            history.push(f);
            break;
        }
        x = step(&x, &d, t);
        let decrease = f - f_new;
        f = f_new;
        history.push(f);
        if decrease <= tol * f.abs().max(tiny) {
            converged = true;
            break;
        }
    }
    Ok(FwOutcome {
        x,
        f_upper: f,
        iterations,
        converged,
        history,
    })
}

fn setup_error(e: Error) -> Error {
    match e {
        Error::Infeasible(m) => Error::Infeasible(format!("constraints inconsistent: {m}")),
        other => other,
    }
}

fn step<T: Real>(x: &Blocks<T>, d: &Blocks<T>, t: T) -> Blocks<T> {
    x.iter()
        .zip(d)
        .map(|(xb, db)| {
            let mut out = xb.clone();
            out.add_assign_scaled(db, t);
            out
        })
        .collect()
}

/// Symmetrizes the interior-point output; its eigenvalues are already
/// nonnegative up to rounding.
fn clip_psd<T: Real>(x: Blocks<T>) -> Result<Blocks<T>> {
    Ok(x.into_iter().map(|b| b.hermitian_part()).collect())
}

const GOLDEN_ITERS: usize = 60;

fn golden_section<T: Real>(phi: &impl Fn(T) -> Result<T>, f0: T) -> Result<(T, T)> {
    let r = T::lit(0.618_033_988_749_894_9);
    let (mut a, mut b) = (T::zero(), T::one());
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = phi(c)?;
    let mut fd = phi(d)?;
    for _ in 0..GOLDEN_ITERS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = phi(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = phi(d)?;
        }
        if b - a < T::tol(1e-12) {
            break;
        }
    }
    // Endpoints are candidates too: the restriction may be monotone.
    let f1 = phi(T::one())?;
    let mut best = (T::zero(), f0);
    for cand in [(c, fc), (d, fd), (T::one(), f1)] {
        if cand.1 < best.1 {
            best = cand;
        }
    }
    Ok(best)
}

fn backtracking<T: Real>(phi: &impl Fn(T) -> Result<T>, f0: T, slope: T) -> Result<(T, T)> {
    let mut t = T::one();
    for _ in 0..50 {
        let ft = phi(t)?;
        if ft <= f0 + T::lit(1e-4) * t * slope {
            return Ok((t, ft));
        }
        t *= T::lit(0.5);
    }
    Ok((T::zero(), f0))
}

/// Linearized dual bound at a feasible iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate<T: Real> {
    /// `f_ε(ρ′)`.
    pub f_value: T,
    /// Rigorous lower bound on `min_σ Tr(∇f σ)`.
    pub linear_bound: T,
    /// `Tr(∇f ρ′)`.
    pub linear_at_iterate: T,
    /// Bound on `f_ε − f` from the log perturbation.
    pub perturbation_slack: T,
    pub sdp_converged: bool,
}

impl<T: Real> Certificate<T> {
    /// `f(ρ′) + min_σ Tr(∇f (σ − ρ′)) − slack`.
    pub fn value(&self) -> T {
        self.f_value + self.linear_bound - self.linear_at_iterate - self.perturbation_slack
    }
}

/// Certified lower bound on `min f` over the set, valid for any PSD `x`.
pub fn certify_lower_bound<T: Real>(
    problem: &KeyRateProblem<T>,
    x: &Blocks<T>,
    config: &SolverConfig,
) -> Result<Certificate<T>> {
    config.validate()?;
    let obj = &problem.objective;
    let f_value = obj.value(x)?;
    let g = obj.gradient(x)?;
    let sol = linear_sdp_subproblem(&g, &problem.set, &config.sdp()).map_err(setup_error)?;
    Ok(Certificate {
        f_value,
        linear_bound: sol.lower_bound,
        linear_at_iterate: inner(&g, x),
        perturbation_slack: obj.perturbation_slack(),
        sdp_converged: sol.converged,
    })
}

/// Minimization plus certificate for one problem.
#[derive(Debug, Clone)]
pub struct MinimizeResult<T: Real> {
    pub fw: FwOutcome<T>,
    pub certificate: Certificate<T>,
}

impl<T: Real> MinimizeResult<T> {
    pub fn f_upper(&self) -> T {
        self.fw.f_upper
    }

    /// The certificate, capped at `f_upper`: the interior-point iterate is
    /// feasible only to solver tolerance, so `f_upper` can undershoot the
    /// true minimum by a hair.
    pub fn f_certified(&self) -> T {
        self.certificate.value().min(self.fw.f_upper)
    }
}

pub fn minimize<T: Real>(
    problem: &KeyRateProblem<T>,
    config: &SolverConfig,
) -> Result<MinimizeResult<T>> {
    let fw = frank_wolfe_minimize(problem, config)?;
    let certificate = certify_lower_bound(problem, &fw.x, config)?;
    Ok(MinimizeResult { fw, certificate })
}

/// Convenience: build the decoy-constrained problem and minimize.
pub fn minimize_with_bounds<T: Real>(
    desc: &ProtocolDescription<T>,
    bounds: &PhotonBounds<T>,
    mode: ConstraintMode,
    config: &SolverConfig,
) -> Result<MinimizeResult<T>> {
    let problem = KeyRateProblem::from_bounds(desc, bounds, mode, T::lit(config.epsilon))?;
    minimize(&problem, config)
}

/// Sifted gain and error mass of one basis combination, weighted by the
/// source prior.
pub fn sifted_stats<T: Real>(
    desc: &ProtocolDescription<T>,
    table: &ObservationTable<T>,
    bases: (Basis, Basis),
) -> Result<BasisStats<T>> {
    if table.protocol != desc.kind
        || table.sources != desc.sources()
        || table.outcomes != desc.outcomes
    {
        return Err(Error::usage(
            "observation table does not match the protocol description",
        ));
    }
    let (a, b) = bases;
    let mut gain = T::zero();
    let mut errors = T::zero();
    for s in 0..desc.sources() {
        let w = desc.source_prior[s];
        for k in 0..desc.outcomes {
            let keep = match desc.kind {
                ProtocolKind::Bb84 => Basis::of_index(s) == a && k < 4 && Basis::of_index(k) == b,
                ProtocolKind::Mdi => {
                    Basis::of_index(s / 4) == a && Basis::of_index(s % 4) == b && k < 2
                }
            };
            if !keep {
                continue;
            }
            let v = table.get(s, k);
            gain += w * v;
            if is_error(desc.kind, s, k) {
                errors += w * v;
            }
        }
    }
    Ok(BasisStats { gain, errors })
}

/// Error-correction leakage inputs: signal-intensity statistics.
#[derive(Debug, Clone, Copy)]
pub struct LeakageInputs<'a, T: Real> {
    pub signal: &'a ObservationTable<T>,
    /// Error-correction inefficiency `f_EC ≥ 1`.
    pub f_ec: T,
}

/// Per-combination sifted probability and `Q h₂(E)` leakage (no `f_EC`).
pub fn combination_leakage<T: Real>(
    desc: &ProtocolDescription<T>,
    signal: &ObservationTable<T>,
    bases: (Basis, Basis),
) -> Result<(T, T)> {
    let st = sifted_stats(desc, signal, bases)?;
    let e = st.qber().unwrap_or(T::zero());
    Ok((st.gain, st.gain * h2_clamped(e)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iterations",
        })
    }
}

#[derive(Debug, Clone)]
pub struct KeyRateResult<T: Real> {
    pub rho_star: DensityOperator<T>,
    pub f_upper: T,
    pub f_certified: T,
    pub gap: T,
    pub p_pass: T,
    /// `f_EC Σ Q h₂(E)` over the key-generating combinations.
    pub leakage: T,
    pub key_rate: T,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl<T: Real> KeyRateResult<T> {
    pub const CSV_HEADER: &'static str =
        "f_upper,f_certified,gap,p_pass,leakage,key_rate,iterations,status";

    pub fn csv_fields(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
            self.f_upper,
            self.f_certified,
            self.gap,
            self.p_pass,
            self.leakage,
            self.key_rate,
            self.iterations,
            self.status
        )
    }
}

/// `p₁ f_cert − leak` (single-photon probability `p₁`, or `p₁₁` for MDI).
///
/// The independent strategy solves one problem per basis combination and
/// keeps only the positive ones.
pub fn key_rate<T: Real>(
    desc: &ProtocolDescription<T>,
    bounds: &PhotonBounds<T>,
    p_single: T,
    leakage: &LeakageInputs<'_, T>,
    mode: ConstraintMode,
    config: &SolverConfig,
) -> Result<KeyRateResult<T>> {
    if !(p_single >= T::zero() && p_single <= T::one()) {
        return Err(Error::usage(format!(
            "single-photon probability {p_single} outside [0, 1]"
        )));
    }
    if leakage.f_ec < T::one() {
        return Err(Error::usage(format!(
            "f_EC must be at least 1, got {}",
            leakage.f_ec
        )));
    }
    let combos = desc.strategy.combinations();
    if combos.len() != desc.kraus.len() {
        return Err(Error::usage(
            "Kraus operators do not match the basis strategy",
        ));
    }
    let mut parts = Vec::with_capacity(combos.len());
    for &c in &combos {
        parts.push(combination_leakage(desc, leakage.signal, c)?);
    }
    let p_pass: T = parts.iter().map(|p| p.0).sum();
    let leak: T = leakage.f_ec * parts.iter().map(|p| p.1).sum::<T>();

    if desc.strategy == BasisStrategy::Independent {
        let mut rate = T::zero();
        let (mut f_up, mut f_cert, mut iters) = (T::zero(), T::zero(), 0);
        let mut all_converged = true;
        let mut rho = None;
        for (i, part) in parts.iter().enumerate() {
            let sub = desc.with_single_kraus(i)?;
            let m = minimize_with_bounds(&sub, bounds, mode, config)?;
            f_up += m.f_upper();
            f_cert += m.f_certified();
            iters += m.fw.iterations;
            all_converged &= m.fw.converged;
            rate += (p_single * m.f_certified() - leakage.f_ec * part.1).max(T::zero());
            if rho.is_none() {
                let problem =
                    KeyRateProblem::from_bounds(&sub, bounds, mode, T::lit(config.epsilon))?;
                rho = Some(problem.density(&m.fw.x)?);
            }
        }
        return Ok(KeyRateResult {
            rho_star: rho.ok_or_else(|| Error::usage("no basis combinations"))?,
            f_upper: f_up,
            f_certified: f_cert,
            gap: f_up - f_cert,
            p_pass,
            leakage: leak,
            key_rate: rate,
            iterations: iters,
            status: status_of(all_converged),
        });
    }

    let problem = KeyRateProblem::from_bounds(desc, bounds, mode, T::lit(config.epsilon))?;
    let m = minimize(&problem, config)?;
    Ok(KeyRateResult {
        rho_star: problem.density(&m.fw.x)?,
        f_upper: m.f_upper(),
        f_certified: m.f_certified(),
        gap: m.f_upper() - m.f_certified(),
        p_pass,
        leakage: leak,
        key_rate: p_single * m.f_certified() - leak,
        iterations: m.fw.iterations,
        status: status_of(m.fw.converged),
    })
}

fn status_of(converged: bool) -> SolveStatus {
    if converged {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIterations
    }
}

/// Zero-photon contribution `p₀ · pass₀` (vacuum pulses leak nothing).
pub fn zero_photon_bonus<T: Real>(p0: T, pass0: T) -> Result<T> {
    let unit = |name: &str, v: T| {
        if v >= T::zero() && v <= T::one() {
            Ok(())
        } else {
            Err(Error::usage(format!("{name} = {v} is not a probability")))
        }
    };
    unit("p0", p0)?;
    unit("pass0", pass0)?;
    Ok(p0 * pass0)
}

/// Sifted detection probability of zero-photon events from the lower decoy
/// bounds on the vacuum yields.
pub fn zero_photon_pass<T: Real>(
    desc: &ProtocolDescription<T>,
    vacuum: &PhotonBounds<T>,
) -> Result<T> {
    let lower = vacuum.lower_table()?;
    let mut total = T::zero();
    for c in desc.strategy.combinations() {
        total += sifted_stats(desc, &lower, c)?.gain;
    }
    Ok(total.min(T::one()).max(T::zero()))
}

/// Checks a caller-built set against a description before a full-space solve.
pub fn full_space_problem<T: Real>(
    desc: &ProtocolDescription<T>,
    set: FeasibleSet<T>,
    config: &SolverConfig,
) -> Result<KeyRateProblem<T>> {
    config.validate()?;
    KeyRateProblem::on_full_space(desc, set, T::lit(config.epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{single_photon_oracle, Bb84ChannelParams, ChannelParams, DetectionScheme};
    use crate::protocols::build_bb84;
    use crate::scalar::re;

    fn perfect_bb84(p_z: f64) -> (ProtocolDescription<f64>, PhotonBounds<f64>) {
        let desc = build_bb84(p_z, BasisStrategy::ZOnly).unwrap();
        let params = ChannelParams::Bb84(Bb84ChannelParams {
            eta: 1.0,
            theta: 0.0,
            p_d: 0.0,
            p_z,
            scheme: DetectionScheme::Passive,
        });
        let table = single_photon_oracle(&params).unwrap();
        (desc, PhotonBounds::exact(&table))
    }

    #[test]
    fn perfect_channel_gives_sifting_factor() {
        let (desc, bounds) = perfect_bb84(0.5);
        let m = minimize_with_bounds(
            &desc,
            &bounds,
            ConstraintMode::Fine,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!((m.f_upper() - 0.25).abs() < 1e-4, "f_upper {}", m.f_upper());
        assert!(m.f_certified() <= m.f_upper() + 1e-9);
        assert!(
            m.f_upper() - m.f_certified() < 1e-3,
            "gap {}",
            m.f_upper() - m.f_certified()
        );
    }

    #[test]
    fn pinned_qubit_has_zero_gap() {
        // Identity channel on a qubit; Pauli expectations pin ρ = |+⟩⟨+|-ish mixture.
        let obj = Objective::<f64>::new(
            &[ComplexMatrix::identity(2)],
            &[
                ComplexMatrix::from_diag(&[1.0, 0.0]),
                ComplexMatrix::from_diag(&[0.0, 1.0]),
            ],
            &[ComplexMatrix::identity(2)],
            1e-12,
        )
        .unwrap();
        let mut set = FeasibleSet::new(vec![2]).unwrap();
        set.add_equality("tr", vec![ComplexMatrix::identity(2)], 1.0)
            .unwrap();
        let sx = ComplexMatrix::from_fn(2, 2, |i, j| if i != j { re(1.0) } else { re(0.0) });
        let sy = ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => C::new(0.0, -1.0),
            (1, 0) => C::new(0.0, 1.0),
            _ => re(0.0),
        });
        let sz = ComplexMatrix::from_diag(&[1.0, -1.0]);
        set.add_equality("x", vec![sx], 0.6).unwrap();
        set.add_equality("y", vec![sy], 0.0).unwrap();
        set.add_equality("z", vec![sz], 0.0).unwrap();
        let problem = KeyRateProblem {
            objective: obj,
            set,
            lifts: vec![ComplexMatrix::identity(2)],
        };
        let m = minimize(&problem, &SolverConfig::default()).unwrap();
        assert_eq!(m.fw.iterations, 1);
        let expect = 1.0 - crate::quantum::binary_entropy(0.8f64).unwrap();
        assert!((m.f_upper() - expect).abs() < 1e-7);
        assert!((m.f_upper() - m.f_certified()).abs() < 1e-6);
    }

    use crate::scalar::C;

    #[test]
    fn objective_sequence_is_non_increasing() {
        let desc = build_bb84(0.5, BasisStrategy::ZOnly).unwrap();
        let params = ChannelParams::Bb84(Bb84ChannelParams {
            eta: 0.3,
            theta: 0.2,
            p_d: 1e-3,
            p_z: 0.5,
            scheme: DetectionScheme::Passive,
        });
        let bounds = PhotonBounds::exact(&single_photon_oracle(&params).unwrap()).widened(1e-3);
        let problem =
            KeyRateProblem::from_bounds(&desc, &bounds, ConstraintMode::Fine, 1e-12).unwrap();
        let fw = frank_wolfe_minimize(&problem, &SolverConfig::default()).unwrap();
        for w in fw.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let cert = certify_lower_bound(&problem, &fw.x, &SolverConfig::default()).unwrap();
        assert!(cert.value() <= fw.f_upper + 1e-9);
    }

    #[test]
    fn bonus_is_product() {
        assert_eq!(zero_photon_bonus(0.5, 0.0).unwrap(), 0.0);
        assert!((zero_photon_bonus(0.6f64, 1e-6).unwrap() - 6e-7).abs() < 1e-18);
        assert!(zero_photon_bonus(1.5, 0.1).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            fw_tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
