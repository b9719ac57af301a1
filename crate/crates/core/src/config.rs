//! Scenario configuration: a flat TOML key/value file with defaults for
//! every field.
//!
//! ```toml
//! protocol = "bb84"          # bb84 | mdi
//! detection = "passive"      # passive | active (BB84 only)
//! p_z = 0.5
//! mu = 0.3                   # signal intensity (MDI: μ_A = μ_B = mu)
//! optimize_mu = false        # golden-section search over [0.05, 0.6]
//! nu = 0.02
//! omega = 0.001
//! p_d = 1e-6
//! loss_db_per_km = 0.2
//! f_ec = 1.0
//! distances_km = [100.0]     # MDI: total Alice–Bob distance, Charlie midway
//! thetas = [0.3]             # BB84 θ, MDI θ_A
//! theta_b = -0.15            # MDI only; default −θ_A
//! strategy = "z-only"
//! cutoff = 10
//! methods = ["numerical-fine", "analytical"]
//! zero_photon = false
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{DetectionScheme, DEFAULT_PHASE_POINTS};
use crate::decoy::DEFAULT_CUTOFF;
use crate::error::{Error, Result};
use crate::keyrate::{ConstraintMode, LineSearch, SolverConfig};
use crate::protocols::{BasisStrategy, ProtocolKind};

/// Lower and upper end of the signal-intensity search.
pub const MU_SEARCH: (f64, f64) = (0.05, 0.6);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    NumericalFine,
    NumericalCoarse,
    Analytical,
}

impl Method {
    pub const ALL: [Method; 3] = [
        Method::NumericalFine,
        Method::NumericalCoarse,
        Method::Analytical,
    ];

    /// Constraint set for the numerical methods.
    pub fn constraint_mode(self) -> Option<ConstraintMode> {
        match self {
            Method::NumericalFine => Some(ConstraintMode::Fine),
            Method::NumericalCoarse => Some(ConstraintMode::Coarse),
            Method::Analytical => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::NumericalFine => "numerical-fine",
            Method::NumericalCoarse => "numerical-coarse",
            Method::Analytical => "analytical",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "numerical-fine" | "fine" => Ok(Method::NumericalFine),
            "numerical-coarse" | "coarse" => Ok(Method::NumericalCoarse),
            "analytical" | "analytic" => Ok(Method::Analytical),
            other => Err(Error::usage(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub protocol: ProtocolKind,
    pub detection: DetectionScheme,
    pub p_z: f64,
    pub mu: f64,
    pub optimize_mu: bool,
    pub nu: f64,
    pub omega: f64,
    pub p_d: f64,
    pub loss_db_per_km: f64,
    pub f_ec: f64,
    pub distances_km: Vec<f64>,
    pub thetas: Vec<f64>,
    pub theta_b: Option<f64>,
    pub strategy: BasisStrategy,
    pub cutoff: usize,
    pub methods: Vec<Method>,
    pub zero_photon: bool,
    pub phase_points: usize,
    pub epsilon: f64,
    pub fw_max_iters: usize,
    pub fw_tol: f64,
    pub sdp_tol: f64,
    pub sdp_max_iters: usize,
    pub linesearch: LineSearch,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        Self {
            protocol: ProtocolKind::Bb84,
            detection: DetectionScheme::Passive,
            p_z: 0.5,
            mu: 0.3,
            optimize_mu: false,
            nu: 0.02,
            omega: 0.001,
            p_d: 1e-6,
            loss_db_per_km: 0.2,
            f_ec: 1.0,
            distances_km: vec![100.0],
            thetas: vec![0.3],
            theta_b: None,
            strategy: BasisStrategy::ZOnly,
            cutoff: DEFAULT_CUTOFF,
            methods: vec![Method::NumericalFine, Method::Analytical],
            zero_photon: false,
            phase_points: DEFAULT_PHASE_POINTS,
            epsilon: solver.epsilon,
            fw_max_iters: solver.fw_max_iters,
            fw_tol: solver.fw_tol,
            sdp_tol: solver.sdp_tol,
            sdp_max_iters: solver.sdp_max_iters,
            linesearch: solver.linesearch,
        }
    }
}

impl ScenarioConfig {
    /// Parses and validates TOML text; absent keys take their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = msg
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<file>".to_string());
            Error::config(field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            fw_max_iters: self.fw_max_iters,
            fw_tol: self.fw_tol,
            sdp_tol: self.sdp_tol,
            sdp_max_iters: self.sdp_max_iters,
            linesearch: self.linesearch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::config(name, format!("must lie in (0, 1), got {v}")))
            }
        };
        open_unit("p_z", self.p_z)?;
        if !(self.p_d >= 0.0 && self.p_d < 1.0) {
            return Err(Error::config(
                "p_d",
                format!("must lie in [0, 1), got {}", self.p_d),
            ));
        }
        for (name, v) in [("mu", self.mu), ("nu", self.nu), ("omega", self.omega)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    name,
                    format!("intensity must be non-negative, got {v}"),
                ));
            }
        }
        let distinct = self.mu != self.nu && self.mu != self.omega && self.nu != self.omega;
        if !distinct {
            return Err(Error::config(
                "nu",
                "decoy intensities mu, nu, omega must be distinct",
            ));
        }
        if self.optimize_mu && (self.nu >= MU_SEARCH.0 || self.omega >= MU_SEARCH.0) {
            return Err(Error::config(
                "optimize_mu",
                "nu and omega must lie below the mu search range [0.05, 0.6]",
            ));
        }
        if !(self.loss_db_per_km.is_finite() && self.loss_db_per_km >= 0.0) {
            return Err(Error::config("loss_db_per_km", "must be non-negative"));
        }
        if !(self.f_ec.is_finite() && self.f_ec >= 1.0) {
            return Err(Error::config(
                "f_ec",
                format!("must be at least 1, got {}", self.f_ec),
            ));
        }
        if self.distances_km.is_empty() {
            return Err(Error::config("distances_km", "grid must not be empty"));
        }
        if self
            .distances_km
            .iter()
            .any(|d| !(d.is_finite() && *d >= 0.0))
        {
            return Err(Error::config(
                "distances_km",
                "distances must be non-negative",
            ));
        }
        if self.thetas.is_empty() {
            return Err(Error::config("thetas", "grid must not be empty"));
        }
        if self
            .thetas
            .iter()
            .chain(self.theta_b.iter())
            .any(|t| !t.is_finite())
        {
            return Err(Error::config("thetas", "angles must be finite"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "at least one method required"));
        }
        if self.cutoff < 2 {
            return Err(Error::config(
                "cutoff",
                format!("must be at least 2, got {}", self.cutoff),
            ));
        }
        if self.phase_points < 16 {
            return Err(Error::config("phase_points", "must be at least 16"));
        }
        if self.protocol == ProtocolKind::Mdi
            && !matches!(self.strategy, BasisStrategy::ZOnly | BasisStrategy::ZzXx)
        {
            return Err(Error::config("strategy", "MDI supports z-only and zz-xx"));
        }
        if self.protocol == ProtocolKind::Mdi && self.zero_photon {
            return Err(Error::config(
                "zero_photon",
                "the zero-photon term is implemented for BB84 only",
            ));
        }
        self.solver().validate()
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ScenarioConfig::from_toml_str(&text)
}
