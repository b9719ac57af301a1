//! End-to-end scenario evaluation: channel simulation, mapping, decoy
//! bounds and key rates for every grid point and method.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::analytics::{analytical_rate, single_photon_probability};
use crate::channel::{
    bb84_raw_table, mdi_raw_table, transmittance, Bb84ChannelParams, ChannelParams,
    MdiChannelParams, RawPatternTable,
};
use crate::config::{Method, ScenarioConfig, MU_SEARCH};
use crate::decoy::{single_photon_bounds, zero_photon_bounds, DecoyEnsemble, PhotonBounds};
use crate::error::{Error, Result};
use crate::keyrate::{key_rate, zero_photon_bonus, zero_photon_pass, LeakageInputs};
use crate::mapping::{apply_mapping, mapping_for, ObservationTable};
use crate::protocols::{build_bb84, build_mdi_with_strategy, ProtocolDescription, ProtocolKind};
use crate::quantum::h2_clamped;

/// One grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioPoint {
    pub distance_km: f64,
    pub theta_a: f64,
    /// MDI only.
    pub theta_b: Option<f64>,
}

/// Distance-major grid of the config.
pub fn grid(config: &ScenarioConfig) -> Vec<ScenarioPoint> {
    let mut out = Vec::with_capacity(config.distances_km.len() * config.thetas.len());
    for &d in &config.distances_km {
        for &t in &config.thetas {
            out.push(ScenarioPoint {
                distance_km: d,
                theta_a: t,
                theta_b: match config.protocol {
                    ProtocolKind::Bb84 => None,
                    ProtocolKind::Mdi => Some(config.theta_b.unwrap_or(-t)),
                },
            });
        }
    }
    out
}

/// Intensity settings with the signal first: `[μ], [ν], [ω]` for BB84 and
/// all nine pairs over `{μ, ν, ω}` for MDI.
pub fn intensity_settings(protocol: ProtocolKind, mu: f64, nu: f64, omega: f64) -> Vec<Vec<f64>> {
    let levels = [mu, nu, omega];
    match protocol {
        ProtocolKind::Bb84 => levels.iter().map(|&m| vec![m]).collect(),
        ProtocolKind::Mdi => levels
            .iter()
            .flat_map(|&a| levels.iter().map(move |&b| vec![a, b]))
            .collect(),
    }
}

/// Channel parameters at one grid point. For MDI, Charlie sits midway.
pub fn channel_params(config: &ScenarioConfig, point: &ScenarioPoint) -> ChannelParams<f64> {
    match config.protocol {
        ProtocolKind::Bb84 => ChannelParams::Bb84(Bb84ChannelParams {
            theta: point.theta_a,
            eta: transmittance(point.distance_km, config.loss_db_per_km),
            p_d: config.p_d,
            p_z: config.p_z,
            scheme: config.detection,
        }),
        ProtocolKind::Mdi => {
            let eta = transmittance(point.distance_km / 2.0, config.loss_db_per_km);
            ChannelParams::Mdi(MdiChannelParams {
                theta_a: point.theta_a,
                theta_b: point.theta_b.unwrap_or(-point.theta_a),
                eta_a: eta,
                eta_b: eta,
                p_d: config.p_d,
                phase_points: config.phase_points,
            })
        }
    }
}

/// Raw detector-pattern tables at every intensity setting.
pub fn simulate(
    config: &ScenarioConfig,
    point: &ScenarioPoint,
    mu: f64,
) -> Result<Vec<RawPatternTable<f64>>> {
    let settings = intensity_settings(config.protocol, mu, config.nu, config.omega);
    match channel_params(config, point) {
        ChannelParams::Bb84(params) => settings
            .iter()
            .map(|s| bb84_raw_table(&params, s[0]))
            .collect(),
        ChannelParams::Mdi(params) => settings
            .iter()
            .map(|s| mdi_raw_table(&params, s[0], s[1]))
            .collect(),
    }
}

/// Mapped observation tables, signal setting first.
pub fn observe(raw: &[RawPatternTable<f64>]) -> Result<Vec<ObservationTable<f64>>> {
    let protocol = raw
        .first()
        .ok_or_else(|| Error::usage("no raw tables"))?
        .protocol;
    let m = mapping_for(protocol);
    raw.iter().map(|t| apply_mapping(t, &m)).collect()
}

pub fn describe(config: &ScenarioConfig) -> Result<ProtocolDescription<f64>> {
    match config.protocol {
        ProtocolKind::Bb84 => build_bb84(config.p_z, config.strategy),
        ProtocolKind::Mdi => build_mdi_with_strategy(config.p_z, config.strategy),
    }
}

/// Result of one method at one point and intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mu: f64,
    pub f_upper: f64,
    pub f_certified: f64,
    pub gap: f64,
    pub p_pass: f64,
    pub leakage: f64,
    pub key_rate: f64,
    pub iterations: usize,
    pub status: String,
}

/// Simulated statistics and decoy bounds shared by the methods at one point.
#[derive(Debug, Clone)]
pub struct PointData {
    pub tables: Vec<ObservationTable<f64>>,
    pub ensemble: DecoyEnsemble<f64>,
}

impl PointData {
    pub fn new(config: &ScenarioConfig, point: &ScenarioPoint, mu: f64) -> Result<Self> {
        let tables = observe(&simulate(config, point, mu)?)?;
        let ensemble = DecoyEnsemble::from_observations(&tables)?;
        Ok(Self { tables, ensemble })
    }

    pub fn single_photon_bounds(&self, cutoff: usize) -> Result<PhotonBounds<f64>> {
        single_photon_bounds(&self.ensemble, cutoff)
    }
}

/// Evaluates one method at a fixed signal intensity.
pub fn evaluate(
    config: &ScenarioConfig,
    point: &ScenarioPoint,
    method: Method,
    mu: f64,
) -> Result<Evaluation> {
    let data = PointData::new(config, point, mu)?;
    let setting = &data.ensemble.settings[0];
    let p1 = single_photon_probability(config.protocol, setting)?;
    match method.constraint_mode() {
        Some(mode) => {
            let desc = describe(config)?;
            let bounds = data.single_photon_bounds(config.cutoff)?;
            let leak = LeakageInputs {
                signal: &data.tables[0],
                f_ec: config.f_ec,
            };
            let r = key_rate(&desc, &bounds, p1, &leak, mode, &config.solver())?;
            let mut rate = r.key_rate;
            if config.zero_photon && config.protocol == ProtocolKind::Bb84 {
                let vacuum = zero_photon_bounds(&data.ensemble, config.cutoff)?;
                let pass0 = zero_photon_pass(&desc, &vacuum)?;
                rate += zero_photon_bonus((-mu).exp(), pass0)?;
            }
            Ok(Evaluation {
                mu,
                f_upper: r.f_upper,
                f_certified: r.f_certified,
                gap: r.gap,
                p_pass: r.p_pass,
                leakage: r.leakage,
                key_rate: rate,
                iterations: r.iterations,
                status: r.status.to_string(),
            })
        }
        None => {
            let (rate, s) =
                analytical_rate(&data.ensemble, 0, config.p_z, config.cutoff, config.f_ec)?;
            let sift = config.p_z * config.p_z;
            let privacy = sift * s.y1_lower * (1.0 - h2_clamped(s.e1_upper.min(0.5)));
            Ok(Evaluation {
                mu,
                f_upper: privacy,
                f_certified: privacy,
                gap: 0.0,
                p_pass: sift * s.q,
                leakage: sift * s.f_ec * s.q * h2_clamped(s.e),
                key_rate: rate,
                iterations: 0,
                status: "ok".into(),
            })
        }
    }
}

const MU_SEARCH_ITERS: usize = 14;

/// Golden-section maximization of the rate over the signal intensity.
/// Failed evaluations count as `-∞`.
pub fn optimize_mu(
    config: &ScenarioConfig,
    point: &ScenarioPoint,
    method: Method,
) -> Result<Evaluation> {
    let eval = |mu: f64| evaluate(config, point, method, mu);
    let score =
        |e: &Result<Evaluation>| e.as_ref().map(|v| v.key_rate).unwrap_or(f64::NEG_INFINITY);
    let r = 0.618_033_988_749_894_9;
    let (mut a, mut b) = MU_SEARCH;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut ec = eval(c);
    let mut ed = eval(d);
    for _ in 0..MU_SEARCH_ITERS {
        if score(&ec) >= score(&ed) {
            b = d;
            d = c;
            ed = ec;
            c = b - r * (b - a);
            ec = eval(c);
        } else {
            a = c;
            c = d;
            ec = ed;
            d = a + r * (b - a);
            ed = eval(d);
        }
    }
    if score(&ec) >= score(&ed) {
        ec
    } else {
        ed
    }
}

/// One CSV row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: ScenarioPoint,
    pub method: Method,
    pub outcome: std::result::Result<Evaluation, String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: ScenarioConfig,
    pub rows: Vec<SweepRow>,
    /// Wall-clock seconds per row, in row order.
    pub timings: Vec<f64>,
}

pub const CSV_HEADER: &str =
    "protocol,method,strategy,distance_km,theta_a,theta_b,mu,nu,omega,p_d,\
f_upper,f_certified,gap,p_pass,leakage,key_rate,iterations,status";

impl SweepResult {
    /// CSV with a `#` manifest block (config echo and version) and one row
    /// per point and method. Output is a pure function of the config.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# qkdrate {}", env!("CARGO_PKG_VERSION"));
        for line in self.config.to_toml_string().lines() {
            let _ = writeln!(s, "# {line}");
        }
        let _ = writeln!(s, "{CSV_HEADER}");
        for row in &self.rows {
            let _ = writeln!(s, "{}", self.csv_row(row));
        }
        s
    }

    fn csv_row(&self, row: &SweepRow) -> String {
        let c = &self.config;
        let strategy = match row.method {
            Method::Analytical => "z-only".to_string(),
            _ => c.strategy.to_string(),
        };
        let theta_b = row
            .point
            .theta_b
            .map(|t| format!("{t}"))
            .unwrap_or_default();
        let head = format!(
            "{},{},{},{},{},{},",
            c.protocol, row.method, strategy, row.point.distance_km, row.point.theta_a, theta_b
        );
        match &row.outcome {
            Ok(e) => format!(
                "{head}{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
                e.mu,
                c.nu,
                c.omega,
                c.p_d,
                e.f_upper,
                e.f_certified,
                e.gap,
                e.p_pass,
                e.leakage,
                e.key_rate,
                e.iterations,
                e.status
            ),
            Err(msg) => format!(
                "{head}{},{},{},{},NaN,NaN,NaN,NaN,NaN,NaN,0,\"error: {}\"",
                c.mu,
                c.nu,
                c.omega,
                c.p_d,
                msg.replace('"', "'")
            ),
        }
    }

    /// Timing manifest kept apart from the deterministic CSV.
    pub fn timing_manifest(&self, total_seconds: f64) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "version = \"{}\"", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "total_seconds = {total_seconds}");
        let _ = writeln!(s, "row_seconds = {:?}", self.timings);
        s
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }
}

/// Evaluates every grid point and method; per-point failures land in the
/// status column. `workers = 0` uses the default thread pool size.
pub fn run_sweep(config: &ScenarioConfig, workers: usize) -> Result<SweepResult> {
    config.validate()?;
    let jobs: Vec<(ScenarioPoint, Method)> = grid(config)
        .into_iter()
        .flat_map(|p| config.methods.iter().map(move |&m| (p, m)))
        .collect();
    let run = || {
        jobs.par_iter()
            .map(|&(point, method)| {
                let t0 = Instant::now();
                let outcome = if config.optimize_mu {
                    optimize_mu(config, &point, method)
                } else {
                    evaluate(config, &point, method, config.mu)
                };
                (
                    SweepRow {
                        point,
                        method,
                        outcome: outcome.map_err(|e| e.to_string()),
                    },
                    t0.elapsed().as_secs_f64(),
                )
            })
            .collect::<Vec<_>>()
    };
    let results = if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::usage(format!("thread pool: {e}")))?
            .install(run)
    } else {
        run()
    };
    let (rows, timings) = results.into_iter().unzip();
    Ok(SweepResult {
        config: config.clone(),
        rows,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_order_and_mdi_angles() {
        let c = ScenarioConfig {
            protocol: ProtocolKind::Mdi,
            distances_km: vec![0.0, 10.0],
            thetas: vec![0.1, 0.2],
            ..ScenarioConfig::default()
        };
        let g = grid(&c);
        assert_eq!(g.len(), 4);
        assert_eq!(
            (g[1].distance_km, g[1].theta_a, g[1].theta_b),
            (0.0, 0.2, Some(-0.2))
        );
        assert_eq!(
            intensity_settings(ProtocolKind::Mdi, 0.3, 0.02, 0.001).len(),
            9
        );
    }

    #[test]
    fn bb84_point_fine_beats_analytical() {
        let c = ScenarioConfig {
            distances_km: vec![50.0],
            ..ScenarioConfig::default()
        };
        let p = grid(&c)[0];
        let fine = evaluate(&c, &p, Method::NumericalFine, 0.3).unwrap();
        let ana = evaluate(&c, &p, Method::Analytical, 0.3).unwrap();
        assert!(fine.key_rate > ana.key_rate, "{fine:?} vs {ana:?}");
        assert!(fine.f_certified <= fine.f_upper);
    }

    #[test]
    fn sweep_is_deterministic_across_worker_counts() {
        let c = ScenarioConfig {
            distances_km: vec![20.0, 60.0],
            methods: vec![Method::NumericalFine, Method::Analytical],
            ..ScenarioConfig::default()
        };
        let a = run_sweep(&c, 1).unwrap().to_csv();
        let b = run_sweep(&c, 3).unwrap().to_csv();
        assert_eq!(a, b);
        assert_eq!(a.lines().filter(|l| !l.starts_with('#')).count(), 5);
    }
}
